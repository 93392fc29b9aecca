//! Floquet data of periodic discrete operators: bands, measure, Lyapunov
//! exponent and integrated density of states.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::eigen::cyclic_eigenvalues;
use crate::error::{Error, Result};
use crate::sl2::{Mat2, TOL_HYP};
use crate::transfer::{discriminant_values, transfer_single, transfer_values, transfer_values_scaled};
use crate::words::{cyclic_shift, Word};

/// Closed interval `[lo, hi]`; serializes as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval { lo: v[0], hi: v[1] }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, e: f64) -> bool {
        self.lo <= e && e <= self.hi
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

/// Finite union of disjoint closed intervals, kept sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct EnergyWindow {
    intervals: Vec<Interval>,
}

impl TryFrom<Vec<Interval>> for EnergyWindow {
    type Error = Error;

    fn try_from(v: Vec<Interval>) -> Result<Self> {
        EnergyWindow::from_intervals(v)
    }
}

impl From<EnergyWindow> for Vec<Interval> {
    fn from(w: EnergyWindow) -> Self {
        w.intervals
    }
}

impl EnergyWindow {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        Self::from_intervals(pairs.into_iter().map(|(a, b)| Interval::new(a, b)).collect())
    }

    /// Sorts and merges overlapping pieces; rejects reversed or non-finite ones.
    pub fn from_intervals(mut v: Vec<Interval>) -> Result<Self> {
        for iv in &v {
            if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.lo > iv.hi {
                return Err(Error::InvalidArgument(format!(
                    "bad window interval [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        v.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut out: Vec<Interval> = Vec::with_capacity(v.len());
        for iv in v {
            match out.last_mut() {
                Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
                _ => out.push(iv),
            }
        }
        Ok(EnergyWindow { intervals: out })
    }

    pub fn single(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn empty() -> Self {
        EnergyWindow {
            intervals: Vec::new(),
        }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    pub fn contains(&self, e: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(e))
    }

    pub fn hull(&self) -> Option<Interval> {
        Some(Interval::new(self.intervals.first()?.lo, self.intervals.last()?.hi))
    }

    /// Pairwise intersection of two sorted unions.
    pub fn intersect_intervals(&self, other: &[Interval]) -> EnergyWindow {
        let (a, b) = (&self.intervals, other);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            if let Some(x) = a[i].intersection(&b[j]) {
                out.push(x);
            }
            if a[i].hi < b[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        // touching band edges may produce adjacent pieces; merge them
        EnergyWindow::from_intervals(out).expect("intersection of valid intervals")
    }

    pub fn intersect(&self, other: &EnergyWindow) -> EnergyWindow {
        self.intersect_intervals(&other.intervals)
    }

    /// Removes the open balls of radius `r` around each point.
    pub fn minus_balls(&self, points: &[f64], r: f64) -> EnergyWindow {
        let mut cur = self.intervals.clone();
        for &p in points {
            let (a, b) = (p - r, p + r);
            let mut next = Vec::with_capacity(cur.len() + 1);
            for iv in cur {
                if iv.hi <= a || iv.lo >= b {
                    next.push(iv);
                    continue;
                }
                if iv.lo <= a {
                    next.push(Interval::new(iv.lo, a));
                }
                if iv.hi >= b {
                    next.push(Interval::new(b, iv.hi));
                }
            }
            cur = next;
        }
        EnergyWindow { intervals: cur }
    }

    /// Distance from `e` to the window (0 inside).
    pub fn distance(&self, e: f64) -> f64 {
        self.intervals
            .iter()
            .map(|iv| {
                if e < iv.lo {
                    iv.lo - e
                } else if e > iv.hi {
                    e - iv.hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// The `q` closed bands of a period-`q` operator, in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub q: usize,
    pub bands: Vec<Interval>,
}

impl BandSet {
    pub fn bands(&self) -> &[Interval] {
        &self.bands
    }

    pub fn measure(&self) -> f64 {
        self.bands.iter().map(Interval::len).sum()
    }

    pub fn contains(&self, e: f64) -> bool {
        self.band_index(e).is_some()
    }

    /// Zero-based index of a band containing `e`.
    pub fn band_index(&self, e: f64) -> Option<usize> {
        let k = self.bands.partition_point(|b| b.hi < e);
        (k < self.bands.len() && self.bands[k].lo <= e).then_some(k)
    }

    /// Open gaps between consecutive bands (closed gaps are skipped).
    pub fn gaps(&self) -> Vec<Interval> {
        self.bands
            .windows(2)
            .filter(|w| w[0].hi < w[1].lo)
            .map(|w| Interval::new(w[0].hi, w[1].lo))
            .collect()
    }

    /// Bands as an energy window (touching bands merged).
    pub fn as_window(&self) -> EnergyWindow {
        EnergyWindow::from_intervals(self.bands.clone()).expect("bands are valid intervals")
    }

    /// Connected component of the resolvent set containing `e`, if any.
    pub fn resolvent_component(&self, e: f64) -> Option<Interval> {
        if self.contains(e) {
            return None;
        }
        let k = self.bands.partition_point(|b| b.hi < e);
        let lo = if k == 0 {
            f64::NEG_INFINITY
        } else {
            self.bands[k - 1].hi
        };
        let hi = self.bands.get(k).map_or(f64::INFINITY, |b| b.lo);
        Some(Interval::new(lo, hi))
    }

    /// CSV with header `band_index,E_minus,E_plus`, indices from 1.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["band_index", "E_minus", "E_plus"]).unwrap();
        for (i, b) in self.bands.iter().enumerate() {
            w.write_record([(i + 1).to_string(), b.lo.to_string(), b.hi.to_string()])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut bands = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != 3 {
                return Err(Error::Parse(format!("expected 3 columns, got {}", rec.len())));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{}: {e}", &rec[i])))
            };
            bands.push(Interval::new(num(1)?, num(2)?));
        }
        if bands.iter().any(|b| !(b.lo <= b.hi)) {
            return Err(Error::Parse("band with E_minus > E_plus".into()));
        }
        if bands.windows(2).any(|w| w[0].hi > w[1].lo) {
            return Err(Error::Parse("bands overlap or are unsorted".into()));
        }
        Ok(BandSet {
            q: bands.len(),
            bands,
        })
    }
}

/// Bands of the periodic operator with potential `λ x^♮`.
pub fn band_edges(x: &Word, lambda: f64) -> BandSet {
    band_edges_values(x.values(), lambda)
}

pub fn band_edges_values(values: &[f64], lambda: f64) -> BandSet {
    let q = values.len();
    let diag: Vec<f64> = values.iter().map(|v| lambda * v).collect();
    let mut mu = cyclic_eigenvalues(&diag, 1.0);
    polish_edges(values, lambda, &mut mu, 2.0);
    let mut anti = cyclic_eigenvalues(&diag, -1.0);
    polish_edges(values, lambda, &mut anti, -2.0);
    mu.extend(anti);
    mu.sort_by(|a, b| a.total_cmp(b));
    let bands: Vec<Interval> = mu
        .chunks(2)
        .map(|p| Interval::new(p[0], p[1]))
        .collect();
    let set = BandSet { q, bands };
    if q > 0 && !pairing_consistent(values, lambda, &set) {
        if let Some(b) = bisection_bands(values, lambda, &set) {
            return b;
        }
    }
    set
}

/// `(D(E), D'(E))` by differentiating the transfer product alongside it.
fn discriminant_and_derivative(values: &[f64], e: f64, lambda: f64) -> (f64, f64) {
    let (mut m, mut dm) = (Mat2::IDENTITY, Mat2::new(0.0, 0.0, 0.0, 0.0));
    for &v in values {
        let t = transfer_single(lambda * v, e);
        // d/dE T = [[1, 0], [0, 0]]
        dm = t.mul(&dm);
        dm.a11 += m.a11;
        dm.a12 += m.a12;
        m = t.mul(&m);
    }
    (m.trace(), dm.trace())
}

/// Newton steps on `D(E) = target` from the eigenvalue estimates, kept
/// only when they are tiny and reduce the residual.
fn polish_edges(values: &[f64], lambda: f64, mu: &mut [f64], target: f64) {
    for e in mu.iter_mut() {
        for _ in 0..2 {
            let (d, dd) = discriminant_and_derivative(values, *e, lambda);
            let r = d - target;
            if !(r.is_finite() && dd.is_finite() && dd != 0.0) || r == 0.0 {
                break;
            }
            let next = *e - r / dd;
            if (next - *e).abs() > 1e-13 * (1.0 + e.abs()) {
                break;
            }
            let (dn, _) = discriminant_and_derivative(values, next, lambda);
            if !((dn - target).abs() < r.abs()) {
                break;
            }
            *e = next;
        }
    }
}

/// `Err(DegenerateInput)` for an empty potential, otherwise [`band_edges_values`].
pub fn try_band_edges_values(values: &[f64], lambda: f64) -> Result<BandSet> {
    if values.is_empty() {
        return Err(Error::DegenerateInput("period q = 0".into()));
    }
    Ok(band_edges_values(values, lambda))
}

/// Discriminant at `e` if it can be evaluated without losing more than
/// about six digits to cancellation.
fn reliable_discriminant(values: &[f64], lambda: f64, e: f64) -> Option<f64> {
    let s = transfer_values_scaled(values, e, lambda);
    let mag = s.log_scale + s.mat.max_abs().ln();
    (mag < 6.0 * std::f64::consts::LN_10).then(|| s.trace())
}

fn pairing_consistent(values: &[f64], lambda: f64, set: &BandSet) -> bool {
    let slack = 1e-6;
    for b in &set.bands {
        if b.len() > 1e-8 {
            if let Some(d) = reliable_discriminant(values, lambda, b.mid()) {
                if d.abs() > 2.0 + slack {
                    return false;
                }
            }
        }
    }
    for g in set.gaps() {
        if g.len() > 1e-8 {
            if let Some(d) = reliable_discriminant(values, lambda, g.mid()) {
                if d.abs() < 2.0 - slack {
                    return false;
                }
            }
        }
    }
    true
}

/// Rebuilds the bands from sign changes of `|D| - 2` on a fine grid.
fn bisection_bands(values: &[f64], lambda: f64, hint: &BandSet) -> Option<BandSet> {
    let q = values.len();
    let lo = hint.bands.first()?.lo - 0.5;
    let hi = hint.bands.last()?.hi + 0.5;
    let n = 256 * q;
    let f = |e: f64| discriminant_values(values, e, lambda).abs() - 2.0;
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&e| f(e)).collect();
    let refine = |mut a: f64, mut b: f64| {
        let fa = f(a);
        // down to adjacent floats
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if (f(m) > 0.0) == (fa > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        if f(a).abs() <= f(b).abs() { a } else { b }
    };
    let mut bands = Vec::new();
    let mut start = None;
    for i in 0..n {
        let (a, b) = (fs[i] <= 0.0, fs[i + 1] <= 0.0);
        if !a && b {
            start = Some(refine(xs[i], xs[i + 1]));
        } else if a && !b {
            if let Some(s) = start.take() {
                bands.push(Interval::new(s, refine(xs[i], xs[i + 1])));
            }
        }
    }
    (bands.len() == q).then_some(BandSet { q, bands })
}

/// `|D(x, E)| ≤ 2 + tol`.
pub fn in_spectrum(x: &Word, e: f64, lambda: f64) -> bool {
    discriminant_values(x.values(), e, lambda).abs() <= 2.0 + TOL_HYP
}

/// Lebesgue measure of `K ∩ σ`.
pub fn measure_in_window(bands: &BandSet, k: &EnergyWindow) -> f64 {
    k.intersect_intervals(&bands.bands).measure()
}

/// `(1/L) log spr T(λx, E)`.
pub fn lyapunov(x: &Word, e: f64, lambda: f64) -> f64 {
    lyapunov_values(x.values(), e, lambda)
}

pub fn lyapunov_values(values: &[f64], e: f64, lambda: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let s = transfer_values_scaled(values, e, lambda);
    (s.log_spectral_radius() / values.len() as f64).max(0.0)
}

/// Integrated density of states.
pub fn ids(x: &Word, e: f64, lambda: f64) -> f64 {
    let bands = band_edges(x, lambda);
    ids_with_bands(x.values(), &bands, e, lambda)
}

/// IDS given precomputed bands of the same potential.
pub fn ids_with_bands(values: &[f64], bands: &BandSet, e: f64, lambda: f64) -> f64 {
    let q = bands.q;
    if q == 0 {
        return 0.0;
    }
    let below = bands.bands.partition_point(|b| b.hi < e);
    if below == q {
        return 1.0;
    }
    let b = bands.bands[below];
    if e <= b.lo {
        return below as f64 / q as f64;
    }
    if e == b.hi {
        return (below + 1) as f64 / q as f64;
    }
    let j = below + 1;
    let s = if (q - j) % 2 == 0 { 1.0 } else { -1.0 };
    let d = discriminant_values(values, e, lambda);
    let arg = (-s * d / 2.0).clamp(-1.0, 1.0);
    (below as f64 + arg.acos() / PI) / q as f64
}

/// `dk/dE` from the conjugators of all cyclic shifts.
pub fn ids_derivative_conjugacy(x: &Word, e: f64, lambda: f64) -> Result<f64> {
    ids_derivative_values(x.values(), e, lambda)
}

pub fn ids_derivative_values(values: &[f64], e: f64, lambda: f64) -> Result<f64> {
    let q = values.len();
    if q == 0 {
        return Err(Error::DegenerateInput("period q = 0".into()));
    }
    let d = transfer_values(values, e, lambda).trace();
    if !(d.abs() < 2.0 - TOL_HYP) {
        return Err(Error::NotInteriorOfBand { energy: e });
    }
    let mut sum = 0.0;
    for j in 0..q {
        let m = transfer_values(&cyclic_shift(values, j), e, lambda);
        sum += m.conjugator()?.hs_norm_sq();
    }
    Ok(sum / (4.0 * PI * q as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[f64]) -> Word {
        Word::from_values(v).unwrap()
    }

    #[test]
    fn free_bands() {
        let b = band_edges(&w(&[0.0]), 1.0);
        assert_eq!(b.bands, vec![Interval::new(-2.0, 2.0)]);
        let b = band_edges(&w(&[1.5]), 2.0);
        assert_eq!(b.bands, vec![Interval::new(1.0, 5.0)]);
    }

    #[test]
    fn period_two_oracle() {
        let r5 = 5f64.sqrt();
        let b = band_edges(&w(&[2.0, 0.0]), 1.0);
        let expect = [1.0 - r5, 0.0, 2.0, 1.0 + r5];
        let got = [b.bands[0].lo, b.bands[0].hi, b.bands[1].lo, b.bands[1].hi];
        for (g, e) in got.iter().zip(expect) {
            assert!((g - e).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn free_word_of_period_three_has_touching_bands() {
        let b = band_edges(&w(&[0.0; 3]), 1.0);
        assert_eq!(b.q, 3);
        assert!((b.bands[0].lo + 2.0).abs() < 1e-12);
        assert!((b.bands[2].hi - 2.0).abs() < 1e-12);
        assert!((b.bands[0].hi - b.bands[1].lo).abs() < 1e-12);
        assert!((b.measure() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn membership() {
        assert!(in_spectrum(&w(&[0.0]), 0.0, 1.0));
        assert!(!in_spectrum(&w(&[0.0]), 3.0, 1.0));
        assert!(!in_spectrum(&w(&[2.0, 0.0]), 1.0, 1.0));
    }

    #[test]
    fn measures() {
        let free = band_edges(&w(&[0.0]), 1.0);
        assert_eq!(measure_in_window(&free, &EnergyWindow::single(0.0, 1.0).unwrap()), 1.0);
        assert_eq!(measure_in_window(&free, &EnergyWindow::single(3.0, 4.0).unwrap()), 0.0);
        let two = band_edges(&w(&[2.0, 0.0]), 1.0);
        let m = measure_in_window(&two, &EnergyWindow::single(-1.0, 3.0).unwrap());
        assert!((m - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_values_known() {
        let l = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert_eq!(lyapunov(&w(&[0.0]), 0.0, 1.0), 0.0);
        assert!((lyapunov(&w(&[0.0]), 3.0, 1.0) - l).abs() < 1e-12);
        assert!((lyapunov(&w(&[0.0, 0.0]), 3.0, 1.0) - l).abs() < 1e-12);
        assert!((l - 0.96242).abs() < 1e-5);
    }

    #[test]
    fn ids_free() {
        let x = w(&[0.0]);
        assert_eq!(ids(&x, -2.5, 1.0), 0.0);
        assert_eq!(ids(&x, -2.0, 1.0), 0.0);
        assert_eq!(ids(&x, 2.0, 1.0), 1.0);
        assert_eq!(ids(&x, 7.0, 1.0), 1.0);
        assert!((ids(&x, 0.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ids_derivative_free() {
        let x = w(&[0.0]);
        let d0 = ids_derivative_conjugacy(&x, 0.0, 1.0).unwrap();
        assert!((d0 - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let d1 = ids_derivative_conjugacy(&x, 1.0, 1.0).unwrap();
        assert!((d1 - 1.0 / (PI * 3f64.sqrt())).abs() < 1e-14);
        assert!(matches!(
            ids_derivative_conjugacy(&x, 2.5, 1.0),
            Err(Error::NotInteriorOfBand { .. })
        ));
    }

    #[test]
    fn ids_derivative_period_two_finite_difference() {
        let x = w(&[2.0, 0.0]);
        let h = 1e-5;
        for e in [-0.8, -0.3, 2.5, 3.0] {
            let fd = (ids(&x, e + h, 1.0) - ids(&x, e - h, 1.0)) / (2.0 * h);
            let an = ids_derivative_conjugacy(&x, e, 1.0).unwrap();
            assert!(((fd - an) / an).abs() < 1e-3, "E={e}: {fd} vs {an}");
        }
    }

    #[test]
    fn windows() {
        let w = EnergyWindow::new(vec![(2.0, 3.0), (0.0, 1.0), (0.5, 1.5)]).unwrap();
        assert_eq!(w.intervals(), &[Interval::new(0.0, 1.5), Interval::new(2.0, 3.0)]);
        assert!(EnergyWindow::new(vec![(1.0, 0.0)]).is_err());
        let f = EnergyWindow::single(-4.0, 4.0).unwrap().minus_balls(&[0.0], 0.25);
        assert_eq!(f.intervals(), &[Interval::new(-4.0, -0.25), Interval::new(0.25, 4.0)]);
        assert!((f.measure() - 7.5).abs() < 1e-15);
        assert_eq!(f.distance(0.0), 0.25);
        let js = serde_json::to_string(&f).unwrap();
        assert_eq!(js, "[[-4.0,-0.25],[0.25,4.0]]");
    }

    #[test]
    fn csv_round_trip() {
        let b = band_edges(&w(&[0.0]), 1.0);
        let s = b.to_csv();
        assert_eq!(s, "band_index,E_minus,E_plus\n1,-2,2\n");
        let b2 = band_edges(&w(&[2.0, 0.0, -1.3]), 0.7);
        assert_eq!(BandSet::from_csv(&b2.to_csv()).unwrap(), b2);
        assert!(BandSet::from_csv("band_index,E_minus,E_plus\n1,x,2\n").is_err());
    }

    #[test]
    fn resolvent_components() {
        let b = band_edges(&w(&[2.0, 0.0]), 1.0);
        let g = b.resolvent_component(1.0).unwrap();
        assert!((g.lo - 0.0).abs() < 1e-12 && (g.hi - 2.0).abs() < 1e-12);
        assert!(b.resolvent_component(-0.5).is_none());
        assert_eq!(b.resolvent_component(-10.0).unwrap().lo, f64::NEG_INFINITY);
    }
}
