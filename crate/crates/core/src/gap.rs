//! Opening spectral gaps: exceptional energies, hyperbolic letters and the
//! perturb-then-search procedure for arbitrary words.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::eigen::tridiagonal_eigenvalues;
use crate::error::{Error, Result};
use crate::sl2::{Mat2, TraceClass, TOL_HYP};
use crate::spectrum::{band_edges, Interval};
use crate::transfer::{transfer_single, transfer_values};
use crate::words::{word_distance, FamilyKind, FamilySpec, Letter, Word};

/// Default BFS depth for [`open_gap`].
pub const DEFAULT_DEPTH_CAP: usize = 20;
/// Minimum distance from the exceptional set accepted by [`open_gap`].
pub const EXCEPTIONAL_MARGIN: f64 = 1e-6;
const NODE_BUDGET: usize = 1 << 20;
/// Number of δ-grid halvings tried before giving up.
const REFINEMENTS: usize = 3;
const MAX_POWER: usize = 64;

/// Energies at which a family cannot open gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalSet {
    pub roots: Vec<f64>,
    /// `|p(root)|` for the defining polynomial, one per root.
    pub residuals: Vec<f64>,
    pub source: String,
}

impl ExceptionalSet {
    pub fn empty(source: impl Into<String>) -> Self {
        ExceptionalSet {
            roots: Vec::new(),
            residuals: Vec::new(),
            source: source.into(),
        }
    }

    pub fn distance(&self, e: f64) -> f64 {
        self.roots
            .iter()
            .map(|r| (r - e).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Potential of the fixed part `0^{n-1} ♯ λb` of a sieve letter.
fn sieve_tail(n: usize, b: &[f64], lambda: f64) -> Vec<f64> {
    let mut w = vec![0.0; n - 1];
    w.extend(b.iter().map(|v| lambda * v));
    w
}

/// `S` for the family. For sieve letters `x ♯ b` it is the zero set of
/// `E -> T(0^{n-1} ♯ λb, E)_{11}`, which is the characteristic polynomial of
/// the Dirichlet truncation with that diagonal; its roots are the
/// (simple, real) eigenvalues of that Jacobi matrix.
pub fn exceptional_set(family: &FamilySpec) -> Result<ExceptionalSet> {
    family.validate()?;
    match &family.kind {
        FamilyKind::Sieve { n, b } => {
            let tail = sieve_tail(*n, b, family.coupling);
            let source = format!("T(0^{} # {:?}, E)_11", n - 1, b);
            if tail.is_empty() {
                return Ok(ExceptionalSet::empty(source));
            }
            let mut d = tail.clone();
            let mut e = vec![1.0; d.len()];
            tridiagonal_eigenvalues(&mut d, &mut e);
            let mut roots: Vec<f64> = Vec::with_capacity(d.len());
            for r in d {
                let r = polish_root(&tail, r);
                if roots.last().map_or(true, |&l| r - l > 1e-8) {
                    roots.push(r);
                }
            }
            let residuals = roots
                .iter()
                .map(|&r| transfer_values(&tail, r, 1.0).a11.abs())
                .collect();
            Ok(ExceptionalSet {
                roots,
                residuals,
                source,
            })
        }
        FamilyKind::Polymer { .. } => Ok(ExceptionalSet::empty("polymer")),
        FamilyKind::FullLine => Ok(ExceptionalSet::empty("full line")),
    }
}

/// A few Newton steps on `T(tail, E)_{11}`, keeping the eigenvalue if they
/// do not help.
fn polish_root(tail: &[f64], r0: f64) -> f64 {
    let f = |e: f64| transfer_values(tail, e, 1.0).a11;
    let mut r = r0;
    let mut fr = f(r);
    for _ in 0..4 {
        let h = 1e-7 * (1.0 + r.abs());
        let df = (f(r + h) - f(r - h)) / (2.0 * h);
        if df == 0.0 || !df.is_finite() {
            break;
        }
        let next = r - fr / df;
        let fnext = f(next);
        if fnext.abs() >= fr.abs() || (next - r0).abs() > 1e-6 {
            break;
        }
        r = next;
        fr = fnext;
    }
    r
}

/// Solves `tr(M · T(v, E)) = ±3` for `v`, the smaller `|v|` winning (`+3` on
/// ties). `None` when the trace is (numerically) constant in `v` or no
/// solution lies within `bound`.
pub fn affine_trace_solve(m: &Mat2, e: f64, bound: f64) -> Option<f64> {
    if m.a11.abs() <= 1e-10 {
        return None;
    }
    // tr = a11 (E - v) + a12 - a21
    let c = m.a12 - m.a21;
    let v_plus = e + (c - 3.0) / m.a11;
    let v_minus = e + (c + 3.0) / m.a11;
    let v = if v_minus.abs() < v_plus.abs() {
        v_minus
    } else {
        v_plus
    };
    (v.abs() <= bound).then_some(v)
}

/// A family letter `y` with `T(λy, E)` hyperbolic.
pub fn letter_hyperbolic_search(family: &FamilySpec, e: f64) -> Result<Letter> {
    family.validate()?;
    let lambda = family.coupling;
    match &family.kind {
        FamilyKind::Sieve { n, b } => {
            let tail = sieve_tail(*n, b, lambda);
            let m = transfer_values(&tail, e, 1.0);
            let u = affine_trace_solve(&m, e, f64::MAX).ok_or(Error::NotFound { energy: e })?;
            Ok(family.letter_from_value(u / lambda))
        }
        FamilyKind::Polymer { .. } | FamilyKind::FullLine => {
            Ok(family.letter_from_value((e - 3.0) / lambda))
        }
    }
}

/// Witness that a word has `E` in a spectral gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub word: Word,
    pub energy: f64,
    pub trace: f64,
    #[serde(rename = "distance")]
    pub distance_to_input: f64,
}

impl GapCertificate {
    /// Re-evaluates the trace from scratch.
    pub fn verify(&self, input: &Word, eps: f64, lambda: f64) -> bool {
        let t = transfer_values(self.word.values(), self.energy, lambda).trace();
        let d = word_distance(input, &self.word).unwrap_or(f64::INFINITY);
        t.abs() > 2.0 + TOL_HYP && d < eps
    }

    /// The gap of `H_{λy}` around the certified energy.
    pub fn gap(&self, lambda: f64) -> Option<Interval> {
        band_edges(&self.word, lambda).resolvent_component(self.energy)
    }
}

fn is_hyperbolic(m: &Mat2) -> bool {
    m.trace().abs() > 2.0 + TOL_HYP
}

/// Finds `y` with `d(x, y) < ε` and `T(λy, E)` hyperbolic.
///
/// Nearby words are built from copies of `x` whose free coordinates are
/// shifted by multiples of `δ = ε/4` (then `ε/8`, `ε/16`). A shifted copy is
/// tried first; if none is hyperbolic, a breadth-first search over
/// concatenations of two noncommuting elliptic copies looks for a
/// hyperbolic product.
pub fn open_gap(
    x: &Word,
    e: f64,
    eps: f64,
    family: &FamilySpec,
    depth_cap: usize,
) -> Result<GapCertificate> {
    open_gap_with(x, e, eps, family, depth_cap, &GapFilter::default())
}

/// Extra conditions on the words [`open_gap_with`] may return.
pub struct GapFilter<'a> {
    /// On the length of the word in letters of the input.
    pub length: &'a (dyn Fn(usize) -> bool + Sync),
    /// On the word itself, checked last.
    pub word: &'a (dyn Fn(&Word) -> bool + Sync),
}

impl Default for GapFilter<'_> {
    fn default() -> Self {
        GapFilter {
            length: &|_| true,
            word: &|_| true,
        }
    }
}

/// [`open_gap`] returning only words that pass `filter`.
pub fn open_gap_with(
    x: &Word,
    e: f64,
    eps: f64,
    family: &FamilySpec,
    depth_cap: usize,
    filter: &GapFilter,
) -> Result<GapCertificate> {
    let accept = filter.length;
    family.validate()?;
    family.check_word(x)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let ex = exceptional_set(family)?;
    let dist = ex.distance(e);
    if dist <= EXCEPTIONAL_MARGIN {
        return Err(Error::ExceptionalEnergy {
            energy: e,
            distance: dist,
        });
    }
    let lambda = family.coupling;
    let t = |w: &Word| transfer_values(w.values(), e, lambda);
    let cert = |w: Word, m: &Mat2| -> Result<GapCertificate> {
        let distance_to_input = word_distance(x, &w)?;
        Ok(GapCertificate {
            word: w,
            energy: e,
            trace: m.trace(),
            distance_to_input,
        })
    };

    let unit = x.len();
    let ok = |w: &Word, m: &Mat2| is_hyperbolic(m) && accept(w.len() / unit) && (filter.word)(w);

    let tx = t(x);
    if ok(x, &tx) {
        return cert(x.clone(), &tx);
    }

    let coords = family.free_coordinates(x.block_size());
    let k = x.block_size();
    let mut gens: Vec<(Word, Mat2)> = vec![(x.clone(), tx)];
    let mut budget = NODE_BUDGET;
    // δ = ε/4 first; if that grid is exhausted it is halved, keeping every
    // offset strictly inside the ε-ball
    for round in 0..REFINEMENTS {
        let steps = 4usize << round;
        let delta = eps / steps as f64;
        let first_new = if round == 0 { 0 } else { gens.len() };
        for j in 1..steps {
            if round > 0 && j % 2 == 0 {
                continue;
            }
            for o in [j as f64 * delta, -(j as f64) * delta] {
                let w = x.shifted(&coords, o);
                let m = t(&w);
                if ok(&w, &m) {
                    return cert(w, &m);
                }
                gens.push((w, m));
                // per-letter shifts give further generators for longer words
                if x.len() > 1 && round == 0 {
                    for i in 0..x.len() {
                        let mut data = x.aggregate();
                        for &c in &coords {
                            data[i * k + c] += o;
                        }
                        let w = Word::from_aggregate(k, data)?;
                        let m = t(&w);
                        if ok(&w, &m) {
                            return cert(w, &m);
                        }
                        gens.push((w, m));
                    }
                }
            }
        }

        // a slowly rotating copy is replaced by the power turning about a
        // quarter, so short concatenations can still leave the elliptic set
        let added = gens.len();
        for i in first_new..added {
            let m = gens[i].1;
            if m.classify(TOL_HYP) != TraceClass::Elliptic {
                continue;
            }
            let theta = (m.trace().abs() / 2.0).min(1.0).acos();
            let r = (std::f64::consts::FRAC_PI_2 / theta).round() as usize;
            if (2..=MAX_POWER).contains(&r) {
                let w = gens[i].0.sharp_power(r)?;
                let m = t(&w);
                if ok(&w, &m) {
                    return cert(w, &m);
                }
                gens.push((w, m));
            }
        }

        let elliptic: Vec<usize> = (0..gens.len())
            .filter(|&i| gens[i].1.classify(TOL_HYP) == TraceClass::Elliptic)
            .collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (a, &i) in elliptic.iter().enumerate() {
            for &j in &elliptic[a + 1..] {
                if j < first_new {
                    continue;
                }
                let c = gens[i].1.commutator_norm(&gens[j].1);
                if c > 1e-8 {
                    pairs.push((c, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut round_budget = budget / (REFINEMENTS - round);
        budget -= round_budget;
        for &(_, i, j) in &pairs {
            let mats = [gens[i].1, gens[j].1];
            let lens = [gens[i].0.len() / unit, gens[j].0.len() / unit];
            if let Some(path) = bfs_hyperbolic_with(&mats, &lens, accept, depth_cap, &mut round_budget) {
                let w = Word::concat_all(path.iter().map(|&g| &gens[[i, j][g]].0))?;
                let m = t(&w);
                if ok(&w, &m) {
                    return cert(w, &m);
                }
            }
            if round_budget == 0 {
                break;
            }
        }
        budget += round_budget;
    }
    Err(Error::DepthExhausted(depth_cap))
}

fn round_key(m: &Mat2) -> [i64; 4] {
    let r = |v: f64| (v * 1e9).round() as i64;
    [r(m.a11), r(m.a12), r(m.a21), r(m.a22)]
}

/// Shortest generator sequence (first letter first) whose product
/// `G_{i_k} ⋯ G_{i_1}` is hyperbolic.
pub fn bfs_hyperbolic(gens: &[Mat2], depth_cap: usize, budget: &mut usize) -> Option<Vec<usize>> {
    let lens = vec![1; gens.len()];
    bfs_hyperbolic_with(gens, &lens, &|_| true, depth_cap, budget)
}

/// As [`bfs_hyperbolic`], accepting only sequences whose total weight
/// (sum of `lens`) satisfies `accept`.
pub fn bfs_hyperbolic_with(
    gens: &[Mat2],
    lens: &[usize],
    accept: &dyn Fn(usize) -> bool,
    depth_cap: usize,
    budget: &mut usize,
) -> Option<Vec<usize>> {
    struct Node {
        m: Mat2,
        parent: usize,
        gen: usize,
        len: usize,
    }
    let mut nodes: Vec<Node> = Vec::new();
    let mut seen: HashSet<[i64; 4]> = HashSet::new();
    let mut frontier: Vec<usize> = Vec::new();
    let path = |nodes: &Vec<Node>, mut k: usize| {
        let mut p = Vec::new();
        loop {
            p.push(nodes[k].gen);
            if nodes[k].parent == usize::MAX {
                break;
            }
            k = nodes[k].parent;
        }
        p.reverse();
        p
    };
    for (g, m) in gens.iter().enumerate() {
        if seen.insert(round_key(m)) {
            nodes.push(Node {
                m: *m,
                parent: usize::MAX,
                gen: g,
                len: lens[g],
            });
            if is_hyperbolic(m) && accept(lens[g]) {
                return Some(path(&nodes, nodes.len() - 1));
            }
            frontier.push(nodes.len() - 1);
        }
    }
    for _depth in 2..=depth_cap {
        let mut next = Vec::new();
        for &k in &frontier {
            for (g, gm) in gens.iter().enumerate() {
                if *budget == 0 {
                    return None;
                }
                *budget -= 1;
                let m = gm.mul(&nodes[k].m);
                if !seen.insert(round_key(&m)) {
                    continue;
                }
                let len = nodes[k].len + lens[g];
                nodes.push(Node { m, parent: k, gen: g, len });
                let id = nodes.len() - 1;
                if is_hyperbolic(&m) && accept(len) {
                    return Some(path(&nodes, id));
                }
                next.push(id);
            }
        }
        if next.is_empty() {
            return None;
        }
        frontier = next;
    }
    None
}

/// `T(λv, E)` for a one-letter word of the family.
pub fn letter_transfer(family: &FamilySpec, letter: &Letter, e: f64) -> Mat2 {
    transfer_values(&letter.0, e, family.coupling)
}

/// `T(v, E)^n`, the transfer matrix of the polymer letter `(v)^{♯n}`.
pub fn polymer_transfer(v: f64, n: u32, e: f64) -> Mat2 {
    transfer_single(v, e).powi(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[f64]) -> Word {
        Word::from_values(v).unwrap()
    }

    #[test]
    fn exceptional_sets() {
        let s = exceptional_set(&FamilySpec::k_sieve(2, 1.0)).unwrap();
        assert_eq!(s.roots.len(), 1);
        assert!(s.roots[0].abs() < 1e-12);
        assert!(exceptional_set(&FamilySpec::polymer(3, 1.0)).unwrap().roots.is_empty());
        let degenerate = FamilySpec::new(FamilyKind::Sieve { n: 1, b: vec![] }, 1.0).unwrap();
        assert!(exceptional_set(&degenerate).unwrap().roots.is_empty());
        // 3-sieve: T(0,0)_11 = E^2 - 1
        let s3 = exceptional_set(&FamilySpec::k_sieve(3, 1.0)).unwrap();
        assert_eq!(s3.roots.len(), 2);
        assert!((s3.roots[0] + 1.0).abs() < 1e-12 && (s3.roots[1] - 1.0).abs() < 1e-12);
        assert!(s3.residuals.iter().all(|r| *r < 1e-12));
    }

    #[test]
    fn affine_solutions() {
        assert_eq!(affine_trace_solve(&Mat2::IDENTITY, 0.5, 10.0), Some(0.5 - 3.0));
        assert_eq!(affine_trace_solve(&transfer_single(0.0, 0.0), 0.0, 10.0), None);
        let v = affine_trace_solve(&transfer_single(0.0, 1.0), 1.0, 10.0).unwrap();
        assert_eq!(v, 2.0);
        let m = transfer_single(0.0, 1.0).mul(&transfer_single(v, 1.0));
        assert_eq!(m.trace(), -3.0);
    }

    #[test]
    fn hyperbolic_letters() {
        let f = FamilySpec::k_sieve(2, 1.0);
        let l = letter_hyperbolic_search(&f, 1.0).unwrap();
        assert_eq!(l, Letter(vec![2.0, 0.0]));
        assert!(matches!(
            letter_hyperbolic_search(&f, 0.0),
            Err(Error::NotFound { .. })
        ));
        let p = FamilySpec::polymer(3, 1.0);
        let l = letter_hyperbolic_search(&p, 0.7).unwrap();
        assert!(letter_transfer(&p, &l, 0.7).trace().abs() > 2.0);
        assert!((polymer_transfer(0.7 - 3.0, 1, 0.7).trace() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn open_gap_already_hyperbolic() {
        let x = crate::words::sieve(&[2.0], 2).unwrap();
        let c = open_gap(&x, 1.0, 10.0, &FamilySpec::k_sieve(2, 1.0), 12).unwrap();
        assert_eq!(c.word, x);
        assert_eq!(c.trace, -3.0);
        assert_eq!(c.distance_to_input, 0.0);
    }

    #[test]
    fn open_gap_elliptic_free() {
        let x = w(&[0.0]);
        let f = FamilySpec::full_line(1.0);
        let c = open_gap(&x, 0.0, 0.5, &f, 12).unwrap();
        assert!(c.verify(&x, 0.5, 1.0));
        assert!(c.word.len() > 1);
    }

    #[test]
    fn open_gap_parabolic_free() {
        let x = w(&[0.0]);
        let c = open_gap(&x, 2.0, 0.5, &FamilySpec::full_line(1.0), 12).unwrap();
        assert!(c.verify(&x, 0.5, 1.0));
        assert_eq!(c.word, w(&[-0.125]));
        assert!((c.trace - 2.125).abs() < 1e-15);
    }

    #[test]
    fn open_gap_rejects_exceptional_energy() {
        let x = crate::words::sieve(&[1.0], 2).unwrap();
        let r = open_gap(&x, 0.0, 0.5, &FamilySpec::k_sieve(2, 1.0), 12);
        assert!(matches!(r, Err(Error::ExceptionalEnergy { .. })));
    }

    #[test]
    fn certificate_gap_contains_energy() {
        let x = w(&[0.0]);
        let c = open_gap(&x, 0.3, 0.5, &FamilySpec::full_line(1.0), 12).unwrap();
        let g = c.gap(1.0).unwrap();
        assert!(g.lo < 0.3 && 0.3 < g.hi);
        let js = serde_json::to_value(&c).unwrap();
        assert!(js.get("distance").is_some() && js.get("word").is_some());
    }

    #[test]
    fn bfs_finds_hyperbolic_product() {
        // two rotations of quarter turn conjugated differently
        let a = transfer_single(0.0, 0.0);
        let b = transfer_single(0.5, 0.0);
        let mut budget = 10_000;
        let p = bfs_hyperbolic(&[a, b], 12, &mut budget).unwrap();
        let m = p.iter().fold(Mat2::IDENTITY, |acc, &g| [a, b][g].mul(&acc));
        assert!(m.trace().abs() > 2.0);
    }
}
