//! Continuum Schrödinger operators `-d²/dx² + λφ` with piecewise-constant
//! cell potentials.
//!
//! Transfer matrices are exact products of free blocks. Square roots of
//! possibly negative arguments never appear: the free block is written with
//! the entire functions `c(z) = cos √z` and `s(z) = sin √z / √z`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::sl2::{Mat2, TOL_HYP};
use crate::spectrum::{BandSet, Interval};

/// Below this `|z|` the entire functions use their Taylor polynomials.
pub const TAYLOR_RADIUS: f64 = 1e-4;

/// Bisection stops once an edge is bracketed this tightly.
const EDGE_TOL: f64 = 1e-12;

/// `|tr|` within this of 2 at a local maximum inside a band counts as a
/// touching point (closed gap).
const TOUCH_TOL: f64 = 1e-9;

/// Points tried by [`continuum_sieve_gap`] on `[0, λ_max]`.
const SIEVE_SCAN: usize = 4096;

/// `cos √z`, continued to `z < 0` as `cosh √-z`.
pub fn entire_c(z: f64) -> f64 {
    if z.abs() < TAYLOR_RADIUS {
        1.0 - z / 2.0 + z * z / 24.0 - z * z * z / 720.0
    } else if z > 0.0 {
        z.sqrt().cos()
    } else {
        (-z).sqrt().cosh()
    }
}

/// `sin √z / √z`, continued to `z < 0` as `sinh √-z / √-z`.
pub fn entire_s(z: f64) -> f64 {
    if z.abs() < TAYLOR_RADIUS {
        1.0 - z / 6.0 + z * z / 120.0 - z * z * z / 5040.0
    } else if z > 0.0 {
        let r = z.sqrt();
        r.sin() / r
    } else {
        let r = (-z).sqrt();
        r.sinh() / r
    }
}

/// `(c(z), s(z))` in double-double precision from the power series
/// `Σ (-z)^k / (2k)!` and `Σ (-z)^k / (2k+1)!`.
///
/// For `z > 0` the series cancels, so the absolute error grows like
/// `e^{√z}·1e-32`; fine for `|z|` up to a few hundred.
pub fn entire_cs_dd(z: f64) -> (TwoFloat, TwoFloat) {
    let mz = TwoFloat::from(-z);
    let mut c = TwoFloat::from(1.0);
    let mut s = TwoFloat::from(1.0);
    let mut tc = TwoFloat::from(1.0);
    let mut ts = TwoFloat::from(1.0);
    for k in 1..400u32 {
        let k = f64::from(k);
        tc = tc * mz / ((2.0 * k - 1.0) * (2.0 * k));
        ts = ts * mz / ((2.0 * k) * (2.0 * k + 1.0));
        c += tc;
        s += ts;
        let small = |t: TwoFloat, sum: TwoFloat| t.hi().abs() <= 1e-34 * sum.hi().abs().max(1e-300);
        if small(tc, c) && small(ts, s) {
            break;
        }
    }
    (c, s)
}

/// `c(z)² + z·s(z)² - 1` evaluated in double-double.
pub fn unimodularity_defect(z: f64) -> f64 {
    let (c, s) = entire_cs_dd(z);
    let d = c * c + s * s * z - 1.0;
    d.hi() + d.lo()
}

/// Transfer matrix over `[0, a)` of the zero potential at energy `E`.
pub fn free_transfer(a: f64, e: f64) -> Mat2 {
    let z = a * a * e;
    let c = entire_c(z);
    let s = entire_s(z);
    Mat2::new(c, a * s, -a * e * s, c)
}

/// A potential on `[0, a)`, constant on each of `samples.len()` equal
/// subcells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CellRepr")]
pub struct CellPotential {
    pub a: f64,
    pub samples: Vec<f64>,
}

#[derive(Deserialize)]
struct CellRepr {
    a: f64,
    samples: Vec<f64>,
}

impl TryFrom<CellRepr> for CellPotential {
    type Error = Error;
    fn try_from(r: CellRepr) -> Result<Self> {
        CellPotential::new(r.a, r.samples)
    }
}

impl CellPotential {
    pub fn new(a: f64, samples: Vec<f64>) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("cell length must be positive, got {a}")));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("cell needs at least one sample".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("cell samples must be finite".into()));
        }
        Ok(CellPotential { a, samples })
    }

    pub fn zero(a: f64) -> Result<Self> {
        Self::new(a, vec![0.0])
    }

    pub fn constant(a: f64, v: f64) -> Result<Self> {
        Self::new(a, vec![v])
    }

    /// Value at `x ∈ [0, a)`.
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.samples.len();
        let i = ((x / self.a) * n as f64).floor() as isize;
        self.samples[i.clamp(0, n as isize - 1) as usize]
    }
}

/// Finite concatenation `φ_1 ♯ ⋯ ♯ φ_n` of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WordRepr")]
pub struct ContinuumWord {
    pub cells: Vec<CellPotential>,
}

#[derive(Deserialize)]
struct WordRepr {
    cells: Vec<CellPotential>,
}

impl TryFrom<WordRepr> for ContinuumWord {
    type Error = Error;
    fn try_from(r: WordRepr) -> Result<Self> {
        ContinuumWord::new(r.cells)
    }
}

impl ContinuumWord {
    pub fn new(cells: Vec<CellPotential>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidArgument("continuum word needs at least one cell".into()));
        }
        Ok(ContinuumWord { cells })
    }

    pub fn single(cell: CellPotential) -> Self {
        ContinuumWord { cells: vec![cell] }
    }

    /// Total length of the period.
    pub fn length(&self) -> f64 {
        self.cells.iter().map(|c| c.a).sum()
    }

    pub fn concat(&self, other: &ContinuumWord) -> ContinuumWord {
        let mut cells = self.cells.clone();
        cells.extend(other.cells.iter().cloned());
        ContinuumWord { cells }
    }
}

/// `B(λφ, E)`, the solution matrix of `M' = [[0, 1], [λφ - E, 0]] M` at
/// `x = a`. Exact for piecewise-constant `φ`.
pub fn transfer_ode(phi: &CellPotential, e: f64, lambda: f64) -> Mat2 {
    let h = phi.a / phi.samples.len() as f64;
    phi.samples
        .iter()
        .fold(Mat2::IDENTITY, |m, &v| free_transfer(h, e - lambda * v).mul(&m))
}

/// `B(φ_n, E) ⋯ B(φ_1, E)`.
pub fn transfer_concat(w: &ContinuumWord, e: f64, lambda: f64) -> Mat2 {
    w.cells
        .iter()
        .fold(Mat2::IDENTITY, |m, c| transfer_ode(c, e, lambda).mul(&m))
}

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo) > 0.0;
    for _ in 0..200 {
        if hi - lo <= EDGE_TOL * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == flo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for the extremum of `f` on `[lo, hi]`; maximises
/// when `max` is set. Returns `(x, f(x))`.
fn golden(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, max: bool) -> (f64, f64) {
    let g = |x: f64| if max { f(x) } else { -f(x) };
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..200 {
        if hi - lo <= EDGE_TOL * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = g(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

#[derive(Clone, Copy, PartialEq)]
enum Edge {
    Open,
    Close,
}

/// Bands of the periodic operator with potential `λ w^♮` inside
/// `[lo, hi]`: the set where `|tr B(w, E)| ≤ 2`, found by scanning `grid`
/// equispaced energies and refining edges by bisection.
///
/// Local extrema of `|tr|` between grid points are refined as well, so a
/// band that touches its neighbour (closed gap) is split there and small
/// gaps or bands between two grid points are not lost.
pub fn continuum_bands(w: &ContinuumWord, lo: f64, hi: f64, lambda: f64, grid: usize) -> Result<BandSet> {
    if grid < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
    }
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad energy range [{lo}, {hi}]")));
    }
    let f = |e: f64| transfer_concat(w, e, lambda).trace().abs() - 2.0;
    let es: Vec<f64> = (0..grid)
        .map(|i| if i + 1 == grid { hi } else { lo + (hi - lo) * i as f64 / (grid - 1) as f64 })
        .collect();
    let fs: Vec<f64> = es.par_iter().map(|&e| f(e)).collect();

    let events: Vec<Vec<(f64, Edge)>> = (0..grid)
        .into_par_iter()
        .map(|i| {
            let mut ev = Vec::new();
            if i + 1 < grid {
                let (a, b) = (fs[i] <= 0.0, fs[i + 1] <= 0.0);
                if a != b {
                    let x = bisect(&f, es[i], es[i + 1]);
                    ev.push((x, if a { Edge::Close } else { Edge::Open }));
                }
            }
            if i == 0 || i + 1 == grid {
                return ev;
            }
            let (l, m, r) = (fs[i - 1], fs[i], fs[i + 1]);
            if m <= 0.0 && l <= 0.0 && r <= 0.0 && m >= l && m >= r {
                let (x, fx) = golden(&f, es[i - 1], es[i + 1], true);
                if fx > 0.0 {
                    ev.push((bisect(&f, es[i - 1], x), Edge::Close));
                    ev.push((bisect(&f, x, es[i + 1]), Edge::Open));
                } else if fx > -TOUCH_TOL {
                    ev.push((x, Edge::Close));
                    ev.push((x, Edge::Open));
                }
            } else if m > 0.0 && l > 0.0 && r > 0.0 && m <= l && m <= r {
                let (x, fx) = golden(&f, es[i - 1], es[i + 1], false);
                if fx <= 0.0 {
                    ev.push((bisect(&f, es[i - 1], x), Edge::Open));
                    ev.push((bisect(&f, x, es[i + 1]), Edge::Close));
                }
            }
            ev
        })
        .collect();

    let mut bands = Vec::new();
    let mut start = (fs[0] <= 0.0).then_some(lo);
    for (x, kind) in events.into_iter().flatten() {
        match (kind, start) {
            (Edge::Open, None) => start = Some(x),
            (Edge::Close, Some(s)) => {
                bands.push(Interval::new(s, x.max(s)));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        bands.push(Interval::new(s, hi));
    }
    Ok(BandSet {
        q: bands.len(),
        bands,
    })
}

/// `tr B((λ χ_{[0,a)}) ♯ ψ, E)` from the entries of `m = B(ψ, E)`.
pub fn sieve_trace(m: &Mat2, a: f64, e: f64, lambda: f64) -> f64 {
    let w = e - lambda;
    let z = a * a * w;
    let (c, s) = (entire_c(z), entire_s(z));
    (m.a11 + m.a22) * c + a * m.a21 * s - a * m.a12 * w * s
}

/// Smallest `λ` on a uniform scan of `[0, λ_max]` with
/// `|tr B((λ χ_{[0,a)}) ♯ ψ, E)| > 3`.
pub fn continuum_sieve_gap(psi: &CellPotential, a: f64, e: f64, lambda_max: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!("cell length must be positive, got {a}")));
    }
    if !(lambda_max >= 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda_max must be nonnegative, got {lambda_max}")));
    }
    let m = transfer_ode(psi, e, 1.0);
    let steps = if lambda_max > 0.0 { SIEVE_SCAN } else { 0 };
    (0..=steps)
        .map(|k| if k == steps { lambda_max } else { lambda_max * k as f64 / steps as f64 })
        .find(|&l| sieve_trace(&m, a, e, l).abs() > 3.0)
        .ok_or(Error::NotFoundWithinBound(lambda_max))
}

/// `tr B((λ χ_{[0,a)})^{♯n}, E) = 2 c((an)²(E - λ))`.
pub fn repeat_trace(a: f64, n: u32, e: f64, lambda: f64) -> f64 {
    let l = a * f64::from(n);
    2.0 * entire_c(l * l * (e - lambda))
}

/// A coupling `λ ≤ λ_max` making the repeated constant cell hyperbolic at
/// `E`: `E + 1` when allowed, else `λ_max` if that still works.
pub fn continuum_repeat_gap(a: f64, n: u32, e: f64, lambda_max: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!("cell length must be positive, got {a}")));
    }
    let lambda = (e + 1.0).min(lambda_max);
    if repeat_trace(a, n, e, lambda).abs() > 2.0 + TOL_HYP {
        Ok(lambda)
    } else {
        Err(Error::NotFoundWithinBound(lambda_max))
    }
}
