//! Discrete Schrödinger transfer matrices and the discriminant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sl2::{Mat2, ProductAccumulator, ScaledMat2};
use crate::spectrum::EnergyWindow;
use crate::words::Word;

/// `T(v, E) = [[E - v, -1], [1, 0]]`.
#[inline]
pub fn transfer_single(v: f64, e: f64) -> Mat2 {
    Mat2::new(e - v, -1.0, 1.0, 0.0)
}

/// `T(λ x_q, E) ⋯ T(λ x_1, E)` over an aggregated potential.
pub fn transfer_values(values: &[f64], e: f64, lambda: f64) -> Mat2 {
    let mut acc = ProductAccumulator::new();
    for &v in values {
        acc.push(&transfer_single(lambda * v, e));
    }
    acc.finish()
}

/// Same product, kept in log-scaled form so that it never overflows.
pub fn transfer_values_scaled(values: &[f64], e: f64, lambda: f64) -> ScaledMat2 {
    let mut acc = ScaledMat2::default();
    for &v in values {
        acc.push(&transfer_single(lambda * v, e));
    }
    acc.normalize();
    acc
}

pub fn transfer_word(x: &Word, e: f64, lambda: f64) -> Mat2 {
    transfer_values(x.values(), e, lambda)
}

pub fn transfer_word_scaled(x: &Word, e: f64, lambda: f64) -> ScaledMat2 {
    transfer_values_scaled(x.values(), e, lambda)
}

/// `D(x, E) = tr T(x, E)`; saturates to `±inf` when the product overflows.
pub fn discriminant_values(values: &[f64], e: f64, lambda: f64) -> f64 {
    let m = transfer_values(values, e, lambda);
    let t = m.trace();
    if t.is_finite() {
        t
    } else {
        transfer_values_scaled(values, e, lambda).trace()
    }
}

pub fn discriminant(x: &Word, e: f64, lambda: f64) -> f64 {
    discriminant_values(x.values(), e, lambda)
}

/// Strictly increasing list of energies, optionally tied to a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<EnergyWindow>,
}

impl EnergyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("grid energies must be finite".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
        }
        Ok(EnergyGrid {
            points,
            window: None,
        })
    }

    /// `n` equispaced points from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 || !(lo < hi) && n > 1 {
            return Err(Error::InvalidArgument(format!(
                "bad uniform grid [{lo}, {hi}] with {n} points"
            )));
        }
        if n == 1 {
            return Self::new(vec![lo]);
        }
        let h = (hi - lo) / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        pts[n - 1] = hi;
        Self::new(pts)
    }

    /// Points with spacing at most `step` on every interval of the window.
    pub fn over_window(window: &EnergyWindow, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument("grid step must be positive".into()));
        }
        let mut pts = Vec::new();
        for iv in window.intervals() {
            let n = ((iv.len() / step).ceil() as usize).max(1);
            for i in 0..=n {
                let p = iv.lo + iv.len() * i as f64 / n as f64;
                if pts.last().map_or(true, |&l| p > l) {
                    pts.push(p);
                }
            }
        }
        let mut g = Self::new(pts)?;
        g.window = Some(window.clone());
        Ok(g)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn window(&self) -> Option<&EnergyWindow> {
        self.window.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Evaluates `f` at every point in parallel; output order follows the grid.
    pub fn sweep<T: Send, F: Fn(f64) -> T + Sync>(&self, f: F) -> Vec<T> {
        self.points.par_iter().map(|&e| f(e)).collect()
    }
}
