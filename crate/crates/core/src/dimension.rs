//! Box-counting estimates for finite unions of intervals.

use serde::{Deserialize, Serialize};

use crate::spectrum::{EnergyWindow, Interval};
use crate::thin::ls_slope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub slope: f64,
    pub eps: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Minimal number of closed intervals of length `eps` covering `set`
/// (sorted, disjoint), by the greedy left-to-right sweep.
pub fn cover_count(set: &[Interval], eps: f64) -> usize {
    let tol = 1e-9 * eps;
    let mut count = 0usize;
    let mut reach = f64::NEG_INFINITY;
    for iv in set {
        if iv.hi <= reach + tol {
            continue;
        }
        if iv.lo > reach + tol {
            count += 1;
            reach = iv.lo + eps;
        }
        let rest = iv.hi - reach;
        if rest > tol {
            let n = (rest / eps - 1e-9).ceil().max(1.0);
            count += n as usize;
            reach += n * eps;
        }
    }
    count
}

/// Counts `N(S ∩ window, ε)` for each `ε` and fits `log N` against
/// `log(1/ε)`.
pub fn box_dimension_estimate(
    set: &[Interval],
    window: &EnergyWindow,
    eps_list: &[f64],
) -> DimensionEstimate {
    let mut sorted = set.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let clipped = if window.is_empty() {
        sorted
    } else {
        window.intersect_intervals(&sorted).intervals().to_vec()
    };
    let counts: Vec<usize> = eps_list.iter().map(|&e| cover_count(&clipped, e)).collect();
    let xs: Vec<f64> = eps_list.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c.max(1) as f64).ln()).collect();
    DimensionEstimate {
        slope: ls_slope(&xs, &ys).unwrap_or(0.0),
        eps: eps_list.to_vec(),
        counts,
    }
}

/// The `2^level` intervals of the middle-thirds construction on `[0, 1]`.
pub fn cantor_intervals(level: u32) -> Vec<Interval> {
    let mut cur = vec![Interval::new(0.0, 1.0)];
    for _ in 0..level {
        let mut next = Vec::with_capacity(cur.len() * 2);
        for iv in cur {
            let third = iv.len() / 3.0;
            next.push(Interval::new(iv.lo, iv.lo + third));
            next.push(Interval::new(iv.hi - third, iv.hi));
        }
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval() {
        let d = box_dimension_estimate(&[Interval::new(0.0, 1.0)], &EnergyWindow::empty(), &[0.1, 0.01]);
        assert_eq!(d.counts, vec![10, 100]);
        assert!((d.slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cantor_fixture() {
        let c = cantor_intervals(10);
        assert_eq!(c.len(), 1024);
        let eps: Vec<f64> = (2..=8).map(|k| 3f64.powi(-k)).collect();
        let d = box_dimension_estimate(&c, &EnergyWindow::empty(), &eps);
        let expect: Vec<usize> = (2..=8).map(|k| 1usize << k).collect();
        assert_eq!(d.counts, expect);
        assert!((d.slope - 2f64.ln() / 3f64.ln()).abs() < 0.02);
    }

    #[test]
    fn single_point() {
        let d = box_dimension_estimate(&[Interval::new(0.5, 0.5)], &EnergyWindow::empty(), &[0.1, 0.01, 0.001]);
        assert_eq!(d.counts, vec![1, 1, 1]);
        assert_eq!(d.slope, 0.0);
    }

    #[test]
    fn window_clips() {
        let w = EnergyWindow::single(0.0, 0.5).unwrap();
        let d = box_dimension_estimate(&[Interval::new(0.0, 1.0)], &w, &[0.1]);
        assert_eq!(d.counts, vec![5]);
    }
}
