//! Eigenvalues of the periodic and antiperiodic truncations of a discrete
//! Schrödinger operator.
//!
//! The cyclic tridiagonal matrix is permuted into a pentadiagonal one
//! (sites ordered `0, 1, q-1, 2, q-2, ...`), reduced to tridiagonal form by
//! Givens bulge chasing and diagonalised with implicit QL. Everything is
//! `O(q^2)` time and `O(q)` memory.

/// Symmetric band matrix, lower part stored up to distance `W - 1`.
struct Band {
    n: usize,
    rows: Vec<[f64; W]>,
}

const W: usize = 4;

impl Band {
    fn new(n: usize) -> Self {
        Band {
            n,
            rows: vec![[0.0; W]; n],
        }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        if d < W {
            self.rows[i][d]
        } else {
            0.0
        }
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        if d < W {
            self.rows[i][d] = v;
        } else {
            debug_assert!(v.abs() < 1e-12, "fill outside band: ({i},{j}) = {v}");
        }
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let x = self.get(i, j);
        self.set(i, j, x + v);
    }

    /// Similarity by the plane rotation acting on indices `p, p + 1`.
    fn rotate(&mut self, p: usize, c: f64, s: f64) {
        let q = p + 1;
        let lo = p.saturating_sub(W - 1);
        let hi = (q + W - 1).min(self.n - 1);
        for j in lo..=hi {
            if j == p || j == q {
                continue;
            }
            let x = self.get(p, j);
            let y = self.get(q, j);
            if x == 0.0 && y == 0.0 {
                continue;
            }
            self.set(p, j, c * x + s * y);
            self.set(q, j, -s * x + c * y);
        }
        let a = self.get(p, p);
        let b = self.get(p, q);
        let d = self.get(q, q);
        self.set(p, p, c * c * a + 2.0 * c * s * b + s * s * d);
        self.set(q, q, s * s * a - 2.0 * c * s * b + c * c * d);
        self.set(p, q, c * s * (d - a) + (c * c - s * s) * b);
    }

    /// Zeroes entry `(p + 1, j)` by rotating in the plane `(p, p + 1)`.
    fn annihilate(&mut self, p: usize, j: usize) -> bool {
        let y = self.get(p + 1, j);
        if y == 0.0 {
            return false;
        }
        let x = self.get(p, j);
        let r = x.hypot(y);
        let (c, s) = (x / r, y / r);
        self.rotate(p, c, s);
        self.rows[p + 1][p + 1 - j] = 0.0;
        true
    }
}

/// Eigenvalues (ascending) of the `q x q` matrix with diagonal `diag`,
/// unit nearest-neighbour hopping and corner entries `corner` at
/// `(0, q-1)` and `(q-1, 0)`.
pub fn cyclic_eigenvalues(diag: &[f64], corner: f64) -> Vec<f64> {
    let q = diag.len();
    match q {
        0 => return Vec::new(),
        1 => return vec![diag[0] + 2.0 * corner],
        2 => {
            let off = 1.0 + corner;
            return symmetric2(diag[0], off, diag[1]);
        }
        _ => {}
    }
    // pos[site]
    let mut order = Vec::with_capacity(q);
    order.push(0usize);
    let (mut lo, mut hi) = (1usize, q - 1);
    while lo <= hi {
        order.push(lo);
        if lo != hi {
            order.push(hi);
        }
        lo += 1;
        hi -= 1;
    }
    let mut pos = vec![0usize; q];
    for (k, &site) in order.iter().enumerate() {
        pos[site] = k;
    }
    let mut a = Band::new(q);
    for site in 0..q {
        a.add(pos[site], pos[site], diag[site]);
        let next = (site + 1) % q;
        let hop = if next == 0 { corner } else { 1.0 };
        a.add(pos[site], pos[next], hop);
    }
    for col in 0..q.saturating_sub(2) {
        // zero (col + 2, col); each rotation in (p, p + 1) leaves a bulge at
        // (p + 3, p) which the next rotation pushes two rows further down
        let (mut p, mut j) = (col + 1, col);
        while p + 1 < q && a.annihilate(p, j) {
            j = p;
            p += 2;
        }
    }
    let mut d: Vec<f64> = (0..q).map(|i| a.get(i, i)).collect();
    let mut e: Vec<f64> = (0..q).map(|i| if i + 1 < q { a.get(i + 1, i) } else { 0.0 }).collect();
    tridiagonal_eigenvalues(&mut d, &mut e);
    d
}

fn symmetric2(a: f64, b: f64, d: f64) -> Vec<f64> {
    let m = 0.5 * (a + d);
    let r = (0.5 * (a - d)).hypot(b);
    vec![m - r, m + r]
}

/// Implicit-shift QL on a symmetric tridiagonal matrix. On return `d` holds
/// the eigenvalues in ascending order. `e[i]` is the entry `(i + 1, i)`.
pub fn tridiagonal_eigenvalues(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    if n == 0 {
        return;
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.total_cmp(b));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi sweeps on a dense copy.
    fn jacobi_oracle(diag: &[f64], corner: f64) -> Vec<f64> {
        let n = diag.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = diag[i];
            let j = (i + 1) % n;
            let h = if j == 0 { corner } else { 1.0 };
            a[i][j] += h;
            a[j][i] += h;
        }
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| x.total_cmp(y));
        ev
    }

    #[test]
    fn free_periodic_spectrum() {
        for q in 1..12 {
            let ev = cyclic_eigenvalues(&vec![0.0; q], 1.0);
            let mut exact: Vec<f64> = (0..q)
                .map(|k| 2.0 * (2.0 * std::f64::consts::PI * k as f64 / q as f64).cos())
                .collect();
            exact.sort_by(|x, y| x.total_cmp(y));
            for (a, b) in ev.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-12, "q={q}: {ev:?} vs {exact:?}");
            }
        }
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for q in 3..40 {
            for corner in [1.0, -1.0] {
                let diag: Vec<f64> = (0..q).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let ev = cyclic_eigenvalues(&diag, corner);
                let ex = jacobi_oracle(&diag, corner);
                assert_eq!(ev.len(), q);
                for (a, b) in ev.iter().zip(&ex) {
                    assert!((a - b).abs() < 1e-10, "q={q} corner={corner}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn tridiagonal_ql() {
        let mut d = vec![2.0, 2.0, 2.0];
        let mut e = vec![-1.0, -1.0, 0.0];
        tridiagonal_eigenvalues(&mut d, &mut e);
        let s = 2f64.sqrt();
        for (a, b) in d.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
