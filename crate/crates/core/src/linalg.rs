//! Banded symmetric positive-definite factorisation.
//!
//! Every latent-path draw in the sampler and the trend extraction in the
//! preprocessing stage reduce to a linear system whose matrix has a narrow
//! band around the diagonal: block-tridiagonal for the coefficient states
//! (lower bandwidth `K` when states are stacked time-major, since the
//! off-diagonal blocks are diagonal), tridiagonal
//! for the log-volatility path, pentadiagonal for the trend filter. A banded
//! Cholesky factor costs `O(n * bw^2)` and lets us draw the whole path in one
//! shot: with `P = L L'`, `x = P^{-1} b + L'^{-1} z`, `z ~ N(0, I)` is an
//! exact draw from `N(P^{-1} b, P^{-1})`.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix. Row `i` stores columns `i - bw ..= i`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw && i < self.n);
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Entry `(i, j)`; either triangle may be addressed.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)` (once when on the diagonal).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Cholesky factor `L` with `A = L L'`, or `None` when a pivot is not
    /// strictly positive.
    pub fn cholesky(&self) -> Option<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = self.data.clone();
        let at = |i: usize, j: usize| i * (bw + 1) + (bw + j - i);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = l[at(i, j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= l[at(i, k)] * l[at(j, k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[at(i, i)] = s.sqrt();
                } else {
                    l[at(i, j)] = s / l[at(j, j)];
                }
            }
        }
        Some(BandedCholesky { n, bw, l })
    }

    /// Cholesky with diagonal jitter escalation for matrices that are
    /// positive definite in exact arithmetic but lose it to rounding.
    pub fn cholesky_jittered(&self) -> Result<BandedCholesky> {
        if let Some(c) = self.cholesky() {
            return Ok(c);
        }
        let scale = (0..self.n)
            .map(|i| self.get(i, i).abs())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut jitter = scale * 1e-12;
        for _ in 0..6 {
            let mut m = self.clone();
            for i in 0..self.n {
                m.add(i, i, jitter);
            }
            if let Some(c) = m.cholesky() {
                debug!("banded precision not numerically positive definite; factorised with jitter {jitter:.3e}");
                return Ok(c);
            }
            jitter *= 100.0;
        }
        Err(Error::Numerical(
            "banded precision matrix is not positive definite".into(),
        ))
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (self.bw + j - i)]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = b[i];
            for k in lo..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }

    /// Solves `L' x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = y[i];
            for k in i + 1..=hi {
                s -= self.at(k, i) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// Draws from `N(A^{-1} b, A^{-1})`.
    pub fn sample_canonical<R: Rng + ?Sized>(&self, b: &[f64], rng: &mut R) -> Vec<f64> {
        // L'x = L^{-1}b + z gives mean A^{-1}b and covariance (LL')^{-1}.
        let mut x = b.to_vec();
        self.forward(&mut x);
        for xi in x.iter_mut() {
            *xi += rng.sample::<f64, _>(StandardNormal);
        }
        self.backward(&mut x);
        x
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.at(i, i).ln()).sum::<f64>()
    }
}

/// Draws from `N(P^{-1} b, P^{-1})` for a small dense precision `P`.
pub fn sample_dense_canonical<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    b: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = dense_cholesky_jittered(precision)?;
    let l = chol.l();
    let mut y = l
        .solve_lower_triangular(b)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    for yi in y.iter_mut() {
        *yi += rng.sample::<f64, _>(StandardNormal);
    }
    l.transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))
}

pub fn dense_cholesky_jittered(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut jitter = scale * 1e-12;
    for _ in 0..6 {
        let mut mj = m.clone();
        for i in 0..mj.nrows() {
            mj[(i, i)] += jitter;
        }
        if let Some(c) = mj.cholesky() {
            debug!("dense precision not numerically positive definite; factorised with jitter {jitter:.3e}");
            return Ok(c);
        }
        jitter *= 100.0;
    }
    Err(Error::Numerical("precision matrix is not positive definite".into()))
}

/// Splits the columns of a row-major design into a linearly independent
/// leading set and the rest, scanning left to right with modified
/// Gram-Schmidt. A column is dependent when its residual norm falls below
/// `rel_tol` times its own norm; all-zero columns are always dependent.
pub fn independent_columns(rows: &[Vec<f64>], rel_tol: f64) -> (Vec<usize>, Vec<usize>) {
    let k = rows.first().map_or(0, Vec::len);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for j in 0..k {
        let mut v: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for q in &basis {
            let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= dot * qi;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= rel_tol * norm0 {
            dropped.push(j);
        } else {
            basis.push(v.iter().map(|a| a / norm).collect());
            kept.push(j);
        }
    }
    (kept, dropped)
}

/// Least-squares solution of `x b = y`.
///
/// Householder QR for full column rank. Rank-deficient systems fall back to
/// the minimum-norm SVD solution. The SVD is not the default because its
/// iteration can stop short on some well-conditioned matrices.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = x.shape();
    if n >= k && k > 0 {
        let qr = x.clone().qr();
        let r = qr.r();
        let rmax = r.diagonal().amax();
        if r.diagonal().iter().all(|d| d.abs() > 1e-13 * rmax) {
            if let Some(b) = r.solve_upper_triangular(&(qr.q().transpose() * y)) {
                return Ok(b);
            }
        }
    }
    x.clone()
        .svd(true, true)
        .solve(y, 1e-14)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, bw: usize, seed: u64) -> BandedSpd {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandedSpd::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                a.add(i, j, rng.random_range(-1.0..1.0));
            }
            a.add(i, i, 2.0 * bw as f64 + 1.0 + rng.random::<f64>());
        }
        a
    }

    #[test]
    fn solve_matches_dense_lu() {
        for (n, bw) in [(1usize, 0usize), (5, 1), (20, 2), (30, 5), (7, 10)] {
            let bw = bw.min(n.saturating_sub(1));
            let a = random_banded(n, bw, n as u64);
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let x = a.cholesky().unwrap().solve(&b);
            let xd = a.to_dense().lu().solve(&DVector::from_vec(b.clone())).unwrap();
            for i in 0..n {
                assert!((x[i] - xd[i]).abs() < 1e-12, "n={n} bw={bw}");
            }
            let ax = a.mul_vec(&x);
            for i in 0..n {
                assert!((ax[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_det_matches_dense() {
        let a = random_banded(12, 3, 9);
        let c = a.cholesky().unwrap();
        let d = a.to_dense().determinant().ln();
        assert!((c.log_det() - d).abs() < 1e-10);
    }

    #[test]
    fn indefinite_matrix_is_rejected_and_jitter_escalates() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(a.cholesky().is_none());
        assert!(a.cholesky_jittered().is_err());

        // Rank one plus exact zero: PSD but singular; jitter rescues it.
        let mut s = BandedSpd::zeros(2, 1);
        s.add(0, 0, 1.0);
        s.add(1, 1, 1.0);
        s.add(1, 0, 1.0);
        assert!(s.cholesky_jittered().is_ok());
    }

    #[test]
    fn canonical_draw_has_right_moments() {
        let mut a = BandedSpd::zeros(3, 1);
        for (i, j, v) in [(0, 0, 2.0), (1, 1, 2.0), (2, 2, 1.0), (1, 0, -1.0), (2, 1, -1.0)] {
            a.add(i, j, v);
        }
        let b = [1.0, 0.0, 0.5];
        let cov = a.to_dense().try_inverse().unwrap();
        let mean = &cov * DVector::from_row_slice(&b);
        let c = a.cholesky().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut s1 = [0.0; 3];
        let mut s2 = [0.0; 3];
        for _ in 0..n {
            let x = c.sample_canonical(&b, &mut rng);
            for i in 0..3 {
                s1[i] += x[i];
                s2[i] += x[i] * x[i];
            }
        }
        for i in 0..3 {
            let m = s1[i] / n as f64;
            let v = s2[i] / n as f64 - m * m;
            let se = (cov[(i, i)] / n as f64).sqrt();
            assert!((m - mean[i]).abs() < 4.0 * se, "mean {i}");
            assert!((v / cov[(i, i)] - 1.0).abs() < 0.03, "var {i}");
        }
    }

    #[test]
    fn independent_columns_flags_combinations() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                let a = i as f64;
                vec![1.0, a, 2.0 + 3.0 * a, 0.0, a * a]
            })
            .collect();
        let (kept, dropped) = independent_columns(&rows, 1e-10);
        assert_eq!(kept, vec![0, 1, 4]);
        assert_eq!(dropped, vec![2, 3]);
    }

    #[test]
    fn least_squares_matches_exact_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let b = least_squares(&x, &y).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);

        // Duplicated column: minimum-norm solution splits the weight.
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![2.0, 4.0, 6.0]);
        let b = least_squares(&x, &y).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-10 && (b[1] - 1.0).abs() < 1e-10);
    }

    /// A matrix on which the SVD solve of nalgebra 0.35 misses the optimum
    /// by 1e-3; the normal equations are the oracle.
    #[test]
    fn least_squares_matches_normal_equations() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(628);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let rows: Vec<[f64; 3]> = (0..44).map(|_| [1.0, draw(), 2.0 + 3.0 * draw()]).collect();
        let q: Vec<f64> = rows.iter().map(|x| 0.5 - x[1] + 0.3 * x[2] + draw()).collect();
        for lo in 0..=4 {
            let x = DMatrix::from_fn(40, 3, |i, j| rows[lo + i][j] * if j == 2 { 99.73266297403612 } else { 1.0 });
            let y = DVector::from_column_slice(&q[lo..lo + 40]);
            let b = least_squares(&x, &y).unwrap();
            let oracle = (x.transpose() * &x).lu().solve(&(x.transpose() * &y)).unwrap();
            for j in 0..3 {
                assert!((b[j] - oracle[j]).abs() < 1e-10 * oracle[j].abs().max(1.0), "lo={lo} j={j}");
            }
        }
    }
}
