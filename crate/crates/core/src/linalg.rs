//! Real banded matrices and LU factorization with partial pivoting.
//!
//! Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl`
//! superdiagonals hold the fill-in produced by row interchanges. A dense
//! matrix is the special case `kl = ku = n - 1`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dense(n: usize) -> Self {
        Self::zeros(n, n.saturating_sub(1), n.saturating_sub(1))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics if `(i, j)` lies outside the declared band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += value;
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = value;
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    fn row_range(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        i.saturating_sub(self.kl)..=(i + self.ku).min(self.n - 1)
    }

    /// Stored entries of row `i` within the matrix, with their first column.
    fn row_slice(&self, i: usize) -> (usize, &[f64]) {
        let r = self.row_range(i);
        let (lo, hi) = (*r.start(), *r.end());
        let off = i * self.width + lo + self.kl - i;
        (lo, &self.data[off..off + hi + 1 - lo])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let (lo, row) = self.row_slice(i);
                row.iter().zip(&x[lo..]).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `|A| |x|` row sums, used for backward-error scaling.
    pub fn abs_matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (lo, row) = self.row_slice(i);
                row.iter().zip(&x[lo..]).map(|(a, b)| (a * b).abs()).sum()
            })
            .collect()
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row_slice(i).1.iter().map(|a| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut lower = vec![0.0; n * kl.max(1)];
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Domain(format!("singular pivot in column {k}")));
            }
            piv[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            let len = last_col - k;
            let w = self.width;
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = 0.0;
                lower[k * kl.max(1) + (i - k - 1)] = l;
                if l != 0.0 {
                    let (head, tail) = self.data.split_at_mut(i * w);
                    let src = &head[k * w + kl + 1..k * w + kl + 1 + len];
                    let start = k + 1 + kl - i;
                    for (d, s) in tail[start..start + len].iter_mut().zip(src) {
                        *d -= l * s;
                    }
                }
            }
        }
        Ok(BandLu {
            upper: self,
            lower,
            piv,
        })
    }
}

/// `P A = L U` for a [`BandMatrix`].
#[derive(Debug, Clone)]
pub struct BandLu {
    upper: BandMatrix,
    lower: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let u = &self.upper;
        let (n, kl, ku) = (u.n, u.kl, u.ku);
        assert_eq!(b.len(), n);
        let stride = kl.max(1);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                let last = (k + kl).min(n - 1);
                for (x, l) in b[k + 1..=last].iter_mut().zip(&self.lower[k * stride..]) {
                    *x -= l * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let last = (k + kl + ku).min(n - 1);
            let row = &u.data[k * u.width + kl..k * u.width + kl + 1 + (last - k)];
            let s: f64 = row[1..].iter().zip(&b[k + 1..=last]).map(|(a, x)| a * x).sum();
            b[k] = (b[k] - s) / row[0];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Lower estimate of the infinity-norm condition number of the row-scaled
    /// matrix `D^-1 A` (`D = |diag A|`), from two probe solves.
    pub fn condition_estimate(&self, original: &BandMatrix) -> f64 {
        let n = original.n;
        let diag: Vec<f64> = (0..n).map(|i| original.get(i, i).abs().max(f64::MIN_POSITIVE)).collect();
        let scaled_norm = (0..n)
            .map(|i| original.row_slice(i).1.iter().map(|a| a.abs()).sum::<f64>() / diag[i])
            .fold(0.0, f64::max);
        let mut inv_norm: f64 = 0.0;
        for sign_flip in [false, true] {
            let mut x: Vec<f64> = (0..n)
                .map(|i| if sign_flip && i % 2 == 1 { -diag[i] } else { diag[i] })
                .collect();
            self.solve_in_place(&mut x);
            inv_norm = inv_norm.max(x.iter().fold(0.0, |m, v| m.max(v.abs())));
        }
        scaled_norm * inv_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Dense Gaussian elimination with partial pivoting (test oracle).
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x][k].abs().partial_cmp(&a[y][k].abs()).unwrap())
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let l = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= l * a[k][j];
                }
                b[i] -= l * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64, diag_boost: f64) -> BandMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                m.set(i, j, rng.random_range(-1.0..1.0));
            }
            m.add(i, i, diag_boost);
        }
        m
    }

    #[test]
    fn banded_solve_matches_dense_oracle() {
        for (n, kl, ku, seed) in [(1, 0, 0, 1), (7, 1, 2, 2), (30, 5, 5, 3), (40, 2, 7, 4), (12, 11, 11, 5)] {
            // no diagonal boost: forces row interchanges
            let m = random_band(n, kl, ku, seed, 0.0);
            let dense: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect();
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let want = dense_solve(dense, b.clone());
            let got = m.clone().factor().unwrap().solve(&b);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-9 * (1.0 + w.abs()), "n={n}: {g} vs {w}");
            }
            let r = m.matvec(&got);
            for (ri, bi) in r.iter().zip(&b) {
                assert!((ri - bi).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = BandMatrix::zeros(3, 1, 1);
        assert!(m.factor().is_err());
    }

    #[test]
    fn condition_of_diagonal_is_one() {
        let mut m = BandMatrix::zeros(5, 1, 1);
        for i in 0..5 {
            m.set(i, i, 10f64.powi(i as i32 * 8));
        }
        let lu = m.clone().factor().unwrap();
        assert!((lu.condition_estimate(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearly_singular_has_large_condition() {
        let mut m = BandMatrix::dense(2);
        m.set(0, 0, 1.0);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        m.set(1, 1, 1.0 + 1e-12);
        let lu = m.clone().factor().unwrap();
        assert!(lu.condition_estimate(&m) > 1e11);
    }
}
