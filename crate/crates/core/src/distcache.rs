//! Deduplicated per-coordinate squared differences between two point sets.
//!
//! For points `x1_i` and `x2_j` the row `A_ij = ((x1_ik - x2_jk)^2)_k` is all
//! the covariance kernels need. Many pairs share a row (every `(i, j)` and
//! `(j, i)` of a self-cache, and every diagonal pair), so only the distinct
//! rows are stored in `a_star` and `i_full` maps each pair back to its row.
//! The cache is built once per pairing and reused for every covariance
//! evaluation of a run.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct DistanceCache {
    /// Distinct rows, stored column-major: coordinate `k` occupies
    /// `a_star[k * n_unique .. (k + 1) * n_unique]`.
    a_star: Vec<f64>,
    n_unique: usize,
    p: usize,
    /// Row of `a_star` for pair `(i, j)` at position `i * n2 + j`.
    i_full: Vec<u32>,
    n1: usize,
    n2: usize,
}

impl DistanceCache {
    /// Build the cache for the pairs `(X1_i, X2_j)`. Distinct rows keep the
    /// order in which they are first met scanning `i` then `j`; uniqueness
    /// is exact bitwise equality.
    pub fn build(x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<Self> {
        let p = x1.ncols();
        if x2.ncols() != p {
            return Err(Error::Dimension(format!(
                "distance cache: X1 has {} columns, X2 has {}",
                p,
                x2.ncols()
            )));
        }
        let (n1, n2) = (x1.nrows(), x2.nrows());
        let mut seen: HashMap<Vec<u64>, u32> = HashMap::with_capacity(n1 * n2 / 2 + 1);
        let mut rows: Vec<f64> = Vec::new();
        let mut i_full = Vec::with_capacity(n1 * n2);
        let mut key = vec![0u64; p];
        let mut row = vec![0.0; p];
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..p {
                    let d = x1[(i, k)] - x2[(j, k)];
                    row[k] = d * d;
                    key[k] = row[k].to_bits();
                }
                let next = seen.len() as u32;
                let idx = *seen.entry(key.clone()).or_insert_with(|| {
                    rows.extend_from_slice(&row);
                    next
                });
                i_full.push(idx);
            }
        }
        let n_unique = seen.len();
        let mut a_star = vec![0.0; n_unique * p];
        for l in 0..n_unique {
            for k in 0..p {
                a_star[k * n_unique + l] = rows[l * p + k];
            }
        }
        Ok(DistanceCache {
            a_star,
            n_unique,
            p,
            i_full,
            n1,
            n2,
        })
    }

    /// Self-pairing cache `difference(X, X)`.
    pub fn build_self(x: &DMatrix<f64>) -> Result<Self> {
        Self::build(x, x)
    }

    /// Number of distinct rows ℓ.
    pub fn n_unique(&self) -> usize {
        self.n_unique
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Squared differences of coordinate `k` for every distinct row.
    pub fn column(&self, k: usize) -> &[f64] {
        &self.a_star[k * self.n_unique..(k + 1) * self.n_unique]
    }

    /// Distinct row `l` (length p).
    pub fn row(&self, l: usize) -> Vec<f64> {
        (0..self.p).map(|k| self.a_star[k * self.n_unique + l]).collect()
    }

    pub fn index(&self) -> &[u32] {
        &self.i_full
    }

    /// Re-inflate to the full `(n1 * n2) × p` row-major tensor.
    pub fn inflate(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.i_full.len() * self.p);
        for &l in &self.i_full {
            out.extend(self.row(l as usize));
        }
        out
    }

    /// Spread per-row values into an `n1 × n2` matrix.
    pub fn inflate_values(&self, values: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(values.len(), self.n_unique);
        let n2 = self.n2;
        DMatrix::from_fn(self.n1, self.n2, |i, j| values[self.i_full[i * n2 + j] as usize])
    }

    /// Weighted squared distance `d_l = Σ_k A_lk (-ln ρ_k)` for every
    /// distinct row, skipping coordinates with `ρ_k = 1`. A coordinate with
    /// `ρ_k = 0` contributes `+∞` wherever its difference is non-zero.
    pub fn weighted_distances(&self, rho: &[f64]) -> Result<Vec<f64>> {
        if rho.len() != self.p {
            return Err(Error::Dimension(format!(
                "rho has length {}, cache has {} columns",
                rho.len(),
                self.p
            )));
        }
        let mut d = vec![0.0; self.n_unique];
        for (k, &r) in rho.iter().enumerate() {
            if r >= 1.0 {
                continue;
            }
            let col = self.column(k);
            if r <= 0.0 {
                for (dl, &a) in d.iter_mut().zip(col) {
                    if a > 0.0 {
                        *dl = f64::INFINITY;
                    }
                }
            } else {
                let w = -r.ln();
                for (dl, &a) in d.iter_mut().zip(col) {
                    *dl += a * w;
                }
            }
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..x1.nrows() {
            for j in 0..x2.nrows() {
                for k in 0..x1.ncols() {
                    let d = x1[(i, k)] - x2[(j, k)];
                    out.push(d * d);
                }
            }
        }
        out
    }

    #[test]
    fn two_points_in_one_dimension() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let c = DistanceCache::build_self(&x).unwrap();
        assert_eq!(c.n_unique(), 2);
        assert_eq!(c.row(0), vec![0.0]);
        assert_eq!(c.row(1), vec![1.0]);
        assert_eq!(c.inflate(), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn identical_points_collapse() {
        let x = DMatrix::from_row_slice(2, 3, &[0.2, 0.4, 0.9, 0.2, 0.4, 0.9]);
        let c = DistanceCache::build_self(&x).unwrap();
        assert_eq!(c.n_unique(), 1);
        assert_eq!(c.row(0), vec![0.0; 3]);
    }

    #[test]
    fn inflation_equals_double_loop() {
        let x = DMatrix::from_row_slice(
            5,
            3,
            &[
                0.12, 0.85, 0.33, 0.97, 0.05, 0.61, 0.44, 0.44, 0.29, 0.71, 0.18, 0.92, 0.03,
                0.66, 0.50,
            ],
        );
        let c = DistanceCache::build_self(&x).unwrap();
        assert_eq!(c.inflate(), brute_force(&x, &x));
        assert!(c.n_unique() < 25);
    }

    #[test]
    fn mismatched_columns() {
        let a = DMatrix::<f64>::zeros(2, 2);
        let b = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(DistanceCache::build(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_rho_gives_infinite_distance_only_off_diagonal() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let c = DistanceCache::build_self(&x).unwrap();
        let d = c.weighted_distances(&[0.0]).unwrap();
        assert_eq!(d, vec![0.0, f64::INFINITY]);
    }
}
