//! Covariance assembly for the exponential (one and two term) and Matérn
//! kernels, single-coordinate updates, jittered Cholesky factorization and
//! the knot-projection (predictive process) machinery.
//!
//! Every kernel has the form
//!
//! ```text
//! C = (1/λ_a) J + Σ_t (1/λ_{t,z}) K_t,     K_t[i, j] = κ(d_t(x_i, x_j))
//! ```
//!
//! with `d_t(x, x') = Σ_k (x_k - x'_k)^2 (-ln ρ_{t,k})` and `κ(d) = exp(-d)`
//! for the exponential family or the Matérn correlation. `ρ_k = 1` removes
//! predictor `k` from the kernel; this is the spike state of the selection
//! prior.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distcache::DistanceCache;
use crate::special::matern_correlation;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    /// Constant plus one exponential term.
    Exp1,
    /// Two exponential terms with their own selection vectors.
    Exp2Separate,
    /// Two exponential terms sharing one selection vector.
    Exp2Joint,
    /// Constant plus one Matérn term with smoothness ν.
    Matern,
}

impl KernelFamily {
    pub fn n_terms(self) -> usize {
        match self {
            KernelFamily::Exp1 | KernelFamily::Matern => 1,
            KernelFamily::Exp2Separate | KernelFamily::Exp2Joint => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Exp1 => "exp1",
            KernelFamily::Exp2Separate => "exp2-separate",
            KernelFamily::Exp2Joint => "exp2-joint",
            KernelFamily::Matern => "matern",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" | "exp" => Ok(KernelFamily::Exp1),
            "exp2-separate" | "exp2" => Ok(KernelFamily::Exp2Separate),
            "exp2-joint" => Ok(KernelFamily::Exp2Joint),
            "matern" => Ok(KernelFamily::Matern),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// One non-constant covariance term: selection bits, correlation
/// parameters and the term's precision `λ_z`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTerm {
    pub gamma: Vec<bool>,
    pub rho: Vec<f64>,
    pub lambda_z: f64,
}

impl KernelTerm {
    pub fn empty(p: usize) -> Self {
        KernelTerm {
            gamma: vec![false; p],
            rho: vec![1.0; p],
            lambda_z: 1.0,
        }
    }

    pub fn n_included(&self) -> usize {
        self.gamma.iter().filter(|&&g| g).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    pub family: KernelFamily,
    pub terms: Vec<KernelTerm>,
    /// Intercept precision.
    pub lambda_a: f64,
    /// Matérn smoothness; unused by the exponential families.
    pub nu: f64,
}

impl KernelParams {
    /// Every predictor excluded, unit precisions, ν = 2.5.
    pub fn new(family: KernelFamily, p: usize) -> Self {
        KernelParams {
            family,
            terms: (0..family.n_terms()).map(|_| KernelTerm::empty(p)).collect(),
            lambda_a: 1.0,
            nu: 2.5,
        }
    }

    pub fn p(&self) -> usize {
        self.terms[0].rho.len()
    }

    /// Include predictor `k` in term `t` with correlation `rho`, or exclude
    /// it (`None`, which also resets `ρ` to 1). Under the joint two-term
    /// prior, the selection bit is mirrored into the other term.
    pub fn set(&mut self, t: usize, k: usize, rho: Option<f64>) {
        let term = &mut self.terms[t];
        match rho {
            Some(r) => {
                term.gamma[k] = true;
                term.rho[k] = r;
            }
            None => {
                term.gamma[k] = false;
                term.rho[k] = 1.0;
            }
        }
        if self.family == KernelFamily::Exp2Joint {
            let other = 1 - t;
            let g = self.terms[t].gamma[k];
            self.terms[other].gamma[k] = g;
            if !g {
                self.terms[other].rho[k] = 1.0;
            }
        }
    }

    /// Whether predictor `k` is in the model (in any term).
    pub fn included(&self, k: usize) -> bool {
        self.terms.iter().any(|t| t.gamma[k])
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.len() != self.family.n_terms() {
            return Err(Error::InvalidParameter(format!(
                "{} expects {} terms, found {}",
                self.family.name(),
                self.family.n_terms(),
                self.terms.len()
            )));
        }
        let p = self.p();
        for (t, term) in self.terms.iter().enumerate() {
            if term.gamma.len() != p || term.rho.len() != p {
                return Err(Error::Dimension(format!("term {t} has inconsistent lengths")));
            }
            for k in 0..p {
                let r = term.rho[k];
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::InvalidParameter(format!("rho[{t}][{k}] = {r} outside [0, 1]")));
                }
                if !term.gamma[k] && r != 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "rho[{t}][{k}] = {r} but the predictor is excluded"
                    )));
                }
            }
            if !(term.lambda_z > 0.0 && term.lambda_z.is_finite()) {
                return Err(Error::InvalidParameter(format!("lambda_z[{t}] must be positive")));
            }
        }
        if self.family == KernelFamily::Exp2Joint && self.terms[0].gamma != self.terms[1].gamma {
            return Err(Error::InvalidParameter("joint two-term prior needs shared gamma".into()));
        }
        if !(self.lambda_a > 0.0) {
            return Err(Error::InvalidParameter("lambda_a must be positive".into()));
        }
        if self.family == KernelFamily::Matern && !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter("Matérn nu must be positive".into()));
        }
        Ok(())
    }

    /// Copy with every predictor outside `keep` forced to the spike state.
    pub fn restricted_to(&self, keep: &[bool]) -> KernelParams {
        let mut out = self.clone();
        for term in &mut out.terms {
            for (k, &kp) in keep.iter().enumerate() {
                if !kp {
                    term.gamma[k] = false;
                    term.rho[k] = 1.0;
                }
            }
        }
        out
    }
}

/// A symmetric covariance matrix together with the intercept precision it
/// was built with.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    pub c: DMatrix<f64>,
    pub lambda_a: f64,
}

impl CovMatrix {
    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    pub fn factorize(&self) -> Result<Factor> {
        factorize(&self.c)
    }
}

/// Unscaled kernel values `κ(d_l)` for every distinct row of the cache.
pub fn term_values(
    cache: &DistanceCache,
    rho: &[f64],
    family: KernelFamily,
    nu: f64,
) -> Result<Vec<f64>> {
    let d = cache.weighted_distances(rho)?;
    match family {
        KernelFamily::Matern => d
            .iter()
            .map(|&dl| {
                matern_correlation(dl, nu).map_err(|e| match e {
                    Error::BesselOverflow { .. } => Error::BesselOverflow { nu, d: dl },
                    other => other,
                })
            })
            .collect(),
        _ => Ok(d.into_iter().map(|dl| (-dl).exp()).collect()),
    }
}

/// Unscaled `n1 × n2` kernel matrix of one term.
pub fn term_matrix(
    cache: &DistanceCache,
    rho: &[f64],
    family: KernelFamily,
    nu: f64,
) -> Result<DMatrix<f64>> {
    Ok(cache.inflate_values(&term_values(cache, rho, family, nu)?))
}

/// `(1/λ_a) J + Σ (1/λ_t) K_t`.
pub fn combine(lambda_a: f64, terms: &[(&DMatrix<f64>, f64)]) -> DMatrix<f64> {
    let (r, c) = terms[0].0.shape();
    let mut out = DMatrix::from_element(r, c, 1.0 / lambda_a);
    for (k, lam) in terms {
        out.zip_apply(*k, |o, v| *o += v / lam);
    }
    out
}

fn check_cache(cache: &DistanceCache, params: &KernelParams) -> Result<()> {
    if cache.p() != params.p() {
        return Err(Error::Dimension(format!(
            "cache has {} columns, parameters have {}",
            cache.p(),
            params.p()
        )));
    }
    Ok(())
}

fn finite(c: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if c.iter().all(|v| v.is_finite()) {
        Ok(c)
    } else {
        Err(Error::NonFinite(what.to_owned()))
    }
}

/// Covariance (square for self caches, rectangular for cross caches) for
/// any kernel family.
pub fn covariance(cache: &DistanceCache, params: &KernelParams) -> Result<DMatrix<f64>> {
    check_cache(cache, params)?;
    let mats = params
        .terms
        .iter()
        .map(|t| term_matrix(cache, &t.rho, params.family, params.nu))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = mats
        .iter()
        .zip(&params.terms)
        .map(|(m, t)| (m, t.lambda_z))
        .collect();
    finite(combine(params.lambda_a, &pairs), params.family.name())
}

fn square(cache: &DistanceCache, params: &KernelParams) -> Result<CovMatrix> {
    if cache.n1() != cache.n2() {
        return Err(Error::Dimension("covariance needs a self-pairing cache".into()));
    }
    Ok(CovMatrix {
        c: covariance(cache, params)?,
        lambda_a: params.lambda_a,
    })
}

/// `C = (1/λ_a) J + (1/λ_z) exp(-G)`.
pub fn build_cov_exp1(cache: &DistanceCache, params: &KernelParams) -> Result<CovMatrix> {
    if params.family != KernelFamily::Exp1 {
        return Err(Error::InvalidParameter("build_cov_exp1 needs the exp1 family".into()));
    }
    square(cache, params)
}

/// `C = (1/λ_a) J + (1/λ_{1,z}) exp(-G_1) + (1/λ_{2,z}) exp(-G_2)`.
pub fn build_cov_exp2(cache: &DistanceCache, params: &KernelParams) -> Result<CovMatrix> {
    if !matches!(params.family, KernelFamily::Exp2Separate | KernelFamily::Exp2Joint) {
        return Err(Error::InvalidParameter("build_cov_exp2 needs a two-term family".into()));
    }
    square(cache, params)
}

/// Constant plus Matérn term; the diagonal uses the analytic `d → 0` limit.
pub fn build_cov_matern(cache: &DistanceCache, params: &KernelParams) -> Result<CovMatrix> {
    if params.family != KernelFamily::Matern {
        return Err(Error::InvalidParameter("build_cov_matern needs the matern family".into()));
    }
    square(cache, params)
}

pub fn build_cov(cache: &DistanceCache, params: &KernelParams) -> Result<CovMatrix> {
    square(cache, params)
}

/// Rescale the non-constant part of `m` for a change of `ρ_k`:
/// `offset + (m - offset) ⊙ Δ` with `Δ = exp(A*[:, k] ln(ρ_new / ρ_old))`.
pub fn rescale_coordinate(
    m: &DMatrix<f64>,
    cache: &DistanceCache,
    k: usize,
    rho_new: f64,
    rho_old: f64,
    offset: f64,
) -> Result<DMatrix<f64>> {
    if !(rho_old > 0.0) {
        return Err(Error::PartialUpdateUndefined);
    }
    if m.shape() != (cache.n1(), cache.n2()) {
        return Err(Error::Dimension("matrix does not match the cache".into()));
    }
    if rho_new == rho_old {
        return Ok(m.clone());
    }
    let log_ratio = (rho_new / rho_old).ln();
    let delta: Vec<f64> = cache
        .column(k)
        .iter()
        .map(|&a| if a == 0.0 { 1.0 } else { (a * log_ratio).exp() })
        .collect();
    let idx = cache.index();
    let n2 = cache.n2();
    let out = DMatrix::from_fn(cache.n1(), n2, |i, j| {
        offset + (m[(i, j)] - offset) * delta[idx[i * n2 + j] as usize]
    });
    finite(out, "partial update")
}

/// Update an exponential-kernel covariance after `ρ_k` changes from
/// `rho_old` to `rho_new`, touching only column `k` of the cache.
pub fn update_cov_partial(
    c_old: &CovMatrix,
    cache: &DistanceCache,
    k: usize,
    rho_new: f64,
    rho_old: f64,
    lambda_a: f64,
) -> Result<CovMatrix> {
    Ok(CovMatrix {
        c: rescale_coordinate(&c_old.c, cache, k, rho_new, rho_old, 1.0 / lambda_a)?,
        lambda_a,
    })
}

/// Relative diagonal inflations tried, in order, when factorizing; each is
/// multiplied by `tr(C) / n`.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

/// Cholesky factor `L` with `L L' = C + jitter I`.
#[derive(Clone, Debug)]
pub struct Factor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl Factor {
    pub fn n(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L^{-T} b`; with `b ~ N(0, I)` this draws from `N(0, C^{-1})`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .tr_solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `C^{-1} b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let n = b.len();
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= l[(i, j)] * x[j];
            }
            x[i] = s / l[(i, i)];
        }
        x
    }

    /// `L^{-1} B` for a matrix right-hand side.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for mut col in out.column_iter_mut() {
            let v = self.solve_lower(&col.clone_owned());
            col.copy_from(&v);
        }
        out
    }

    /// `L u`.
    pub fn mul_lower(&self, u: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let n = u.len();
        DVector::from_fn(n, |i, _| (0..=i).map(|j| l[(i, j)] * u[j]).sum())
    }

    /// `L' u`, so `|L' u|² = u' C u`.
    pub fn mul_lower_transpose(&self, u: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let n = u.len();
        DVector::from_fn(n, |i, _| (i..n).map(|j| l[(j, i)] * u[j]).sum())
    }

    /// `b' C^{-1} b`.
    pub fn quad_form(&self, b: &DVector<f64>) -> f64 {
        self.solve_lower(b).norm_squared()
    }
}

fn condition_estimate(c: &DMatrix<f64>) -> f64 {
    let sym = (c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factorization with the smallest sufficient jitter from
/// [`JITTER_LADDER`].
pub fn factorize(c: &DMatrix<f64>) -> Result<Factor> {
    let n = c.nrows();
    if n != c.ncols() {
        return Err(Error::Dimension("factorize needs a square matrix".into()));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix to factorize".into()));
    }
    let scale = {
        let s = c.trace() / n as f64;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    let mut last = 0.0;
    for &rel in &JITTER_LADDER {
        let jitter = rel * scale;
        let mut m = c.clone();
        if jitter > 0.0 {
            for i in 0..n {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            // Pivots at rounding level mean the matrix is singular in
            // floating point even though the decomposition went through.
            let floor = n as f64 * f64::EPSILON * scale;
            if chol.l_dirty().diagonal().iter().all(|d| d.is_finite() && d * d > floor) {
                return Ok(Factor { chol, jitter });
            }
        }
        last = jitter;
    }
    Err(Error::Factorization {
        jitter: last,
        condition: condition_estimate(c),
    })
}

fn knot_plan(n: usize, m: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if m == 0 || m >= n {
        return Err(Error::InvalidParameter(format!("need 1 <= m < n, got m = {m}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let positions = (0..m)
        .map(|j| {
            let lo = j * n / m;
            let hi = (j + 1) * n / m;
            rng.random_range(lo..hi)
        })
        .collect();
    Ok((perm, positions))
}

/// Choose `m` of `n` observations as knots: the positions `[0, n)` of a
/// seeded random permutation are split into `m` equal strata and one
/// position is drawn from each.
pub fn select_knots(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    let (perm, positions) = knot_plan(n, m, seed)?;
    Ok(positions.into_iter().map(|p| perm[p]).collect())
}

/// Inverse of `Λ_n = (1/r) I + C_mn' C_mm^{-1} C_mn` by the Woodbury
/// identity: `r I - r² C_mn' [C_mm + r C_mn C_mn']^{-1} C_mn`. Only the
/// `m × m` bracket is factorized.
pub fn woodbury_inverse(c_mm: &DMatrix<f64>, c_mn: &DMatrix<f64>, r: f64) -> Result<DMatrix<f64>> {
    let w = woodbury_half(c_mm, c_mn, r)?.0;
    let n = c_mn.ncols();
    let mut out = DMatrix::identity(n, n) * r;
    out.gemm_tr(-r * r, &w, &w, 1.0);
    Ok(out)
}

/// `W = L^{-1} C_mn` with `L L' = C_mm + r C_mn C_mn'`, plus that factor.
pub(crate) fn woodbury_half(
    c_mm: &DMatrix<f64>,
    c_mn: &DMatrix<f64>,
    r: f64,
) -> Result<(DMatrix<f64>, Factor)> {
    if c_mm.nrows() != c_mm.ncols() || c_mn.nrows() != c_mm.nrows() {
        return Err(Error::Dimension("woodbury: C_mm must be m×m and C_mn m×n".into()));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("woodbury: r must be positive".into()));
    }
    let mut inner = c_mm.clone();
    inner += (c_mn * c_mn.transpose()) * r;
    let f = factorize(&inner)?;
    Ok((f.solve_lower_mat(c_mn), f))
}

/// `C_mn' C_mm^{-1} z*`: the conditional mean of the latent process at all
/// `n` points given its values at the knots.
pub fn project_latent(
    z_star: &DVector<f64>,
    c_mm: &DMatrix<f64>,
    c_mn: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if z_star.len() != c_mm.nrows() || c_mn.nrows() != c_mm.nrows() {
        return Err(Error::Dimension("project_latent: shapes do not conform".into()));
    }
    let f = factorize(c_mm)?;
    Ok(c_mn.tr_mul(&f.solve(z_star)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    fn exp1(p: usize, rho: &[f64]) -> KernelParams {
        let mut params = KernelParams::new(KernelFamily::Exp1, p);
        for (k, &r) in rho.iter().enumerate() {
            if r < 1.0 {
                params.set(0, k, Some(r));
            }
        }
        params
    }

    #[test]
    fn all_excluded_gives_constant_two() {
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.9, 0.4, 0.2, 0.8, 0.5]);
        let cache = DistanceCache::build_self(&x).unwrap();
        let c = build_cov_exp1(&cache, &KernelParams::new(KernelFamily::Exp1, 2)).unwrap();
        assert!(c.c.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn one_dimensional_closed_form() {
        let cache = DistanceCache::build_self(&line(&[0.0, 1.0])).unwrap();
        let c = build_cov_exp1(&cache, &exp1(1, &[0.5])).unwrap();
        assert_eq!(c.c[(0, 0)], 2.0);
        assert!((c.c[(0, 1)] - 1.5).abs() < 1e-15);
        assert_eq!(c.c[(0, 1)], c.c[(1, 0)]);
    }

    #[test]
    fn two_term_degenerate_cases() {
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.9, 0.4, 0.2, 0.8, 0.5]);
        let cache = DistanceCache::build_self(&x).unwrap();
        let mut params = KernelParams::new(KernelFamily::Exp2Separate, 2);
        let c = build_cov_exp2(&cache, &params).unwrap();
        assert!(c.c.iter().all(|&v| v == 3.0));

        params.set(0, 0, Some(0.3));
        params.set(0, 1, Some(0.7));
        params.terms[0].lambda_z = 2.0;
        params.terms[1].lambda_z = 8.0;
        let two = build_cov_exp2(&cache, &params).unwrap();
        let mut one = exp1(2, &[0.3, 0.7]);
        one.terms[0].lambda_z = 2.0;
        let one = build_cov_exp1(&cache, &one).unwrap();
        for (a, b) in two.c.iter().zip(one.c.iter()) {
            assert!((a - (b + 1.0 / 8.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn joint_mode_mirrors_selection() {
        let mut params = KernelParams::new(KernelFamily::Exp2Joint, 3);
        params.set(0, 1, Some(0.4));
        assert!(params.terms[1].gamma[1]);
        params.set(1, 1, Some(0.2));
        params.set(0, 1, None);
        assert!(!params.terms[1].gamma[1]);
        assert_eq!(params.terms[1].rho[1], 1.0);
        params.validate().unwrap();
    }

    #[test]
    fn matern_diagonal_and_half_order() {
        let cache = DistanceCache::build_self(&line(&[0.0, 0.3, 1.0])).unwrap();
        let mut params = KernelParams::new(KernelFamily::Matern, 1);
        params.nu = 0.5;
        params.set(0, 0, Some(0.2));
        params.lambda_a = 1e12;
        let c = build_cov_matern(&cache, &params).unwrap();
        let w = -(0.2f64).ln();
        for i in 0..3 {
            assert!((c.c[(i, i)] - 1.0).abs() < 1e-11);
        }
        let d = 0.09 * w;
        assert!((c.c[(0, 1)] - (-(2.0 * d).sqrt()).exp()).abs() < 1e-10);
    }

    #[test]
    fn partial_update_identity_and_error() {
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.9, 0.4, 0.2, 0.8, 0.5]);
        let cache = DistanceCache::build_self(&x).unwrap();
        let c = build_cov_exp1(&cache, &exp1(2, &[0.3, 0.6])).unwrap();
        let same = update_cov_partial(&c, &cache, 0, 0.3, 0.3, 1.0).unwrap();
        assert_eq!(same, c);
        assert!(matches!(
            update_cov_partial(&c, &cache, 0, 0.5, 0.0, 1.0),
            Err(Error::PartialUpdateUndefined)
        ));
    }

    #[test]
    fn factorize_identity_and_singular() {
        let f = factorize(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(f.jitter(), 0.0);
        assert_eq!(f.l(), DMatrix::identity(4, 4));

        let c = DMatrix::from_element(3, 3, 2.0);
        let f = factorize(&c).unwrap();
        assert!(f.jitter() > 0.0);
        let l = f.l();
        let rebuilt = &l * l.transpose();
        let target = &c + DMatrix::identity(3, 3) * f.jitter();
        assert!((rebuilt - target).amax() <= 1e-10);
    }

    #[test]
    fn factorize_reports_failure() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match factorize(&c) {
            Err(Error::Factorization { condition, .. }) => assert!(condition.is_infinite()),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn knots_are_stratified_and_deterministic() {
        assert_eq!(select_knots(7, 1, 3).unwrap().len(), 1);
        assert!(select_knots(5, 5, 1).is_err());
        assert!(select_knots(5, 0, 1).is_err());
        let (perm, pos) = knot_plan(10, 5, 42).unwrap();
        for (j, &p) in pos.iter().enumerate() {
            assert_eq!(p / 2, j, "one position per stride-2 block");
        }
        let knots = select_knots(10, 5, 42).unwrap();
        assert_eq!(knots, pos.iter().map(|&p| perm[p]).collect::<Vec<_>>());
        assert_eq!(knots, select_knots(10, 5, 42).unwrap());
        let mut sorted = knots.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
    }

    #[test]
    fn woodbury_small_cases() {
        let c_mm = DMatrix::from_element(1, 1, 2.0);
        let zero = DMatrix::zeros(1, 3);
        let inv = woodbury_inverse(&c_mm, &zero, 4.0).unwrap();
        assert!((inv - DMatrix::identity(3, 3) * 4.0).amax() < 1e-15);

        let (c, b, r) = (2.0, 0.7, 3.0);
        let inv = woodbury_inverse(
            &DMatrix::from_element(1, 1, c),
            &DMatrix::from_element(1, 1, b),
            r,
        )
        .unwrap();
        assert!((inv[(0, 0)] - 1.0 / (1.0 / r + b * b / c)).abs() < 1e-14);
    }

    #[test]
    fn projection_identity_cases() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let z = DVector::from_vec(vec![0.3, -1.2]);
        let zn = project_latent(&z, &c, &c).unwrap();
        assert!((zn - &z).amax() < 1e-14);
        let zero = project_latent(&DVector::zeros(2), &c, &c).unwrap();
        assert_eq!(zero, DVector::zeros(2));
    }
}
