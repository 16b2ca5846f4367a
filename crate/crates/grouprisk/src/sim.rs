//! Finite-sample simulators: two-group data generation, min-norm and
//! reweighted-ridge estimators, random-feature fitting, majority subsampling,
//! and Monte Carlo minority-risk estimation with deterministic replicate
//! streams.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::moments::Activation;

/// Default relative singular-value cutoff for pseudoinverse solves. Separates
/// genuine rank deficiency from round-off at desk-scale dimensions.
pub const DEFAULT_PINV_RTOL: f64 = 1e-10;

/// Default number of fresh test draws for random-feature risk estimates.
pub const DEFAULT_M_TEST: usize = 20_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dataset has no minority rows to balance against")]
    EmptyMinority,
    #[error("weighted normal equations are singular at lambda = 0")]
    SingularSystem,
    #[error("group weight requires pi_hat strictly inside (0, 1), got {0}")]
    InvalidWeight(f64),
    #[error("{0}")]
    Other(String),
}

/// Marginal law of feature and first-layer weight rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureLaw {
    GaussianIso,
    /// Uniform on the sphere of radius `√d`.
    SphereUniform,
}

#[derive(Debug, Clone)]
pub struct DatasetMeta {
    pub beta0: DVector<f64>,
    pub beta1: DVector<f64>,
    pub tau: f64,
    pub feature_law: FeatureLaw,
}

/// A two-group training set: rows with `g = 0` follow the minority response
/// `β₀ᵀx + ε`, rows with `g = 1` the majority response `β₁ᵀx + ε`, with a
/// shared feature law.
#[derive(Debug, Clone)]
pub struct TwoGroupDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub g: Vec<u8>,
    pub meta: DatasetMeta,
}

impl TwoGroupDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn minority_count(&self) -> usize {
        self.g.iter().filter(|&&gi| gi == 0).count()
    }
}

/// Random-feature model with frozen first-layer weights (rows of `theta`).
#[derive(Debug, Clone)]
pub struct RfModel {
    pub theta: DMatrix<f64>,
    pub activation: Activation,
}

impl RfModel {
    /// Draws `num_features` weight rows from the given law. The rows are
    /// never updated by fitting.
    pub fn sample(
        num_features: usize,
        dim: usize,
        law: FeatureLaw,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            theta: sample_features(num_features, dim, law, rng),
            activation,
        }
    }

    pub fn num_features(&self) -> usize {
        self.theta.nrows()
    }
}

/// Output of a closed-form fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coeffs: DVector<f64>,
    pub train_residual: f64,
    /// Numerical rank used by the pseudoinverse (design dimension for ridge
    /// solves, which do not truncate).
    pub rank: usize,
}

fn fill_gaussian(count: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(count, d);
    for i in 0..count {
        for j in 0..d {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// `count` i.i.d. rows uniform on the sphere of radius `√d` (Gaussian draws
/// rescaled to norm `√d`). In one dimension the rows are `±1`.
pub fn sample_sphere(count: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    assert!(
        count >= 1 && d >= 1,
        "sample_sphere needs count >= 1, d >= 1"
    );
    let mut m = fill_gaussian(count, d, rng);
    let radius = (d as f64).sqrt();
    for i in 0..count {
        let mut norm = m.row(i).norm();
        while norm == 0.0 {
            for j in 0..d {
                m[(i, j)] = StandardNormal.sample(rng);
            }
            norm = m.row(i).norm();
        }
        for j in 0..d {
            m[(i, j)] = m[(i, j)] / norm * radius;
        }
    }
    m
}

pub fn sample_features(
    count: usize,
    d: usize,
    law: FeatureLaw,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    match law {
        FeatureLaw::GaussianIso => fill_gaussian(count, d, rng),
        FeatureLaw::SphereUniform => sample_sphere(count, d, rng),
    }
}

/// Draws a two-group training set: `gᵢ ~ Bernoulli(π)` picks the majority
/// response, `yᵢ = β_{gᵢ}ᵀxᵢ + τ·N(0,1)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_two_group(
    n: usize,
    d: usize,
    pi: f64,
    beta0: &DVector<f64>,
    beta1: &DVector<f64>,
    tau: f64,
    law: FeatureLaw,
    rng: &mut ChaCha8Rng,
) -> TwoGroupDataset {
    assert_eq!(beta0.len(), d, "beta0 dimension mismatch");
    assert_eq!(beta1.len(), d, "beta1 dimension mismatch");
    assert!((0.0..=1.0).contains(&pi), "pi must lie in [0, 1]");
    let x = sample_features(n, d, law, rng);
    let mut g = Vec::with_capacity(n);
    let mut y = DVector::<f64>::zeros(n);
    for i in 0..n {
        let gi = u8::from(rng.gen_bool(pi));
        g.push(gi);
        let beta = if gi == 0 { beta0 } else { beta1 };
        let noise: f64 = StandardNormal.sample(rng);
        y[i] = x.row(i).transpose().dot(beta) + tau * noise;
    }
    TwoGroupDataset {
        x,
        y,
        g,
        meta: DatasetMeta {
            beta0: beta0.clone(),
            beta1: beta1.clone(),
            tau,
            feature_law: law,
        },
    }
}

/// Minimum-norm least squares via SVD: singular values below `rtol·σ_max`
/// are truncated; the solution is orthogonal to the numerical null space.
/// Equals OLS when the design has full column rank.
pub fn min_norm_ls(x: &DMatrix<f64>, y: &DVector<f64>, rtol: f64) -> FitResult {
    assert_eq!(x.nrows(), y.len(), "design/response shape mismatch");
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = rtol * sigma_max;
    let mut projected = u.tr_mul(y);
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            projected[i] /= s;
            rank += 1;
        } else {
            projected[i] = 0.0;
        }
    }
    let coeffs = v_t.tr_mul(&projected);
    let train_residual = (y - x * &coeffs).norm();
    FitResult {
        coeffs,
        train_residual,
        rank,
    }
}

/// Group-weighted ridge regression in closed form.
///
/// Minimizes `R̃(β) + (λ/2)‖β‖²` where
/// `R̃(β) = (1/n) Σᵢ wᵢ · ½(yᵢ − βᵀxᵢ)²` with `wᵢ = 1/π̂` for `g = 0` rows
/// and `wᵢ = 1/(1−π̂)` for `g = 1` rows. Solved through the primal normal
/// equations when `n ≥ d` and through the kernel (dual) form otherwise; the
/// two are algebraically identical. At `λ → 0⁺` in the overparameterized
/// full-row-rank regime the solution collapses to the min-norm interpolant
/// for any weights.
pub fn ridge_weighted(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    g: &[u8],
    pi_hat: f64,
    lambda: f64,
) -> Result<FitResult, SimError> {
    let (n, d) = x.shape();
    assert_eq!(n, y.len(), "design/response shape mismatch");
    assert_eq!(n, g.len(), "design/group shape mismatch");
    if !(pi_hat > 0.0 && pi_hat < 1.0) {
        return Err(SimError::InvalidWeight(pi_hat));
    }
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    let sqrt_w: Vec<f64> = g
        .iter()
        .map(|&gi| {
            let w = if gi == 0 {
                1.0 / pi_hat
            } else {
                1.0 / (1.0 - pi_hat)
            };
            w.sqrt()
        })
        .collect();
    let mut xw = x.clone();
    let mut yw = y.clone();
    for i in 0..n {
        yw[i] *= sqrt_w[i];
        for j in 0..d {
            xw[(i, j)] *= sqrt_w[i];
        }
    }
    let nf = n as f64;
    let coeffs = if n >= d {
        let mut gram = xw.tr_mul(&xw);
        for j in 0..d {
            gram[(j, j)] += nf * lambda;
        }
        let rhs = xw.tr_mul(&yw);
        match gram.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => return Err(SimError::SingularSystem),
        }
    } else {
        let mut kernel = &xw * xw.transpose();
        for i in 0..n {
            kernel[(i, i)] += nf * lambda;
        }
        match kernel.cholesky() {
            Some(ch) => xw.tr_mul(&ch.solve(&yw)),
            None => return Err(SimError::SingularSystem),
        }
    };
    let train_residual = (y - x * &coeffs).norm();
    Ok(FitResult {
        coeffs,
        train_residual,
        rank: n.min(d),
    })
}

/// Entrywise `σ(XΘᵀ/√d)`.
pub fn rf_features(x: &DMatrix<f64>, model: &RfModel) -> DMatrix<f64> {
    assert_eq!(x.ncols(), model.theta.ncols(), "feature dimension mismatch");
    let d = x.ncols() as f64;
    let mut z = x * model.theta.transpose();
    let inv_sqrt_d = 1.0 / d.sqrt();
    for v in z.iter_mut() {
        *v = model.activation.eval(*v * inv_sqrt_d);
    }
    z
}

/// Min-norm interpolant in feature space; same contract as [`min_norm_ls`]
/// applied to the feature matrix.
pub fn rf_fit_min_norm(z: &DMatrix<f64>, y: &DVector<f64>, rtol: f64) -> FitResult {
    min_norm_ls(z, y, rtol)
}

/// Discards uniformly chosen rows from the larger group until the two groups
/// are equally represented; row order is otherwise preserved.
pub fn subsample_majority(
    data: &TwoGroupDataset,
    rng: &mut ChaCha8Rng,
) -> Result<TwoGroupDataset, SimError> {
    let minority: Vec<usize> = (0..data.n()).filter(|&i| data.g[i] == 0).collect();
    let majority: Vec<usize> = (0..data.n()).filter(|&i| data.g[i] == 1).collect();
    if minority.is_empty() {
        return Err(SimError::EmptyMinority);
    }
    let (small, mut large) = if minority.len() <= majority.len() {
        (minority, majority)
    } else {
        (majority, minority)
    };
    // Partial Fisher-Yates: the first `small.len()` entries are a uniform
    // sample without replacement.
    for i in 0..small.len() {
        let j = rng.gen_range(i..large.len());
        large.swap(i, j);
    }
    let mut keep: Vec<usize> = small
        .iter()
        .chain(large[..small.len()].iter())
        .copied()
        .collect();
    keep.sort_unstable();

    let d = data.x.ncols();
    let mut x = DMatrix::<f64>::zeros(keep.len(), d);
    let mut y = DVector::<f64>::zeros(keep.len());
    let mut g = Vec::with_capacity(keep.len());
    for (row, &i) in keep.iter().enumerate() {
        x.row_mut(row).copy_from(&data.x.row(i));
        y[row] = data.y[i];
        g.push(data.g[i]);
    }
    Ok(TwoGroupDataset {
        x,
        y,
        g,
        meta: data.meta.clone(),
    })
}

/// Exact minority risk of a linear coefficient vector under isotropic
/// features: `E[((β̂−β₀)ᵀx)²] = ‖β̂ − β₀‖²`.
pub fn minority_risk_linear(coeffs: &DVector<f64>, beta0: &DVector<f64>) -> f64 {
    assert_eq!(coeffs.len(), beta0.len(), "dimension mismatch");
    (coeffs - beta0).norm_squared()
}

/// Monte Carlo minority risk of a random-feature fit over `m_test` fresh
/// feature draws: mean and standard error of `(z(x)ᵀâ − β₀ᵀx)²`.
pub fn minority_risk_rf_mc(
    fit: &FitResult,
    model: &RfModel,
    beta0: &DVector<f64>,
    law: FeatureLaw,
    m_test: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    assert!(m_test >= 100, "m_test must be at least 100");
    let d = model.theta.ncols();
    assert_eq!(beta0.len(), d, "beta0 dimension mismatch");
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut remaining = m_test;
    // Blocked evaluation keeps the test feature matrix small.
    const BLOCK: usize = 2048;
    while remaining > 0 {
        let b = remaining.min(BLOCK);
        let xt = sample_features(b, d, law, rng);
        let zt = rf_features(&xt, model);
        let pred = &zt * &fit.coeffs;
        let target = &xt * beta0;
        for i in 0..b {
            let e = pred[i] - target[i];
            let sq = e * e;
            sum += sq;
            sum_sq += sq * sq;
        }
        remaining -= b;
    }
    let m = m_test as f64;
    let mean = sum / m;
    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
    (mean, (var / m).sqrt())
}

/// Debug dump of a dataset as columnar text: a header line
/// `g y x0 x1 ...` followed by one space-separated row per sample. Meant for
/// eyeballing and ad-hoc scripting, not a stability contract.
pub fn dump_dataset(data: &TwoGroupDataset, out: &mut impl std::io::Write) -> std::io::Result<()> {
    write!(out, "g y")?;
    for j in 0..data.x.ncols() {
        write!(out, " x{j}")?;
    }
    writeln!(out)?;
    for i in 0..data.n() {
        write!(out, "{} {:e}", data.g[i], data.y[i])?;
        for j in 0..data.x.ncols() {
            write!(out, " {:e}", data.x[(i, j)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Debug dump of a fit: header plus one coefficient per row.
pub fn dump_fit(fit: &FitResult, out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(
        out,
        "# rank {} train_residual {:e}",
        fit.rank, fit.train_residual
    )?;
    writeln!(out, "coeff")?;
    for v in fit.coeffs.iter() {
        writeln!(out, "{v:e}")?;
    }
    Ok(())
}

/// Roles for per-replicate random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Train = 0,
    Model = 1,
    Test = 2,
    Subsample = 3,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic, platform-independent stream derivation: hashes
/// `(master_seed, replicate, role)` into a full 256-bit ChaCha seed, so
/// replicates can run in any order or in parallel without draw coupling.
pub fn derive_rng(master_seed: u64, replicate: u64, role: u64) -> ChaCha8Rng {
    let base = mix64(master_seed ^ mix64(replicate ^ mix64(role ^ 0x6A09_E667_F3BC_C909)));
    let mut seed = [0u8; 32];
    let mut s = base;
    for chunk in seed.chunks_mut(8) {
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
        chunk.copy_from_slice(&mix64(s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Stream factory handed to each replicate.
#[derive(Debug, Clone, Copy)]
pub struct ReplicateStreams {
    master_seed: u64,
    replicate: u64,
}

impl ReplicateStreams {
    pub fn new(master_seed: u64, replicate: u64) -> Self {
        Self {
            master_seed,
            replicate,
        }
    }

    pub fn rng(&self, role: StreamRole) -> ChaCha8Rng {
        derive_rng(self.master_seed, self.replicate, role as u64)
    }

    pub fn replicate(&self) -> u64 {
        self.replicate
    }
}

/// Per-replicate outcomes plus order-independent aggregates over the
/// successful replicates.
#[derive(Debug)]
pub struct ReplicateSet {
    pub values: Vec<Result<f64, SimError>>,
    pub mean: f64,
    pub stderr: f64,
}

/// Runs `replicates` independent repetitions in parallel. Replicate `r`
/// draws only from streams derived from `(master_seed, r)`, so results are
/// bit-identical across execution orders and thread counts. Failures are
/// recorded per replicate, not fatal.
pub fn run_replicates<F>(replicates: usize, master_seed: u64, run: F) -> ReplicateSet
where
    F: Fn(usize, &ReplicateStreams) -> Result<f64, SimError> + Sync,
{
    assert!(replicates >= 1, "need at least one replicate");
    let values: Vec<Result<f64, SimError>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let streams = ReplicateStreams::new(master_seed, r as u64);
            run(r, &streams)
        })
        .collect();
    let (mean, stderr) = aggregate(&values);
    ReplicateSet {
        values,
        mean,
        stderr,
    }
}

/// Mean and standard error over the successful replicates, accumulated in
/// index order.
pub fn aggregate(values: &[Result<f64, SimError>]) -> (f64, f64) {
    let ok: Vec<f64> = values
        .iter()
        .filter_map(|v| v.as_ref().ok().copied())
        .collect();
    if ok.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / k;
    if ok.len() < 2 {
        return (mean, 0.0);
    }
    let var = ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn sphere_rows_have_exact_radius() {
        let mut r = rng(1);
        let m = sample_sphere(50, 7, &mut r);
        for i in 0..50 {
            assert_abs_diff_eq!(m.row(i).norm(), (7.0f64).sqrt(), epsilon = 1e-9);
        }
    }

    #[test]
    fn sphere_one_dimensional_is_sign() {
        let mut r = rng(2);
        let m = sample_sphere(100, 1, &mut r);
        for i in 0..100 {
            assert!(m[(i, 0)] == 1.0 || m[(i, 0)] == -1.0);
        }
    }

    #[test]
    fn sphere_coordinates_center_at_zero() {
        let mut r = rng(3);
        let n = 100_000;
        let m = sample_sphere(n, 10, &mut r);
        let bound = 3.0 / (n as f64).sqrt();
        for j in 0..10 {
            let mean = m.column(j).sum() / n as f64;
            assert!(mean.abs() < bound, "coordinate {j} mean {mean}");
        }
    }

    #[test]
    fn two_group_noiseless_shared_signal_interpolates() {
        let mut r = rng(4);
        let beta = DVector::from_element(5, 0.7);
        let data = sample_two_group(
            40,
            5,
            0.8,
            &beta,
            &beta,
            0.0,
            FeatureLaw::GaussianIso,
            &mut r,
        );
        let expect = &data.x * &beta;
        assert_abs_diff_eq!((expect - &data.y).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_group_pi_one_is_all_majority() {
        let mut r = rng(5);
        let b = DVector::zeros(3);
        let data = sample_two_group(64, 3, 1.0, &b, &b, 1.0, FeatureLaw::SphereUniform, &mut r);
        assert!(data.g.iter().all(|&g| g == 1));
    }

    #[test]
    fn two_group_majority_fraction_concentrates() {
        let mut r = rng(6);
        let b = DVector::zeros(2);
        let n = 100_000;
        let data = sample_two_group(n, 2, 0.8, &b, &b, 0.0, FeatureLaw::GaussianIso, &mut r);
        let frac = data.g.iter().map(|&g| g as f64).sum::<f64>() / n as f64;
        let bound = 3.0 * (0.16f64 / n as f64).sqrt();
        assert!((frac - 0.8).abs() < bound, "frac {frac}");
    }

    #[test]
    fn min_norm_identity_design() {
        let x = DMatrix::<f64>::identity(4, 4);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let fit = min_norm_ls(&x, &y, DEFAULT_PINV_RTOL);
        assert_abs_diff_eq!((fit.coeffs - y).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(fit.rank, 4);
    }

    #[test]
    fn min_norm_underdetermined_row() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let y = DVector::from_vec(vec![2.0]);
        let fit = min_norm_ls(&x, &y, DEFAULT_PINV_RTOL);
        assert_abs_diff_eq!(fit.coeffs[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coeffs[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn min_norm_interpolates_and_beats_perturbed_interpolants() {
        let mut r = rng(7);
        let x = fill_gaussian(30, 60, &mut r);
        let y = DVector::from_fn(30, |_, _| StandardNormal.sample(&mut r));
        let fit = min_norm_ls(&x, &y, DEFAULT_PINV_RTOL);
        assert!(fit.train_residual <= 1e-8 * y.norm());
        assert_eq!(fit.rank, 30);
        // Any null-space perturbation that still interpolates has larger norm.
        let base = fit.coeffs.norm();
        for _ in 0..100 {
            let raw = DVector::from_fn(60, |_, _| StandardNormal.sample(&mut r));
            // Project onto the null space of x.
            let correction = min_norm_ls(&x, &(&x * &raw), DEFAULT_PINV_RTOL).coeffs;
            let null_vec = raw - correction;
            let candidate = &fit.coeffs + &null_vec;
            assert!((&x * &candidate - &y).norm() <= 1e-7 * y.norm());
            assert!(candidate.norm() >= base - 1e-10);
            assert!(
                fit.coeffs.dot(&null_vec).abs() <= 1e-8 * base.max(1.0) * null_vec.norm().max(1.0)
            );
        }
    }

    #[test]
    fn ridge_equal_weights_matches_ols() {
        let mut r = rng(8);
        let x = fill_gaussian(50, 8, &mut r);
        let y = DVector::from_fn(50, |_, _| StandardNormal.sample(&mut r));
        let ols = min_norm_ls(&x, &y, DEFAULT_PINV_RTOL);
        let ridge = ridge_weighted(&x, &y, &[1u8; 50], 0.5, 0.0).unwrap();
        assert_abs_diff_eq!((ols.coeffs - ridge.coeffs).norm(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn ridgeless_limit_ignores_weights() {
        let mut r = rng(9);
        let x = fill_gaussian(20, 40, &mut r);
        let y = DVector::from_fn(20, |_, _| StandardNormal.sample(&mut r));
        let g: Vec<u8> = (0..20).map(|i| u8::from(i % 3 != 0)).collect();
        let mn = min_norm_ls(&x, &y, DEFAULT_PINV_RTOL);
        let mut prev_gap = f64::INFINITY;
        for lambda in [1e-2, 1e-4, 1e-6, 1e-8] {
            let fit = ridge_weighted(&x, &y, &g, 0.7, lambda).unwrap();
            let gap = (&fit.coeffs - &mn.coeffs).norm();
            assert!(gap <= prev_gap + 1e-12);
            prev_gap = gap;
        }
        assert!(prev_gap <= 1e-4, "gap at lambda=1e-8 was {prev_gap}");
    }

    #[test]
    fn heavy_ridge_shrinks_to_zero() {
        let mut r = rng(10);
        let x = fill_gaussian(50, 8, &mut r);
        let y = DVector::from_fn(50, |_, _| StandardNormal.sample(&mut r));
        let ols = min_norm_ls(&x, &y, DEFAULT_PINV_RTOL);
        let fit = ridge_weighted(&x, &y, &[1u8; 50], 0.5, 1e6).unwrap();
        assert!(fit.coeffs.norm() <= 1e-3 * ols.coeffs.norm());
    }

    #[test]
    fn unregularized_singular_system_rejected() {
        // Rank-1 square design: the weighted normal equations are singular
        // at lambda = 0.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            ridge_weighted(&x, &y, &[0, 1], 0.5, 0.0),
            Err(SimError::SingularSystem)
        ));
        // A positive ridge restores solvability.
        assert!(ridge_weighted(&x, &y, &[0, 1], 0.5, 1e-6).is_ok());
    }

    #[test]
    fn ridge_rejects_degenerate_weight() {
        let x = DMatrix::<f64>::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            ridge_weighted(&x, &y, &[0, 1], 1.0, 0.1),
            Err(SimError::InvalidWeight(_))
        ));
    }

    #[test]
    fn rf_features_identity_recovers_input() {
        let mut r = rng(11);
        let d = 6;
        let x = fill_gaussian(9, d, &mut r);
        let model = RfModel {
            theta: DMatrix::<f64>::identity(d, d) * (d as f64).sqrt(),
            activation: Activation::Identity,
        };
        let z = rf_features(&x, &model);
        assert_abs_diff_eq!((&z - &x).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rf_features_zero_row_maps_through_activation() {
        let mut r = rng(12);
        let mut x = fill_gaussian(3, 4, &mut r);
        x.row_mut(1).fill(0.0);
        let model = RfModel::sample(5, 4, FeatureLaw::SphereUniform, Activation::ReLU, &mut r);
        let z = rf_features(&x, &model);
        for j in 0..5 {
            assert_eq!(z[(1, j)], 0.0);
        }
    }

    #[test]
    fn rf_features_match_scalar_recomputation() {
        let mut r = rng(13);
        let x = fill_gaussian(20, 7, &mut r);
        let model = RfModel::sample(15, 7, FeatureLaw::GaussianIso, Activation::Tanh, &mut r);
        let z = rf_features(&x, &model);
        for _ in 0..100 {
            let i = r.gen_range(0..20);
            let j = r.gen_range(0..15);
            let dot: f64 = (0..7).map(|k| x[(i, k)] * model.theta[(j, k)]).sum();
            let expect = model.activation.eval(dot / (7.0f64).sqrt());
            assert_abs_diff_eq!(z[(i, j)], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn subsample_balances_counts() {
        let mut r = rng(14);
        let b = DVector::zeros(3);
        let mut data = sample_two_group(100, 3, 0.5, &b, &b, 1.0, FeatureLaw::GaussianIso, &mut r);
        data.g = (0..100).map(|i| u8::from(i >= 10)).collect();
        let sub = subsample_majority(&data, &mut r).unwrap();
        assert_eq!(sub.n(), 20);
        assert_eq!(sub.minority_count(), 10);
    }

    #[test]
    fn subsample_balanced_input_unchanged() {
        let mut r = rng(15);
        let b = DVector::zeros(2);
        let mut data = sample_two_group(10, 2, 0.5, &b, &b, 1.0, FeatureLaw::GaussianIso, &mut r);
        data.g = (0..10).map(|i| u8::from(i % 2 == 0)).collect();
        let sub = subsample_majority(&data, &mut r).unwrap();
        assert_eq!(sub.n(), 10);
        assert_abs_diff_eq!((&sub.x - &data.x).norm(), 0.0);
        assert_abs_diff_eq!((&sub.y - &data.y).norm(), 0.0);
    }

    #[test]
    fn subsample_requires_minority() {
        let mut r = rng(16);
        let b = DVector::zeros(2);
        let mut data = sample_two_group(10, 2, 1.0, &b, &b, 0.0, FeatureLaw::GaussianIso, &mut r);
        data.g = vec![1; 10];
        assert!(matches!(
            subsample_majority(&data, &mut r),
            Err(SimError::EmptyMinority)
        ));
    }

    #[test]
    fn subsample_inclusion_frequencies_uniform() {
        let mut r = rng(17);
        let b = DVector::zeros(2);
        // tau = 1 makes every response unique, so kept rows can be traced.
        let mut data = sample_two_group(100, 2, 0.5, &b, &b, 1.0, FeatureLaw::GaussianIso, &mut r);
        data.g = (0..100).map(|i| u8::from(i >= 10)).collect();
        let redraws = 10_000;
        let mut counts = vec![0usize; 100];
        for _ in 0..redraws {
            let sub = subsample_majority(&data, &mut r).unwrap();
            // Identify kept majority rows by matching y values (unique noise draws).
            for i in 0..sub.n() {
                if sub.g[i] == 1 {
                    let orig = data.y.iter().position(|&v| v == sub.y[i]).unwrap();
                    counts[orig] += 1;
                }
            }
        }
        let p = 10.0 / 90.0;
        let sd = (redraws as f64 * p * (1.0 - p)).sqrt();
        let expected = redraws as f64 * p;
        for (i, &c) in counts.iter().enumerate().skip(10) {
            assert!(
                (c as f64 - expected).abs() < 4.0 * sd,
                "majority row {i} kept {c} times, expected {expected:.0} +- {sd:.0}"
            );
        }
    }

    #[test]
    fn linear_risk_trivials() {
        let b = DVector::from_vec(vec![0.6, -0.8]);
        assert_eq!(minority_risk_linear(&b, &b), 0.0);
        assert_abs_diff_eq!(
            minority_risk_linear(&DVector::zeros(2), &b),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn linear_risk_matches_mc_oracle() {
        let mut r = rng(18);
        let d = 8;
        let coeffs = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut r));
        let beta0 = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut r));
        let exact = minority_risk_linear(&coeffs, &beta0);
        let m = 1_000_000;
        let mut sum = 0.0;
        let diff = &coeffs - &beta0;
        for _ in 0..m {
            let x = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut r));
            let e = diff.dot(&x);
            sum += e * e;
        }
        let mc = sum / m as f64;
        assert!(
            (mc - exact).abs() / exact < 0.01,
            "mc {mc} vs exact {exact}"
        );
    }

    #[test]
    fn rf_mc_risk_zero_fit_zero_signal() {
        let mut r = rng(19);
        let model = RfModel::sample(6, 4, FeatureLaw::SphereUniform, Activation::ReLU, &mut r);
        let fit = FitResult {
            coeffs: DVector::zeros(6),
            train_residual: 0.0,
            rank: 0,
        };
        let (mean, se) = minority_risk_rf_mc(
            &fit,
            &model,
            &DVector::zeros(4),
            FeatureLaw::SphereUniform,
            500,
            &mut r,
        );
        assert_eq!(mean, 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn rf_mc_risk_zero_fit_recovers_signal_norm() {
        let mut r = rng(20);
        let d = 30;
        let model = RfModel::sample(10, d, FeatureLaw::SphereUniform, Activation::ReLU, &mut r);
        let beta0 = DVector::from_fn(d, |i, _| if i == 0 { 1.2 } else { 0.0 });
        let fit = FitResult {
            coeffs: DVector::zeros(10),
            train_residual: 0.0,
            rank: 0,
        };
        for law in [FeatureLaw::SphereUniform, FeatureLaw::GaussianIso] {
            let (mean, se) = minority_risk_rf_mc(&fit, &model, &beta0, law, 20_000, &mut r);
            let expect = beta0.norm_squared();
            assert!(
                (mean - expect).abs() <= 3.0 * se.max(1e-6),
                "law {law:?}: mean {mean} vs {expect} (se {se})"
            );
        }
    }

    #[test]
    fn replicates_deterministic_and_trivial_aggregate() {
        let run = |_r: usize, streams: &ReplicateStreams| {
            let mut rng = streams.rng(StreamRole::Train);
            Ok(rng.gen::<f64>())
        };
        let a = run_replicates(8, 42, run);
        let b = run_replicates(8, 42, run);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.as_ref().unwrap(), y.as_ref().unwrap());
        }
        let single = run_replicates(1, 7, run);
        assert_eq!(single.mean, *single.values[0].as_ref().unwrap());
        assert_eq!(single.stderr, 0.0);
    }

    #[test]
    fn replicate_errors_recorded_not_fatal() {
        let set = run_replicates(4, 0, |r, _| {
            if r == 2 {
                Err(SimError::Other("boom".into()))
            } else {
                Ok(r as f64)
            }
        });
        assert!(set.values[2].is_err());
        assert_abs_diff_eq!(set.mean, (0.0 + 1.0 + 3.0) / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn dataset_dump_round_trips_by_eye() {
        let mut r = rng(21);
        let b = DVector::from_element(2, 0.5);
        let data = sample_two_group(3, 2, 0.5, &b, &b, 0.1, FeatureLaw::GaussianIso, &mut r);
        let mut buf = Vec::new();
        dump_dataset(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "g y x0 x1");
        assert_eq!(lines.count(), 3);

        let fit = min_norm_ls(&data.x, &data.y, DEFAULT_PINV_RTOL);
        let mut buf = Vec::new();
        dump_fit(&fit, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# rank 2"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn derived_streams_differ_across_roles_and_replicates() {
        let a: f64 = derive_rng(1, 0, 0).gen();
        let b: f64 = derive_rng(1, 0, 1).gen();
        let c: f64 = derive_rng(1, 1, 0).gen();
        let d: f64 = derive_rng(2, 0, 0).gen();
        assert!(a != b && a != c && a != d);
    }
}
