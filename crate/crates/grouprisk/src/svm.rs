//! Hard-margin minimum-norm SVM on random features for the two-group
//! classification experiment, with group-wise test-error estimation.
//!
//! Labels follow the sigmoid model `y = +1 w.p. sigmoid(xᵀβ_g)`; the
//! classifier is `sign(z(x)ᵀa)` with `a` the minimum-norm vector satisfying
//! `yᵢ zᵢᵀa ≥ 1`. There is no bias term, so the dual is a nonnegativity-
//! constrained QP solved exactly coordinate-wise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::moments::{split_gaussian_expectation, MomentsError};
use crate::sim::{rf_features, RfModel};

/// Default KKT tolerance for the dual solver.
pub const DEFAULT_SVM_TOL: f64 = 1e-8;

/// Default sweep budget for the dual solver.
pub const DEFAULT_SVM_MAX_ITER: usize = 100_000;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error(
        "training data not separable: margin reached {min_margin:.4} after {sweeps} sweeps \
         (kkt residual {kkt_residual:e})"
    )]
    NotSeparable {
        min_margin: f64,
        sweeps: usize,
        kkt_residual: f64,
    },
    #[error("labels must be +1 or -1, found {0}")]
    InvalidLabel(f64),
    #[error(transparent)]
    Quadrature(#[from] MomentsError),
}

/// A converged hard-margin fit. Satisfies, up to solver tolerance:
/// feasibility `yᵢzᵢᵀa ≥ 1 − 1e-6`, the representer form `a = Σ αᵢyᵢzᵢ`,
/// and complementary slackness `αᵢ(yᵢzᵢᵀa − 1) ≤ 1e-6`.
#[derive(Debug, Clone)]
pub struct SvmFit {
    pub a: DVector<f64>,
    pub alpha: DVector<f64>,
    pub min_margin: f64,
    pub kkt_residual: f64,
}

/// Misclassification rate of one group with its binomial standard error.
#[derive(Debug, Clone, Copy)]
pub struct GroupErrorEstimate {
    pub error: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassificationErrors {
    pub minority: GroupErrorEstimate,
    pub majority: GroupErrorEstimate,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Draws `±1` labels with `P(y = +1 | x, g) = sigmoid(xᵀβ_g)`.
pub fn sample_two_group_labels(
    x: &DMatrix<f64>,
    g: &[u8],
    beta0: &DVector<f64>,
    beta1: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    assert_eq!(x.nrows(), g.len(), "design/group shape mismatch");
    assert_eq!(x.ncols(), beta0.len(), "beta0 dimension mismatch");
    assert_eq!(x.ncols(), beta1.len(), "beta1 dimension mismatch");
    DVector::from_fn(x.nrows(), |i, _| {
        let beta = if g[i] == 0 { beta0 } else { beta1 };
        let p = sigmoid(x.row(i).transpose().dot(beta));
        if rng.gen_bool(p) {
            1.0
        } else {
            -1.0
        }
    })
}

/// Solves `min ‖a‖₂ s.t. yᵢ zᵢᵀa ≥ 1` by exact coordinate ascent on the
/// dual `max Σαᵢ − ½ Σ αᵢαⱼyᵢyⱼ⟨zᵢ,zⱼ⟩`, `α ≥ 0` (no equality constraint
/// because there is no bias term). Sweeps until the largest KKT violation
/// falls below `tol`.
pub fn hard_margin_svm(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SvmFit, SvmError> {
    let n = z.nrows();
    assert_eq!(n, y.len(), "feature/label shape mismatch");
    for &yi in y.iter() {
        if yi != 1.0 && yi != -1.0 {
            return Err(SvmError::InvalidLabel(yi));
        }
    }
    // Q = (y yᵀ) ∘ (Z Zᵀ); margins m = Qα track yᵢ zᵢᵀ a.
    let mut q = z * z.transpose();
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] *= y[i] * y[j];
        }
    }
    for i in 0..n {
        if q[(i, i)] <= 0.0 {
            // A zero feature row can never reach margin 1.
            return Err(SvmError::NotSeparable {
                min_margin: 0.0,
                sweeps: 0,
                kkt_residual: f64::INFINITY,
            });
        }
    }
    let mut alpha = DVector::<f64>::zeros(n);
    let mut margins = DVector::<f64>::zeros(n);
    let mut kkt = f64::INFINITY;
    let q_data = q.as_slice();
    for _sweep in 0..max_iter {
        kkt = 0.0;
        for i in 0..n {
            let grad = 1.0 - margins[i];
            let violation = if alpha[i] > 0.0 {
                grad.abs()
            } else {
                grad.max(0.0)
            };
            if violation > kkt {
                kkt = violation;
            }
            let updated = (alpha[i] + grad / q_data[i * n + i]).max(0.0);
            let delta = updated - alpha[i];
            if delta != 0.0 {
                alpha[i] = updated;
                // Column i is contiguous (column-major storage).
                let col = &q_data[i * n..(i + 1) * n];
                let m = margins.as_mut_slice();
                for j in 0..n {
                    m[j] += delta * col[j];
                }
            }
        }
        if kkt <= tol {
            let a = z.tr_mul(&alpha.component_mul(y));
            return Ok(SvmFit {
                a,
                alpha,
                min_margin: margins.min(),
                kkt_residual: kkt,
            });
        }
    }
    Err(SvmError::NotSeparable {
        min_margin: margins.min(),
        sweeps: max_iter,
        kkt_residual: kkt,
    })
}

/// Predicted label of a feature-space score, with the fixed tie-break
/// `sign(0) := +1`.
pub fn predict_label(score: f64) -> f64 {
    if score >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Group-wise test errors from fresh draws: `m_test` standard-Gaussian
/// feature vectors per group, labels from the sigmoid model, predictions
/// `sign(z(x)ᵀa)`.
pub fn classification_errors(
    fit: &SvmFit,
    model: &RfModel,
    beta0: &DVector<f64>,
    beta1: &DVector<f64>,
    m_test: usize,
    rng: &mut ChaCha8Rng,
) -> ClassificationErrors {
    assert!(m_test >= 1000, "m_test must be at least 1000");
    let d = model.theta.ncols();
    let mut estimates = [GroupErrorEstimate {
        error: 0.0,
        stderr: 0.0,
    }; 2];
    for (slot, beta) in [beta0, beta1].into_iter().enumerate() {
        let mut mistakes = 0usize;
        let mut remaining = m_test;
        const BLOCK: usize = 2048;
        while remaining > 0 {
            let b = remaining.min(BLOCK);
            let mut xt = DMatrix::<f64>::zeros(b, d);
            for i in 0..b {
                for j in 0..d {
                    xt[(i, j)] = StandardNormal.sample(rng);
                }
            }
            let zt = rf_features(&xt, model);
            let scores = &zt * &fit.a;
            let signal = &xt * beta;
            for i in 0..b {
                let label = if rng.gen_bool(sigmoid(signal[i])) {
                    1.0
                } else {
                    -1.0
                };
                if predict_label(scores[i]) != label {
                    mistakes += 1;
                }
            }
            remaining -= b;
        }
        let m = m_test as f64;
        let p = mistakes as f64 / m;
        estimates[slot] = GroupErrorEstimate {
            error: p,
            stderr: (p * (1.0 - p) / m).sqrt(),
        };
    }
    ClassificationErrors {
        minority: estimates[0],
        majority: estimates[1],
    }
}

/// Best achievable error of any classifier under the sigmoid label model
/// when the score `xᵀβ` is centered Gaussian with standard deviation
/// `signal_norm`: `E[min(f, 1−f)] = E[sigmoid(−signal_norm·|G|)]`.
pub fn bayes_error(signal_norm: f64) -> Result<f64, SvmError> {
    Ok(split_gaussian_expectation(
        |u| sigmoid(-signal_norm * u.abs()),
        200,
    )?)
}
