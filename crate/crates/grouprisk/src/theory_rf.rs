//! Closed-form high-dimensional asymptotics of the minority-group risk for
//! ridgeless random-feature regression, plus the majority-subsampling remap
//! and a ridge-level fixed-point cross-check.
//!
//! In the limit `N/d → ψ₁`, `n/d → ψ₂`, `n₁/n → π`, the minority mean squared
//! prediction error of the min-norm random-feature fit converges to
//!
//! ```text
//! F_β² B* + F_δ² M₁* + F_{β,δ} M₂* + τ² V*
//! ```
//!
//! where `B* = E₁*/E₀*` and `V* = E₂*/E₀*` are ratios of fixed polynomials in
//! `(χ, ξ, ψ₁, ψ₂)`, `Ψ₂* = B* − 1 + 2(χ + ψ)`,
//! `M₁* = π(1−π)V* + π²Ψ₂*` and `M₂* = π(B* − 1 + Ψ₂*)`. `χ` is the
//! negative root of `ξ²χ² + (ψξ² − ξ² − 1)χ − ψ = 0` with `ψ = min(ψ₁, ψ₂)`,
//! and equals the ridgeless limit of `ν₁ν₂` from the coupled resolvent fixed
//! point solved by [`nu_fixed_point`].

use num_complex::Complex64;
use thiserror::Error;

use crate::moments::ActivationMoments;

/// Relative width of the guard band around `ψ₁ = ψ₂` inside which ridgeless
/// formulas are refused (`E₀* → 0` and the risk diverges at `γ = 1`).
pub const INTERPOLATION_BAND: f64 = 1e-3;

/// Absolute floor on `|E₀*|` below which the ratio formulas are refused.
pub const E0_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum TheoryRfError {
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error(
        "ridgeless evaluation at the interpolation threshold \
         (psi1 = {psi1}, psi2 = {psi2}, e0 = {e0:e})"
    )]
    NearInterpolationThreshold { psi1: f64, psi2: f64, e0: f64 },
    #[error(
        "nu fixed point did not converge after {iterations} iterations \
         (residual {residual:e}); lambda may be too small for the damping schedule"
    )]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Asymptotic shape of a random-feature problem: `ψ₁ = lim N/d`,
/// `ψ₂ = lim n/d`, majority fraction `π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfRegime {
    pub psi1: f64,
    pub psi2: f64,
    pub pi: f64,
}

impl RfRegime {
    pub fn new(psi1: f64, psi2: f64, pi: f64) -> Result<Self, TheoryRfError> {
        if !(psi1 > 0.0 && psi1.is_finite()) || !(psi2 > 0.0 && psi2.is_finite()) {
            return Err(TheoryRfError::InvalidRegime(format!(
                "psi1 and psi2 must be positive finite, got ({psi1}, {psi2})"
            )));
        }
        if !(0.0..=1.0).contains(&pi) {
            return Err(TheoryRfError::InvalidRegime(format!(
                "pi must lie in [0, 1], got {pi}"
            )));
        }
        if pi < 0.5 {
            log::warn!("majority fraction pi = {pi} < 1/2; group 1 is no longer the majority");
        }
        Ok(Self { psi1, psi2, pi })
    }

    /// Overparameterization ratio `γ = ψ₁/ψ₂ = lim N/n`.
    pub fn gamma(&self) -> f64 {
        self.psi1 / self.psi2
    }

    /// `ψ = min(ψ₁, ψ₂)`.
    pub fn psi(&self) -> f64 {
        self.psi1.min(self.psi2)
    }
}

/// Signal strengths of the two-group model: `F_β = ‖β₀‖`, `F_δ = ‖δ‖`,
/// `F_{β,δ} = ⟨β₀, δ⟩`, noise level `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    pub f_beta: f64,
    pub f_delta: f64,
    pub f_beta_delta: f64,
    pub tau: f64,
}

impl SignalSpec {
    pub fn new(
        f_beta: f64,
        f_delta: f64,
        f_beta_delta: f64,
        tau: f64,
    ) -> Result<Self, TheoryRfError> {
        if f_beta < 0.0 || f_delta < 0.0 || tau < 0.0 {
            return Err(TheoryRfError::InvalidSignal(format!(
                "norms and tau must be nonnegative, got ({f_beta}, {f_delta}, tau = {tau})"
            )));
        }
        if f_beta_delta.abs() > f_beta * f_delta + 1e-12 {
            return Err(TheoryRfError::InvalidSignal(format!(
                "|<beta0, delta>| = {} violates Cauchy-Schwarz bound {}",
                f_beta_delta.abs(),
                f_beta * f_delta
            )));
        }
        Ok(Self {
            f_beta,
            f_delta,
            f_beta_delta,
            tau,
        })
    }
}

/// Per-term asymptotic risk. `total` is populated by [`minority_risk_rf`] and
/// left unset by [`erm_breakdown`], whose fields are unit-signal coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskBreakdown {
    pub b_star: f64,
    pub v_star: f64,
    pub psi2_star: f64,
    pub m1_star: f64,
    pub m2_star: f64,
    pub total: Option<f64>,
}

/// Converged solution of the coupled `(ν₁, ν₂)` equations at
/// `ζ = i√(ψ₁ψ₂λ)`.
#[derive(Debug, Clone, Copy)]
pub struct NuPair {
    pub nu1: Complex64,
    pub nu2: Complex64,
    pub zeta: Complex64,
    pub iterations: usize,
    /// Scale-relative fixed-point residual
    /// `max_j |F_j(ν) − ν_j| / (1 + |ν_j|)` at exit; at the ridgeless end the
    /// iterates grow like `ψ/√λ`, so an absolute residual would bottom out at
    /// machine-epsilon times that scale.
    pub residual: f64,
}

/// Negative root of `ξ²χ² + (ψξ² − ξ² − 1)χ − ψ = 0`.
///
/// The two algebraically equivalent root forms are switched on the sign of
/// the linear coefficient to avoid cancellation; `χ → 0` as `ψ → 0⁺`.
pub fn chi(xi: f64, psi: f64) -> f64 {
    let x2 = xi * xi;
    let b = psi * x2 - x2 - 1.0;
    let disc = (b * b + 4.0 * x2 * psi).sqrt();
    if b <= 0.0 {
        -2.0 * psi / (disc - b)
    } else {
        -(disc + b) / (2.0 * x2)
    }
}

/// The three polynomials `(E₀, E₁, E₂)` in `(χ, ξ, ψ₁, ψ₂)`, evaluated in
/// Horner form. Shared between the ridgeless path (real `χ`) and the ridge
/// path (`χ = ν₁ν₂` complex).
fn e_polynomials(
    chi: Complex64,
    xi: f64,
    psi1: f64,
    psi2: f64,
) -> (Complex64, Complex64, Complex64) {
    let x2 = xi * xi;
    let x4 = x2 * x2;
    let x6 = x4 * x2;
    let p12 = psi1 * psi2;

    let e0 = ((((chi * -x6 + 3.0 * x4) * chi
        + ((p12 - psi1 - psi2 + 1.0) * x6 - 2.0 * x4 - 3.0 * x2))
        * chi
        + ((psi1 + psi2 - 3.0 * p12 + 1.0) * x4 + 2.0 * x2 + 1.0))
        * chi
        + 3.0 * p12 * x2)
        * chi
        - p12;
    let e1 = ((chi * (psi2 * x4) - psi2 * x2) * chi + p12 * x2) * chi - p12;
    let e2 = (((chi * x6 - 3.0 * x4) * chi + ((psi1 - 1.0) * x6 + 2.0 * x4 + 3.0 * x2)) * chi
        + (-(psi1 + 1.0) * x4 - 2.0 * x2 - 1.0))
        * chi
        * chi;
    (e0, e1, e2)
}

fn threshold_guard(psi1: f64, psi2: f64, e0: f64) -> Result<(), TheoryRfError> {
    if (psi1 - psi2).abs() / psi1.max(psi2) < INTERPOLATION_BAND || e0.abs() < E0_FLOOR {
        return Err(TheoryRfError::NearInterpolationThreshold { psi1, psi2, e0 });
    }
    Ok(())
}

/// `(E₀*, E₁*, E₂*)` at the ridgeless `χ = chi(ξ, min(ψ₁, ψ₂))`.
pub fn e_star_polynomials(xi: f64, psi1: f64, psi2: f64) -> Result<(f64, f64, f64), TheoryRfError> {
    let c = Complex64::new(chi(xi, psi1.min(psi2)), 0.0);
    let (e0, e1, e2) = e_polynomials(c, xi, psi1, psi2);
    threshold_guard(psi1, psi2, e0.re)?;
    Ok((e0.re, e1.re, e2.re))
}

/// Unit-signal risk coefficients of the ridgeless ERM fit:
/// `B* = E₁*/E₀*`, `V* = E₂*/E₀*`, `Ψ₂* = B* − 1 + 2(χ + ψ)`, and the
/// misspecification terms `M₁*`, `M₂*` at the regime's `π`.
pub fn erm_breakdown(
    regime: &RfRegime,
    moments: &ActivationMoments,
) -> Result<RiskBreakdown, TheoryRfError> {
    let (e0, e1, e2) = e_star_polynomials(moments.xi, regime.psi1, regime.psi2)?;
    let b_star = e1 / e0;
    let v_star = e2 / e0;
    let psi2_star = b_star - 1.0 + 2.0 * (chi(moments.xi, regime.psi()) + regime.psi());
    let pi = regime.pi;
    let m1_star = pi * (1.0 - pi) * v_star + pi * pi * psi2_star;
    let m2_star = pi * (b_star - 1.0 + psi2_star);
    Ok(RiskBreakdown {
        b_star,
        v_star,
        psi2_star,
        m1_star,
        m2_star,
        total: None,
    })
}

/// Total asymptotic minority risk
/// `F_β²B* + F_δ²M₁* + F_{β,δ}M₂* + τ²V*`.
pub fn minority_risk_rf(
    regime: &RfRegime,
    signal: &SignalSpec,
    moments: &ActivationMoments,
) -> Result<RiskBreakdown, TheoryRfError> {
    let mut breakdown = erm_breakdown(regime, moments)?;
    breakdown.total = Some(
        signal.f_beta * signal.f_beta * breakdown.b_star
            + signal.f_delta * signal.f_delta * breakdown.m1_star
            + signal.f_beta_delta * breakdown.m2_star
            + signal.tau * signal.tau * breakdown.v_star,
    );
    Ok(breakdown)
}

/// Converts the `(‖β₀‖, ‖β₁‖, θ)` parametrization into signal strengths:
/// `δ = β₁ − β₀`, so `F_δ² = ‖β₀‖² + ‖β₁‖² − 2‖β₀‖‖β₁‖cos θ` and
/// `F_{β,δ} = ‖β₀‖‖β₁‖cos θ − ‖β₀‖²`.
pub fn angle_to_signal(norm_b0: f64, norm_b1: f64, theta: f64, tau: f64) -> SignalSpec {
    let cos = theta.cos();
    let f_delta_sq =
        (norm_b0 * norm_b0 + norm_b1 * norm_b1 - 2.0 * norm_b0 * norm_b1 * cos).max(0.0);
    SignalSpec {
        f_beta: norm_b0,
        f_delta: f_delta_sq.sqrt(),
        f_beta_delta: norm_b0 * norm_b1 * cos - norm_b0 * norm_b0,
        tau,
    }
}

/// Regime after discarding majority samples until the groups balance:
/// `(ψ₁, 2(1−π)ψ₂, 1/2)`. Idempotent, since the result has `π = 1/2`.
pub fn subsample_regime(regime: &RfRegime) -> RfRegime {
    RfRegime {
        psi1: regime.psi1,
        psi2: 2.0 * (1.0 - regime.pi) * regime.psi2,
        pi: 0.5,
    }
}

/// Solves the coupled equations
///
/// ```text
/// ν₁ = ψ₁ (−ζ − ν₂ − ξ²ν₂ / (1 − ξ²ν₁ν₂))⁻¹
/// ν₂ = ψ₂ (−ζ − ν₁ − ξ²ν₁ / (1 − ξ²ν₁ν₂))⁻¹
/// ```
///
/// at `ζ = i√(ψ₁ψ₂λ)` by damped Picard iteration
/// (`ν ← (1−α)ν + α F(ν)`, `α = 1/2`, halved when the residual grows),
/// started from the dominant balance `ν_j = ψ_j/(−ζ)`. The uniqueness bound
/// `|ν_j| ≤ ψ_j / Im ζ` is checked a posteriori.
pub fn nu_fixed_point(
    xi: f64,
    psi1: f64,
    psi2: f64,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<NuPair, TheoryRfError> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(TheoryRfError::InvalidRegime(format!(
            "lambda must be positive so that Im(zeta) > 0, got {lambda}"
        )));
    }
    let zeta = Complex64::new(0.0, (psi1 * psi2 * lambda).sqrt());
    let x2 = xi * xi;
    let mut nu1 = psi1 / -zeta;
    let mut nu2 = psi2 / -zeta;
    let mut alpha = 0.5;
    let mut prev = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let denom = 1.0 - x2 * nu1 * nu2;
        let f1 = psi1 / (-zeta - nu2 - x2 * nu2 / denom);
        let f2 = psi2 / (-zeta - nu1 - x2 * nu1 / denom);
        residual =
            ((f1 - nu1).norm() / (1.0 + nu1.norm())).max((f2 - nu2).norm() / (1.0 + nu2.norm()));
        if residual < tol {
            let im = zeta.im;
            if nu1.norm() > psi1 / im || nu2.norm() > psi2 / im {
                return Err(TheoryRfError::NoConvergence {
                    iterations: it,
                    residual,
                });
            }
            return Ok(NuPair {
                nu1,
                nu2,
                zeta,
                iterations: it,
                residual,
            });
        }
        nu1 = (1.0 - alpha) * nu1 + alpha * f1;
        nu2 = (1.0 - alpha) * nu2 + alpha * f2;
        if residual > prev {
            alpha = (alpha * 0.5).max(0.05);
        }
        prev = residual;
    }
    Err(TheoryRfError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Default solver settings used by [`ridge_breakdown`].
pub const RIDGE_FP_TOL: f64 = 1e-12;
pub const RIDGE_FP_MAX_ITER: usize = 200_000;

/// Ridge-level `(B_ridge, V_ridge) = (E₁/E₀, E₂/E₀)` evaluated with
/// `χ = ν₁ν₂` at the given `λ > 0`. Converges to `(B*, V*)` as `λ → 0⁺`;
/// imaginary residues beyond 1e-8 are logged as diagnostics.
pub fn ridge_breakdown(
    xi: f64,
    psi1: f64,
    psi2: f64,
    lambda: f64,
) -> Result<(f64, f64), TheoryRfError> {
    let pair = nu_fixed_point(xi, psi1, psi2, lambda, RIDGE_FP_TOL, RIDGE_FP_MAX_ITER)?;
    let (e0, e1, e2) = e_polynomials(pair.nu1 * pair.nu2, xi, psi1, psi2);
    let b = e1 / e0;
    let v = e2 / e0;
    if b.im.abs() > 1e-8 || v.im.abs() > 1e-8 {
        log::debug!(
            "ridge_breakdown imaginary residue: Im(B) = {:e}, Im(V) = {:e} at lambda = {lambda}",
            b.im,
            v.im
        );
    }
    Ok((b.re, v.re))
}
