//! Asymptotic minority mean squared prediction error of ridgeless/OLS linear
//! regression with isotropic features, and the subsampling remap.
//!
//! With `d/n → γ`, majority fraction `π`, `‖β₀‖² = s₀`, `‖δ‖² = r`,
//! `⟨β₀, δ⟩ = c` and noise level `τ`, the minority risk of the min-norm
//! (γ > 1) or OLS (γ < 1) fit converges to a sum of four terms:
//!
//! * inductive bias `{s₀(1 − 1/γ)} ∨ 0`, the part of `β₀` in `ker(X)`;
//! * variance `τ²γ/(1−γ)` for `γ < 1`, `τ²/(γ−1)` for `γ > 1`;
//! * a group-shift quadratic `r·π(γ + π(1−2γ))/(1−γ)` for `γ < 1` and
//!   `r·π(1/γ + (1−π)/(γ(γ−1)))` for `γ > 1`;
//! * a cross term that vanishes identically: the estimation error splits as
//!   `(Π_X − I)β₀ + X†Sδ + X†ε` with `S` selecting majority rows, and
//!   `(X†)ᵀ(Π_X − I) = 0` because `(X†)ᵀΠ_X = (X†)ᵀ` (Moore–Penrose
//!   identities), while for `γ < 1` the projector is the identity. The slot
//!   is kept in [`LinearBreakdown`] so the four-term decomposition is
//!   explicit, and `c` stays in the signatures for the finite-sample
//!   parametrization.
//!
//! The overparameterized quadratic follows the exact finite-sample expectation
//! `r·[n₀n₁/(d(d−n−1)) + n₁/d]` of the group-shift bias under isotropic
//! designs, taken to its `d/n → γ` limit.

use thiserror::Error;

/// Guard band around `γ = 1`, matching the random-feature module.
pub const GAMMA_GUARD: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum TheoryLinearError {
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("gamma = {gamma} is inside the guard band around the interpolation threshold")]
    AtInterpolationThreshold { gamma: f64 },
    #[error("subsampling is degenerate at pi = 1: no minority samples to match")]
    DegenerateSubsample,
}

/// Asymptotic shape of the linear problem: `γ = lim d/n`, majority
/// fraction `π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRegime {
    pub gamma: f64,
    pub pi: f64,
}

impl LinearRegime {
    pub fn new(gamma: f64, pi: f64) -> Result<Self, TheoryLinearError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(TheoryLinearError::InvalidRegime(format!(
                "gamma must be positive finite, got {gamma}"
            )));
        }
        if !(0.0..=1.0).contains(&pi) {
            return Err(TheoryLinearError::InvalidRegime(format!(
                "pi must lie in [0, 1], got {pi}"
            )));
        }
        if pi < 0.5 {
            log::warn!("majority fraction pi = {pi} < 1/2; group 1 is no longer the majority");
        }
        Ok(Self { gamma, pi })
    }
}

/// The four-term decomposition. `total = inductive_bias + approx_quadratic
/// + 2·approx_cross + variance`; the cross entry is stored un-doubled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBreakdown {
    pub inductive_bias: f64,
    pub approx_quadratic: f64,
    pub approx_cross: f64,
    pub variance: f64,
    pub total: f64,
}

fn guard(gamma: f64) -> Result<(), TheoryLinearError> {
    if (gamma - 1.0).abs() < GAMMA_GUARD {
        return Err(TheoryLinearError::AtInterpolationThreshold { gamma });
    }
    Ok(())
}

/// `{s₀(1 − 1/γ)} ∨ 0`: zero when underparameterized, approaching `s₀` as
/// `γ → ∞`.
pub fn inductive_bias(gamma: f64, s0: f64) -> f64 {
    (s0 * (1.0 - 1.0 / gamma)).max(0.0)
}

/// `τ²γ/(1−γ)` for `γ < 1`, `τ²/(γ−1)` for `γ > 1`.
pub fn variance_term(gamma: f64, tau: f64) -> Result<f64, TheoryLinearError> {
    guard(gamma)?;
    let t2 = tau * tau;
    Ok(if gamma < 1.0 {
        t2 * gamma / (1.0 - gamma)
    } else {
        t2 / (gamma - 1.0)
    })
}

/// Limits of the group-shift terms: the quadratic in `δ` and the
/// (identically zero) cross term with `β₀`. See the module docs for why the
/// cross limit carries no `c` dependence.
pub fn approx_error(gamma: f64, pi: f64, r: f64, _c: f64) -> Result<(f64, f64), TheoryLinearError> {
    guard(gamma)?;
    let quadratic = if gamma < 1.0 {
        r * pi * (gamma + pi * (1.0 - 2.0 * gamma)) / (1.0 - gamma)
    } else {
        r * pi * (1.0 / gamma + (1.0 - pi) / (gamma * (gamma - 1.0)))
    };
    Ok((quadratic, 0.0))
}

/// Assembles the four-term minority MSPE.
pub fn minority_mspe_linear(
    regime: &LinearRegime,
    s0: f64,
    r: f64,
    c: f64,
    tau: f64,
) -> Result<LinearBreakdown, TheoryLinearError> {
    let inductive = inductive_bias(regime.gamma, s0);
    let variance = variance_term(regime.gamma, tau)?;
    let (quadratic, cross) = approx_error(regime.gamma, regime.pi, r, c)?;
    Ok(LinearBreakdown {
        inductive_bias: inductive,
        approx_quadratic: quadratic,
        approx_cross: cross,
        variance,
        total: inductive + quadratic + 2.0 * cross + variance,
    })
}

/// Shape remap under majority subsampling: discarding majority rows until the
/// groups balance shrinks `n` by `2(1−π)`, i.e. `(γ, π) → (γ/(2(1−π)), 1/2)`.
pub fn subsample_gamma(gamma: f64, pi: f64) -> Result<(f64, f64), TheoryLinearError> {
    if pi >= 1.0 {
        return Err(TheoryLinearError::DegenerateSubsample);
    }
    Ok((gamma / (2.0 * (1.0 - pi)), 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const TAU_SNR10: f64 = 0.31622776601683794; // sqrt(1/10)

    #[test]
    fn inductive_bias_cases() {
        assert_abs_diff_eq!(inductive_bias(2.0, 1.0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(inductive_bias(0.5, 1.0), 0.0);
        assert_abs_diff_eq!(inductive_bias(1e12, 1.0), 1.0, epsilon = 1e-11);
    }

    #[test]
    fn variance_cases() {
        assert_abs_diff_eq!(variance_term(2.0, 1.0).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(variance_term(0.5, 1.0).unwrap(), 1.0, epsilon = 1e-14);
        assert!(variance_term(1e9, 1.0).unwrap() < 1e-8);
        assert!(matches!(
            variance_term(1.0, 1.0),
            Err(TheoryLinearError::AtInterpolationThreshold { .. })
        ));
    }

    #[test]
    fn approx_error_overparameterized() {
        // gamma = 2, pi = 0.8: quadratic = r*pi*(1/2 + 0.2/2) = 0.48 r.
        let (q, c) = approx_error(2.0, 0.8, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(q, 0.48, epsilon = 1e-14);
        assert_abs_diff_eq!(c, 0.0);
    }

    #[test]
    fn approx_error_underparameterized() {
        // gamma = 1/2 zeroes the (1-2*gamma) correction: quadratic = r*pi.
        let (q, c) = approx_error(0.5, 0.8, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(q, 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(c, 0.0);
    }

    #[test]
    fn approx_error_no_group_difference() {
        let (q, c) = approx_error(2.0, 0.8, 0.0, 0.0).unwrap();
        assert_eq!((q, c), (0.0, 0.0));
    }

    #[test]
    fn total_assembles_per_term_oracles() {
        let regime = LinearRegime::new(2.0, 0.8).unwrap();
        let b = minority_mspe_linear(&regime, 1.0, 1.0, 0.0, TAU_SNR10).unwrap();
        let expect = inductive_bias(2.0, 1.0)
            + approx_error(2.0, 0.8, 1.0, 0.0).unwrap().0
            + variance_term(2.0, TAU_SNR10).unwrap();
        assert_abs_diff_eq!(b.total, expect, epsilon = 1e-14);
        assert_abs_diff_eq!(b.total, 1.08, epsilon = 1e-12);
    }

    #[test]
    fn decomposition_identity() {
        for gamma in [0.3, 0.7, 1.5, 2.0, 4.0, 20.0] {
            for pi in [0.5, 0.8, 0.95] {
                let regime = LinearRegime::new(gamma, pi).unwrap();
                let b = minority_mspe_linear(&regime, 1.3, 2.1, -0.4, 0.5).unwrap();
                assert_abs_diff_eq!(
                    b.total,
                    b.inductive_bias + b.approx_quadratic + 2.0 * b.approx_cross + b.variance,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn no_shift_reduces_to_single_group() {
        let regime = LinearRegime::new(2.0, 0.8).unwrap();
        let b = minority_mspe_linear(&regime, 1.0, 0.0, 0.0, 0.5).unwrap();
        assert_abs_diff_eq!(
            b.total,
            inductive_bias(2.0, 1.0) + variance_term(2.0, 0.5).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn opposed_groups_cost_more_than_aligned() {
        // theta = 180 deg with unit norms: r = 4, c = -2; theta = 0: r = c = 0.
        let regime = LinearRegime::new(2.0, 0.8).unwrap();
        let opposed = minority_mspe_linear(&regime, 1.0, 4.0, -2.0, TAU_SNR10).unwrap();
        let aligned = minority_mspe_linear(&regime, 1.0, 0.0, 0.0, TAU_SNR10).unwrap();
        assert!(opposed.total > aligned.total);
        assert_abs_diff_eq!(opposed.total, 2.52, epsilon = 1e-12);
    }

    #[test]
    fn subsample_remap_cases() {
        let (g, p) = subsample_gamma(2.0, 0.8).unwrap();
        assert_abs_diff_eq!(g, 5.0, epsilon = 1e-12);
        assert_eq!(p, 0.5);
        assert_eq!(subsample_gamma(2.0, 0.5).unwrap(), (2.0, 0.5));
        let (g, p) = subsample_gamma(1.2, 0.9).unwrap();
        assert_abs_diff_eq!(g, 6.0, epsilon = 1e-12);
        assert_eq!(p, 0.5);
        assert!(matches!(
            subsample_gamma(2.0, 1.0),
            Err(TheoryLinearError::DegenerateSubsample)
        ));
    }

    #[test]
    fn approx_terms_vanish_at_large_gamma() {
        let at = |g: f64| approx_error(g, 0.8, 4.0, -2.0).unwrap().0;
        assert!(at(100.0) < 0.05 * at(2.0));
    }

    #[test]
    fn mspe_nondecreasing_in_pi() {
        for gamma in [0.5, 2.0, 4.0] {
            let mut prev = f64::NEG_INFINITY;
            for pi in [0.5, 0.6, 0.7, 0.8, 0.9, 0.99] {
                let regime = LinearRegime::new(gamma, pi).unwrap();
                let total = minority_mspe_linear(&regime, 1.0, 4.0, -2.0, TAU_SNR10)
                    .unwrap()
                    .total;
                assert!(total >= prev - 1e-12, "decreased at gamma={gamma}, pi={pi}");
                prev = total;
            }
        }
    }

    #[test]
    fn smooth_in_parameters_away_from_threshold() {
        // Central finite differences stay bounded on a grid straddling both
        // regimes (but outside the guard band).
        let h = 1e-5;
        for gamma in [0.4, 0.8, 1.3, 2.5, 6.0] {
            for pi in [0.6, 0.9] {
                let f = |g: f64, p: f64, r: f64, t: f64| {
                    minority_mspe_linear(&LinearRegime::new(g, p).unwrap(), 1.0, r, -0.5, t)
                        .unwrap()
                        .total
                };
                let dg = (f(gamma + h, pi, 2.0, 0.5) - f(gamma - h, pi, 2.0, 0.5)) / (2.0 * h);
                let dp = (f(gamma, pi + h, 2.0, 0.5) - f(gamma, pi - h, 2.0, 0.5)) / (2.0 * h);
                let dr = (f(gamma, pi, 2.0 + h, 0.5) - f(gamma, pi, 2.0 - h, 0.5)) / (2.0 * h);
                let dt = (f(gamma, pi, 2.0, 0.5 + h) - f(gamma, pi, 2.0, 0.5 - h)) / (2.0 * h);
                for d in [dg, dp, dr, dt] {
                    assert!(d.is_finite() && d.abs() < 1e3);
                }
            }
        }
    }
}
