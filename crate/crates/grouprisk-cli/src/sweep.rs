//! Executes a sweep: one cell per (gamma, theta, pi, estimator), each with a
//! deterministic set of replicates, recorded per replicate plus an aggregate
//! row.

use std::f64::consts::PI as PI_RAD;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use grouprisk::moments::{activation_moments, ActivationMoments, DEFAULT_QUADRATURE_ORDER};
use grouprisk::sim::{
    aggregate, min_norm_ls, minority_risk_linear, minority_risk_rf_mc, rf_features, ridge_weighted,
    sample_two_group, subsample_majority, FeatureLaw, ReplicateStreams, RfModel, SimError,
    StreamRole, TwoGroupDataset, DEFAULT_PINV_RTOL,
};
use grouprisk::svm::{classification_errors, hard_margin_svm, sample_two_group_labels};
use grouprisk::theory_linear::{minority_mspe_linear, subsample_gamma, LinearRegime};
use grouprisk::theory_rf::{
    angle_to_signal, minority_risk_rf, subsample_regime, RfRegime, SignalSpec,
};

use crate::config::{Estimator, Experiment, SweepConfig};

/// Marker value of the `replicate` column on aggregate rows.
pub const AGGREGATE_ROW: i64 = -1;

/// One CSV row. Aggregate rows carry `replicate = -1`, the mean over the
/// successful replicates, and the standard error of that mean; per-replicate
/// rows carry the replicate's own estimate (with its Monte Carlo standard
/// error where one exists). Wall time is kept out of the emitted CSV so that
/// identical seeds produce identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub estimator: String,
    pub gamma: f64,
    pub pi: f64,
    pub theta_deg: f64,
    pub psi1: Option<f64>,
    pub psi2: Option<f64>,
    pub n: usize,
    pub d: usize,
    /// Fitted parameter count: the number of random features for RF
    /// experiments, the input dimension for the linear model.
    pub n_features: usize,
    pub seed: u64,
    pub replicate: i64,
    pub risk_empirical: Option<f64>,
    pub risk_theory: Option<f64>,
    pub stderr: Option<f64>,
    pub theory_bias: Option<f64>,
    pub theory_misspec_quad: Option<f64>,
    pub theory_misspec_cross: Option<f64>,
    pub theory_variance: Option<f64>,
    pub majority_risk_empirical: Option<f64>,
    pub majority_stderr: Option<f64>,
    #[serde(skip)]
    pub wall_time_ms: u64,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    /// Replicates that failed (recorded in the error column, not fatal).
    /// Theory refusals (e.g. at the interpolation threshold) are noted on the
    /// aggregate rows and do not count here.
    pub failures: usize,
}

/// Four theory terms scaled by the signal, plus the total.
struct TheoryCell {
    total: f64,
    bias: f64,
    misspec_quad: f64,
    misspec_cross: f64,
    variance: f64,
}

fn signal_vectors(
    d: usize,
    norm_b0: f64,
    norm_b1: f64,
    theta_deg: f64,
) -> (DVector<f64>, DVector<f64>) {
    let theta = theta_deg * PI_RAD / 180.0;
    let mut beta0 = DVector::zeros(d);
    beta0[0] = norm_b0;
    let mut beta1 = DVector::zeros(d);
    beta1[0] = norm_b1 * theta.cos();
    beta1[1] = norm_b1 * theta.sin();
    (beta0, beta1)
}

fn rf_theory(
    regime: &RfRegime,
    signal: &SignalSpec,
    moments: &ActivationMoments,
) -> Result<TheoryCell, String> {
    let b = minority_risk_rf(regime, signal, moments).map_err(|e| e.to_string())?;
    Ok(TheoryCell {
        total: b.total.expect("total set by minority_risk_rf"),
        bias: signal.f_beta * signal.f_beta * b.b_star,
        misspec_quad: signal.f_delta * signal.f_delta * b.m1_star,
        misspec_cross: signal.f_beta_delta * b.m2_star,
        variance: signal.tau * signal.tau * b.v_star,
    })
}

fn linear_theory(gamma: f64, pi: f64, signal: &SignalSpec) -> Result<TheoryCell, String> {
    let regime = LinearRegime::new(gamma, pi).map_err(|e| e.to_string())?;
    let s0 = signal.f_beta * signal.f_beta;
    let r = signal.f_delta * signal.f_delta;
    let b = minority_mspe_linear(&regime, s0, r, signal.f_beta_delta, signal.tau)
        .map_err(|e| e.to_string())?;
    Ok(TheoryCell {
        total: b.total,
        bias: b.inductive_bias,
        misspec_quad: b.approx_quadratic,
        misspec_cross: 2.0 * b.approx_cross,
        variance: b.variance,
    })
}

/// Empirical estimate from one replicate: minority risk plus its Monte Carlo
/// standard error (where one exists) and, for classification, the majority
/// error.
struct ReplicateEstimate {
    minority: f64,
    stderr: Option<f64>,
    majority: Option<(f64, f64)>,
}

fn empirical_pi_hat(data: &TwoGroupDataset) -> f64 {
    let n1 = data.g.iter().filter(|&&g| g == 1).count();
    (n1 as f64 / data.n() as f64).clamp(1e-6, 1.0 - 1e-6)
}

fn linear_replicate(
    cfg: &SweepConfig,
    estimator: Estimator,
    d: usize,
    pi: f64,
    beta0: &DVector<f64>,
    beta1: &DVector<f64>,
    streams: &ReplicateStreams,
) -> Result<ReplicateEstimate, SimError> {
    let mut train_rng = streams.rng(StreamRole::Train);
    let data = sample_two_group(
        cfg.dims.n,
        d,
        pi,
        beta0,
        beta1,
        cfg.signal.tau(),
        FeatureLaw::GaussianIso,
        &mut train_rng,
    );
    let coeffs = match estimator {
        Estimator::Erm => min_norm_ls(&data.x, &data.y, DEFAULT_PINV_RTOL).coeffs,
        Estimator::Subsample => {
            let mut sub_rng = streams.rng(StreamRole::Subsample);
            let sub = subsample_majority(&data, &mut sub_rng)?;
            min_norm_ls(&sub.x, &sub.y, DEFAULT_PINV_RTOL).coeffs
        }
        Estimator::ReweightedRidge { lambda } => {
            ridge_weighted(&data.x, &data.y, &data.g, empirical_pi_hat(&data), lambda)?.coeffs
        }
    };
    Ok(ReplicateEstimate {
        minority: minority_risk_linear(&coeffs, beta0),
        stderr: None,
        majority: None,
    })
}

fn rf_regression_replicate(
    cfg: &SweepConfig,
    estimator: Estimator,
    num_features: usize,
    pi: f64,
    beta0: &DVector<f64>,
    beta1: &DVector<f64>,
    streams: &ReplicateStreams,
) -> Result<ReplicateEstimate, SimError> {
    let mut model_rng = streams.rng(StreamRole::Model);
    let model = RfModel::sample(
        num_features,
        cfg.dims.d,
        FeatureLaw::SphereUniform,
        cfg.activation.to_activation(),
        &mut model_rng,
    );
    let mut train_rng = streams.rng(StreamRole::Train);
    let data = sample_two_group(
        cfg.dims.n,
        cfg.dims.d,
        pi,
        beta0,
        beta1,
        cfg.signal.tau(),
        FeatureLaw::SphereUniform,
        &mut train_rng,
    );
    let fit = match estimator {
        Estimator::Erm => {
            let z = rf_features(&data.x, &model);
            min_norm_ls(&z, &data.y, DEFAULT_PINV_RTOL)
        }
        Estimator::Subsample => {
            let mut sub_rng = streams.rng(StreamRole::Subsample);
            let sub = subsample_majority(&data, &mut sub_rng)?;
            let z = rf_features(&sub.x, &model);
            min_norm_ls(&z, &sub.y, DEFAULT_PINV_RTOL)
        }
        Estimator::ReweightedRidge { lambda } => {
            let z = rf_features(&data.x, &model);
            ridge_weighted(&z, &data.y, &data.g, empirical_pi_hat(&data), lambda)?
        }
    };
    let mut test_rng = streams.rng(StreamRole::Test);
    let (mean, se) = minority_risk_rf_mc(
        &fit,
        &model,
        beta0,
        FeatureLaw::SphereUniform,
        cfg.m_test,
        &mut test_rng,
    );
    Ok(ReplicateEstimate {
        minority: mean,
        stderr: Some(se),
        majority: None,
    })
}

fn classification_replicate(
    cfg: &SweepConfig,
    estimator: Estimator,
    num_features: usize,
    pi: f64,
    beta0: &DVector<f64>,
    beta1: &DVector<f64>,
    streams: &ReplicateStreams,
) -> Result<ReplicateEstimate, SimError> {
    let d = cfg.dims.d;
    let mut model_rng = streams.rng(StreamRole::Model);
    let model = RfModel::sample(
        num_features,
        d,
        FeatureLaw::GaussianIso,
        cfg.activation.to_activation(),
        &mut model_rng,
    );
    let mut train_rng = streams.rng(StreamRole::Train);
    let mut data = sample_two_group(
        cfg.dims.n,
        d,
        pi,
        beta0,
        beta1,
        0.0,
        FeatureLaw::GaussianIso,
        &mut train_rng,
    );
    data.y = sample_two_group_labels(&data.x, &data.g, beta0, beta1, &mut train_rng);
    let data = match estimator {
        Estimator::Erm => data,
        Estimator::Subsample => {
            let mut sub_rng = streams.rng(StreamRole::Subsample);
            subsample_majority(&data, &mut sub_rng)?
        }
        Estimator::ReweightedRidge { .. } => {
            return Err(SimError::Other(
                "reweighted_ridge is not defined for classification".to_string(),
            ))
        }
    };
    let z = rf_features(&data.x, &model);
    let fit =
        hard_margin_svm(&z, &data.y, 1e-8, 20_000).map_err(|e| SimError::Other(e.to_string()))?;
    let mut test_rng = streams.rng(StreamRole::Test);
    let errs = classification_errors(&fit, &model, beta0, beta1, cfg.m_test, &mut test_rng);
    Ok(ReplicateEstimate {
        minority: errs.minority.error,
        stderr: Some(errs.minority.stderr),
        majority: Some((errs.majority.error, errs.majority.stderr)),
    })
}

/// Runs the whole sweep. Cells run sequentially; replicates inside each cell
/// run on the rayon pool. Records come out sorted by
/// (grid index, estimator, replicate) with the aggregate row last per cell.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome, String> {
    let moments = match cfg.experiment {
        Experiment::RfRegression => Some(
            activation_moments(&cfg.activation.to_activation(), DEFAULT_QUADRATURE_ORDER)
                .map_err(|e| format!("activation moments: {e}"))?,
        ),
        _ => None,
    };
    let estimators = cfg.estimator_instances();
    let mut records = Vec::new();
    let mut failures = 0usize;
    for &gamma in &cfg.grids.gamma {
        for &theta_deg in &cfg.grids.theta_deg {
            for &pi in &cfg.grids.pi {
                for &estimator in &estimators {
                    let cell = run_cell(cfg, moments.as_ref(), gamma, theta_deg, pi, estimator);
                    failures += cell
                        .iter()
                        .filter(|r| r.error.is_some() && r.replicate != AGGREGATE_ROW)
                        .count();
                    records.extend(cell);
                }
            }
        }
    }
    Ok(SweepOutcome { records, failures })
}

fn run_cell(
    cfg: &SweepConfig,
    moments: Option<&ActivationMoments>,
    gamma: f64,
    theta_deg: f64,
    pi: f64,
    estimator: Estimator,
) -> Vec<RunRecord> {
    let start = Instant::now();
    let n = cfg.dims.n;
    let theta = theta_deg * PI_RAD / 180.0;
    let signal = angle_to_signal(
        cfg.signal.norm_b0,
        cfg.signal.norm_b1,
        theta,
        cfg.signal.tau(),
    );

    // Dimensions per experiment: the linear model realizes gamma = d/n, the
    // RF models realize gamma = N/n at fixed (d, n).
    let (d, n_features) = match cfg.experiment {
        Experiment::LinearRegression => {
            let d = ((gamma * n as f64).round() as usize).max(2);
            (d, d)
        }
        _ => {
            let nf = ((gamma * n as f64).round() as usize).max(1);
            (cfg.dims.d, nf)
        }
    };
    let (psi1, psi2) = match cfg.experiment {
        Experiment::LinearRegression => (None, None),
        _ => (
            Some(n_features as f64 / d as f64),
            Some(n as f64 / d as f64),
        ),
    };

    // Theory for the cell (subsampling evaluated at the remapped regime; the
    // ridgeless limit of reweighting coincides with ERM).
    let theory: Option<Result<TheoryCell, String>> = match cfg.experiment {
        Experiment::RfRegression => {
            let moments = moments.expect("moments computed for rf_regression");
            let base = RfRegime {
                psi1: psi1.unwrap(),
                psi2: psi2.unwrap(),
                pi,
            };
            let regime = match estimator {
                Estimator::Subsample => subsample_regime(&base),
                _ => base,
            };
            Some(rf_theory(&regime, &signal, moments))
        }
        Experiment::LinearRegression => {
            let effective = match estimator {
                Estimator::Subsample => subsample_gamma(gamma, pi).map_err(|e| e.to_string()),
                _ => Ok((gamma, pi)),
            };
            Some(effective.and_then(|(g_eff, pi_eff)| linear_theory(g_eff, pi_eff, &signal)))
        }
        Experiment::RfClassification => None,
    };

    let (beta0, beta1) = signal_vectors(d, cfg.signal.norm_b0, cfg.signal.norm_b1, theta_deg);

    let run = |_r: usize, streams: &ReplicateStreams| -> Result<ReplicateEstimate, SimError> {
        match cfg.experiment {
            Experiment::LinearRegression => {
                linear_replicate(cfg, estimator, d, pi, &beta0, &beta1, streams)
            }
            Experiment::RfRegression => {
                rf_regression_replicate(cfg, estimator, n_features, pi, &beta0, &beta1, streams)
            }
            Experiment::RfClassification => {
                classification_replicate(cfg, estimator, n_features, pi, &beta0, &beta1, streams)
            }
        }
    };

    // Parallel over replicates, collected in index order.
    use rayon::prelude::*;
    let outcomes: Vec<Result<ReplicateEstimate, SimError>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let streams = ReplicateStreams::new(cfg.master_seed, r as u64);
            run(r, &streams)
        })
        .collect();

    let (theory_total, theory_terms, theory_error) = match &theory {
        Some(Ok(cell)) => (
            Some(cell.total),
            Some((
                cell.bias,
                cell.misspec_quad,
                cell.misspec_cross,
                cell.variance,
            )),
            None,
        ),
        Some(Err(msg)) => (None, None, Some(format!("theory: {msg}"))),
        None => (None, None, None),
    };

    let template = RunRecord {
        experiment: cfg.experiment.id().to_string(),
        estimator: estimator.label(),
        gamma,
        pi,
        theta_deg,
        psi1,
        psi2,
        n,
        d,
        n_features,
        seed: cfg.master_seed,
        replicate: 0,
        risk_empirical: None,
        risk_theory: theory_total,
        stderr: None,
        theory_bias: theory_terms.map(|t| t.0),
        theory_misspec_quad: theory_terms.map(|t| t.1),
        theory_misspec_cross: theory_terms.map(|t| t.2),
        theory_variance: theory_terms.map(|t| t.3),
        majority_risk_empirical: None,
        majority_stderr: None,
        wall_time_ms: 0,
        error: None,
    };

    // A theory failure (e.g. at the interpolation threshold) is noted on the
    // cell's aggregate row; replicate rows only flag their own failures.
    let mut out = Vec::with_capacity(cfg.replicates + 1);
    for (r, outcome) in outcomes.iter().enumerate() {
        let mut rec = template.clone();
        rec.replicate = r as i64;
        match outcome {
            Ok(est) => {
                rec.risk_empirical = Some(est.minority);
                rec.stderr = est.stderr;
                if let Some((maj, maj_se)) = est.majority {
                    rec.majority_risk_empirical = Some(maj);
                    rec.majority_stderr = Some(maj_se);
                }
            }
            Err(e) => {
                rec.error = Some(format!("replicate: {e}"));
            }
        }
        out.push(rec);
    }

    let minority: Vec<Result<f64, SimError>> = outcomes
        .iter()
        .map(|o| {
            o.as_ref()
                .map(|e| e.minority)
                .map_err(|e| SimError::Other(e.to_string()))
        })
        .collect();
    let (mean, stderr) = aggregate(&minority);
    let mut agg = template.clone();
    agg.replicate = AGGREGATE_ROW;
    agg.error = theory_error.clone();
    if mean.is_finite() {
        agg.risk_empirical = Some(mean);
        agg.stderr = Some(stderr);
    } else {
        let msg = "aggregate: no successful replicates".to_string();
        agg.error = Some(match &theory_error {
            Some(t) => format!("{t}; {msg}"),
            None => msg,
        });
    }
    if cfg.experiment == Experiment::RfClassification {
        let majority: Vec<Result<f64, SimError>> = outcomes
            .iter()
            .map(|o| {
                o.as_ref()
                    .map(|e| e.majority.expect("classification sets majority").0)
                    .map_err(|e| SimError::Other(e.to_string()))
            })
            .collect();
        let (maj_mean, maj_se) = aggregate(&majority);
        if maj_mean.is_finite() {
            agg.majority_risk_empirical = Some(maj_mean);
            agg.majority_stderr = Some(maj_se);
        }
    }
    agg.wall_time_ms = start.elapsed().as_millis() as u64;
    out.push(agg);
    out
}
