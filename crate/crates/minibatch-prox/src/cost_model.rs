//! Simulated distributed cost accounting and the asymptotic regime table.
//!
//! Two access costs are modeled: a batch gradient evaluation (cost
//! `tau_b`, parallelizable across machines) and a serial single-sample
//! gradient step (cost `tau_1`). Energy is total single-sample gradient
//! work, so it is additive and hardware-independent.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy)]
pub struct CostConstants {
    /// Simulated seconds per batch gradient evaluation.
    pub tau_b: f64,
    /// Simulated seconds per serial single-sample step.
    pub tau_1: f64,
    /// Number of machines in the simulated cluster (descriptive only).
    pub machines: usize,
}

impl CostConstants {
    pub fn new(tau_b: f64, tau_1: f64, machines: usize) -> Result<Self> {
        if tau_b <= 0.0 || tau_1 <= 0.0 {
            return Err(Error::invalid("cost constants must be positive"));
        }
        Ok(CostConstants {
            tau_b,
            tau_1,
            machines,
        })
    }

    pub fn runtime(&self, batch_grad_evals: u64, single_grad_evals: u64) -> f64 {
        batch_grad_evals as f64 * self.tau_b + single_grad_evals as f64 * self.tau_1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostSummary {
    pub runtime: f64,
    pub energy: u64,
}

impl std::ops::Add for CostSummary {
    type Output = CostSummary;

    fn add(self, other: CostSummary) -> CostSummary {
        CostSummary {
            runtime: self.runtime + other.runtime,
            energy: self.energy + other.energy,
        }
    }
}

/// Totals a trace under the cost constants. Counters are cumulative per
/// (run_id, seed), so each run contributes its final record; summaries of
/// disjoint runs are therefore additive under trace concatenation.
pub fn account(records: &[TraceRecord], constants: &CostConstants) -> CostSummary {
    let mut finals: BTreeMap<(&str, u64), (u64, u64, u64)> = BTreeMap::new();
    for rec in records {
        let entry = finals
            .entry((rec.run_id.as_str(), rec.seed))
            .or_insert((0, 0, 0));
        entry.0 = entry.0.max(rec.batch_grad_evals);
        entry.1 = entry.1.max(rec.single_grad_evals);
        entry.2 = entry.2.max(rec.energy);
    }
    let mut summary = CostSummary::default();
    for (_, (batch, single, energy)) in finals {
        summary.runtime += constants.runtime(batch, single);
        summary.energy += energy;
    }
    summary
}

/// A run's sample budget: the maximal minibatch size that stays sample
/// efficient for minibatch SGD is `V^2/eps^2`; for minibatch-prox it is
/// `beta V^2 / (sigma eps^2)` (unbounded when sigma = 0).
pub fn efficiency_thresholds(
    sigma: f64,
    beta: f64,
    v: f64,
    epsilon: f64,
) -> (f64, Option<f64>) {
    let b_sgd = v * v / (epsilon * epsilon);
    let b_mp = if sigma > 0.0 {
        Some(beta * v * v / (sigma * epsilon * epsilon))
    } else {
        None
    };
    (b_sgd, b_mp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeMethod {
    MinibatchSgd,
    MpAgd,
    MpSvrg,
}

impl RegimeMethod {
    pub fn name(&self) -> &'static str {
        match self {
            RegimeMethod::MinibatchSgd => "minibatch_sgd",
            RegimeMethod::MpAgd => "mp_agd",
            RegimeMethod::MpSvrg => "mp_svrg",
        }
    }
}

/// One row of the regime table. Predictions are order-level: every
/// hidden constant is set to 1 and polylog factors to ln(1/eps), so the
/// units are "asymptotic units", comparable across rows but not wall
/// clock.
#[derive(Debug, Clone)]
pub struct RegimeRow {
    pub method: RegimeMethod,
    pub b: f64,
    pub regime: &'static str,
    pub predicted_runtime_units: f64,
    pub predicted_energy_units: f64,
    pub sample_efficient: bool,
}

/// Evaluates the runtime/energy predictions for minibatch SGD, MP+AGD and
/// MP+SVRG over a minibatch-size grid.
///
/// MP methods need `b` of at least `V^2/eps^2` to converge at all; grid
/// points below that get NaN predictions and an explicit regime label.
pub fn regime_table(
    sigma: f64,
    beta: f64,
    v: f64,
    delta_init: f64,
    epsilon: f64,
    tau_b: f64,
    tau_1: f64,
    b_grid: &[f64],
) -> Result<Vec<RegimeRow>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must be in (0, 1)"));
    }
    if sigma < 0.0 || beta <= 0.0 || v <= 0.0 || delta_init <= 0.0 {
        return Err(Error::invalid(
            "regime table needs sigma >= 0, beta > 0, V > 0, Delta > 0",
        ));
    }
    if b_grid.iter().any(|b| *b < 1.0) {
        return Err(Error::invalid("minibatch sizes must be >= 1"));
    }
    let eps_sq = epsilon * epsilon;
    let n_eps = v * v * beta * delta_init / (eps_sq * eps_sq);
    let (b_sgd, b_mp) = efficiency_thresholds(sigma, beta, v, epsilon);
    let log = (1.0 / epsilon).ln();

    let mut rows = Vec::with_capacity(3 * b_grid.len());
    for &b in b_grid {
        // minibatch SGD
        let (regime, runtime, energy, efficient) = if b <= b_sgd {
            ("sample_efficient", n_eps / b * tau_b, n_eps, true)
        } else {
            (
                "oversized_batch",
                beta * delta_init / eps_sq * tau_b,
                b * eps_sq / (v * v) * n_eps,
                false,
            )
        };
        rows.push(RegimeRow {
            method: RegimeMethod::MinibatchSgd,
            b,
            regime,
            predicted_runtime_units: runtime,
            predicted_energy_units: energy,
            sample_efficient: efficient,
        });

        // MP + AGD
        let row = if b < b_sgd {
            RegimeRow {
                method: RegimeMethod::MpAgd,
                b,
                regime: "below_minimum",
                predicted_runtime_units: f64::NAN,
                predicted_energy_units: f64::NAN,
                sample_efficient: false,
            }
        } else if b_mp.map_or(true, |t| b <= t) {
            RegimeRow {
                method: RegimeMethod::MpAgd,
                b,
                regime: "sample_efficient",
                predicted_runtime_units: (eps_sq / (v * v * b)).sqrt() * n_eps * log * tau_b,
                predicted_energy_units: (b * eps_sq / (v * v)).sqrt() * n_eps * log,
                sample_efficient: true,
            }
        } else {
            RegimeRow {
                method: RegimeMethod::MpAgd,
                b,
                regime: "oversized_batch",
                predicted_runtime_units: (b * eps_sq / (v * v)).powf(0.25)
                    * sigma.powf(0.75)
                    * beta.powf(0.25)
                    * delta_init
                    / eps_sq
                    * log
                    * tau_b,
                predicted_energy_units: (b * eps_sq / (v * v)).powf(1.25)
                    * (sigma / beta).powf(0.75)
                    * n_eps
                    * log,
                sample_efficient: false,
            }
        };
        rows.push(row);

        // MP + SVRG
        let row = if b < b_sgd {
            RegimeRow {
                method: RegimeMethod::MpSvrg,
                b,
                regime: "below_minimum",
                predicted_runtime_units: f64::NAN,
                predicted_energy_units: f64::NAN,
                sample_efficient: false,
            }
        } else if b_mp.map_or(true, |t| b <= t) {
            RegimeRow {
                method: RegimeMethod::MpSvrg,
                b,
                regime: "sample_efficient",
                predicted_runtime_units: (n_eps / b * tau_b + eps_sq / (v * v) * n_eps * tau_1)
                    * log,
                predicted_energy_units: n_eps * log,
                sample_efficient: true,
            }
        } else {
            RegimeRow {
                method: RegimeMethod::MpSvrg,
                b,
                regime: "oversized_batch",
                predicted_runtime_units: (sigma * delta_init / eps_sq * tau_b
                    + (b * eps_sq / (v * v)).sqrt() * (sigma * beta).sqrt() * delta_init
                        / eps_sq
                        * tau_1)
                    * log,
                predicted_energy_units: b * eps_sq / (v * v) * sigma / beta * n_eps * log,
                sample_efficient: false,
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Predicted gradient-step counts at each method's maximal sample-
/// efficient minibatch size (`tau_b = 1`, `tau_1 = 0` units): the
/// Theorem-1 comparison reduced to two numbers.
pub fn peak_gradient_steps(
    sigma: f64,
    beta: f64,
    v: f64,
    delta_init: f64,
    epsilon: f64,
) -> Result<(f64, f64)> {
    if sigma <= 0.0 {
        return Err(Error::invalid(
            "the MP threshold comparison needs sigma > 0",
        ));
    }
    let eps_sq = epsilon * epsilon;
    let log = (1.0 / epsilon).ln();
    let sgd_steps = beta * delta_init / eps_sq;
    let mp_agd_steps = (sigma * beta).sqrt() * delta_init / eps_sq * log;
    Ok((sgd_steps, mp_agd_steps))
}
