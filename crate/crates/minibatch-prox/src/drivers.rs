//! Outer optimization loops: basic minibatch-prox, the memory-efficient
//! two-level variant, and the minibatch-SGD baseline.
//!
//! Every driver draws fresh samples from its own data stream, emits
//! cumulative-counter trace records, and returns a uniformly random
//! iterate alongside the full iterate path. A run is a pure function of
//! (spec, params, seed).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost_model::CostConstants;
use crate::error::{Error, Result};
use crate::linalg;
use crate::problems::{batch_mean_value_grad, ProblemSpec, Sample, Weights};
use crate::prox::{inner_schedules, select_random_iterate, ProxObjective};
use crate::scalar::Scalar;
use crate::solvers::{
    agd_strongly_convex, gd_momentum, heavy_ball_step, svrg, BudgetMode, SolverBudget,
    SolverReport,
};
use crate::trace::{QualityFlag, Trace, TraceRecord};

/// Independent, purpose-separated RNG streams derived from one seed.
/// Keeping data, selection and solver randomness apart means a change in
/// one consumer (say, solver internals) cannot shift the samples another
/// consumer sees.
pub struct SeedStreams {
    pub data: ChaCha8Rng,
    pub holdout: ChaCha8Rng,
    pub select: ChaCha8Rng,
    pub solver: ChaCha8Rng,
    pub init: ChaCha8Rng,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        SeedStreams {
            data: stream(0),
            holdout: stream(1),
            select: stream(2),
            solver: stream(3),
            init: stream(4),
        }
    }
}

/// Inner solver selection for the prox subproblems.
#[derive(Debug, Clone, Copy)]
pub enum SolverChoice<S> {
    GdMomentum { step_size: S, momentum: S },
    Agd,
    Svrg,
}

impl<S: Scalar> SolverChoice<S> {
    fn solve(
        &self,
        obj: &ProxObjective<'_, S>,
        w0: &Weights<S>,
        budget: &SolverBudget<S>,
        rng: &mut ChaCha8Rng,
    ) -> Result<SolverReport<S>> {
        match self {
            SolverChoice::GdMomentum {
                step_size,
                momentum,
            } => gd_momentum(obj, w0, *step_size, *momentum, budget),
            SolverChoice::Agd => agd_strongly_convex(obj, w0, budget),
            SolverChoice::Svrg => svrg(obj, w0, budget, rng),
        }
    }
}

/// Shared run environment: problem, holdout, cost constants, identity.
pub struct DriverContext<'a, S> {
    pub spec: &'a ProblemSpec<S>,
    pub holdout: &'a [Sample<S>],
    pub cost: CostConstants,
    pub run_id: String,
    pub seed: u64,
    /// Record a trace row every this many outer iterations.
    pub trace_every: usize,
}

pub struct MpParams<S> {
    pub t_outer: usize,
    pub batch_size: usize,
    pub gamma: S,
    pub budget: SolverBudget<S>,
    pub solver: SolverChoice<S>,
    pub w0: Weights<S>,
}

pub struct MpMemParams<S> {
    pub t_outer: usize,
    pub m: usize,
    pub s_inner: usize,
    pub gamma: S,
    pub solver: SolverChoice<S>,
    /// Step cap for each inner solve (tolerances come from the eta
    /// schedule).
    pub max_inner_steps: usize,
    pub w0: Weights<S>,
}

pub struct SgdParams<S> {
    pub t_outer: usize,
    pub batch_size: usize,
    pub learning_rate: S,
    pub momentum: S,
    pub w0: Weights<S>,
}

/// Completed run: random-iterate output plus the full iterate path and
/// per-step certificates for empirical checks.
pub struct RunOutput<S> {
    pub selected: Weights<S>,
    pub r_index: usize,
    pub trace: Trace,
    pub iterates: Vec<Weights<S>>,
    pub certificates: Vec<Option<S>>,
    pub samples_used: u64,
}

/// A run that stopped early; the partial trace is preserved so it can be
/// persisted.
#[derive(Debug)]
pub struct DriverAbort {
    pub error: Error,
    pub trace: Trace,
}

pub type DriverOutcome<S> = std::result::Result<RunOutput<S>, Box<DriverAbort>>;

#[derive(Default, Clone, Copy)]
struct Counters {
    samples: u64,
    batch_grad_evals: u64,
    single_grad_evals: u64,
    energy: u64,
}

impl Counters {
    fn absorb(&mut self, report: &SolverReport<impl Scalar>, batch_size: usize) {
        self.batch_grad_evals += report.batch_grad_evals as u64;
        self.single_grad_evals += report.single_grad_evals as u64;
        self.energy += batch_size as u64 * report.batch_grad_evals as u64
            + report.single_grad_evals as u64;
    }
}

fn make_record<S: Scalar>(
    ctx: &DriverContext<'_, S>,
    method: &str,
    t: usize,
    s: usize,
    counters: Counters,
    w: &Weights<S>,
    flag: QualityFlag,
) -> Result<TraceRecord> {
    let (obj, gsq) = ctx.spec.population_estimates(w, ctx.holdout)?;
    Ok(TraceRecord {
        run_id: ctx.run_id.clone(),
        seed: ctx.seed,
        method: method.to_string(),
        t,
        s,
        samples_used: counters.samples,
        batch_grad_evals: counters.batch_grad_evals,
        single_grad_evals: counters.single_grad_evals,
        sim_runtime: ctx
            .cost
            .runtime(counters.batch_grad_evals, counters.single_grad_evals),
        energy: counters.energy,
        pop_obj_est: obj.to_f64_lossy(),
        grad_norm_sq_est: gsq.to_f64_lossy(),
        quality_flag: flag,
    })
}

fn abort<S>(error: Error, trace: Trace) -> DriverOutcome<S> {
    Err(Box::new(DriverAbort { error, trace }))
}

fn validate_ctx<S: Scalar>(ctx: &DriverContext<'_, S>) -> Result<()> {
    if ctx.holdout.is_empty() {
        return Err(Error::config("holdout must be nonempty"));
    }
    if ctx.trace_every == 0 {
        return Err(Error::config("trace cadence must be >= 1"));
    }
    Ok(())
}

/// Basic minibatch-prox: at each outer step, draw `b` fresh samples and
/// approximately minimize the batch loss plus `(gamma/2)||w - w_prev||^2`.
pub fn run_mp<S: Scalar>(
    ctx: &DriverContext<'_, S>,
    params: &MpParams<S>,
    streams: &mut SeedStreams,
) -> DriverOutcome<S> {
    // config checks happen before any sampling
    if let Err(e) = validate_ctx(ctx) {
        return abort(e, Trace::new());
    }
    if params.t_outer == 0 || params.batch_size == 0 {
        return abort(Error::config("T and b must be >= 1"), Trace::new());
    }
    if params.gamma < S::zero() {
        return abort(Error::config("gamma must be nonnegative"), Trace::new());
    }
    if matches!(params.budget.mode, BudgetMode::Tolerance(_))
        && params.gamma <= ctx.spec.sigma
    {
        return abort(
            Error::config("tolerance budgets need gamma > sigma"),
            Trace::new(),
        );
    }

    let mut trace = Trace::new();
    let mut counters = Counters::default();
    let mut w_prev = params.w0.clone();
    let mut iterates = Vec::with_capacity(params.t_outer);
    let mut certificates = Vec::with_capacity(params.t_outer);

    for t in 1..=params.t_outer {
        let batch = match ctx.spec.draw_batch(&mut streams.data, params.batch_size) {
            Ok(b) => b,
            Err(e) => return abort(e, trace),
        };
        counters.samples += params.batch_size as u64;
        let report = match ProxObjective::new(
            ctx.spec,
            &batch,
            &w_prev,
            params.gamma,
            None,
            S::zero(),
        )
        .and_then(|obj| {
            params
                .solver
                .solve(&obj, &w_prev, &params.budget, &mut streams.solver)
        }) {
            Ok(r) => r,
            Err(e) => return abort(e, trace),
        };
        counters.absorb(&report, params.batch_size);
        let flag = match params.budget.mode {
            BudgetMode::Tolerance(_) if !report.certified => QualityFlag::BudgetExhausted,
            _ => QualityFlag::Ok,
        };
        let w_t = report.solution;
        if t % ctx.trace_every == 0 || t == params.t_outer {
            match make_record(ctx, "mp", t, 0, counters, &w_t, flag) {
                Ok(rec) => trace.append(rec),
                Err(e) => return abort(e, trace),
            }
        }
        certificates.push(report.certified_subopt_bound.filter(|_| report.certified));
        iterates.push(w_t.clone());
        w_prev = w_t;
    }

    let (r_index, selected) = match select_random_iterate(&iterates, &mut streams.select) {
        Ok(x) => x,
        Err(e) => return abort(e, trace),
    };
    Ok(RunOutput {
        selected,
        r_index,
        trace,
        iterates,
        certificates,
        samples_used: counters.samples,
    })
}

/// Memory-efficient minibatch-prox: each outer subproblem is itself
/// solved by an inner prox loop over `S` fresh minibatches of size `m`,
/// with schedules `rho_s`, `eta_s` and the weighted average output.
pub fn run_mp_mem<S: Scalar>(
    ctx: &DriverContext<'_, S>,
    params: &MpMemParams<S>,
    streams: &mut SeedStreams,
) -> DriverOutcome<S> {
    if let Err(e) = validate_ctx(ctx) {
        return abort(e, Trace::new());
    }
    if params.t_outer == 0 {
        return abort(Error::config("T must be >= 1"), Trace::new());
    }
    if params.max_inner_steps == 0 {
        return abort(Error::config("max_inner_steps must be >= 1"), Trace::new());
    }
    // Lemma-3 preconditions (m threshold, gamma > sigma) checked here,
    // before any sampling
    let schedules = match inner_schedules(
        params.gamma,
        ctx.spec.sigma,
        ctx.spec.beta,
        ctx.spec.variance_bound,
        params.m,
        params.s_inner,
    ) {
        Ok(s) => s,
        Err(e) => return abort(e, Trace::new()),
    };

    let mut trace = Trace::new();
    let mut counters = Counters::default();
    let mut w_prev = params.w0.clone();
    let mut iterates = Vec::with_capacity(params.t_outer);
    let mut certificates = Vec::with_capacity(params.t_outer);

    for t in 1..=params.t_outer {
        let mut x_prev = w_prev.clone();
        let mut weighted = vec![S::zero(); ctx.spec.dim];
        for s in 1..=params.s_inner {
            let batch = match ctx.spec.draw_batch(&mut streams.data, params.m) {
                Ok(b) => b,
                Err(e) => return abort(e, trace),
            };
            counters.samples += params.m as u64;
            let budget =
                match SolverBudget::tolerance(schedules.eta[s - 1], params.max_inner_steps) {
                    Ok(b) => b,
                    Err(e) => return abort(e, trace),
                };
            let report = match ProxObjective::new(
                ctx.spec,
                &batch,
                &w_prev,
                params.gamma,
                Some(&x_prev),
                schedules.rho[s - 1],
            )
            .and_then(|obj| params.solver.solve(&obj, &x_prev, &budget, &mut streams.solver))
            {
                Ok(r) => r,
                Err(e) => return abort(e, trace),
            };
            counters.absorb(&report, params.m);
            let x_s = report.solution;
            linalg::axpy(&mut weighted, schedules.weights[s - 1], &x_s.values);
            if t % ctx.trace_every == 0 || t == params.t_outer {
                let flag = if report.certified {
                    QualityFlag::Ok
                } else {
                    QualityFlag::BudgetExhausted
                };
                match make_record(ctx, "mp_mem", t, s, counters, &x_s, flag) {
                    Ok(rec) => trace.append(rec),
                    Err(e) => return abort(e, trace),
                }
            }
            x_prev = x_s;
        }
        let w_t = Weights { values: weighted };
        if t % ctx.trace_every == 0 || t == params.t_outer {
            match make_record(ctx, "mp_mem", t, 0, counters, &w_t, QualityFlag::Ok) {
                Ok(rec) => trace.append(rec),
                Err(e) => return abort(e, trace),
            }
        }
        certificates.push(None);
        iterates.push(w_t.clone());
        w_prev = w_t;
    }

    let (r_index, selected) = match select_random_iterate(&iterates, &mut streams.select) {
        Ok(x) => x,
        Err(e) => return abort(e, trace),
    };
    Ok(RunOutput {
        selected,
        r_index,
        trace,
        iterates,
        certificates,
        samples_used: counters.samples,
    })
}

/// Minibatch SGD with heavy-ball momentum and random-iterate output.
pub fn run_minibatch_sgd<S: Scalar>(
    ctx: &DriverContext<'_, S>,
    params: &SgdParams<S>,
    streams: &mut SeedStreams,
) -> DriverOutcome<S> {
    if let Err(e) = validate_ctx(ctx) {
        return abort(e, Trace::new());
    }
    if params.t_outer == 0 || params.batch_size == 0 {
        return abort(Error::config("T and b must be >= 1"), Trace::new());
    }
    if params.learning_rate <= S::zero() {
        return abort(Error::config("learning rate must be positive"), Trace::new());
    }
    if params.momentum < S::zero() || params.momentum >= S::one() {
        return abort(Error::config("momentum must be in [0, 1)"), Trace::new());
    }

    let mut trace = Trace::new();
    let mut counters = Counters::default();
    let mut w = params.w0.clone();
    let mut velocity = vec![S::zero(); ctx.spec.dim];
    let mut threshold: Option<S> = None;
    let mut iterates = Vec::with_capacity(params.t_outer);
    let certificates = vec![None; params.t_outer];

    for t in 1..=params.t_outer {
        let batch = match ctx.spec.draw_batch(&mut streams.data, params.batch_size) {
            Ok(b) => b,
            Err(e) => return abort(e, trace),
        };
        counters.samples += params.batch_size as u64;
        let (value, grad) = match batch_mean_value_grad(ctx.spec, &batch, &w) {
            Ok(vg) => vg,
            Err(e) => return abort(e, trace),
        };
        counters.batch_grad_evals += 1;
        counters.energy += params.batch_size as u64;
        let thresh = *threshold
            .get_or_insert_with(|| (S::one() + value.abs()) * S::from_f(1e6));
        if !value.is_finite() || value > thresh {
            return abort(
                Error::Divergence {
                    step: t,
                    value: value.to_f64_lossy(),
                    threshold: thresh.to_f64_lossy(),
                },
                trace,
            );
        }
        heavy_ball_step(
            &mut w.values,
            &mut velocity,
            &grad,
            params.learning_rate,
            params.momentum,
        );
        if t % ctx.trace_every == 0 || t == params.t_outer {
            match make_record(ctx, "sgd", t, 0, counters, &w, QualityFlag::Ok) {
                Ok(rec) => trace.append(rec),
                Err(e) => return abort(e, trace),
            }
        }
        iterates.push(w.clone());
    }

    let (r_index, selected) = match select_random_iterate(&iterates, &mut streams.select) {
        Ok(x) => x,
        Err(e) => return abort(e, trace),
    };
    Ok(RunOutput {
        selected,
        r_index,
        trace,
        iterates,
        certificates,
        samples_used: counters.samples,
    })
}
