//! Regularized empirical subproblems and the outer/inner schedules.
//!
//! The convexification step replaces the nonconvex objective by a
//! sequence of strongly convex problems
//! `F(w) = batch-average loss + (gamma/2)||w - c_gamma||^2`, optionally
//! with a second proximal term `(rho/2)||w - c_rho||^2` for the
//! memory-efficient inner loop.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::problems::{batch_mean_value_grad, ProblemSpec, Sample, Weights};
use crate::scalar::Scalar;

/// A strongly convex subproblem over one minibatch.
///
/// Immutable once built; safe to evaluate from concurrent workers.
pub struct ProxObjective<'a, S> {
    pub spec: &'a ProblemSpec<S>,
    pub batch: &'a [Sample<S>],
    pub center_gamma: &'a Weights<S>,
    pub gamma: S,
    pub center_rho: Option<&'a Weights<S>>,
    pub rho: S,
}

impl<'a, S: Scalar> ProxObjective<'a, S> {
    pub fn new(
        spec: &'a ProblemSpec<S>,
        batch: &'a [Sample<S>],
        center_gamma: &'a Weights<S>,
        gamma: S,
        center_rho: Option<&'a Weights<S>>,
        rho: S,
    ) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::invalid("prox objective needs a nonempty batch"));
        }
        if gamma < S::zero() || rho < S::zero() {
            return Err(Error::invalid("regularization weights must be nonnegative"));
        }
        if center_gamma.dim() != spec.dim {
            return Err(Error::DimensionMismatch {
                expected: spec.dim,
                got: center_gamma.dim(),
            });
        }
        if let Some(c) = center_rho {
            if c.dim() != spec.dim {
                return Err(Error::DimensionMismatch {
                    expected: spec.dim,
                    got: c.dim(),
                });
            }
        }
        Ok(ProxObjective {
            spec,
            batch,
            center_gamma,
            gamma,
            center_rho,
            rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Strong convexity margin `gamma + rho - sigma`.
    pub fn strong_convexity(&self) -> S {
        self.gamma + self.rho - self.spec.sigma
    }

    /// Smoothness constant `gamma + rho + beta`.
    pub fn lipschitz(&self) -> S {
        self.gamma + self.rho + self.spec.beta
    }

    fn check_dim(&self, w: &Weights<S>) -> Result<()> {
        if w.dim() != self.spec.dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dim,
                got: w.dim(),
            });
        }
        Ok(())
    }

    /// Exact value and gradient of the regularized empirical objective.
    ///
    /// The quadratic terms are skipped when their weight is exactly zero,
    /// so the gamma = 0 gradient is bit-identical to the batch-average
    /// gradient (this carries the SGD-equivalence identity).
    pub fn value_grad(&self, w: &Weights<S>) -> Result<(S, Vec<S>)> {
        self.check_dim(w)?;
        let (mut value, mut grad) = batch_mean_value_grad(self.spec, self.batch, w)?;
        let half = S::from_f(0.5);
        if self.gamma > S::zero() {
            value = value + half * self.gamma * linalg::dist_sq(&w.values, &self.center_gamma.values);
            for i in 0..grad.len() {
                grad[i] = grad[i] + self.gamma * (w.values[i] - self.center_gamma.values[i]);
            }
        }
        if let Some(center) = self.center_rho {
            if self.rho > S::zero() {
                value = value + half * self.rho * linalg::dist_sq(&w.values, &center.values);
                for i in 0..grad.len() {
                    grad[i] = grad[i] + self.rho * (w.values[i] - center.values[i]);
                }
            }
        }
        Ok((value, grad))
    }

    pub fn value(&self, w: &Weights<S>) -> Result<S> {
        Ok(self.value_grad(w)?.0)
    }

    pub fn grad(&self, w: &Weights<S>) -> Result<Vec<S>> {
        Ok(self.value_grad(w)?.1)
    }

    /// Gradient of the i-th single-sample loss alone (no quadratic terms).
    pub fn single_loss_grad(&self, i: usize, w: &Weights<S>) -> Result<Vec<S>> {
        let xi = self
            .batch
            .get(i)
            .ok_or_else(|| Error::invalid(format!("sample index {i} out of range")))?;
        self.spec.instantaneous_grad(w, xi)
    }

    /// Value of the quadratic terms alone.
    pub fn quad_value(&self, w: &Weights<S>) -> Result<S> {
        self.check_dim(w)?;
        let half = S::from_f(0.5);
        let mut v = S::zero();
        if self.gamma > S::zero() {
            v = v + half * self.gamma * linalg::dist_sq(&w.values, &self.center_gamma.values);
        }
        if let Some(center) = self.center_rho {
            if self.rho > S::zero() {
                v = v + half * self.rho * linalg::dist_sq(&w.values, &center.values);
            }
        }
        Ok(v)
    }

    /// Gradient of the quadratic terms alone.
    pub fn quad_grad(&self, w: &Weights<S>) -> Result<Vec<S>> {
        self.check_dim(w)?;
        let mut g = vec![S::zero(); self.spec.dim];
        if self.gamma > S::zero() {
            for i in 0..g.len() {
                g[i] = g[i] + self.gamma * (w.values[i] - self.center_gamma.values[i]);
            }
        }
        if let Some(center) = self.center_rho {
            if self.rho > S::zero() {
                for i in 0..g.len() {
                    g[i] = g[i] + self.rho * (w.values[i] - center.values[i]);
                }
            }
        }
        Ok(g)
    }
}

/// Outer schedule for basic minibatch-prox.
#[derive(Debug, Clone, Copy)]
pub struct MpSchedule<S> {
    pub gamma: S,
    /// Inner suboptimality target per subproblem.
    pub delta: S,
    pub t_outer: usize,
    pub batch_size: usize,
    /// Upper bound on the initial suboptimality used to derive gamma.
    pub initial_gap: S,
    /// Whether the minibatch-size condition `b >= 2(sigma+beta)/(gamma-sigma)`
    /// holds; callers must supply an explicit gamma when false.
    pub valid: bool,
}

/// gamma and delta as functions of the problem constants:
/// `gamma = sigma + sqrt(32 (beta + 2 sigma) V^2 T / (Delta b))` and
/// `delta = 8 V^2 / ((beta + gamma) b)`.
///
/// `V = 0` degenerates to `gamma = sigma` (no strong convexity margin);
/// the schedule is returned with `valid = false` and the caller decides.
pub fn theorem1_schedule<S: Scalar>(
    sigma: S,
    beta: S,
    variance_bound: S,
    t_outer: usize,
    batch_size: usize,
    initial_gap: S,
) -> Result<MpSchedule<S>> {
    if initial_gap <= S::zero() {
        return Err(Error::invalid("initial suboptimality bound must be positive"));
    }
    if sigma < S::zero() || beta <= S::zero() || variance_bound < S::zero() {
        return Err(Error::invalid("constants must satisfy sigma >= 0, beta > 0, V^2 >= 0"));
    }
    if t_outer == 0 || batch_size == 0 {
        return Err(Error::invalid("T and b must be positive"));
    }
    let two = S::from_f(2.0);
    let v_sq = variance_bound;
    let gamma = sigma
        + (S::from_f(32.0) * (beta + two * sigma) * v_sq * S::from_count(t_outer)
            / (initial_gap * S::from_count(batch_size)))
        .sqrt();
    let delta = S::from_f(8.0) * v_sq / ((beta + gamma) * S::from_count(batch_size));
    let valid = gamma > sigma
        && S::from_count(batch_size) >= two * (sigma + beta) / (gamma - sigma);
    Ok(MpSchedule {
        gamma,
        delta,
        t_outer,
        batch_size,
        initial_gap,
        valid,
    })
}

/// Inner-loop schedules for the memory-efficient variant:
/// `rho_s = (gamma - sigma)(s - 1)/2`, `eta_s = V^2 S / ((beta+gamma) m s^5)`,
/// and output weights `q_s = 2s/(S(S+1))`.
#[derive(Debug, Clone)]
pub struct InnerSchedules<S> {
    pub rho: Vec<S>,
    pub eta: Vec<S>,
    pub weights: Vec<S>,
}

pub fn inner_schedules<S: Scalar>(
    gamma: S,
    sigma: S,
    beta: S,
    variance_bound: S,
    m: usize,
    s_inner: usize,
) -> Result<InnerSchedules<S>> {
    if s_inner == 0 {
        return Err(Error::invalid("S must be >= 1"));
    }
    if gamma <= sigma {
        return Err(Error::invalid("inner schedules need gamma > sigma"));
    }
    let two = S::from_f(2.0);
    let threshold = two * (sigma + beta) / (gamma - sigma);
    if S::from_count(m) < threshold {
        return Err(Error::invalid(format!(
            "m = {m} below the stability threshold 2(sigma+beta)/(gamma-sigma) = {threshold}"
        )));
    }
    let s_count = S::from_count(s_inner);
    let norm = two / (s_count * (s_count + S::one()));
    let mut rho = Vec::with_capacity(s_inner);
    let mut eta = Vec::with_capacity(s_inner);
    let mut weights = Vec::with_capacity(s_inner);
    for s in 1..=s_inner {
        let sf = S::from_count(s);
        rho.push((gamma - sigma) * (sf - S::one()) / two);
        eta.push(
            variance_bound * s_count
                / ((beta + gamma) * S::from_count(m) * sf.powi(5)),
        );
        weights.push(norm * sf);
    }
    Ok(InnerSchedules { rho, eta, weights })
}

/// Uniformly random iterate, the standard output rule for nonconvex
/// expected-gradient-norm guarantees. Returns the 1-based index R.
pub fn select_random_iterate<S: Scalar, R: Rng + ?Sized>(
    iterates: &[Weights<S>],
    rng: &mut R,
) -> Result<(usize, Weights<S>)> {
    if iterates.is_empty() {
        return Err(Error::invalid("cannot select from an empty iterate list"));
    }
    let idx = rng.gen_range(0..iterates.len());
    Ok((idx + 1, iterates[idx].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{LossFamily, PROBE_HALF_WIDTH};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn squared_spec(d: usize) -> ProblemSpec<f64> {
        ProblemSpec::with_analytic_constants(
            LossFamily::Squared,
            Weights::new((0..d).map(|i| 0.7 - 0.2 * i as f64).collect()).unwrap(),
            1.0,
            0.3,
            100,
        )
        .unwrap()
    }

    fn sigmoid_spec(d: usize) -> ProblemSpec<f64> {
        ProblemSpec::with_analytic_constants(
            LossFamily::SigmoidRegression,
            Weights::new((0..d).map(|i| 0.4 + 0.1 * i as f64).collect()).unwrap(),
            1.0,
            0.1,
            100,
        )
        .unwrap()
    }

    #[test]
    fn unregularized_objective_is_plain_erm() {
        let spec = squared_spec(3);
        let batch = spec.draw_batch(&mut rng(1), 8).unwrap();
        let center = Weights::zeros(3);
        let obj = ProxObjective::new(&spec, &batch, &center, 0.0, None, 0.0).unwrap();
        let w = Weights::new(vec![0.4, -0.2, 1.0]).unwrap();
        let (v, g) = obj.value_grad(&w).unwrap();
        let (ev, eg) = batch_mean_value_grad(&spec, &batch, &w).unwrap();
        assert_eq!(v.to_bits(), ev.to_bits());
        for k in 0..3 {
            assert_eq!(g[k].to_bits(), eg[k].to_bits());
        }
    }

    #[test]
    fn gradient_at_center_has_no_proximal_part() {
        let spec = squared_spec(3);
        let batch = spec.draw_batch(&mut rng(2), 5).unwrap();
        let center = Weights::new(vec![0.5, -1.0, 0.2]).unwrap();
        let obj = ProxObjective::new(&spec, &batch, &center, 2.5, None, 0.0).unwrap();
        let g = obj.grad(&center).unwrap();
        let (_, eg) = batch_mean_value_grad(&spec, &batch, &center).unwrap();
        for k in 0..3 {
            assert_eq!(g[k], eg[k]);
        }
    }

    #[test]
    fn value_grad_matches_naive_recomputation() {
        let spec = sigmoid_spec(4);
        let batch = spec.draw_batch(&mut rng(3), 7).unwrap();
        let cg = Weights::new(vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let cr = Weights::new(vec![-0.5, 0.0, 0.25, 1.0]).unwrap();
        let (gamma, rho) = (1.7, 0.9);
        let obj = ProxObjective::new(&spec, &batch, &cg, gamma, Some(&cr), rho).unwrap();
        let w = Weights::new(vec![0.3, -0.6, 0.8, -0.1]).unwrap();
        let (v, g) = obj.value_grad(&w).unwrap();

        // brute-force term-by-term recomputation
        let mut naive_v = 0.0;
        let mut naive_g = vec![0.0; 4];
        for xi in &batch {
            naive_v += spec.instantaneous_loss(&w, xi).unwrap() / batch.len() as f64;
            let gi = spec.instantaneous_grad(&w, xi).unwrap();
            linalg::axpy(&mut naive_g, 1.0 / batch.len() as f64, &gi);
        }
        naive_v += 0.5 * gamma * linalg::dist_sq(&w.values, &cg.values)
            + 0.5 * rho * linalg::dist_sq(&w.values, &cr.values);
        for k in 0..4 {
            naive_g[k] += gamma * (w.values[k] - cg.values[k]) + rho * (w.values[k] - cr.values[k]);
        }
        assert_relative_eq!(v, naive_v, max_relative = 1e-12);
        for k in 0..4 {
            assert_relative_eq!(g[k], naive_g[k], max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_sample_quadratic_matches_hand_formula() {
        let spec = squared_spec(2);
        let batch = vec![Sample {
            features: vec![2.0, -1.0],
            label: 1.5,
        }];
        let center = Weights::new(vec![0.3, 0.7]).unwrap();
        let gamma = 0.8;
        let obj = ProxObjective::new(&spec, &batch, &center, gamma, None, 0.0).unwrap();
        let w = Weights::new(vec![0.9, -0.4]).unwrap();
        // hand-solved: 1/2 (<w,x> - y)^2 + gamma/2 ||w - c||^2
        let r = 0.9 * 2.0 + (-0.4) * (-1.0) - 1.5;
        let expected =
            0.5 * r * r + 0.5 * gamma * ((0.9f64 - 0.3).powi(2) + (-0.4f64 - 0.7).powi(2));
        assert_relative_eq!(obj.value(&w).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn prox_gradient_matches_finite_differences() {
        let spec = sigmoid_spec(3);
        let batch = spec.draw_batch(&mut rng(4), 6).unwrap();
        let cg = Weights::new(vec![0.2, -0.2, 0.5]).unwrap();
        let cr = Weights::zeros(3);
        let obj = ProxObjective::new(&spec, &batch, &cg, 1.3, Some(&cr), 0.4).unwrap();
        let w = Weights::new(vec![0.6, 0.1, -0.7]).unwrap();
        let g = obj.grad(&w).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp.values[k] += h;
            wm.values[k] -= h;
            let fd = (obj.value(&wp).unwrap() - obj.value(&wm).unwrap()) / (2.0 * h);
            assert!((g[k] - fd).abs() / (g[k].abs() + 1e-6) <= 1e-5);
        }
    }

    #[test]
    fn rho_term_vanishes_at_its_center() {
        let spec = squared_spec(2);
        let batch = spec.draw_batch(&mut rng(5), 4).unwrap();
        let cg = Weights::zeros(2);
        let w = Weights::new(vec![0.4, -0.9]).unwrap();
        let with_rho = ProxObjective::new(&spec, &batch, &cg, 1.0, Some(&w), 3.0).unwrap();
        let without = ProxObjective::new(&spec, &batch, &cg, 1.0, None, 0.0).unwrap();
        let (v1, g1) = with_rho.value_grad(&w).unwrap();
        let (v2, g2) = without.value_grad(&w).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let spec = squared_spec(2);
        let batch: Vec<Sample<f64>> = vec![];
        let center = Weights::zeros(2);
        assert!(ProxObjective::new(&spec, &batch, &center, 1.0, None, 0.0).is_err());
    }

    #[test]
    fn strong_convexity_holds_on_random_pairs() {
        let spec = sigmoid_spec(3);
        let batch = spec.draw_batch(&mut rng(6), 10).unwrap();
        let cg = Weights::zeros(3);
        let gamma = spec.sigma + 2.0;
        let obj = ProxObjective::new(&spec, &batch, &cg, gamma, None, 0.0).unwrap();
        let margin = obj.strong_convexity();
        assert!(margin > 0.0);
        let mut r = rng(7);
        for _ in 0..1000 {
            let draw = |r: &mut ChaCha8Rng| {
                Weights::new(
                    (0..3)
                        .map(|_| f64::uniform_in(r, -PROBE_HALF_WIDTH, PROBE_HALF_WIDTH))
                        .collect(),
                )
                .unwrap()
            };
            let w = draw(&mut r);
            let wp = draw(&mut r);
            let (vw, _) = obj.value_grad(&w).unwrap();
            let (vwp, gwp) = obj.value_grad(&wp).unwrap();
            let diff = linalg::sub(&w.values, &wp.values);
            let gap = vw - vwp - linalg::dot(&gwp, &diff);
            let bound = 0.5 * margin * linalg::norm_sq(&diff);
            assert!(gap >= bound - 1e-9, "gap {gap} < bound {bound}");
        }
    }

    #[test]
    fn first_order_optimality_transfer_is_algebraic() {
        // With rho = 0 the prox gradient *is* the batch-average gradient
        // plus gamma (w - center), so a gradient-norm certificate at the
        // solution transfers to the implicit-update identity.
        let spec = squared_spec(3);
        let batch = spec.draw_batch(&mut rng(8), 5).unwrap();
        let center = Weights::new(vec![0.1, 0.1, -0.1]).unwrap();
        let gamma = 2.0;
        let obj = ProxObjective::new(&spec, &batch, &center, gamma, None, 0.0).unwrap();
        let mut r = rng(9);
        for _ in 0..100 {
            let w = Weights::new((0..3).map(|_| f64::uniform_in(&mut r, -2.0, 2.0)).collect())
                .unwrap();
            let g = obj.grad(&w).unwrap();
            let (_, mean_grad) = batch_mean_value_grad(&spec, &batch, &w).unwrap();
            let mut implicit = mean_grad;
            for k in 0..3 {
                implicit[k] += gamma * (w.values[k] - center.values[k]);
            }
            let tau = linalg::norm(&g);
            assert!(linalg::norm(&implicit) <= tau + 1e-15);
        }
    }

    #[test]
    fn theorem1_closed_form_substitution() {
        let s = theorem1_schedule(0.0, 1.0, 1.0, 100, 100, 1.0).unwrap();
        assert_relative_eq!(s.gamma, 32f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(s.delta, 0.012018, epsilon = 1e-6);
        assert!(s.valid);
    }

    #[test]
    fn theorem1_zero_variance_is_flagged() {
        let s = theorem1_schedule(0.5, 1.0, 0.0, 10, 100, 1.0).unwrap();
        assert_eq!(s.gamma, 0.5);
        assert!(!s.valid);
    }

    #[test]
    fn theorem1_rejects_nonpositive_gap() {
        assert!(theorem1_schedule(0.0, 1.0, 1.0, 10, 10, 0.0).is_err());
    }

    #[test]
    fn quadrupling_batch_halves_gamma_margin() {
        let a = theorem1_schedule(0.3, 2.0, 1.5, 50, 64, 0.7).unwrap();
        let b = theorem1_schedule(0.3, 2.0, 1.5, 50, 256, 0.7).unwrap();
        assert_relative_eq!(a.gamma - 0.3, 2.0 * (b.gamma - 0.3), epsilon = 1e-12);
    }

    #[test]
    fn inner_schedule_closed_forms() {
        // gamma - sigma = 2 -> rho_3 = 2; rho_1 = 0
        let s = inner_schedules(2.0, 0.0, 1.0, 1.0, 8, 4).unwrap();
        assert_eq!(s.rho[0], 0.0);
        assert_relative_eq!(s.rho[2], 2.0, epsilon = 1e-15);
        // V=1, S=4, beta+gamma = 10, m=8, s=2 -> eta_2 = 4/(80*32)
        let s = inner_schedules(9.0, 0.0, 1.0, 1.0, 8, 4).unwrap();
        assert_relative_eq!(s.eta[1], 0.0015625, epsilon = 1e-15);
        // S=2 -> q = (1/3, 2/3)
        let s = inner_schedules(2.0, 0.0, 1.0, 1.0, 8, 2).unwrap();
        assert_relative_eq!(s.weights[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(s.weights[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn inner_schedule_rejects_small_m() {
        // threshold = 2(0+1)/(0.1) = 20 > 8
        assert!(inner_schedules(0.1, 0.0, 1.0, 1.0, 8, 4).is_err());
    }

    #[test]
    fn schedule_weights_sum_to_one() {
        for s_inner in [1usize, 7, 1000, 1_000_000] {
            let s = inner_schedules(2.0, 0.0, 1.0, 1.0, 8, s_inner).unwrap();
            // compensated summation so the check measures the weights,
            // not the test's own summation error
            let mut sum = 0.0f64;
            let mut c = 0.0f64;
            for q in &s.weights {
                let y = q - c;
                let t = sum + y;
                c = (t - sum) - y;
                sum = t;
            }
            assert!((sum - 1.0).abs() <= 1e-12, "S={s_inner}: sum={sum}");
        }
    }

    #[test]
    fn random_iterate_selection() {
        let single = vec![Weights::<f64>::zeros(2)];
        let (r_idx, _) = select_random_iterate(&single, &mut rng(1)).unwrap();
        assert_eq!(r_idx, 1);

        let iterates: Vec<Weights<f64>> = (0..4)
            .map(|i| Weights::new(vec![i as f64]).unwrap())
            .collect();
        let (a, _) = select_random_iterate(&iterates, &mut rng(5)).unwrap();
        let (b, _) = select_random_iterate(&iterates, &mut rng(5)).unwrap();
        assert_eq!(a, b);

        let mut counts = [0usize; 4];
        let mut r = rng(12);
        let n = 100_000;
        for _ in 0..n {
            let (idx, _) = select_random_iterate(&iterates, &mut r).unwrap();
            counts[idx - 1] += 1;
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((0.24..=0.26).contains(&freq), "frequency {freq}");
        }

        let empty: Vec<Weights<f64>> = vec![];
        assert!(select_random_iterate(&empty, &mut r).is_err());
    }
}
