//! Maximum-likelihood fitting of k-factor models under a probability floor.
//!
//! The objective is the convex negative log-likelihood
//! `−(1/l) Σ_x n_x ⟨c^x, f⟩ + ln Z(f)` plus the log barrier
//! `−w Σ_x ln(ln P_f(x) − ln λ)` over every state. It is minimized by
//! gradient descent with backtracking for a decreasing sequence of barrier
//! weights `w`, starting from the uniform model `f = 0`.

use crate::error::{Error, Result};
use crate::loglin::{log_sum_exp, FactorBasis, FeatureTable, LogLinearModel};
use crate::space::{check_same_space, empirical_risk, Dataset};

/// A state counts toward `active_floor_states` when `ln P − ln λ` is below
/// this, or below `sqrt(w)` for the last barrier weight `w` if larger: the
/// barrier holds a binding state about `w / P(x)` above the floor.
pub const FLOOR_ACTIVITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearch {
    pub shrink: f64,
    pub sufficient_decrease: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Sup-norm of the gradient at which a barrier stage stops.
    pub grad_tol: f64,
    /// Budget of accepted steps across all stages.
    pub max_iters: usize,
    pub barrier_weights: Vec<f64>,
    pub line_search: LineSearch,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            grad_tol: 1e-8,
            max_iters: 100_000,
            barrier_weights: vec![1.0, 1e-2, 1e-4, 1e-6],
            line_search: LineSearch::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::domain("grad_tol must be positive"));
        }
        if self.barrier_weights.is_empty() {
            return Err(Error::domain("barrier schedule is empty"));
        }
        if self.barrier_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::domain("barrier weights must be positive"));
        }
        if self.barrier_weights.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::domain("barrier schedule must be strictly decreasing"));
        }
        let ls = &self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) {
            return Err(Error::domain("line-search shrink must lie in (0, 1)"));
        }
        if !(ls.sufficient_decrease > 0.0 && ls.sufficient_decrease < 1.0) {
            return Err(Error::domain("sufficient-decrease constant must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: LogLinearModel,
    pub r_emp: f64,
    pub iterations: usize,
    pub converged: bool,
    pub active_floor_states: usize,
}

/// The barrier objective for one dataset, basis and floor.
#[derive(Debug, Clone)]
pub struct Objective {
    features: FeatureTable,
    freqs: Vec<f64>,
    empirical_mean: Vec<f64>,
    ln_lambda: f64,
    dim: usize,
}

impl Objective {
    pub fn new(d: &Dataset, basis: &FactorBasis, lambda: f64) -> Result<Self> {
        let alphabet = basis.alphabet();
        check_same_space(d.alphabet(), alphabet)?;
        let states = alphabet.num_states();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!("lambda = {lambda} must be positive")));
        }
        if lambda * states as f64 >= 1.0 {
            return Err(Error::InfeasibleFloor { lambda, states });
        }
        let features = basis.feature_table();
        let l = d.total() as f64;
        let mut freqs = vec![0.0; states];
        let mut empirical_mean = vec![0.0; basis.dim()];
        for (&s, &c) in d.counts() {
            let q = c as f64 / l;
            freqs[s] = q;
            for &p in features.state(s) {
                empirical_mean[p] += q;
            }
        }
        Ok(Objective {
            features,
            freqs,
            empirical_mean,
            ln_lambda: lambda.ln(),
            dim: basis.dim(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value and gradient at `params`, or `None` outside the barrier domain.
    pub fn evaluate(&self, params: &[f64], barrier_weight: f64) -> Option<(f64, Vec<f64>)> {
        let n = self.freqs.len();
        let scores: Vec<f64> = (0..n).map(|s| self.features.score(s, params)).collect();
        let log_z = log_sum_exp(&scores);
        let mut value = log_z - self.freqs.iter().zip(&scores).map(|(q, s)| q * s).sum::<f64>();
        let probs: Vec<f64> = scores.iter().map(|s| (s - log_z).exp()).collect();

        // per-state weight of c^x in the gradient
        let mut coef: Vec<f64> = probs.iter().zip(&self.freqs).map(|(p, q)| p - q).collect();
        if barrier_weight > 0.0 {
            let mut inv_sum = 0.0;
            let mut barrier = 0.0;
            for (s, c) in coef.iter_mut().enumerate() {
                let u = scores[s] - log_z - self.ln_lambda;
                if !(u > 0.0) {
                    return None;
                }
                barrier -= u.ln();
                inv_sum += 1.0 / u;
                *c -= barrier_weight / u;
            }
            value += barrier_weight * barrier;
            for (c, p) in coef.iter_mut().zip(&probs) {
                *c += barrier_weight * inv_sum * p;
            }
        }
        let mut grad = vec![0.0; self.dim];
        for (s, &c) in coef.iter().enumerate() {
            for &p in self.features.state(s) {
                grad[p] += c;
            }
        }
        Some((value, grad))
    }

    /// Model expectation of the feature vector at `params`.
    pub fn model_mean(&self, params: &[f64]) -> Vec<f64> {
        let n = self.freqs.len();
        let scores: Vec<f64> = (0..n).map(|s| self.features.score(s, params)).collect();
        let log_z = log_sum_exp(&scores);
        let mut mean = vec![0.0; self.dim];
        for (s, score) in scores.iter().enumerate() {
            let p = (score - log_z).exp();
            for &i in self.features.state(s) {
                mean[i] += p;
            }
        }
        mean
    }

    pub fn empirical_mean(&self) -> &[f64] {
        &self.empirical_mean
    }
}

pub fn objective_and_gradient(
    params: &[f64],
    d: &Dataset,
    basis: &FactorBasis,
    barrier_weight: f64,
    lambda: f64,
) -> Result<Option<(f64, Vec<f64>)>> {
    if params.len() != basis.dim() {
        return Err(Error::domain(format!(
            "parameter vector has length {}, basis has dimension {}",
            params.len(),
            basis.dim()
        )));
    }
    if !(barrier_weight >= 0.0) {
        return Err(Error::domain("barrier weight must be nonnegative"));
    }
    Ok(Objective::new(d, basis, lambda)?.evaluate(params, barrier_weight))
}

/// Per-stage trace of accepted objective values, for diagnostics and tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub stages: Vec<Vec<f64>>,
}

pub fn fit(d: &Dataset, k: usize, lambda: f64, cfg: &FitConfig) -> Result<FitResult> {
    fit_traced(d, k, lambda, cfg).map(|(r, _)| r)
}

pub fn fit_traced(d: &Dataset, k: usize, lambda: f64, cfg: &FitConfig) -> Result<(FitResult, Trace)> {
    cfg.validate()?;
    let basis = FactorBasis::new(d.alphabet().clone(), k)?;
    let objective = Objective::new(d, &basis, lambda)?;
    let mut params = vec![0.0; basis.dim()];
    let mut iterations = 0;
    let mut converged = false;
    let mut trace = Trace::default();

    for &w in &cfg.barrier_weights {
        let mut values = Vec::new();
        converged = descend(&objective, &mut params, w, cfg, &mut iterations, &mut values);
        trace.stages.push(values);
        if iterations >= cfg.max_iters {
            break;
        }
    }

    let model = LogLinearModel::new(basis, params, lambda)?.normalize();
    let r_emp = empirical_risk(d, &model.to_table()?)?;
    let final_weight = cfg.barrier_weights.last().copied().unwrap_or(0.0);
    let active_floor_states = model.floor_active_states(FLOOR_ACTIVITY_TOL.max(final_weight.sqrt()))?;
    Ok((
        FitResult {
            model,
            r_emp,
            iterations,
            converged,
            active_floor_states,
        },
        trace,
    ))
}

/// One barrier stage. Returns whether the gradient tolerance was reached.
fn descend(
    objective: &Objective,
    params: &mut Vec<f64>,
    w: f64,
    cfg: &FitConfig,
    iterations: &mut usize,
    values: &mut Vec<f64>,
) -> bool {
    // iterates stay strictly inside the floor, so the start is in the domain
    let Some((mut value, mut grad)) = objective.evaluate(params, w) else {
        return false;
    };
    values.push(value);
    let mut step = 1.0;
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    loop {
        if sup_norm(&grad) <= cfg.grad_tol {
            return true;
        }
        if *iterations >= cfg.max_iters {
            return false;
        }
        // Barzilai-Borwein trial step, safeguarded by backtracking below
        if let Some((p_prev, g_prev)) = &previous {
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..params.len() {
                let s = params[i] - p_prev[i];
                let y = grad[i] - g_prev[i];
                ss += s * s;
                sy += s * y;
            }
            if sy > 0.0 {
                step = (ss / sy).clamp(1e-12, 1e12);
            }
        }
        let gg: f64 = grad.iter().map(|g| g * g).sum();
        // rounding allowance so steps near the optimum are not rejected as noise
        let slack = 8.0 * f64::EPSILON * value.abs().max(1.0);
        let mut t = step;
        let accepted = loop {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - t * g).collect();
            if let Some((v, g)) = objective.evaluate(&trial, w) {
                if v <= value - cfg.line_search.sufficient_decrease * t * gg + slack {
                    break Some((trial, v, g));
                }
            }
            t *= cfg.line_search.shrink;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((trial, v, g)) = accepted else {
            return false;
        };
        previous = Some((std::mem::replace(params, trial), std::mem::replace(&mut grad, g)));
        value = v;
        values.push(value);
        *iterations += 1;
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Independence model from the empirical marginals, in closed form.
pub fn fit_closed_form_independent(d: &Dataset) -> Result<LogLinearModel> {
    let alphabet = d.alphabet();
    let l = d.total() as f64;
    let mut marginals = Vec::with_capacity(alphabet.num_vars());
    let mut min_prob = 1.0;
    for var in 0..alphabet.num_vars() {
        let counts = d.marginal_counts(var);
        if let Some(category) = counts.iter().position(|&c| c == 0) {
            return Err(Error::ZeroMarginal {
                variable: alphabet.names()[var].clone(),
                category,
            });
        }
        let m: Vec<f64> = counts.iter().map(|&c| c as f64 / l).collect();
        min_prob *= m.iter().copied().fold(1.0, f64::min);
        marginals.push(m);
    }
    let lambda = min_prob.min(1.0 / alphabet.num_states() as f64);
    LogLinearModel::product(alphabet, &marginals, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{empirical_distribution, entropy, Alphabet, DistributionTable};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn alpha(sizes: &[usize]) -> Alphabet {
        Alphabet::from_sizes(sizes).unwrap()
    }

    fn tiny(a: &Alphabet) -> f64 {
        1e-9 / a.num_states() as f64
    }

    fn random_data(a: &Alphabet, l: u64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..a.num_states()).map(|_| rng.gen_range(0.2..1.0)).collect();
        let s: f64 = w.iter().sum();
        let t = DistributionTable::new(a.clone(), w.iter().map(|x| x / s).collect()).unwrap();
        LogLinearModel::saturated(&t, 1e-9).unwrap().sample(l, seed).unwrap()
    }

    #[test]
    fn gradient_at_uniform_is_moment_gap() {
        let a = alpha(&[2, 3]);
        let d = random_data(&a, 60, 1);
        let basis = FactorBasis::new(a.clone(), 1).unwrap();
        let (_, g) = objective_and_gradient(&[0.0; 5], &d, &basis, 0.0, tiny(&a)).unwrap().unwrap();
        let emp = empirical_distribution(&d);
        // E_uniform[c] is 1/m_j per block entry
        let mut expected = vec![0.5, 0.5, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        for s in 0..6 {
            for p in basis.feature_vector(s).unwrap() {
                expected[p] -= emp.probs()[s];
            }
        }
        for (x, y) in g.iter().zip(&expected) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn outside_barrier_domain_is_signalled() {
        let a = alpha(&[2]);
        let d = random_data(&a, 10, 2);
        let basis = FactorBasis::new(a, 1).unwrap();
        // P = (e^5, 1)/Z puts state 1 below λ = 0.01
        assert!(objective_and_gradient(&[5.0, 0.0], &d, &basis, 1.0, 0.01).unwrap().is_none());
        assert!(objective_and_gradient(&[5.0, 0.0], &d, &basis, 0.0, 0.01).unwrap().is_some());
        assert!(matches!(
            objective_and_gradient(&[0.0, 0.0], &d, &basis, 1.0, 0.5),
            Err(Error::InfeasibleFloor { .. })
        ));
    }

    #[test]
    fn convexity_probe() {
        let a = alpha(&[2, 2, 3]);
        let d = random_data(&a, 80, 3);
        let basis = FactorBasis::new(a.clone(), 2).unwrap();
        let obj = Objective::new(&d, &basis, tiny(&a)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let f1: Vec<f64> = (0..obj.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f2: Vec<f64> = (0..obj.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mid: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| 0.5 * (x + y)).collect();
            for w in [0.0, 1e-2] {
                let v = |f: &[f64]| obj.evaluate(f, w).unwrap().0;
                assert!(v(&mid) <= 0.5 * (v(&f1) + v(&f2)) + 1e-12);
            }
        }
    }

    #[test]
    fn k1_fit_matches_closed_form() {
        let a = alpha(&[2, 3, 2]);
        let d = random_data(&a, 300, 5);
        let fitted = fit(&d, 1, tiny(&a), &FitConfig::default()).unwrap();
        assert!(fitted.converged);
        let oracle = fit_closed_form_independent(&d).unwrap().to_table().unwrap();
        let tv = fitted.model.to_table().unwrap().total_variation(&oracle).unwrap();
        assert!(tv <= 1e-5, "tv = {tv}");
        assert_eq!(fitted.active_floor_states, 0);
    }

    #[test]
    fn saturated_fit_matches_empirical() {
        let a = alpha(&[2, 3]);
        let d = Dataset::from_dense(a.clone(), &[3, 9, 4, 1, 7, 6]).unwrap();
        let fitted = fit(&d, 2, tiny(&a), &FitConfig::default()).unwrap();
        let tv = fitted
            .model
            .to_table()
            .unwrap()
            .total_variation(&empirical_distribution(&d))
            .unwrap();
        assert!(tv <= 1e-5, "tv = {tv}");
        assert_abs_diff_eq!(fitted.r_emp, entropy(&empirical_distribution(&d)), epsilon = 1e-6);
    }

    #[test]
    fn uniform_data_fits_near_uniform() {
        let a = alpha(&[2, 2, 2]);
        let uniform = LogLinearModel::new(FactorBasis::new(a.clone(), 1).unwrap(), vec![0.0; 6], 0.01)
            .unwrap()
            .normalize();
        let d = uniform.sample(4000, 8).unwrap();
        for k in 1..=3 {
            let fitted = fit(&d, k, tiny(&a), &FitConfig::default()).unwrap();
            let tv = fitted
                .model
                .to_table()
                .unwrap()
                .total_variation(&DistributionTable::uniform(a.clone()))
                .unwrap();
            // each cell deviates by O(sqrt(p / l)); 8 cells
            assert!(tv <= 4.0 * 8.0 * (0.125f64 / 4000.0).sqrt(), "k={k} tv={tv}");
        }
        assert!(matches!(
            fit(&d, 1, 0.125, &FitConfig::default()),
            Err(Error::InfeasibleFloor { .. })
        ));
    }

    #[test]
    fn floor_is_respected_and_reported() {
        let a = alpha(&[2, 2]);
        // state 3 is never observed; the floor must bind there
        let d = Dataset::from_dense(a.clone(), &[10, 10, 10, 0]).unwrap();
        let lambda = 0.05;
        let fitted = fit(&d, 2, lambda, &FitConfig::default()).unwrap();
        let t = fitted.model.to_table().unwrap();
        assert!(t.probs().iter().all(|&p| p >= lambda * (1.0 - 1e-6)));
        assert!(fitted.model.min_log_prob().unwrap() >= lambda.ln() - 1e-6);
        assert_abs_diff_eq!(t.probs()[3], lambda, epsilon = 1e-4);
        assert_eq!(fitted.active_floor_states, 1);
        assert_abs_diff_eq!(
            fitted.r_emp,
            empirical_risk(&d, &t).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn kkt_moment_matching_without_active_floor() {
        let a = alpha(&[3, 2, 2]);
        let d = random_data(&a, 500, 9);
        let cfg = FitConfig {
            barrier_weights: vec![1.0, 1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12],
            ..FitConfig::default()
        };
        for k in 1..=2 {
            let fitted = fit(&d, k, tiny(&a), &cfg).unwrap();
            assert!(fitted.converged);
            assert_eq!(fitted.active_floor_states, 0);
            let obj = Objective::new(&d, fitted.model.basis(), tiny(&a)).unwrap();
            let model_mean = obj.model_mean(fitted.model.params());
            for (m, e) in model_mean.iter().zip(obj.empirical_mean()) {
                assert!((m - e).abs() <= 2.0 * cfg.grad_tol, "k={k}: {m} vs {e}");
            }
        }
    }

    #[test]
    fn descent_is_monotone() {
        let a = alpha(&[2, 2, 3]);
        let d = random_data(&a, 100, 10);
        let (_, trace) = fit_traced(&d, 2, 0.5 / 12.0, &FitConfig::default()).unwrap();
        assert_eq!(trace.stages.len(), 4);
        for stage in &trace.stages {
            for w in stage.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let a = alpha(&[2, 3, 2]);
        let d = random_data(&a, 120, 11);
        let x = fit(&d, 2, 0.01, &FitConfig::default()).unwrap();
        let y = fit(&d, 2, 0.01, &FitConfig::default()).unwrap();
        let bits = |r: &FitResult| r.model.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&x), bits(&y));
    }

    #[test]
    fn smaller_floor_never_hurts() {
        let a = alpha(&[2, 2, 2]);
        let d = Dataset::from_dense(a.clone(), &[30, 2, 0, 5, 1, 0, 12, 50]).unwrap();
        let risks: Vec<f64> = (1..=6)
            .map(|n| fit(&d, 3, 0.5f64.powi(n) / 8.0, &FitConfig::default()).unwrap().r_emp)
            .collect();
        for w in risks.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{risks:?}");
        }
        assert!(risks.iter().all(|&r| r <= 8f64.ln()));
    }

    #[test]
    fn non_convergence_still_feasible() {
        let a = alpha(&[2, 2, 2]);
        let d = Dataset::from_dense(a.clone(), &[30, 2, 0, 5, 1, 0, 12, 50]).unwrap();
        let cfg = FitConfig {
            max_iters: 3,
            ..FitConfig::default()
        };
        let r = fit(&d, 3, 0.01, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
        assert!(r.model.is_normalized());
        assert!(r.model.min_log_prob().unwrap() >= 0.01f64.ln());
    }

    #[test]
    fn config_validation() {
        let bad = [
            FitConfig {
                grad_tol: 0.0,
                ..FitConfig::default()
            },
            FitConfig {
                barrier_weights: vec![1.0, 1.0],
                ..FitConfig::default()
            },
            FitConfig {
                barrier_weights: vec![],
                ..FitConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn closed_form_examples() {
        let a = alpha(&[2, 2]);
        // (0,0):2 (0,1):2 (1,0):3 (1,1):3 in little-endian state order
        let d = Dataset::from_dense(a.clone(), &[2, 3, 2, 3]).unwrap();
        let t = fit_closed_form_independent(&d).unwrap().to_table().unwrap();
        for (p, q) in t.probs().iter().zip([0.2, 0.3, 0.2, 0.3]) {
            assert_abs_diff_eq!(*p, q, epsilon = 1e-15);
        }
        // product data: closed-form risk equals empirical entropy
        assert_abs_diff_eq!(
            empirical_risk(&d, &t).unwrap(),
            entropy(&empirical_distribution(&d)),
            epsilon = 1e-14
        );

        let one = alpha(&[3]);
        let d1 = Dataset::from_dense(one, &[1, 4, 5]).unwrap();
        let t1 = fit_closed_form_independent(&d1).unwrap().to_table().unwrap();
        for (p, q) in t1.probs().iter().zip([0.1, 0.4, 0.5]) {
            assert_abs_diff_eq!(*p, q, epsilon = 1e-15);
        }

        let gap = Dataset::from_dense(a, &[2, 0, 3, 0]).unwrap();
        assert!(matches!(
            fit_closed_form_independent(&gap),
            Err(Error::ZeroMarginal { category: 1, .. })
        ));
    }
}
