//! VC-dimension formulas for k-factor classes and the guaranteed-risk penalty.

mod shatter;

pub use shatter::{labeling_separable, product_embedding, shatter_dimension, MAX_SHATTER_H, MAX_SHATTER_POINTS};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Alphabet;

/// `h_k = Σ_j m_{j1}···m_{jk}` over all k-subsets `j` of the variables.
pub fn h_k(alphabet: &Alphabet, k: usize) -> Result<u64> {
    let n = alphabet.num_vars();
    if k == 0 || k > n {
        return Err(Error::domain(format!("degree k = {k} outside [1, {n}]")));
    }
    let sizes = alphabet.sizes();
    let mut total: u64 = 0;
    for subset in (0..n).combinations(k) {
        let block = subset
            .iter()
            .try_fold(1u64, |acc, &i| acc.checked_mul(sizes[i] as u64))
            .ok_or_else(|| Error::Scale("h_k overflows u64".into()))?;
        total = total
            .checked_add(block)
            .ok_or_else(|| Error::Scale("h_k overflows u64".into()))?;
    }
    Ok(total)
}

/// Exact VC dimension `1 + Σ m_i − n` of the product-distribution class.
pub fn product_vc_dim(alphabet: &Alphabet) -> u64 {
    1 + alphabet.sizes().iter().map(|&m| m as u64 - 1).sum::<u64>()
}

/// Guaranteed-risk penalty for a class of VC dimension `h`:
/// `−ln λ · sqrt((h − ln h + ln 16 + ln l − ln η) / l)`.
///
/// The value is not clamped to the trivial bound `−ln λ`.
pub fn phi_for_dim(h: u64, lambda: f64, eta: f64, l: u64, num_states: usize) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda = {lambda} must be positive")));
    }
    if lambda * num_states as f64 > 1.0 {
        return Err(Error::InfeasibleFloor {
            lambda,
            states: num_states,
        });
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::domain(format!("eta = {eta} must lie in (0, 1)")));
    }
    if l == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    if h == 0 {
        return Err(Error::domain("VC dimension must be at least 1"));
    }
    let (h, l) = (h as f64, l as f64);
    let capacity = h - h.ln() + 16f64.ln() + l.ln() - eta.ln();
    Ok(-lambda.ln() * (capacity / l).sqrt())
}

pub fn phi(k: usize, lambda: f64, eta: f64, l: u64, alphabet: &Alphabet) -> Result<f64> {
    phi_for_dim(h_k(alphabet, k)?, lambda, eta, l, alphabet.num_states())
}

/// Whether `phi` reaches the range term `−ln λ`, i.e. the bound is uninformative.
pub fn is_vacuous(phi: f64, lambda: f64) -> bool {
    phi >= -lambda.ln()
}

/// Prior mass over the (degree, ladder level) grid, fixed before seeing data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    /// `ν(k, n) = 2^{−k} 2^{−n}`.
    Geometric,
    /// `weights[k-1][n-1] = ν(k, n)`; mass outside the table is zero.
    Table { weights: Vec<Vec<f64>> },
}

impl Prior {
    pub fn mass(&self, k: usize, n: usize) -> f64 {
        match self {
            Prior::Geometric => 0.5f64.powi(k as i32) * 0.5f64.powi(n as i32),
            Prior::Table { weights } => weights
                .get(k.wrapping_sub(1))
                .and_then(|row| row.get(n.wrapping_sub(1)))
                .copied()
                .unwrap_or(0.0),
        }
    }

    /// `ν(A_kn)` with `A_kn = {1..k} × {1..n}`.
    pub fn cumulative(&self, k: usize, n: usize) -> f64 {
        match self {
            Prior::Geometric => (1.0 - 0.5f64.powi(k as i32)) * (1.0 - 0.5f64.powi(n as i32)),
            Prior::Table { .. } => (1..=k)
                .flat_map(|a| (1..=n).map(move |b| (a, b)))
                .map(|(a, b)| self.mass(a, b))
                .sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Prior::Table { weights } = self {
            let mut total = 0.0;
            for w in weights.iter().flatten() {
                if !(*w > 0.0 && w.is_finite()) {
                    return Err(Error::domain("prior weights must be strictly positive"));
                }
                total += w;
            }
            if total > 1.0 + 1e-12 {
                return Err(Error::domain(format!("prior mass {total} exceeds 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub eta: f64,
    pub ladder_base: f64,
    pub ladder_depth: usize,
    pub prior: Prior,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            eta: 0.05,
            ladder_base: 0.5,
            ladder_depth: 4,
            prior: Prior::Geometric,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::domain(format!("eta = {} must lie in (0, 1)", self.eta)));
        }
        if !(self.ladder_base > 0.0 && self.ladder_base < 1.0) {
            return Err(Error::domain(format!(
                "ladder base = {} must lie in (0, 1)",
                self.ladder_base
            )));
        }
        if self.ladder_depth == 0 {
            return Err(Error::domain("ladder depth must be at least 1"));
        }
        self.prior.validate()
    }

    /// `λ_n = base^n / |Ω|`.
    pub fn ladder_lambda(&self, n: usize, num_states: usize) -> f64 {
        self.ladder_base.powi(n as i32) / num_states as f64
    }
}

/// Penalty for class `(k, n)`: `phi(k, λ_n, η ν(A_kn))`.
pub fn srm_penalty(k: usize, n: usize, cfg: &PenaltyConfig, l: u64, alphabet: &Alphabet) -> Result<f64> {
    cfg.validate()?;
    if n == 0 || n > cfg.ladder_depth {
        return Err(Error::domain(format!(
            "ladder level {n} outside [1, {}]",
            cfg.ladder_depth
        )));
    }
    let nu = cfg.prior.cumulative(k, n);
    if nu <= 0.0 {
        return Err(Error::domain(format!("prior mass of A_({k},{n}) is zero")));
    }
    let lambda = cfg.ladder_lambda(n, alphabet.num_states());
    phi(k, lambda, cfg.eta * nu, l, alphabet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn alpha(sizes: &[usize]) -> Alphabet {
        Alphabet::from_sizes(sizes).unwrap()
    }

    // Reference values below come from mpmath at 40 digits.
    const PHI_EXAMPLE: f64 = 0.598_394_275_935_366_3;
    const PHI_EXAMPLE_L2000: f64 = 0.431_726_587_309_484_64;
    const SRM_11_EXAMPLE: f64 = 0.374_767_558_919_457_5;

    #[test]
    fn h_k_examples() {
        assert_eq!(h_k(&alpha(&[2, 2, 2]), 1).unwrap(), 6);
        assert_eq!(h_k(&alpha(&[2, 2, 2, 2]), 2).unwrap(), 24);
        assert_eq!(h_k(&alpha(&[2, 3]), 2).unwrap(), 6);
        assert!(h_k(&alpha(&[2, 3]), 0).is_err());
        assert!(h_k(&alpha(&[2, 3]), 3).is_err());
    }

    #[test]
    fn h_k_saturated_equals_state_count() {
        let a = alpha(&[2, 3, 4, 2]);
        assert_eq!(h_k(&a, 4).unwrap(), a.num_states() as u64);
        // not monotone in k: C(4,k) 2^k for four binary variables
        let b = alpha(&[2, 2, 2, 2]);
        let hs: Vec<u64> = (1..=4).map(|k| h_k(&b, k).unwrap()).collect();
        assert_eq!(hs, vec![8, 24, 32, 16]);
    }

    #[test]
    fn product_vc_dim_examples() {
        assert_eq!(product_vc_dim(&alpha(&[2, 2, 2])), 4);
        assert_eq!(product_vc_dim(&alpha(&[2, 2])), 3);
        assert_eq!(product_vc_dim(&alpha(&[5])), 5);
        for sizes in [&[2usize, 3][..], &[4, 4, 2], &[7]] {
            let a = alpha(sizes);
            assert!(product_vc_dim(&a) <= h_k(&a, 1).unwrap());
        }
    }

    #[test]
    fn phi_reference_value() {
        let a = alpha(&[2, 2, 2]);
        assert_abs_diff_eq!(phi(1, 0.01, 0.05, 1000, &a).unwrap(), PHI_EXAMPLE, epsilon = 1e-12);
        assert_abs_diff_eq!(phi(1, 0.01, 0.05, 2000, &a).unwrap(), PHI_EXAMPLE_L2000, epsilon = 1e-12);
    }

    #[test]
    fn phi_vanishes_as_lambda_tends_to_one() {
        let a = alpha(&[2]);
        let near = phi(1, 0.5 - 1e-12, 0.05, 1000, &a).unwrap();
        let far = phi(1, 1e-3, 0.05, 1000, &a).unwrap();
        assert!(near < far);
        assert_eq!(phi_for_dim(2, 1.0, 0.05, 1000, 1).unwrap(), 0.0);
    }

    #[test]
    fn phi_errors() {
        let a = alpha(&[2, 2, 2]);
        assert!(matches!(phi(1, 0.2, 0.05, 100, &a), Err(Error::InfeasibleFloor { .. })));
        assert!(phi(1, 0.0, 0.05, 100, &a).is_err());
        assert!(phi(1, 0.01, 1.0, 100, &a).is_err());
        assert!(phi(1, 0.01, 0.0, 100, &a).is_err());
        assert!(phi(4, 0.01, 0.05, 100, &a).is_err());
        // λ = 1/|Ω| exactly is allowed here
        assert!(phi(1, 0.125, 0.05, 100, &a).is_ok());
    }

    #[test]
    fn phi_monotone() {
        let a = alpha(&[2, 3, 2]);
        let base = |lambda: f64, eta: f64, l: u64| phi(2, lambda, eta, l, &a).unwrap();
        assert!(base(0.01, 0.05, 1000) > base(0.05, 0.05, 1000));
        assert!(base(0.01, 0.01, 1000) > base(0.01, 0.05, 1000));
        assert!(base(0.01, 0.05, 100) > base(0.01, 0.05, 1000));
        assert!(base(0.01, 0.05, 1000) > base(0.01, 0.05, 10000));
    }

    #[test]
    fn geometric_prior_partial_sums() {
        let p = Prior::Geometric;
        assert_abs_diff_eq!(p.cumulative(1, 1), 0.25, epsilon = 1e-15);
        let brute: f64 = (1..=3).flat_map(|a| (1..=4).map(move |b| (a, b))).map(|(a, b)| p.mass(a, b)).sum();
        assert_abs_diff_eq!(p.cumulative(3, 4), brute, epsilon = 1e-15);
        assert!(p.cumulative(40, 40) > 1.0 - 1e-11);
    }

    #[test]
    fn srm_penalty_example() {
        let a = alpha(&[2, 2, 2]);
        let cfg = PenaltyConfig::default();
        let v = srm_penalty(1, 1, &cfg, 1000, &a).unwrap();
        assert_abs_diff_eq!(v, SRM_11_EXAMPLE, epsilon = 1e-12);
        assert_abs_diff_eq!(v, phi(1, 0.5 / 8.0, 0.0125, 1000, &a).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn srm_penalty_dominates_phi() {
        let a = alpha(&[2, 3, 2]);
        let cfg = PenaltyConfig::default();
        for k in 1..=3 {
            for n in 1..=cfg.ladder_depth {
                let lam = cfg.ladder_lambda(n, a.num_states());
                assert!(srm_penalty(k, n, &cfg, 500, &a).unwrap() >= phi(k, lam, cfg.eta, 500, &a).unwrap());
            }
        }
    }

    #[test]
    fn ladder_strictly_decreasing_and_feasible() {
        let cfg = PenaltyConfig::default();
        let lams: Vec<f64> = (1..=6).map(|n| cfg.ladder_lambda(n, 8)).collect();
        assert!(lams.windows(2).all(|w| w[0] > w[1]));
        assert!(lams[0] * 8.0 < 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = PenaltyConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.ladder_base = 1.0;
        assert!(cfg.validate().is_err());
        cfg = PenaltyConfig {
            prior: Prior::Table {
                weights: vec![vec![0.6, 0.6]],
            },
            ..PenaltyConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.prior = Prior::Table {
            weights: vec![vec![0.25, 0.25], vec![0.0, 0.1]],
        };
        assert!(cfg.validate().is_err());
    }
}
