//! Structural risk minimization over the (degree, floor level) grid, and the
//! classical goodness-of-fit baselines reported alongside it.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig, FitResult};
use crate::space::{check_same_space, Alphabet, Dataset, DistributionTable};
use crate::special::gamma_q;
use crate::vc::{h_k, srm_penalty, PenaltyConfig};

/// Number of identifiable parameters of the hierarchical k-interaction
/// family: `Σ_{s ≤ k} Σ_{|j| = s} ∏_{i ∈ j} (m_i − 1)`.
pub fn free_parameters(alphabet: &Alphabet, k: usize) -> Result<u64> {
    let n = alphabet.num_vars();
    if k == 0 || k > n {
        return Err(Error::domain(format!("degree k = {k} outside [1, {n}]")));
    }
    let reduced: Vec<u64> = alphabet.sizes().iter().map(|&m| m as u64 - 1).collect();
    Ok((1..=k)
        .flat_map(|s| (0..n).combinations(s))
        .map(|subset| subset.iter().map(|&i| reduced[i]).product::<u64>())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreesOfFreedom {
    pub df: u64,
    /// The class has more free parameters than `|Ω| − 1`; `df` is clamped to 0.
    pub over_parameterized: bool,
}

/// Residual degrees of freedom `|Ω| − 1 − p_k`.
pub fn degrees_of_freedom(alphabet: &Alphabet, k: usize) -> Result<DegreesOfFreedom> {
    let params = free_parameters(alphabet, k)?;
    let cells = alphabet.num_states() as u64 - 1;
    Ok(match cells.checked_sub(params) {
        Some(df) => DegreesOfFreedom {
            df,
            over_parameterized: false,
        },
        None => DegreesOfFreedom {
            df: 0,
            over_parameterized: true,
        },
    })
}

/// `R_emp + p / l` with `p` the free-parameter count.
pub fn aic_score(d: &Dataset, fit: &FitResult, free_params: u64) -> f64 {
    fit.r_emp + free_params as f64 / d.total() as f64
}

/// `X² = Σ_j (n_j − l p_j)² / (l p_j)` over every state.
pub fn pearson_x2(d: &Dataset, p: &DistributionTable) -> Result<f64> {
    check_same_space(d.alphabet(), p.alphabet())?;
    let l = d.total() as f64;
    let mut x2 = 0.0;
    for (s, &q) in p.probs().iter().enumerate() {
        if q <= 0.0 {
            return Err(Error::InfiniteRisk { state: s });
        }
        let expected = l * q;
        let diff = d.count(s) as f64 - expected;
        x2 += diff * diff / expected;
    }
    Ok(x2)
}

/// `G² = 2 Σ_j n_j ln(n_j / (l p_j))`; unobserved states contribute 0.
pub fn deviance_g2(d: &Dataset, p: &DistributionTable) -> Result<f64> {
    check_same_space(d.alphabet(), p.alphabet())?;
    let l = d.total() as f64;
    let mut g2 = 0.0;
    for (&s, &c) in d.counts() {
        let q = p.probs()[s];
        if q <= 0.0 {
            return Err(Error::InfiniteRisk { state: s });
        }
        let c = c as f64;
        g2 += c * (c / (l * q)).ln();
    }
    Ok(2.0 * g2)
}

/// Upper-tail probability of the χ²(df) law. For `df = 0` this is 1 at a
/// zero statistic and 0 otherwise.
pub fn chi2_p_value(statistic: f64, df: u64) -> Result<f64> {
    if !(statistic >= 0.0) {
        return Err(Error::domain(format!("statistic {statistic} must be nonnegative")));
    }
    if df == 0 {
        return Ok(if statistic == 0.0 { 1.0 } else { 0.0 });
    }
    if statistic.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_q(df as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Baselines {
    pub free_params: u64,
    pub df: DegreesOfFreedom,
    pub aic: f64,
    pub x2: f64,
    pub g2: f64,
    pub x2_p: f64,
    pub g2_p: f64,
}

impl Baselines {
    pub fn compute(d: &Dataset, fit: &FitResult) -> Result<Self> {
        let alphabet = d.alphabet();
        let k = fit.model.k();
        let free_params = free_parameters(alphabet, k)?;
        let df = degrees_of_freedom(alphabet, k)?;
        let table = fit.model.to_table()?;
        let x2 = pearson_x2(d, &table)?;
        let g2 = deviance_g2(d, &table)?;
        Ok(Baselines {
            free_params,
            df,
            aic: aic_score(d, fit, free_params),
            x2,
            g2,
            x2_p: chi2_p_value(x2, df.df)?,
            g2_p: chi2_p_value(g2, df.df)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRecord {
    pub k: usize,
    pub n: usize,
    pub lambda: f64,
    pub h: u64,
    pub r_emp: f64,
    pub phi: f64,
    pub guaranteed_risk: f64,
    pub baselines: Baselines,
    pub fit: FitResult,
}

/// A grid point that could not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedClass {
    pub k: usize,
    pub n: usize,
    pub lambda: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub eta: f64,
    pub max_k: usize,
    pub penalty: PenaltyConfig,
    /// Evaluated classes ordered by `(k, n)`.
    pub records: Vec<ClassRecord>,
    pub skipped: Vec<SkippedClass>,
    /// `(k, n)` of minimal guaranteed risk; `None` only if every point was skipped.
    pub winner: Option<(usize, usize)>,
}

impl SelectionReport {
    pub fn winner_record(&self) -> Option<&ClassRecord> {
        let (k, n) = self.winner?;
        self.records.iter().find(|r| r.k == k && r.n == n)
    }
}

/// Minimal guaranteed risk; ties go to the smaller `k`, then the larger `λ`.
pub fn pick_winner(records: &[ClassRecord]) -> Option<(usize, usize)> {
    records
        .iter()
        .min_by(|a, b| {
            a.guaranteed_risk
                .total_cmp(&b.guaranteed_risk)
                .then(a.k.cmp(&b.k))
                .then(b.lambda.total_cmp(&a.lambda))
        })
        .map(|r| (r.k, r.n))
}

fn evaluate_class(
    d: &Dataset,
    k: usize,
    n: usize,
    lambda: f64,
    cfg: &PenaltyConfig,
    fit_cfg: &FitConfig,
) -> Result<ClassRecord> {
    let alphabet = d.alphabet();
    let fitted = fit(d, k, lambda, fit_cfg)?;
    let phi = srm_penalty(k, n, cfg, d.total(), alphabet)?;
    let baselines = Baselines::compute(d, &fitted)?;
    Ok(ClassRecord {
        k,
        n,
        lambda,
        h: h_k(alphabet, k)?,
        r_emp: fitted.r_emp,
        phi,
        guaranteed_risk: fitted.r_emp + phi,
        baselines,
        fit: fitted,
    })
}

/// Fits every class `(k, n)` in `{1..max_k} × {1..ladder_depth}` and selects
/// the one of minimal `R_emp + srm_penalty`.
pub fn srm_select(d: &Dataset, max_k: usize, cfg: &PenaltyConfig, fit_cfg: &FitConfig) -> Result<SelectionReport> {
    let alphabet = d.alphabet();
    if max_k == 0 || max_k > alphabet.num_vars() {
        return Err(Error::domain(format!(
            "max_k = {max_k} outside [1, {}]",
            alphabet.num_vars()
        )));
    }
    cfg.validate()?;
    fit_cfg.validate()?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for k in 1..=max_k {
        for n in 1..=cfg.ladder_depth {
            let lambda = cfg.ladder_lambda(n, alphabet.num_states());
            match evaluate_class(d, k, n, lambda, cfg, fit_cfg) {
                Ok(record) => records.push(record),
                Err(e) => skipped.push(SkippedClass {
                    k,
                    n,
                    lambda,
                    reason: e.to_string(),
                }),
            }
        }
    }
    let winner = pick_winner(&records);
    Ok(SelectionReport {
        eta: cfg.eta,
        max_k,
        penalty: cfg.clone(),
        records,
        skipped,
        winner,
    })
}
