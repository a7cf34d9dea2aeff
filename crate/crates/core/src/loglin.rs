//! k-factor log-linear models.
//!
//! A model of degree `k` stores one block of log-potentials per k-subset of
//! the variables (lexicographic order). Within a block the entries are laid
//! out row-major over the subset's variables in ascending order, so the last
//! variable of the subset varies fastest. With the feature vector `c^x`
//! holding a single 1 per block, `ln P(x) = ⟨c^x, f⟩` once the model is
//! normalized. The normalizer is folded into the first block.

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::{Alphabet, Dataset, DistributionTable};

/// `|ln Z|` below which a model counts as normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;

/// Generator behind [`LogLinearModel::sample`]. Changing the stream bumps this.
pub const SAMPLER_RNG: &str = "rand_chacha-0.3/ChaCha8Rng/seed_from_u64/inverse-cdf-v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    vars: Vec<usize>,
    offset: usize,
    strides: Vec<usize>,
    len: usize,
}

impl Block {
    /// Ascending variable indices of the subset.
    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Row-major position of the restriction of `tuple` to this block.
    pub fn local_index(&self, tuple: &[usize]) -> usize {
        self.vars.iter().zip(&self.strides).map(|(&v, &s)| tuple[v] * s).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorBasis {
    alphabet: Alphabet,
    k: usize,
    blocks: Vec<Block>,
    dim: usize,
}

impl FactorBasis {
    pub fn new(alphabet: Alphabet, k: usize) -> Result<Self> {
        let n = alphabet.num_vars();
        if k == 0 || k > n {
            return Err(Error::domain(format!("degree k = {k} outside [1, {n}]")));
        }
        let sizes = alphabet.sizes();
        let mut blocks = Vec::new();
        let mut offset = 0usize;
        for vars in (0..n).combinations(k) {
            let mut strides = vec![0; k];
            let mut len = 1usize;
            for (slot, &v) in strides.iter_mut().zip(&vars).rev() {
                *slot = len;
                len = len
                    .checked_mul(sizes[v])
                    .ok_or_else(|| Error::Scale("factor block too large".into()))?;
            }
            blocks.push(Block {
                vars,
                offset,
                strides,
                len,
            });
            offset = offset
                .checked_add(len)
                .ok_or_else(|| Error::Scale("parameter dimension overflows".into()))?;
        }
        Ok(FactorBasis {
            alphabet,
            k,
            blocks,
            dim: offset,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Parameter dimension, equal to `h_k`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Positions of the ones of `c^x` for a state tuple, one per block, ascending.
    pub fn positions_for(&self, tuple: &[usize]) -> Vec<usize> {
        self.blocks.iter().map(|b| b.offset + b.local_index(tuple)).collect()
    }

    /// Sparse feature vector `c^x` of a state index: the positions of its ones.
    pub fn feature_vector(&self, state: usize) -> Result<Vec<usize>> {
        Ok(self.positions_for(&self.alphabet.decode(state)?))
    }

    /// Dense `|Ω| × blocks` table of feature positions in state order.
    pub fn feature_table(&self) -> FeatureTable {
        let width = self.blocks.len();
        let mut positions = Vec::with_capacity(self.alphabet.num_states() * width);
        let mut states = self.alphabet.states();
        while let Some(t) = states.next_tuple() {
            positions.extend(self.blocks.iter().map(|b| b.offset + b.local_index(t)));
        }
        FeatureTable { width, positions }
    }

    /// `⟨c^x, f⟩` for every state, in state order.
    pub fn scores(&self, params: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.alphabet.num_states());
        let mut states = self.alphabet.states();
        while let Some(t) = states.next_tuple() {
            out.push(self.blocks.iter().map(|b| params[b.offset + b.local_index(t)]).sum());
        }
        out
    }
}

/// Precomputed feature positions, `width` entries per state.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    width: usize,
    positions: Vec<usize>,
}

impl FeatureTable {
    pub fn state(&self, s: usize) -> &[usize] {
        &self.positions[s * self.width..(s + 1) * self.width]
    }

    pub fn num_states(&self) -> usize {
        self.positions.len() / self.width.max(1)
    }

    pub fn score(&self, s: usize, params: &[f64]) -> f64 {
        self.state(s).iter().map(|&p| params[p]).sum()
    }
}

/// Stable `ln Σ exp(v)`.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln Z(f) = ln Σ_x exp(⟨c^x, f⟩)` by exhaustive enumeration.
pub fn log_partition(params: &[f64], basis: &FactorBasis) -> f64 {
    log_sum_exp(&basis.scores(params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearModel {
    basis: FactorBasis,
    params: Vec<f64>,
    lambda: f64,
    log_z: f64,
}

impl LogLinearModel {
    pub fn new(basis: FactorBasis, params: Vec<f64>, lambda: f64) -> Result<Self> {
        if params.len() != basis.dim() {
            return Err(Error::domain(format!(
                "parameter vector has length {}, basis has dimension {}",
                params.len(),
                basis.dim()
            )));
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("parameter {i} is not finite")));
        }
        let states = basis.alphabet().num_states();
        if !(lambda > 0.0 && lambda * states as f64 <= 1.0) {
            return Err(Error::InfeasibleFloor { lambda, states });
        }
        let log_z = log_partition(&params, &basis);
        Ok(LogLinearModel {
            basis,
            params,
            lambda,
            log_z,
        })
    }

    /// Saturated (`k = n`) model reproducing a strictly positive table.
    pub fn saturated(table: &DistributionTable, lambda: f64) -> Result<Self> {
        let alphabet = table.alphabet().clone();
        let basis = FactorBasis::new(alphabet.clone(), alphabet.num_vars())?;
        let block = &basis.blocks()[0];
        let mut params = vec![0.0; basis.dim()];
        let mut states = alphabet.states();
        let mut s = 0;
        while let Some(t) = states.next_tuple() {
            let p = table.probs()[s];
            if p <= 0.0 {
                return Err(Error::InfiniteRisk { state: s });
            }
            params[block.local_index(t)] = p.ln();
            s += 1;
        }
        Ok(Self::new(basis, params, lambda)?.normalize())
    }

    /// Degree-1 model whose table is the product of the given marginals.
    pub fn product(alphabet: &Alphabet, marginals: &[Vec<f64>], lambda: f64) -> Result<Self> {
        if marginals.len() != alphabet.num_vars() {
            return Err(Error::domain("one marginal per variable required"));
        }
        let basis = FactorBasis::new(alphabet.clone(), 1)?;
        let mut params = Vec::with_capacity(basis.dim());
        for (j, (marginal, &m)) in marginals.iter().zip(alphabet.sizes()).enumerate() {
            if marginal.len() != m || marginal.iter().any(|&p| p <= 0.0) {
                return Err(Error::domain(format!(
                    "marginal of `{}` must have {m} positive entries",
                    alphabet.names()[j]
                )));
            }
            params.extend(marginal.iter().map(|p| p.ln()));
        }
        Ok(Self::new(basis, params, lambda)?.normalize())
    }

    pub fn basis(&self) -> &FactorBasis {
        &self.basis
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.basis.alphabet()
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn is_normalized(&self) -> bool {
        self.log_z.abs() <= NORMALIZATION_TOLERANCE
    }

    /// Shifts the first block by `−ln Z` so that `Z(f) = 1`.
    pub fn normalize(mut self) -> Self {
        let first = &self.basis.blocks[0];
        let shift = self.log_z;
        for v in &mut self.params[first.offset..first.offset + first.len] {
            *v -= shift;
        }
        self.log_z = log_partition(&self.params, &self.basis);
        self
    }

    fn require_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::Unnormalized { log_z: self.log_z })
        }
    }

    /// `ln P(x)` for every state.
    pub fn log_probs(&self) -> Result<Vec<f64>> {
        self.require_normalized()?;
        let mut scores = self.basis.scores(&self.params);
        for s in &mut scores {
            *s -= self.log_z;
        }
        Ok(scores)
    }

    pub fn to_table(&self) -> Result<DistributionTable> {
        let probs = self.log_probs()?.into_iter().map(f64::exp).collect();
        DistributionTable::new(self.alphabet().clone(), probs)
    }

    /// `min_x ⟨c^x, f⟩`, the quantity the floor constraint bounds below by `ln λ`.
    pub fn min_log_prob(&self) -> Result<f64> {
        Ok(self.log_probs()?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Number of states whose log-probability lies within `tol` of `ln λ`.
    pub fn floor_active_states(&self, tol: f64) -> Result<usize> {
        let floor = self.lambda.ln();
        Ok(self.log_probs()?.iter().filter(|&&lp| lp - floor <= tol).count())
    }

    /// `count` i.i.d. draws by inverse CDF over the enumerated table.
    pub fn sample(&self, count: u64, seed: u64) -> Result<Dataset> {
        if count == 0 {
            return Err(Error::EmptySample);
        }
        let table = self.to_table()?;
        let mut cdf = Vec::with_capacity(table.probs().len());
        let mut acc = 0.0;
        for &p in table.probs() {
            acc += p;
            cdf.push(acc);
        }
        let last = table.probs().iter().rposition(|&p| p > 0.0).unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense = vec![0u64; cdf.len()];
        for _ in 0..count {
            let u: f64 = rng.gen();
            let s = cdf.partition_point(|&c| c <= u).min(last);
            dense[s] += 1;
        }
        Dataset::from_dense(self.alphabet().clone(), &dense)
    }
}
