//! Finite state spaces of categorical variables, datasets over them, and the
//! information functionals (entropy, cross-entropy risk, empirical risk, KL).
//!
//! States are tuples `(x_1, .., x_n)` with `x_i < m_i`, indexed little-endian:
//! `index = x_1 + m_1 * (x_2 + m_2 * (x_3 + ..))`. All logarithms are natural.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on `|Ω|` for dense enumeration.
pub const MAX_STATES: usize = 1 << 24;

/// Tolerance on the total mass of a [`DistributionTable`].
pub const MASS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AlphabetFields", into = "AlphabetFields")]
pub struct Alphabet {
    sizes: Vec<usize>,
    names: Vec<String>,
    value_labels: Vec<Vec<String>>,
    num_states: usize,
}

#[derive(Serialize, Deserialize)]
struct AlphabetFields {
    sizes: Vec<usize>,
    names: Vec<String>,
    value_labels: Vec<Vec<String>>,
}

impl TryFrom<AlphabetFields> for Alphabet {
    type Error = Error;

    fn try_from(raw: AlphabetFields) -> Result<Self> {
        Alphabet::new(raw.sizes, raw.names, raw.value_labels)
    }
}

impl From<Alphabet> for AlphabetFields {
    fn from(a: Alphabet) -> Self {
        AlphabetFields {
            sizes: a.sizes,
            names: a.names,
            value_labels: a.value_labels,
        }
    }
}

impl Alphabet {
    pub fn new(sizes: Vec<usize>, names: Vec<String>, value_labels: Vec<Vec<String>>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::domain("alphabet needs at least one variable"));
        }
        if names.len() != sizes.len() || value_labels.len() != sizes.len() {
            return Err(Error::domain(format!(
                "alphabet has {} sizes, {} names and {} label lists",
                sizes.len(),
                names.len(),
                value_labels.len()
            )));
        }
        for (i, (&m, labels)) in sizes.iter().zip(&value_labels).enumerate() {
            if m < 2 {
                return Err(Error::domain(format!(
                    "variable `{}` has {} categories, need at least 2",
                    names[i], m
                )));
            }
            if labels.len() != m {
                return Err(Error::domain(format!(
                    "variable `{}` has {} categories but {} labels",
                    names[i],
                    m,
                    labels.len()
                )));
            }
            if has_duplicates(labels) {
                return Err(Error::domain(format!("variable `{}` has duplicate labels", names[i])));
            }
        }
        if has_duplicates(&names) {
            return Err(Error::domain("variable names must be distinct"));
        }
        let mut states: u128 = 1;
        for &m in &sizes {
            states = states.saturating_mul(m as u128);
            if states > MAX_STATES as u128 {
                return Err(Error::TooLarge {
                    states,
                    limit: MAX_STATES,
                });
            }
        }
        Ok(Alphabet {
            sizes,
            names,
            value_labels,
            num_states: states as usize,
        })
    }

    /// Variables named `x1..xn` with value labels `v0..v{m-1}`.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let names = (1..=sizes.len()).map(|i| format!("x{i}")).collect();
        Self::with_names(sizes, names)
    }

    /// Given variable names, value labels `v0..v{m-1}`.
    pub fn with_names(sizes: &[usize], names: Vec<String>) -> Result<Self> {
        let labels = sizes
            .iter()
            .map(|&m| (0..m).map(|v| format!("v{v}")).collect())
            .collect();
        Self::new(sizes.to_vec(), names, labels)
    }

    pub fn num_vars(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value_labels(&self) -> &[Vec<String>] {
        &self.value_labels
    }

    /// `|Ω| = ∏ m_i`.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn encode(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.sizes.len() {
            return Err(Error::domain(format!(
                "tuple has {} components, alphabet has {} variables",
                tuple.len(),
                self.sizes.len()
            )));
        }
        let mut index = 0usize;
        for i in (0..tuple.len()).rev() {
            let (x, m) = (tuple[i], self.sizes[i]);
            if x >= m {
                return Err(Error::domain(format!(
                    "variable `{}` value {} is out of range [0, {})",
                    self.names[i], x, m
                )));
            }
            index = index * m + x;
        }
        Ok(index)
    }

    pub fn decode(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.num_states {
            return Err(Error::domain(format!(
                "state index {index} out of range [0, {})",
                self.num_states
            )));
        }
        let mut out = vec![0; self.sizes.len()];
        self.decode_into(index, &mut out);
        Ok(out)
    }

    /// Unchecked decode into a caller buffer; `index` must be `< |Ω|`.
    pub(crate) fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        for (slot, &m) in out.iter_mut().zip(&self.sizes) {
            *slot = index % m;
            index /= m;
        }
    }

    /// Iterates all states in index order as tuples.
    pub fn states(&self) -> States<'_> {
        States {
            sizes: &self.sizes,
            current: vec![0; self.sizes.len()],
            remaining: self.num_states,
            started: false,
        }
    }

    pub fn label_index(&self, var: usize, label: &str) -> Option<usize> {
        self.value_labels.get(var)?.iter().position(|l| l == label)
    }
}

fn has_duplicates<T: Ord>(items: &[T]) -> bool {
    let mut sorted: Vec<&T> = items.iter().collect();
    sorted.sort();
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// Odometer over `Ω` in little-endian order. Yields borrowed tuples through
/// [`States::next_tuple`] to avoid allocation.
pub struct States<'a> {
    sizes: &'a [usize],
    current: Vec<usize>,
    remaining: usize,
    started: bool,
}

impl States<'_> {
    pub fn next_tuple(&mut self) -> Option<&[usize]> {
        if self.remaining == 0 {
            return None;
        }
        if self.started {
            for (x, &m) in self.current.iter_mut().zip(self.sizes) {
                *x += 1;
                if *x < m {
                    break;
                }
                *x = 0;
            }
        }
        self.started = true;
        self.remaining -= 1;
        Some(&self.current)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    alphabet: Alphabet,
    counts: BTreeMap<usize, u64>,
    total: u64,
}

impl Dataset {
    /// Zero entries are dropped.
    pub fn new(alphabet: Alphabet, counts: BTreeMap<usize, u64>) -> Result<Self> {
        if let Some((&state, _)) = counts.range(alphabet.num_states()..).next() {
            return Err(Error::domain(format!(
                "count key {state} out of range [0, {})",
                alphabet.num_states()
            )));
        }
        let counts: BTreeMap<usize, u64> = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        let total = counts.values().sum::<u64>();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            alphabet,
            counts,
            total,
        })
    }

    pub fn from_observations<'a, I>(alphabet: Alphabet, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut counts = BTreeMap::new();
        for row in rows {
            *counts.entry(alphabet.encode(row)?).or_insert(0) += 1;
        }
        Self::new(alphabet, counts)
    }

    /// Builds a dataset from a dense count vector of length `|Ω|`.
    pub fn from_dense(alphabet: Alphabet, dense: &[u64]) -> Result<Self> {
        if dense.len() != alphabet.num_states() {
            return Err(Error::domain(format!(
                "dense count vector has length {}, expected {}",
                dense.len(),
                alphabet.num_states()
            )));
        }
        let counts = dense.iter().copied().enumerate().filter(|&(_, c)| c > 0).collect();
        Self::new(alphabet, counts)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Nonzero counts keyed by state index.
    pub fn counts(&self) -> &BTreeMap<usize, u64> {
        &self.counts
    }

    pub fn count(&self, state: usize) -> u64 {
        self.counts.get(&state).copied().unwrap_or(0)
    }

    /// Sample size `l`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn dense_counts(&self) -> Vec<u64> {
        let mut dense = vec![0; self.alphabet.num_states()];
        for (&s, &c) in &self.counts {
            dense[s] = c;
        }
        dense
    }

    /// Category counts of variable `var`.
    pub fn marginal_counts(&self, var: usize) -> Vec<u64> {
        let mut out = vec![0; self.alphabet.sizes()[var]];
        let mut tuple = vec![0; self.alphabet.num_vars()];
        for (&s, &c) in &self.counts {
            self.alphabet.decode_into(s, &mut tuple);
            out[tuple[var]] += c;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

impl DistributionTable {
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.num_states() {
            return Err(Error::domain(format!(
                "table has {} entries, alphabet has {} states",
                probs.len(),
                alphabet.num_states()
            )));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::domain(format!("probability at state {i} is {}", probs[i])));
        }
        let mass = probs.iter().sum::<f64>();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::domain(format!("probabilities sum to {mass}, not 1")));
        }
        Ok(DistributionTable { alphabet, probs })
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let n = alphabet.num_states();
        DistributionTable {
            probs: vec![1.0 / n as f64; n],
            alphabet,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn total_variation(&self, other: &DistributionTable) -> Result<f64> {
        check_same_space(&self.alphabet, &other.alphabet)?;
        Ok(0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }
}

pub(crate) fn check_same_space(a: &Alphabet, b: &Alphabet) -> Result<()> {
    if a.sizes() != b.sizes() {
        return Err(Error::AlphabetMismatch(format!(
            "sizes {:?} vs {:?}",
            a.sizes(),
            b.sizes()
        )));
    }
    Ok(())
}

/// Relative frequencies `counts[s] / l`.
pub fn empirical_distribution(d: &Dataset) -> DistributionTable {
    let l = d.total() as f64;
    let mut probs = vec![0.0; d.alphabet().num_states()];
    for (&s, &c) in d.counts() {
        probs[s] = c as f64 / l;
    }
    DistributionTable {
        alphabet: d.alphabet().clone(),
        probs,
    }
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &DistributionTable) -> f64 {
    -p.probs()
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| q * q.ln())
        .sum::<f64>()
}

/// Cross-entropy `-Σ p_true(x) ln p_model(x)`.
pub fn risk(p_true: &DistributionTable, p_model: &DistributionTable) -> Result<f64> {
    check_same_space(p_true.alphabet(), p_model.alphabet())?;
    let mut acc = 0.0;
    for (s, (&p, &q)) in p_true.probs().iter().zip(p_model.probs()).enumerate() {
        if p > 0.0 {
            if q <= 0.0 {
                return Err(Error::InfiniteRisk { state: s });
            }
            acc -= p * q.ln();
        }
    }
    Ok(acc)
}

/// Negative average log-probability of the data under `p_model`.
pub fn empirical_risk(d: &Dataset, p_model: &DistributionTable) -> Result<f64> {
    check_same_space(d.alphabet(), p_model.alphabet())?;
    let l = d.total() as f64;
    let mut acc = 0.0;
    for (&s, &c) in d.counts() {
        let q = p_model.probs()[s];
        if q <= 0.0 {
            return Err(Error::InfiniteRisk { state: s });
        }
        acc -= c as f64 / l * q.ln();
    }
    Ok(acc)
}

pub fn kl_divergence(p: &DistributionTable, q: &DistributionTable) -> Result<f64> {
    Ok(risk(p, q)? - entropy(p))
}
