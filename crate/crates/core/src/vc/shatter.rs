//! Constructive shattering check for thresholded affine functionals
//! `c ↦ ⟨c, f⟩ + b` on integer feature vectors.
//!
//! Each labeling is decided by a phase-one simplex on the margin system
//! `y_i (⟨w, c_i⟩ + b) ≥ 1`. A floating-point solve whose solution verifies
//! is accepted; every other outcome is re-decided in exact rational arithmetic.

use std::ops::{Add, Div, Mul, Neg, Sub};

use itertools::Itertools;
use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::space::Alphabet;

pub const MAX_SHATTER_POINTS: usize = 20;
pub const MAX_SHATTER_H: usize = 12;

/// Reduced one-hot embedding of a state: one block of `m_j − 1` coordinates
/// per variable, all zero for category 0, else a single 1 at `x_j − 1`.
pub fn product_embedding(alphabet: &Alphabet, tuple: &[usize]) -> Result<Vec<i64>> {
    alphabet.encode(tuple)?;
    let mut out = Vec::with_capacity(alphabet.sizes().iter().map(|m| m - 1).sum());
    for (&x, &m) in tuple.iter().zip(alphabet.sizes()) {
        out.extend((1..m).map(|c| i64::from(c == x)));
    }
    Ok(out)
}

/// Whether some affine functional is nonnegative exactly on the points
/// labeled `true`.
pub fn labeling_separable(points: &[Vec<i64>], labels: &[bool]) -> Result<bool> {
    if points.len() != labels.len() {
        return Err(Error::domain(format!(
            "{} points but {} labels",
            points.len(),
            labels.len()
        )));
    }
    check_dims(points)?;
    Ok(separable(points, labels))
}

/// Largest `h ≤ max_h` such that some `h`-subset of `points` is shattered.
pub fn shatter_dimension(points: &[Vec<i64>], max_h: usize) -> Result<usize> {
    if points.len() > MAX_SHATTER_POINTS {
        return Err(Error::Scale(format!(
            "{} points exceeds the limit of {MAX_SHATTER_POINTS}",
            points.len()
        )));
    }
    if max_h > MAX_SHATTER_H {
        return Err(Error::Scale(format!(
            "max_h = {max_h} exceeds the limit of {MAX_SHATTER_H}"
        )));
    }
    check_dims(points)?;
    let mut best = 0;
    for h in 1..=max_h.min(points.len()) {
        let found = (0..points.len()).combinations(h).any(|subset| {
            let chosen: Vec<Vec<i64>> = subset.iter().map(|&i| points[i].clone()).collect();
            is_shattered(&chosen)
        });
        // shattering is hereditary: no h-subset means no larger one either
        if !found {
            break;
        }
        best = h;
    }
    Ok(best)
}

fn check_dims(points: &[Vec<i64>]) -> Result<()> {
    if let Some(first) = points.first() {
        if points.iter().any(|p| p.len() != first.len()) {
            return Err(Error::domain("points have differing dimensions"));
        }
    }
    Ok(())
}

fn is_shattered(points: &[Vec<i64>]) -> bool {
    let h = points.len();
    let radon = radon_labeling(points);
    let to_labels = |mask: u32| -> Vec<bool> { (0..h).map(|i| mask >> i & 1 == 1).collect() };
    // an affine dependency yields the labeling most likely to fail; try it first
    let first = radon.as_ref().map(|l| {
        l.iter()
            .enumerate()
            .fold(0u32, |acc, (i, &b)| acc | (u32::from(b) << i))
    });
    first
        .into_iter()
        .chain((0..1u32 << h).filter(|&m| Some(m) != first))
        .all(|mask| separable(points, &to_labels(mask)))
}

fn separable(points: &[Vec<i64>], labels: &[bool]) -> bool {
    let rows = margin_rows(points, labels);
    if let Some(z) = phase_one::<f64>(&rows) {
        let verified = rows
            .iter()
            .all(|r| r.iter().zip(&z).map(|(&a, b)| a as f64 * b).sum::<f64>() >= 0.5);
        if verified {
            return true;
        }
    }
    phase_one::<Ratio<i128>>(&rows).is_some()
}

/// Rows `y_i (c_i, 1)` of the margin system.
fn margin_rows(points: &[Vec<i64>], labels: &[bool]) -> Vec<Vec<i64>> {
    points
        .iter()
        .zip(labels)
        .map(|(p, &pos)| {
            let sign = if pos { 1 } else { -1 };
            p.iter().chain(std::iter::once(&1)).map(|&v| sign * v).collect()
        })
        .collect()
}

/// Labeling by the signs of an affine dependency among `points`, if one
/// exists. Its two sides have intersecting convex hulls.
fn radon_labeling(points: &[Vec<i64>]) -> Option<Vec<bool>> {
    type Q = Ratio<i128>;
    let h = points.len();
    let d = points.first()?.len() + 1;
    // columns are the augmented points (c_i, 1)
    let mut m: Vec<Vec<Q>> = (0..d)
        .map(|r| {
            (0..h)
                .map(|c| Q::from_integer(if r + 1 == d { 1 } else { points[c][r] as i128 }))
                .collect()
        })
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..h {
        let Some(p) = (row..d).find(|&r| m[r][col] != Q::from_integer(0)) else {
            continue;
        };
        m.swap(row, p);
        let pv = m[row][col];
        for v in m[row].iter_mut() {
            *v /= pv;
        }
        for r in 0..d {
            if r != row && m[r][col] != Q::from_integer(0) {
                let factor = m[r][col];
                let pivot_row = m[row].clone();
                for (v, &q) in m[r].iter_mut().zip(&pivot_row).take(h) {
                    *v -= factor * q;
                }
            }
        }
        pivots.push(col);
        row += 1;
        if row == d {
            break;
        }
    }
    let free = (0..h).find(|c| !pivots.contains(c))?;
    let mut alpha = vec![Q::from_integer(0); h];
    alpha[free] = Q::from_integer(1);
    for (r, &pc) in pivots.iter().enumerate() {
        alpha[pc] = -m[r][free];
    }
    Some(alpha.iter().map(|a| *a > Q::from_integer(0)).collect())
}

trait Scalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn from_i64(v: i64) -> Self;
    fn is_neg(&self) -> bool;
    fn is_pos(&self) -> bool;
    fn less(&self, other: &Self) -> bool;
    fn to_f64(&self) -> f64;
}

const F64_TOL: f64 = 1e-9;

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn is_neg(&self) -> bool {
        *self < -F64_TOL
    }
    fn is_pos(&self) -> bool {
        *self > F64_TOL
    }
    fn less(&self, other: &Self) -> bool {
        *self < *other - F64_TOL
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for Ratio<i128> {
    fn from_i64(v: i64) -> Self {
        Ratio::from_integer(v as i128)
    }
    fn is_neg(&self) -> bool {
        *self < Ratio::from_integer(0)
    }
    fn is_pos(&self) -> bool {
        *self > Ratio::from_integer(0)
    }
    fn less(&self, other: &Self) -> bool {
        self < other
    }
    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Phase-one simplex with Bland's rule for `A z ≥ 1`, `z` free. Returns a
/// feasible `z` or `None`.
fn phase_one<T: Scalar>(a: &[Vec<i64>]) -> Option<Vec<f64>> {
    let m = a.len();
    let p = a.first().map_or(0, Vec::len);
    if m == 0 {
        return Some(vec![0.0; p]);
    }
    // columns: u (p), v (p), surplus s (m), artificial r (m), rhs
    let cols = 2 * p + 2 * m;
    let zero = T::from_i64(0);
    let mut tab: Vec<Vec<T>> = Vec::with_capacity(m + 1);
    for (i, row) in a.iter().enumerate() {
        let mut t = vec![zero.clone(); cols + 1];
        for j in 0..p {
            t[j] = T::from_i64(row[j]);
            t[p + j] = T::from_i64(-row[j]);
        }
        t[2 * p + i] = T::from_i64(-1);
        t[2 * p + m + i] = T::from_i64(1);
        t[cols] = T::from_i64(1);
        tab.push(t);
    }
    // reduced costs of the phase-one objective Σ r
    let mut cost = vec![zero.clone(); cols + 1];
    for j in (0..2 * p + m).chain(std::iter::once(cols)) {
        let s = tab.iter().fold(zero.clone(), |acc, r| acc + r[j].clone());
        cost[j] = -s;
    }
    tab.push(cost);
    let mut basis: Vec<usize> = (0..m).map(|i| 2 * p + m + i).collect();

    while let Some(enter) = (0..cols).find(|&j| tab[m][j].is_neg()) {
        let mut leave: Option<usize> = None;
        for i in 0..m {
            if !tab[i][enter].is_pos() {
                continue;
            }
            let ratio = tab[i][cols].clone() / tab[i][enter].clone();
            leave = match leave {
                None => Some(i),
                Some(l) => {
                    let best = tab[l][cols].clone() / tab[l][enter].clone();
                    if ratio.less(&best) || (!best.less(&ratio) && basis[i] < basis[l]) {
                        Some(i)
                    } else {
                        Some(l)
                    }
                }
            };
        }
        // phase one is bounded below; no leaving row only happens on round-off
        let leave = leave?;
        pivot(&mut tab, leave, enter);
        basis[leave] = enter;
    }
    if tab[m][cols].is_neg() {
        return None;
    }
    let mut z = vec![0.0; p];
    for (i, &b) in basis.iter().enumerate() {
        if b < p {
            z[b] += tab[i][cols].to_f64();
        } else if b < 2 * p {
            z[b - p] -= tab[i][cols].to_f64();
        }
    }
    Some(z)
}

fn pivot<T: Scalar>(tab: &mut [Vec<T>], row: usize, col: usize) {
    let pv = tab[row][col].clone();
    for v in tab[row].iter_mut() {
        *v = v.clone() / pv.clone();
    }
    let pivot_row = tab[row].clone();
    for (r, t) in tab.iter_mut().enumerate() {
        if r == row {
            continue;
        }
        let factor = t[col].clone();
        if !(factor.is_pos() || factor.is_neg()) {
            continue;
        }
        for (v, pr) in t.iter_mut().zip(&pivot_row) {
            *v = v.clone() - factor.clone() * pr.clone();
        }
    }
}
