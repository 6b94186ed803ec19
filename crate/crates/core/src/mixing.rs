//! β-mixing coefficients.
//!
//! Two halves: exact coefficients and maximal (Berbee) couplings for finite
//! joint distributions, used as oracles in tests and demos; and analytic
//! mixing-rate models `β(n₁, n₂, m)` that feed the bound evaluators.

use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const PMF_TOLERANCE: f64 = 1e-12;

/// Finite joint law of `(A, Y)` on `k₁ × k₂` atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    rows: usize,
    cols: usize,
    pmf: Vec<f64>,
    a_marginal: Vec<f64>,
    y_marginal: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(pmf: Vec<Vec<f64>>) -> Result<Self> {
        let rows = pmf.len();
        if rows == 0 || pmf[0].is_empty() {
            return Err(invalid("joint pmf must have at least one atom"));
        }
        let cols = pmf[0].len();
        if pmf.iter().any(|r| r.len() != cols) {
            return Err(invalid("joint pmf rows have different lengths"));
        }
        let flat: Vec<f64> = pmf.into_iter().flatten().collect();
        if flat.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(invalid("joint pmf entries must be finite and non-negative"));
        }
        let total: f64 = flat.iter().sum();
        if (total - 1.0).abs() > PMF_TOLERANCE {
            return Err(invalid(format!("joint pmf sums to {total}, expected 1")));
        }
        let mut a_marginal = vec![0.0; rows];
        let mut y_marginal = vec![0.0; cols];
        for a in 0..rows {
            for y in 0..cols {
                let p = flat[a * cols + y];
                a_marginal[a] += p;
                y_marginal[y] += p;
            }
        }
        Ok(Self {
            rows,
            cols,
            pmf: flat,
            a_marginal,
            y_marginal,
        })
    }

    /// Product law of two marginals.
    pub fn independent(a: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(
            a.iter()
                .map(|pa| y.iter().map(|py| pa * py).collect())
                .collect(),
        )
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn p(&self, a: usize, y: usize) -> f64 {
        self.pmf[a * self.cols + y]
    }

    pub fn a_marginal(&self) -> &[f64] {
        &self.a_marginal
    }

    pub fn y_marginal(&self) -> &[f64] {
        &self.y_marginal
    }

    /// `P(Y = · | A = a)`; `None` for null atoms.
    pub fn conditional(&self, a: usize) -> Option<Vec<f64>> {
        let pa = self.a_marginal[a];
        (pa > 0.0).then(|| (0..self.cols).map(|y| self.p(a, y) / pa).collect())
    }
}

/// `β(σ(A), σ(Y)) = ½ Σ_{a,y} |p(a, y) − p(a)p(y)|`. On finite σ-algebras
/// the supremum over partitions is attained at the atoms.
pub fn beta_discrete(joint: &DiscreteJoint) -> f64 {
    let mut sum = 0.0;
    for a in 0..joint.rows {
        for y in 0..joint.cols {
            sum += (joint.p(a, y) - joint.a_marginal[a] * joint.y_marginal[y]).abs();
        }
    }
    (0.5 * sum).clamp(0.0, 1.0)
}

/// Total-variation distance between two pmfs on the same atoms.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `E_A[ TV(P_{Y|A}, P_Y) ]`, which equals [`beta_discrete`].
pub fn beta_via_conditionals(joint: &DiscreteJoint) -> f64 {
    (0..joint.rows)
        .filter_map(|a| {
            joint
                .conditional(a)
                .map(|cond| joint.a_marginal[a] * total_variation(&cond, &joint.y_marginal))
        })
        .sum()
}

/// One draw of the coupling: `(A, Y)` from the joint law and `Ỹ` with the
/// law of `Y`, independent of `A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoupledDraw {
    pub a: usize,
    pub y: usize,
    pub y_tilde: usize,
}

/// Maximal coupling sampler realising `P(Y ≠ Ỹ) = β(σ(A), σ(Y))`.
///
/// Conditionally on `A = a`, `Y ~ P_{Y|a}` is kept as `Ỹ` with probability
/// `min(P_{Y|a}(y), P_Y(y)) / P_{Y|a}(y)`; otherwise `Ỹ` is drawn from the
/// normalised residual `(P_Y − P_{Y|a})⁺`. The residual's support is disjoint
/// from the atoms where a mismatch can start, so every rejection is a
/// mismatch. A sampler owns its random stream and is not meant to be shared.
#[derive(Debug)]
pub struct BerbeeCoupler {
    joint_index: WeightedIndex<f64>,
    cols: usize,
    keep: Vec<f64>,
    residual: Vec<Option<WeightedIndex<f64>>>,
    rng: ChaCha8Rng,
}

impl BerbeeCoupler {
    pub fn new(joint: &DiscreteJoint, seed: u64) -> Result<Self> {
        let joint_index = WeightedIndex::new(&joint.pmf)
            .map_err(|e| invalid(format!("joint pmf cannot be sampled: {e}")))?;
        let mut keep = vec![1.0; joint.rows * joint.cols];
        let mut residual = Vec::with_capacity(joint.rows);
        for a in 0..joint.rows {
            let Some(cond) = joint.conditional(a) else {
                residual.push(None);
                continue;
            };
            for y in 0..joint.cols {
                if cond[y] > 0.0 {
                    keep[a * joint.cols + y] = cond[y].min(joint.y_marginal[y]) / cond[y];
                }
            }
            let weights: Vec<f64> = joint
                .y_marginal
                .iter()
                .zip(&cond)
                .map(|(py, pc)| (py - pc).max(0.0))
                .collect();
            residual.push(WeightedIndex::new(&weights).ok());
        }
        Ok(Self {
            joint_index,
            cols: joint.cols,
            keep,
            residual,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn draw(&mut self) -> CoupledDraw {
        let cell = self.joint_index.sample(&mut self.rng);
        let (a, y) = (cell / self.cols, cell % self.cols);
        let u: f64 = rand::Rng::gen(&mut self.rng);
        let y_tilde = if u < self.keep[cell] {
            y
        } else {
            match &self.residual[a] {
                Some(dist) => dist.sample(&mut self.rng),
                None => y,
            }
        };
        CoupledDraw { a, y, y_tilde }
    }
}

impl Iterator for BerbeeCoupler {
    type Item = CoupledDraw;

    fn next(&mut self) -> Option<CoupledDraw> {
        Some(self.draw())
    }
}

/// Group size argument of `β(n₁, n₂, m)`; `Infinite` stands for unbounded
/// groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupSize {
    Finite(usize),
    Infinite,
}

impl fmt::Display for GroupSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSize::Finite(k) => write!(f, "{k}"),
            GroupSize::Infinite => f.write_str("inf"),
        }
    }
}

impl From<usize> for GroupSize {
    fn from(k: usize) -> Self {
        GroupSize::Finite(k)
    }
}

/// Mixing-rate model `β(n₁, n₂, m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingModel {
    /// Zero for every `m > 0`.
    Independent,
    /// `min(1, scale · rate^m)`.
    Geometric { rate: f64, scale: f64 },
    /// Zero for `m > cutoff`, one otherwise.
    DependencyGraph { cutoff: f64 },
    /// Grid of values; queries are answered by the nearest grid point that
    /// keeps the value an upper bound (largest `m` node not above `m`,
    /// smallest `n` nodes not below `n₁, n₂`). Queries outside the grid are
    /// errors.
    Table {
        n1: Vec<usize>,
        n2: Vec<usize>,
        m: Vec<f64>,
        /// `values[i1][i2][im]`.
        values: Vec<Vec<Vec<f64>>>,
    },
}

impl MixingModel {
    pub fn geometric(rate: f64, scale: f64) -> Result<Self> {
        let model = MixingModel::Geometric { rate, scale };
        model.validate()?;
        Ok(model)
    }

    /// Checks parameter ranges and, for tables, the grid shape and the
    /// monotonicity contract.
    pub fn validate(&self) -> Result<()> {
        match self {
            MixingModel::Independent => Ok(()),
            MixingModel::Geometric { rate, scale } => {
                if !(*rate > 0.0 && *rate < 1.0) {
                    return Err(invalid(format!("geometric rate {rate} must lie in (0, 1)")));
                }
                if !(*scale >= 0.0) || !scale.is_finite() {
                    return Err(invalid(format!(
                        "geometric scale {scale} must be non-negative"
                    )));
                }
                Ok(())
            }
            MixingModel::DependencyGraph { cutoff } => {
                if !(*cutoff >= 0.0) {
                    return Err(invalid("dependency-graph cutoff must be non-negative"));
                }
                Ok(())
            }
            MixingModel::Table { n1, n2, m, values } => {
                let strictly_up = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
                if n1.is_empty() || n2.is_empty() || m.is_empty() {
                    return Err(invalid("mixing table axes must be non-empty"));
                }
                if !strictly_up(n1) || !strictly_up(n2) || !m.windows(2).all(|w| w[0] < w[1]) {
                    return Err(invalid("mixing table axes must be strictly increasing"));
                }
                if values.len() != n1.len()
                    || values.iter().any(|v| v.len() != n2.len())
                    || values.iter().flatten().any(|v| v.len() != m.len())
                {
                    return Err(invalid("mixing table values do not match the axes"));
                }
                for (a, plane) in values.iter().enumerate() {
                    for (b, line) in plane.iter().enumerate() {
                        for (c, &v) in line.iter().enumerate() {
                            if !(0.0..=1.0).contains(&v) {
                                return Err(invalid(format!("mixing value {v} outside [0, 1]")));
                            }
                            if c > 0 && v > line[c - 1] {
                                return Err(invalid("mixing table must be non-increasing in m"));
                            }
                            if a > 0 && v < values[a - 1][b][c] {
                                return Err(invalid("mixing table must be non-decreasing in n1"));
                            }
                            if b > 0 && v < plane[b - 1][c] {
                                return Err(invalid("mixing table must be non-decreasing in n2"));
                            }
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Evaluates `β(n₁, n₂, m)`.
    pub fn beta(&self, n1: GroupSize, n2: GroupSize, m: f64) -> Result<f64> {
        if !(m >= 0.0) {
            return Err(invalid(format!("radius m = {m} must be non-negative")));
        }
        match self {
            MixingModel::Independent => Ok(if m > 0.0 { 0.0 } else { 1.0 }),
            MixingModel::Geometric { rate, scale } => Ok((scale * rate.powf(m)).min(1.0)),
            MixingModel::DependencyGraph { cutoff } => Ok(if m > *cutoff { 0.0 } else { 1.0 }),
            MixingModel::Table {
                n1: n1_axis,
                n2: n2_axis,
                m: m_axis,
                values,
            } => {
                let upper_index = |axis: &[usize], size: GroupSize, name: &str| match size {
                    GroupSize::Infinite => Err(Error::Extrapolation(format!(
                        "{name} = inf has no tabulated value"
                    ))),
                    GroupSize::Finite(k) => {
                        if k < axis[0] {
                            return Err(Error::Extrapolation(format!(
                                "{name} = {k} is below the grid start {}",
                                axis[0]
                            )));
                        }
                        axis.iter().position(|&g| g >= k).ok_or_else(|| {
                            Error::Extrapolation(format!(
                                "{name} = {k} is beyond the grid end {}",
                                axis[axis.len() - 1]
                            ))
                        })
                    }
                };
                let a = upper_index(n1_axis, n1, "n1")?;
                let b = upper_index(n2_axis, n2, "n2")?;
                let last = m_axis[m_axis.len() - 1];
                if m < m_axis[0] || m > last {
                    return Err(Error::Extrapolation(format!(
                        "m = {m} is outside the grid [{}, {last}]",
                        m_axis[0]
                    )));
                }
                let c = m_axis.iter().rposition(|&g| g <= m).expect("m within grid");
                Ok(values[a][b][c])
            }
        }
    }

    /// `β_q(m) = max_{q₁+q₂=q} β(q₁, q₂, m)`.
    pub fn beta_q(&self, q: usize, m: f64) -> Result<f64> {
        let mut best: f64 = 0.0;
        for q1 in 1..q {
            best = best.max(self.beta(GroupSize::Finite(q1), GroupSize::Finite(q - q1), m)?);
        }
        Ok(best)
    }
}
