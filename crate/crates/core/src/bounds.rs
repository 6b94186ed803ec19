//! Plug-in evaluators for the Wasserstein normal-approximation bounds of
//! non-degenerate and degenerate U-statistics, the variance-consistency
//! condition, and one-dimensional empirical Wasserstein-1 distances.
//!
//! The bounds hold up to unspecified universal constants. Every term is
//! evaluated with that constant set to one and then multiplied by the
//! ingredient's `constant` field, so the output describes shapes and rates
//! rather than certified numbers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mixing::{GroupSize, MixingModel};
use crate::rng::{normal_cdf, normal_pdf, normal_quantile};
use crate::sparsity::{tau_bound_from, MProfile, TauTable};

/// Factors beyond this magnitude switch products to log-space.
const LOG_SPACE_THRESHOLD: f64 = 1e150;

/// τ counts supplied at radius `m` and at `4m`, keyed by profile.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TauInputs {
    #[serde(default)]
    pub m: BTreeMap<MProfile, f64>,
    #[serde(default, rename = "4m")]
    pub m4: BTreeMap<MProfile, f64>,
}

/// Which radius a τ or η lookup refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Radius {
    M,
    FourM,
}

impl Radius {
    fn label(self) -> &'static str {
        match self {
            Radius::M => "m",
            Radius::FourM => "4m",
        }
    }
}

impl TauInputs {
    /// Adds every entry of `table` at the given radius.
    pub fn insert_table(&mut self, radius: Radius, table: &TauTable) {
        let target = match radius {
            Radius::M => &mut self.m,
            Radius::FourM => &mut self.m4,
        };
        for (profile, count) in &table.entries {
            target.insert(profile.clone(), *count);
        }
    }

    /// Neighbourhood-size bounds for all profiles of order 2 to 5, given
    /// `η_m` and `η_{4m}`.
    pub fn from_eta(n: usize, eta_m: usize, eta_4m: usize) -> Self {
        let mut tau = TauInputs::default();
        for q in 2..=5 {
            for profile in MProfile::all_of_order(q) {
                tau.m
                    .insert(profile.clone(), tau_bound_from(n, eta_m, &profile));
                tau.m4
                    .insert(profile.clone(), tau_bound_from(n, eta_4m, &profile));
            }
        }
        tau
    }
}

/// `η_m` and `η_{4m}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EtaInputs {
    pub m: Option<f64>,
    #[serde(rename = "4m")]
    pub m4: Option<f64>,
}

/// Everything the bound evaluators consume. Field names follow the usual
/// symbols: `H_p` maps `"2"`, `"3"`, `"4"`, `"1+delta"`, `"2+delta"`,
/// `"4+delta"` to kernel moment norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundIngredients {
    pub n: f64,
    pub m: f64,
    pub delta: f64,
    /// Non-degenerate scale `ν_n`.
    #[serde(default)]
    pub nu: Option<f64>,
    /// Degenerate scale `s_n`.
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(rename = "H_p", default)]
    pub h: BTreeMap<String, f64>,
    #[serde(rename = "H_tilde2", default)]
    pub h_tilde2: Option<f64>,
    #[serde(rename = "Gamma_m2", default)]
    pub gamma_m2: Option<f64>,
    #[serde(default)]
    pub gamma_m1: Option<f64>,
    pub beta: MixingModel,
    #[serde(default)]
    pub tau: TauInputs,
    #[serde(default)]
    pub eta: EtaInputs,
    /// Multiplier standing in for the unspecified universal constants.
    #[serde(default = "unit")]
    pub constant: f64,
}

fn unit() -> f64 {
    1.0
}

impl BoundIngredients {
    pub fn new(n: f64, m: f64, delta: f64, beta: MixingModel) -> Self {
        Self {
            n,
            m,
            delta,
            nu: None,
            s: None,
            h: BTreeMap::new(),
            h_tilde2: None,
            gamma_m2: None,
            gamma_m1: None,
            beta,
            tau: TauInputs::default(),
            eta: EtaInputs::default(),
            constant: 1.0,
        }
    }

    /// Sets `H_p` for `key` in `"2"`, `"3"`, `"4"`, `"1+delta"`, ...
    pub fn set_h(&mut self, key: &str, value: f64) -> &mut Self {
        self.h.insert(key.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 1.0) || !self.n.is_finite() {
            return Err(invalid(format!("n = {} must be at least 1", self.n)));
        }
        if !(self.m >= 0.0) {
            return Err(invalid(format!("m = {} must be non-negative", self.m)));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(invalid(format!("delta = {} must be positive", self.delta)));
        }
        if !(self.constant >= 0.0) || !self.constant.is_finite() {
            return Err(invalid(format!(
                "constant = {} must be non-negative",
                self.constant
            )));
        }
        let scalars = [
            ("H_tilde2", self.h_tilde2),
            ("Gamma_m2", self.gamma_m2),
            ("gamma_m1", self.gamma_m1),
            ("eta.m", self.eta.m),
            ("eta.4m", self.eta.m4),
        ];
        for (name, value) in scalars {
            if let Some(v) = value {
                check_non_negative(name, v)?;
            }
        }
        for (key, &v) in &self.h {
            check_non_negative(&format!("H_p.{key}"), v)?;
        }
        for (radius, map) in [("m", &self.tau.m), ("4m", &self.tau.m4)] {
            for (profile, &v) in map {
                check_non_negative(&format!("tau.{radius}[{profile}]"), v)?;
            }
        }
        self.beta.validate()
    }

    fn h_norm(&self, key: &str) -> Result<f64> {
        self.h
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingIngredient(format!("H_p.{key}")))
    }

    fn tau(&self, radius: Radius, parts: &str) -> Result<f64> {
        let map = match radius {
            Radius::M => &self.tau.m,
            Radius::FourM => &self.tau.m4,
        };
        let profile: MProfile = parts.parse().expect("static profile");
        map.get(&profile)
            .copied()
            .ok_or_else(|| Error::MissingIngredient(format!("tau.{}[{parts}]", radius.label())))
    }

    /// `τ̂₄ = τ₃,₁ + τ₂,₁,₁ + τ₁,₁,₁,₁`.
    fn tau_hat4(&self, radius: Radius) -> Result<f64> {
        Ok(self.tau(radius, "3,1")? + self.tau(radius, "2,1,1")? + self.tau(radius, "1,1,1,1")?)
    }

    fn eta(&self, radius: Radius) -> Result<f64> {
        let value = match radius {
            Radius::M => self.eta.m,
            Radius::FourM => self.eta.m4,
        };
        value.ok_or_else(|| Error::MissingIngredient(format!("eta.{}", radius.label())))
    }

    fn positive(value: Option<f64>, name: &str) -> Result<f64> {
        let v = value.ok_or_else(|| Error::MissingIngredient(name.to_string()))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid(format!("{name} = {v} must be positive")));
        }
        Ok(v)
    }

    fn required(value: Option<f64>, name: &str) -> Result<f64> {
        value.ok_or_else(|| Error::MissingIngredient(name.to_string()))
    }

    fn beta_pow(&self, n1: GroupSize, n2: GroupSize, radius: f64, exponent: f64) -> Result<f64> {
        Ok(self.beta.beta(n1, n2, radius)?.powf(exponent))
    }

    fn beta_q_pow(&self, q: usize, radius: f64, exponent: f64) -> Result<f64> {
        Ok(self.beta.beta_q(q, radius)?.powf(exponent))
    }
}

fn check_non_negative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(invalid(format!(
            "{name} = {v} must be finite and non-negative"
        )));
    }
    Ok(())
}

/// Product of non-negative factors, in log-space when any factor is
/// extreme.
fn prod(factors: &[f64]) -> f64 {
    if factors.contains(&0.0) {
        return 0.0;
    }
    let extreme = factors
        .iter()
        .any(|&f| !(LOG_SPACE_THRESHOLD.recip()..=LOG_SPACE_THRESHOLD).contains(&f));
    if extreme {
        factors.iter().map(|f| f.ln()).sum::<f64>().exp()
    } else {
        factors.iter().product()
    }
}

/// `√(Σ parts)` for non-negative parts, rescaled when the largest is extreme.
fn sqrt_sum(parts: &[f64]) -> f64 {
    let scale = parts.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    if scale > LOG_SPACE_THRESHOLD && scale.is_finite() {
        scale.sqrt() * parts.iter().map(|p| p / scale).sum::<f64>().sqrt()
    } else {
        parts.iter().sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundTerm {
    pub name: &'static str,
    pub weight: f64,
    /// Term value including the universal-constant multiplier.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub m: f64,
    /// `Σ weight · value`.
    pub total: f64,
    pub terms: Vec<BoundTerm>,
}

impl BoundReport {
    fn assemble(m: f64, constant: f64, raw: Vec<(&'static str, f64, f64)>) -> Self {
        let terms: Vec<BoundTerm> = raw
            .into_iter()
            .map(|(name, weight, value)| BoundTerm {
                name,
                weight,
                value: constant * value,
            })
            .collect();
        let total = terms.iter().map(|t| t.weight * t.value).sum();
        Self { m, total, terms }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

/// Five-term bound for `(S_n − Σθ) / (2(n−1)ν_n)`.
pub fn nondegenerate_bound(ing: &BoundIngredients) -> Result<BoundReport> {
    ing.validate()?;
    let n = ing.n;
    let m = ing.m;
    let nu = BoundIngredients::positive(ing.nu, "nu")?;
    let h2 = ing.h_norm("2")?;
    let h3 = ing.h_norm("3")?;
    let h1d = ing.h_norm("1+delta")?;
    let h2d = ing.h_norm("2+delta")?;
    let tau2 = ing.tau(Radius::M, "2")?;
    let tau3 = ing.tau(Radius::M, "3")?;
    let tau4 = ing.tau(Radius::M, "4")?;
    let tau22 = ing.tau(Radius::M, "2,2")?;
    let e1 = ing.delta / (1.0 + ing.delta);
    let e2 = ing.delta / (2.0 + ing.delta);
    let one = GroupSize::Finite(1);
    let b13 = ing.beta_pow(one, GroupSize::Finite(3), m, e2)?;
    let b1inf = ing.beta_pow(one, GroupSize::Infinite, m, e1)?;
    let b11 = ing.beta_pow(one, one, m, e2)?;
    let b2inf = ing.beta_pow(GroupSize::Finite(2), GroupSize::Infinite, m, e2)?;

    let t1 = prod(&[
        1.0 / nu,
        1.0 / n,
        sqrt_sum(&[
            prod(&[tau4 + tau22, h2, h2]),
            prod(&[n, n, n, n, h2d, h2d, b13]),
        ]),
    ]);
    let t2 = prod(&[n, 1.0 / nu, h1d, b1inf]);
    let t3 = prod(&[n, n, 1.0 / nu, 1.0 / nu, h2d, h2d, b11]);
    let t4 = prod(&[tau2, 1.0 / nu, 1.0 / nu, h2d, h2d, b2inf]);
    let t5 = prod(&[tau3, 1.0 / nu, 1.0 / nu, 1.0 / nu, h3, h3, h3]);
    Ok(BoundReport::assemble(
        m,
        ing.constant,
        vec![
            ("projection_variance", 1.0, t1),
            ("linear_mixing", 1.0, t2),
            ("pair_mixing", 1.0, t3),
            ("neighbour_mixing", 1.0, t4),
            ("third_moment", 1.0, t5),
        ],
    ))
}

/// Bound for `(S_n − E S_n) / s_n` with a degenerate kernel. With `detail`
/// unset this is the three-term form in `η_m`; with `detail` set, the
/// weighted `A₀ … A₅` decomposition in τ counts.
pub fn degenerate_bound(ing: &BoundIngredients, detail: bool) -> Result<BoundReport> {
    ing.validate()?;
    if detail {
        degenerate_detail(ing)
    } else {
        degenerate_eta(ing)
    }
}

fn degenerate_eta(ing: &BoundIngredients) -> Result<BoundReport> {
    let n = ing.n;
    BoundIngredients::positive(ing.s, "s")?;
    let h4 = ing.h_norm("4")?;
    let h4d = ing.h_norm("4+delta")?;
    let gamma = BoundIngredients::required(ing.gamma_m2, "Gamma_m2")?;
    let eta_m = ing.eta(Radius::M)?;
    let eta_4m = ing.eta(Radius::FourM)?;
    let e4 = ing.delta / (4.0 + ing.delta);
    let b = ing.beta_pow(GroupSize::Finite(2), GroupSize::Infinite, ing.m, e4)?;

    let mixing = prod(&[n, eta_m, h4d, h4d, b]);
    let moment = sqrt_sum(&[
        prod(&[eta_m.powi(7), 1.0 / n, h4.powi(4)]),
        prod(&[eta_4m.powi(3), 1.0 / n, h4.powi(4)]),
    ]);
    let cross = prod(&[eta_m, eta_m, gamma]);
    Ok(BoundReport::assemble(
        ing.m,
        ing.constant,
        vec![
            ("mixing", 1.0, mixing),
            ("fourth_moment", 1.0, moment),
            ("cross_moment", 1.0, cross),
        ],
    ))
}

fn degenerate_detail(ing: &BoundIngredients) -> Result<BoundReport> {
    let n = ing.n;
    let m = ing.m;
    let s = BoundIngredients::positive(ing.s, "s")?;
    let h2 = ing.h_norm("2")?;
    let h4 = ing.h_norm("4")?;
    let h1d = ing.h_norm("1+delta")?;
    let h2d = ing.h_norm("2+delta")?;
    let h4d = ing.h_norm("4+delta")?;
    let h_tilde2 = BoundIngredients::required(ing.h_tilde2, "H_tilde2")?;
    let gamma = BoundIngredients::required(ing.gamma_m2, "Gamma_m2")?;
    let tau2 = ing.tau(Radius::M, "2")?;
    let tau4 = ing.tau(Radius::M, "4")?;
    let tau5 = ing.tau(Radius::M, "5")?;
    let tau22 = ing.tau(Radius::M, "2,2")?;
    let tau_hat4 = ing.tau_hat4(Radius::M)?;
    let tau4_4m = ing.tau(Radius::FourM, "4")?;
    let tau22_4m = ing.tau(Radius::FourM, "2,2")?;
    let e1 = ing.delta / (1.0 + ing.delta);
    let e2 = ing.delta / (2.0 + ing.delta);
    let e4 = ing.delta / (4.0 + ing.delta);
    let b4_4m = ing.beta_q_pow(4, 4.0 * m, e2)?;
    let b4_e2 = ing.beta_q_pow(4, m, e2)?;
    let b4_e4 = ing.beta_q_pow(4, m, e4)?;
    let b1inf = ing.beta_pow(GroupSize::Finite(1), GroupSize::Infinite, m, e1)?;
    let b2inf = ing.beta_pow(GroupSize::Finite(2), GroupSize::Infinite, m, e2)?;
    let b16 = ing.beta_pow(GroupSize::Finite(1), GroupSize::Finite(6), m, e4)?;
    let n2 = n * n;
    let inv_s = 1.0 / s;

    let a0 = prod(&[
        inv_s,
        sqrt_sum(&[prod(&[tau4_4m, h2, h2]), prod(&[tau22_4m, h2d, h2d, b4_4m])]),
    ]);
    let a1 = prod(&[n2, inv_s, h1d, b1inf]);
    let a2 = prod(&[inv_s, inv_s]) * (prod(&[tau4_4m, h2, h2]) + prod(&[n2, n2, h2d, h2d, b4_e2]));
    let a3 = prod(&[
        tau2,
        inv_s,
        inv_s,
        prod(&[n2, h2d, h2d, b2inf])
            + sqrt_sum(&[
                prod(&[tau4, h4.powi(4)]),
                prod(&[tau_hat4, h4d.powi(4), b4_e4]),
                prod(&[tau22, gamma, gamma]),
            ]),
    ]);
    let a45 = prod(&[
        sqrt_sum(&[prod(&[tau2, tau4]), prod(&[n, tau5])]),
        inv_s,
        inv_s,
        inv_s,
        sqrt_sum(&[
            prod(&[tau4 + tau22, h4.powi(4)]),
            prod(&[tau_hat4, h4d.powi(4), b16]),
        ]),
        sqrt_sum(&[
            prod(&[tau2, h_tilde2, h_tilde2]),
            prod(&[n2, h2d, h2d, b4_e2]),
        ]),
    ]);
    let gauss = (2.0 / std::f64::consts::PI).sqrt();
    Ok(BoundReport::assemble(
        m,
        ing.constant,
        vec![
            ("A0", 1.0, a0),
            ("A1", 2.0, a1),
            ("A2", gauss, a2),
            ("A3", gauss, a3),
            ("A4+A5", 2.0, a45),
        ],
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceCheck {
    pub lhs: f64,
    pub ratio: f64,
    pub satisfied: bool,
}

/// Left side of the condition under which `s_n² = (2 + o(1))σ_n²`:
/// `τ₄H₂² + (τ̂₄ + τ₂,₂)H²_{2+δ}β₄(m)^{δ/(2+δ)} + τ₂,₂γ_{m,1}`. The condition
/// counts as satisfied when `lhs / σ² < tolerance`.
pub fn variance_condition(
    ing: &BoundIngredients,
    sigma2: f64,
    tolerance: f64,
) -> Result<VarianceCheck> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(invalid(format!("sigma2 = {sigma2} must be positive")));
    }
    ing.validate()?;
    let h2 = ing.h_norm("2")?;
    let h2d = ing.h_norm("2+delta")?;
    let gamma1 = BoundIngredients::required(ing.gamma_m1, "gamma_m1")?;
    let tau4 = ing.tau(Radius::M, "4")?;
    let tau22 = ing.tau(Radius::M, "2,2")?;
    let tau_hat4 = ing.tau_hat4(Radius::M)?;
    let b4 = ing.beta_q_pow(4, ing.m, ing.delta / (2.0 + ing.delta))?;
    let lhs =
        prod(&[tau4, h2, h2]) + prod(&[tau_hat4 + tau22, h2d, h2d, b4]) + prod(&[tau22, gamma1]);
    let ratio = lhs / sigma2;
    Ok(VarianceCheck {
        lhs,
        ratio,
        satisfied: ratio < tolerance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    /// Position of the smallest total in the input grid.
    pub best_index: usize,
    pub best_m: f64,
    pub best_total: f64,
    pub reports: Vec<BoundReport>,
}

/// Evaluates `bound` at every grid point (typically the same inputs at
/// different `m`) and reports the minimiser. Ties go to the first point.
pub fn sweep_m<F>(grid: &[BoundIngredients], bound: F) -> Result<SweepReport>
where
    F: Fn(&BoundIngredients) -> Result<BoundReport>,
{
    if grid.is_empty() {
        return Err(invalid("m-grid is empty"));
    }
    let reports = grid.iter().map(&bound).collect::<Result<Vec<_>>>()?;
    let (best_index, best) = reports
        .iter()
        .enumerate()
        .fold(None::<(usize, &BoundReport)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.total <= r.total || r.total.is_nan() => acc,
            _ => Some((i, r)),
        })
        .expect("non-empty grid");
    Ok(SweepReport {
        best_index,
        best_m: best.m,
        best_total: best.total,
        reports: reports.clone(),
    })
}

/// `∫_{-∞}^{x} Φ(t) dt = xΦ(x) + φ(x)`.
fn integrated_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    x * normal_cdf(x) + normal_pdf(x)
}

/// `∫_x^∞ (1 − Φ(t)) dt`.
fn integrated_survival(x: f64) -> f64 {
    integrated_cdf(-x)
}

fn sorted_sample(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.len() < 2 {
        return Err(invalid(format!(
            "need at least 2 observations, got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sample contains non-finite values"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// `∫ |F_n(x) − Φ(x)| dx` for the empirical CDF `F_n` of `sample`, integrated
/// exactly piece by piece.
pub fn wasserstein1_to_normal(sample: &[f64]) -> Result<f64> {
    let x = sorted_sample(sample)?;
    let n = x.len() as f64;
    let mut total = integrated_cdf(x[0]) + integrated_survival(x[x.len() - 1]);
    for k in 1..x.len() {
        let (a, b) = (x[k - 1], x[k]);
        if b == a {
            continue;
        }
        let level = k as f64 / n;
        // F_n − Φ changes sign where Φ crosses the step level
        let cross = normal_quantile(level);
        let piece = |lo: f64, hi: f64| {
            (level * (hi - lo) - (integrated_cdf(hi) - integrated_cdf(lo))).abs()
        };
        total += if cross > a && cross < b {
            piece(a, cross) + piece(cross, b)
        } else {
            piece(a, b)
        };
    }
    Ok(total)
}

/// `∫ |F(x) − G(x)| dx` between two empirical CDFs.
pub fn wasserstein1_empirical(first: &[f64], second: &[f64]) -> Result<f64> {
    let a = sorted_sample(first)?;
    let b = sorted_sample(second)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut last = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - last);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        last = next;
    }
    Ok(total)
}
