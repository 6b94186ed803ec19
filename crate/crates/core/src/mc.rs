//! Simulation designs and the Monte Carlo driver for the specification test.
//!
//! Data follow `zᵢ ~ N(0, 25)`, `yᵢ = 1 + zᵢ + uᵢ` under the null, plus a
//! bump `ψ·(5/τ)·φ(zᵢ/τ)` under the alternative. Errors are iid normal, a
//! stationary AR(1), or two-way clustered `(λ_r + F_c)/√2` with a row-major
//! map from observation to cell.
//!
//! Replication `r` draws from its own stream seeded by
//! `sub_seed(seed, r)`: first the `n` regressors, then the error innovations.
//! Rejections are counted per replication and summed in order, so results
//! do not depend on the worker count.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{fill_std_normal, normal_pdf, replication_rng, std_normal};
use crate::spec_test::{
    compute_statistics, fit_null, Bandwidth, RegressionData, SmoothingKernel, SpecTestConfig,
    TestStatistic,
};

/// Standard deviation of the regressor.
pub const Z_SD: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorModel {
    IidNormal,
    Ar1 { rho: f64 },
    TwoWay { n1: usize, n2: usize },
}

impl ErrorModel {
    /// Marginal variance of `uᵢ`.
    /// Row label and parameter string used in result tables.
    pub fn labels(&self) -> (String, String) {
        match *self {
            ErrorModel::IidNormal => ("Normal".into(), "N(0,1)".into()),
            ErrorModel::Ar1 { rho } => ("AR".into(), format!("rho={rho}")),
            ErrorModel::TwoWay { n1, n2 } => ("TwoWay".into(), format!("n1={n1} n2={n2}")),
        }
    }

    pub fn marginal_variance(&self) -> f64 {
        match *self {
            ErrorModel::IidNormal | ErrorModel::TwoWay { .. } => 1.0,
            ErrorModel::Ar1 { rho } => 1.0 / (1.0 - rho * rho),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            ErrorModel::IidNormal => Ok(()),
            ErrorModel::Ar1 { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(invalid(format!(
                        "AR coefficient {rho} must satisfy |rho| < 1"
                    )));
                }
                Ok(())
            }
            ErrorModel::TwoWay { n1, n2 } => {
                if n1 == 0 || n2 == 0 || n1.checked_mul(n2) != Some(n) {
                    return Err(invalid(format!(
                        "clustering {n1} x {n2} does not factor n = {n}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Draws `u` for `n` observations.
    pub fn draw<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut u = vec![0.0; n];
        match *self {
            ErrorModel::IidNormal => fill_std_normal(rng, &mut u),
            ErrorModel::Ar1 { rho } => {
                fill_std_normal(rng, &mut u);
                // start from the stationary law instead of burning in
                let mut prev = std_normal(rng) / (1.0 - rho * rho).sqrt();
                for v in &mut u {
                    prev = rho * prev + *v;
                    *v = prev;
                }
            }
            ErrorModel::TwoWay { n1, n2 } => {
                let mut lambda = vec![0.0; n1];
                let mut f = vec![0.0; n2];
                fill_std_normal(rng, &mut lambda);
                fill_std_normal(rng, &mut f);
                for (i, v) in u.iter_mut().enumerate() {
                    *v = (lambda[i / n2] + f[i % n2]) * std::f64::consts::FRAC_1_SQRT_2;
                }
            }
        }
        u
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanModel {
    Null,
    Alternative { psi: f64, bump_scale: f64 },
}

impl MeanModel {
    fn validate(&self) -> Result<()> {
        match *self {
            MeanModel::Null => Ok(()),
            MeanModel::Alternative { psi, bump_scale } => {
                if !psi.is_finite() {
                    return Err(invalid(format!("psi = {psi} must be finite")));
                }
                if !(bump_scale > 0.0) || !bump_scale.is_finite() {
                    return Err(invalid(format!("bump scale {bump_scale} must be positive")));
                }
                Ok(())
            }
        }
    }

    /// Column label used in result tables.
    pub fn label(&self) -> String {
        match *self {
            MeanModel::Null => "null".into(),
            MeanModel::Alternative { psi, bump_scale } => format!("psi={psi} tau={bump_scale}"),
        }
    }

    /// `E[y | z]`.
    pub fn mean(&self, z: f64) -> f64 {
        match *self {
            MeanModel::Null => 1.0 + z,
            MeanModel::Alternative { psi, bump_scale } => {
                1.0 + z + psi * (5.0 / bump_scale) * normal_pdf(z / bump_scale)
            }
        }
    }

    fn responses(&self, z: &[f64], u: &[f64]) -> Vec<f64> {
        match *self {
            MeanModel::Null => z.iter().zip(u).map(|(z, u)| 1.0 + z + u).collect(),
            // bump added last so psi = 0 reproduces the null bit for bit
            MeanModel::Alternative { psi, bump_scale } => z
                .iter()
                .zip(u)
                .map(|(z, u)| 1.0 + z + u + psi * (5.0 / bump_scale) * normal_pdf(z / bump_scale))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub error_model: ErrorModel,
    pub mean_model: MeanModel,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(invalid(format!(
                "n = {} is too small (need at least 4)",
                self.n
            )));
        }
        self.error_model.validate(self.n)?;
        self.mean_model.validate()
    }
}

/// Regressors and errors of one replication, shared by every mean model.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

impl Draw {
    pub fn generate<R: RngCore + ?Sized>(n: usize, error_model: &ErrorModel, rng: &mut R) -> Self {
        let mut z = vec![0.0; n];
        fill_std_normal(rng, &mut z);
        for v in &mut z {
            *v *= Z_SD;
        }
        let u = error_model.draw(n, rng);
        Self { z, u }
    }

    pub fn dataset(&self, mean_model: &MeanModel) -> Result<RegressionData> {
        RegressionData::univariate(mean_model.responses(&self.z, &self.u), self.z.clone())
    }
}

/// One simulated dataset.
pub fn simulate_dataset<R: RngCore + ?Sized>(
    dgp: &DgpConfig,
    rng: &mut R,
) -> Result<RegressionData> {
    dgp.validate()?;
    Draw::generate(dgp.n, &dgp.error_model, rng).dataset(&dgp.mean_model)
}

/// Test statistics for several mean models on one shared draw. Regressors
/// are shared, so bandwidth and kernel weights are computed once.
pub fn statistics_for_draw(
    draw: &Draw,
    means: &[MeanModel],
    test: &SpecTestConfig,
) -> Result<Vec<TestStatistic>> {
    let residuals = means
        .iter()
        .map(|mean| Ok(fit_null(&draw.dataset(mean)?)?.residuals))
        .collect::<Result<Vec<_>>>()?;
    let sets: Vec<&[f64]> = residuals.iter().map(Vec::as_slice).collect();
    let bandwidth = test.bandwidth.resolve(&draw.z, 1)?;
    compute_statistics(&sets, &draw.z, 1, test.kernel, &bandwidth)
        .into_iter()
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub dgp: DgpConfig,
    pub reps: u64,
    pub seed: u64,
    pub test: SpecTestConfig,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Keep every replication's `Tₙ`.
    #[serde(default)]
    pub keep_statistics: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub reps: u64,
    pub rejections: u64,
    pub rejection_rate: f64,
    pub mc_standard_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_rep_t: Option<Vec<f64>>,
}

impl McResult {
    fn from_statistics(stats: &[f64], critical: f64, keep: bool) -> Self {
        let reps = stats.len() as u64;
        let rejections = stats.iter().filter(|&&t| t > critical).count() as u64;
        let rate = rejections as f64 / reps as f64;
        Self {
            reps,
            rejections,
            rejection_rate: rate,
            mc_standard_error: (rate * (1.0 - rate) / reps as f64).sqrt(),
            per_rep_t: keep.then(|| stats.to_vec()),
        }
    }
}

/// Runs `body` on a pool with `workers` threads, or on the current pool.
pub fn with_workers<T: Send>(workers: Option<usize>, body: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(body()),
        Some(0) => Err(invalid("worker count must be positive")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| invalid(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(body))
        }
    }
}

/// Statistics for every replication and mean model, in replication order.
fn replicate(
    n: usize,
    error_model: &ErrorModel,
    means: &[MeanModel],
    reps: u64,
    seed: u64,
    test: &SpecTestConfig,
) -> Result<Vec<Vec<TestStatistic>>> {
    let outcomes: Vec<Result<Vec<TestStatistic>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep);
            let draw = Draw::generate(n, error_model, &mut rng);
            statistics_for_draw(&draw, means, test).map_err(|source| Error::Replication {
                rep,
                source: Box::new(source),
            })
        })
        .collect();
    outcomes.into_iter().collect()
}

/// Rejection frequency of the test over `reps` simulated datasets.
pub fn run_mc(config: &McConfig) -> Result<McResult> {
    config.dgp.validate()?;
    config.test.validate()?;
    if config.reps == 0 {
        return Err(invalid("reps must be at least 1"));
    }
    let stats = with_workers(config.workers, || {
        replicate(
            config.dgp.n,
            &config.dgp.error_model,
            &[config.dgp.mean_model],
            config.reps,
            config.seed,
            &config.test,
        )
    })??;
    let t: Vec<f64> = stats.iter().map(|s| s[0].t_n).collect();
    Ok(McResult::from_statistics(
        &t,
        config.test.critical_value(),
        config.keep_statistics,
    ))
}

/// A dependence row of the Table-1 grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1Row {
    pub error_model_label: String,
    pub params: String,
    pub model: ErrorModel,
}

impl Table1Row {
    pub fn new(model: ErrorModel) -> Self {
        let (error_model_label, params) = model.labels();
        Self {
            error_model_label,
            params,
            model,
        }
    }
}

/// Writes result cells in the long CSV layout shared by [`Table1`] and single
/// runs.
pub fn write_cells_csv<'a, W: std::io::Write>(
    cells: impl IntoIterator<Item = (&'a Table1Row, &'a str, &'a McResult)>,
    out: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    writer
        .write_record([
            "error_model",
            "params",
            "column_label",
            "rejection_rate",
            "mc_se",
        ])
        .map_err(csv_err)?;
    for (row, label, cell) in cells {
        writer
            .write_record([
                row.error_model_label.as_str(),
                row.params.as_str(),
                label,
                &cell.rejection_rate.to_string(),
                &cell.mc_standard_error.to_string(),
            ])
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// A mean-model column of the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1Column {
    pub label: String,
    pub model: MeanModel,
}

/// The four columns: null, then `(ψ, τ)` = (0.5, 0.25), (0.1, 0.25), (0.1, 1).
pub fn table1_columns() -> Vec<Table1Column> {
    let alternative = |psi, bump_scale| MeanModel::Alternative { psi, bump_scale };
    [
        MeanModel::Null,
        alternative(0.5, 0.25),
        alternative(0.1, 0.25),
        alternative(0.1, 1.0),
    ]
    .into_iter()
    .map(|model| Table1Column {
        label: model.label(),
        model,
    })
    .collect()
}

/// Cluster shapes for sample size `n`: for each target aspect ratio
/// `n1/n2` in (0.8, 5), the divisor `n1` of `n` closest to `√(n · ratio)`.
/// At `n = 2000` this gives `(40, 50)` and `(100, 20)`.
pub fn default_clustering(n: usize) -> [(usize, usize); 2] {
    [0.8, 5.0].map(|ratio: f64| {
        let target = (n as f64 * ratio).sqrt();
        let n1 = (1..=n)
            .filter(|d| n.is_multiple_of(*d))
            .min_by(|a, b| {
                (*a as f64 - target)
                    .abs()
                    .total_cmp(&(*b as f64 - target).abs())
            })
            .unwrap_or(1);
        (n1, n / n1)
    })
}

/// The six dependence rows. `clustering` overrides the two two-way shapes.
pub fn table1_rows(n: usize, clustering: Option<[(usize, usize); 2]>) -> Result<Vec<Table1Row>> {
    let mut rows: Vec<Table1Row> = [ErrorModel::IidNormal]
        .into_iter()
        .chain([0.1, 0.5, 0.9].map(|rho| ErrorModel::Ar1 { rho }))
        .map(Table1Row::new)
        .collect();
    for (n1, n2) in clustering.unwrap_or_else(|| default_clustering(n)) {
        let row = Table1Row::new(ErrorModel::TwoWay { n1, n2 });
        row.model
            .validate(n)
            .map_err(|e| invalid(format!("row TwoWay ({n1},{n2}): {e}")))?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Config {
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
    pub test: SpecTestConfig,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub clustering: Option<[(usize, usize); 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1 {
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
    pub rows: Vec<Table1Row>,
    pub columns: Vec<Table1Column>,
    /// `results[row][column]`.
    pub results: Vec<Vec<McResult>>,
}

/// Full grid of rejection rates. Every row and column reuses the same
/// replication seeds, so cells are computed on common random numbers and a
/// single-cell [`run_mc`] with the same seed reproduces its cell exactly.
pub fn table1_suite(config: &Table1Config) -> Result<Table1> {
    config.test.validate()?;
    if config.reps == 0 {
        return Err(invalid("reps must be at least 1"));
    }
    if config.n < 4 {
        return Err(invalid(format!(
            "n = {} is too small (need at least 4)",
            config.n
        )));
    }
    let rows = table1_rows(config.n, config.clustering)?;
    let columns = table1_columns();
    let means: Vec<MeanModel> = columns.iter().map(|c| c.model).collect();
    let critical = config.test.critical_value();
    let results = with_workers(config.workers, || {
        rows.iter()
            .map(|row| {
                let stats = replicate(
                    config.n,
                    &row.model,
                    &means,
                    config.reps,
                    config.seed,
                    &config.test,
                )?;
                Ok((0..means.len())
                    .map(|c| {
                        let t: Vec<f64> = stats.iter().map(|s| s[c].t_n).collect();
                        McResult::from_statistics(&t, critical, false)
                    })
                    .collect())
            })
            .collect::<Result<Vec<Vec<McResult>>>>()
    })??;
    Ok(Table1 {
        n: config.n,
        reps: config.reps,
        seed: config.seed,
        rows,
        columns,
        results,
    })
}

impl Table1 {
    pub fn rate(&self, row: usize, column: usize) -> f64 {
        self.results[row][column].rejection_rate
    }

    /// Long-format CSV, one line per cell:
    /// `error_model,params,column_label,rejection_rate,mc_se`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let cells = self
            .rows
            .iter()
            .zip(&self.results)
            .flat_map(|(row, cells)| {
                self.columns
                    .iter()
                    .zip(cells)
                    .map(move |(column, cell)| (row, column.label.as_str(), cell))
            });
        write_cells_csv(cells, out)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Rows × columns table of rates with six decimals.
    pub fn render_text(&self) -> String {
        let mut out = format!("{:<8} {:<16}", "model", "params");
        for column in &self.columns {
            out.push_str(&format!(" {:>18}", column.label));
        }
        out.push('\n');
        for (row, cells) in self.rows.iter().zip(&self.results) {
            out.push_str(&format!("{:<8} {:<16}", row.error_model_label, row.params));
            for cell in cells {
                out.push_str(&format!(" {:>18.6}", cell.rejection_rate));
            }
            out.push('\n');
        }
        out
    }
}

/// Monte Carlo estimates of the moment ingredients of the test's kernel
/// `H(xᵢ, xⱼ) = b^{-1/2} uᵢ uⱼ K((zᵢ − zⱼ)/b)` for independent observations
/// drawn from the design's marginal law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelIngredients {
    pub bandwidth: f64,
    /// `‖H‖_p` at `p` = 2, 3, 4, 1+δ, 2+δ, 4+δ.
    pub h_p: Vec<(String, f64)>,
    /// `σ_n² = n(n−1) E H²`.
    pub sigma2: f64,
    /// `‖Γ(X, X̃)‖₂` with `Γ(x, y) = E H(X, x) H(X, y)`.
    pub gamma_2: f64,
}

/// Estimates [`KernelIngredients`] from `draws` independent pairs. The
/// bandwidth is the population analogue of the rule, `c · 5 · n^{-1/5}`.
pub fn estimate_kernel_ingredients(
    n: usize,
    error_model: &ErrorModel,
    kernel: SmoothingKernel,
    bandwidth: Bandwidth,
    delta: f64,
    draws: usize,
    seed: u64,
) -> Result<KernelIngredients> {
    if draws < 2 {
        return Err(invalid("need at least 2 draws"));
    }
    if !(delta > 0.0) {
        return Err(invalid(format!("delta = {delta} must be positive")));
    }
    let b = match bandwidth {
        Bandwidth::Fixed(b) => b,
        Bandwidth::Rule { multiplier } => multiplier * Z_SD * (n as f64).powf(-0.2),
    };
    if !(b > 0.0) {
        return Err(invalid("bandwidth must be positive"));
    }
    let sd_u = error_model.marginal_variance().sqrt();
    let mut rng = replication_rng(seed, 0);
    let draw_obs = |rng: &mut dyn RngCore| (Z_SD * std_normal(rng), sd_u * std_normal(rng));
    let h = |a: (f64, f64), c: (f64, f64)| b.powf(-0.5) * a.1 * c.1 * kernel.eval((a.0 - c.0) / b);

    let powers = [2.0, 3.0, 4.0, 1.0 + delta, 2.0 + delta, 4.0 + delta];
    let mut sums = [0.0; 6];
    for _ in 0..draws {
        let x = draw_obs(&mut rng);
        let y = draw_obs(&mut rng);
        let v = h(x, y).abs();
        for (s, p) in sums.iter_mut().zip(powers) {
            *s += v.powf(p);
        }
    }
    let moments: Vec<f64> = sums.iter().map(|s| s / draws as f64).collect();
    let names = ["2", "3", "4", "1+delta", "2+delta", "4+delta"];
    let h_p = names
        .iter()
        .zip(powers.iter().zip(&moments))
        .map(|(name, (p, m))| (name.to_string(), m.powf(1.0 / p)))
        .collect();

    // Γ(x, y) by an inner average over a fixed set of X draws
    let inner: Vec<(f64, f64)> = (0..draws.min(512)).map(|_| draw_obs(&mut rng)).collect();
    let outer = draws.min(2048);
    let mut gamma_sq = 0.0;
    for _ in 0..outer {
        let x = draw_obs(&mut rng);
        let y = draw_obs(&mut rng);
        let g = inner.iter().map(|&w| h(w, x) * h(w, y)).sum::<f64>() / inner.len() as f64;
        gamma_sq += g * g;
    }
    Ok(KernelIngredients {
        bandwidth: b,
        h_p,
        sigma2: n as f64 * (n as f64 - 1.0) * moments[0],
        gamma_2: (gamma_sq / outer as f64).sqrt(),
    })
}
