//! Second-order U-statistics `Sₙ = Σ_{i≠k} H(Xᵢ, X_k)`.
//!
//! Kernels implement [`UKernel`]. A kernel may additionally carry its
//! population projections `Ĥ_k(x) = E H(X_k, x)` and means
//! `θ_{ik} = E Ĥ_k(X_i)`, which enables the Hoeffding decomposition
//! `Sₙ = Σθ_{ik} + Ŝₙ + S*ₙ` for non-identically distributed samples.
//!
//! Pair sums run over unordered pairs `i < k` in row-major order and are
//! doubled. The parallel path splits rows into fixed blocks and adds block
//! sums in block order, so it does not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Rows per block in the parallel pair loop.
pub const ROW_BLOCK: usize = 32;

const SYMMETRY_TOLERANCE: f64 = 1e-10;
const SYMMETRY_PROBES: usize = 64;

/// Observations `X_i ∈ ℝ^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Sample {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(invalid(format!(
                "a U-statistic needs n >= 2 observations, got {n}"
            )));
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("sample rows must share a positive dimension"));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sample contains non-finite values"));
        }
        Ok(Self { n, dim, data })
    }

    /// Scalar observations.
    pub fn univariate(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Copy with rows reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(invalid("permutation has the wrong length"));
        }
        Self::new(order.iter().map(|&i| self.row(i).to_vec()).collect())
    }
}

/// Symmetric kernel `H(x, y)` of a second-order U-statistic.
pub trait UKernel: Sync {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    /// `Ĥ_k(x) = E H(X_k, x)`, if known analytically.
    fn projection(&self, _k: usize, _x: &[f64]) -> Option<f64> {
        None
    }

    /// `θ_{ik} = E Ĥ_k(X_i)`, if known analytically.
    fn theta(&self, _i: usize, _k: usize) -> Option<f64> {
        None
    }

    /// `true` when `Ĥ ≡ 0`.
    fn is_degenerate(&self) -> bool {
        false
    }
}

/// Value of `Sₙ` and its normalisation `Sₙ / (n(n−1))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UStatistic {
    pub sum: f64,
    pub mean: f64,
}

/// Evaluates the U-statistic serially.
pub fn evaluate<K: UKernel + ?Sized>(kernel: &K, sample: &Sample) -> UStatistic {
    let sum = (0..sample.n)
        .step_by(ROW_BLOCK)
        .map(|start| block_sum(kernel, sample, start))
        .sum::<f64>()
        * 2.0;
    finish(sum, sample.n)
}

/// Same result as [`evaluate`], with row blocks spread over the rayon pool.
pub fn evaluate_par<K: UKernel + ?Sized>(kernel: &K, sample: &Sample) -> UStatistic {
    let blocks: Vec<f64> = (0..sample.n)
        .into_par_iter()
        .step_by(ROW_BLOCK)
        .map(|start| block_sum(kernel, sample, start))
        .collect();
    finish(blocks.iter().sum::<f64>() * 2.0, sample.n)
}

fn block_sum<K: UKernel + ?Sized>(kernel: &K, sample: &Sample, start: usize) -> f64 {
    let end = (start + ROW_BLOCK).min(sample.n);
    let mut acc = 0.0;
    for i in start..end {
        let xi = sample.row(i);
        for k in i + 1..sample.n {
            acc += kernel.eval(xi, sample.row(k));
        }
    }
    acc
}

fn finish(sum: f64, n: usize) -> UStatistic {
    UStatistic {
        sum,
        mean: sum / (n as f64 * (n as f64 - 1.0)),
    }
}

/// The three pieces of `Sₙ = Σθ_{ik} + Ŝₙ + S*ₙ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoeffdingParts {
    pub theta_sum: f64,
    /// `Ŝₙ = 2(n−1) Σᵢ hᵢ`.
    pub linear: f64,
    /// `S*ₙ = Σ_{i≠k} (H − Ĥᵢ(X_k) − Ĥ_k(Xᵢ) + θ_{ik})`.
    pub remainder: f64,
}

impl HoeffdingParts {
    pub fn total(&self) -> f64 {
        self.theta_sum + self.linear + self.remainder
    }
}

/// Hoeffding decomposition using the kernel's analytic projections.
pub fn hoeffding_decompose<K: UKernel + ?Sized>(
    kernel: &K,
    sample: &Sample,
) -> Result<HoeffdingParts> {
    let n = sample.n;
    let missing = || Error::Unsupported("kernel does not provide analytic projections".into());
    let mut theta_sum = 0.0;
    let mut linear = 0.0;
    let mut remainder = 0.0;
    for i in 0..n {
        let xi = sample.row(i);
        // h_i (n-1) = Σ_{k≠i} (Ĥ_k(X_i) − θ_ik)
        let mut h_scaled = 0.0;
        for k in 0..n {
            if k == i {
                continue;
            }
            let xk = sample.row(k);
            let theta = kernel.theta(i, k).ok_or_else(missing)?;
            let proj_k_at_i = kernel.projection(k, xi).ok_or_else(missing)?;
            let proj_i_at_k = kernel.projection(i, xk).ok_or_else(missing)?;
            theta_sum += theta;
            h_scaled += proj_k_at_i - theta;
            remainder += kernel.eval(xi, xk) - proj_i_at_k - proj_k_at_i + theta;
        }
        linear += 2.0 * h_scaled;
    }
    Ok(HoeffdingParts {
        theta_sum,
        linear,
        remainder,
    })
}

/// Population moments feeding the degenerate-kernel normality ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelMoments {
    /// `E Γ(X₁, X₂)²` with `Γ(x, y) = E H(X, x) H(X, y)`.
    pub gamma_sq: f64,
    pub h_sq: f64,
    pub h_fourth: f64,
    pub n: usize,
}

/// `(EΓ² + n⁻¹ EH⁴) / (EH²)²`. Small values support a normal limit for the
/// degenerate statistic; a ratio bounded away from zero flags a non-normal
/// (e.g. χ²-type) limit.
pub fn hall_diagnostic(moments: &KernelMoments) -> Result<f64> {
    if !(moments.h_sq > 0.0) {
        return Err(invalid("E H^2 must be positive"));
    }
    if moments.n == 0 {
        return Err(invalid("n must be positive"));
    }
    Ok((moments.gamma_sq + moments.h_fourth / moments.n as f64) / (moments.h_sq * moments.h_sq))
}

/// `H(x, y) = (x − y)² / 2`; its U-mean is the sample variance.
///
/// With `X_k` of mean `μ` and variance `σ²`, `Ĥ_k(x) = ((x − μ)² + σ²) / 2`
/// and `θ = σ²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceKernel {
    pub mean: f64,
    pub variance: f64,
}

impl UKernel for VarianceKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = x[0] - y[0];
        0.5 * d * d
    }

    fn projection(&self, _k: usize, x: &[f64]) -> Option<f64> {
        let c = x[0] - self.mean;
        Some(0.5 * (c * c + self.variance))
    }

    fn theta(&self, _i: usize, _k: usize) -> Option<f64> {
        Some(self.variance)
    }
}

/// `H(x, y) = x·y` for scalars with common mean `μ`: `Ĥ_k(x) = μx`,
/// `θ = μ²`. Degenerate when `μ = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductKernel {
    pub mean: f64,
}

impl UKernel for ProductKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        x[0] * y[0]
    }

    fn projection(&self, _k: usize, x: &[f64]) -> Option<f64> {
        Some(self.mean * x[0])
    }

    fn theta(&self, _i: usize, _k: usize) -> Option<f64> {
        Some(self.mean * self.mean)
    }

    fn is_degenerate(&self) -> bool {
        self.mean == 0.0
    }
}

/// `H ≡ c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantKernel(pub f64);

impl UKernel for ConstantKernel {
    fn eval(&self, _x: &[f64], _y: &[f64]) -> f64 {
        self.0
    }

    fn projection(&self, _k: usize, _x: &[f64]) -> Option<f64> {
        Some(self.0)
    }

    fn theta(&self, _i: usize, _k: usize) -> Option<f64> {
        Some(self.0)
    }
}

/// Symmetric polynomial kernel on scalars
///
/// `H(x, y) = c₀ + c₁(x + y) + c₂xy + c₃(x² + y²) + c₄(x²y + xy²) + c₅x²y²`
///
/// with per-index first and second moments `(μ_k, m_k) = (E X_k, E X_k²)`,
/// which allows non-identically distributed samples. Projections follow by
/// linearity of expectation.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialKernel {
    pub coef: [f64; 6],
    pub first_moments: Vec<f64>,
    pub second_moments: Vec<f64>,
}

impl PolynomialKernel {
    fn poly(&self, x: f64, y: f64) -> f64 {
        let c = &self.coef;
        c[0] + c[1] * (x + y)
            + c[2] * x * y
            + c[3] * (x * x + y * y)
            + c[4] * (x * x * y + x * y * y)
            + c[5] * x * x * y * y
    }

    /// `E H(X_k, x)` for a scalar `x`.
    fn project_moments(&self, mu: f64, m2: f64, x: f64) -> f64 {
        let c = &self.coef;
        c[0] + c[1] * (mu + x)
            + c[2] * mu * x
            + c[3] * (m2 + x * x)
            + c[4] * (m2 * x + mu * x * x)
            + c[5] * m2 * x * x
    }
}

impl UKernel for PolynomialKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.poly(x[0], y[0])
    }

    fn projection(&self, k: usize, x: &[f64]) -> Option<f64> {
        Some(self.project_moments(
            *self.first_moments.get(k)?,
            *self.second_moments.get(k)?,
            x[0],
        ))
    }

    fn theta(&self, i: usize, k: usize) -> Option<f64> {
        let (mu_i, m_i) = (*self.first_moments.get(i)?, *self.second_moments.get(i)?);
        let (mu_k, m_k) = (*self.first_moments.get(k)?, *self.second_moments.get(k)?);
        let c = &self.coef;
        Some(
            c[0] + c[1] * (mu_k + mu_i)
                + c[2] * mu_k * mu_i
                + c[3] * (m_k + m_i)
                + c[4] * (m_k * mu_i + mu_k * m_i)
                + c[5] * m_k * m_i,
        )
    }
}

/// Wraps a user closure. Kernels that fail the symmetry probe are replaced by
/// `½(H(x, y) + H(y, x))`, with a warning.
pub struct FnKernel<F> {
    f: F,
    symmetrize: bool,
}

impl<F> FnKernel<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    /// Probes symmetry on random points of dimension `dim` drawn from a
    /// fixed-seed stream.
    pub fn new(f: F, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5eed);
        let mut symmetric = true;
        for _ in 0..SYMMETRY_PROBES {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (a, b) = (f(&x, &y), f(&y, &x));
            if (a - b).abs() > SYMMETRY_TOLERANCE * (1.0 + a.abs().max(b.abs())) {
                symmetric = false;
                break;
            }
        }
        if !symmetric {
            log::warn!("kernel is not symmetric; using (H(x,y) + H(y,x)) / 2");
        }
        Self {
            f,
            symmetrize: !symmetric,
        }
    }

    pub fn is_symmetrized(&self) -> bool {
        self.symmetrize
    }
}

impl<F> UKernel for FnKernel<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.symmetrize {
            0.5 * ((self.f)(x, y) + (self.f)(y, x))
        } else {
            (self.f)(x, y)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(values: &[f64]) -> Sample {
        Sample::univariate(values).unwrap()
    }

    #[test]
    fn sample_variance_kernel() {
        let kernel = VarianceKernel {
            mean: 0.0,
            variance: 1.0,
        };
        let u = evaluate(&kernel, &data(&[1.0, 2.0, 3.0]));
        assert_eq!(u.sum, 6.0);
        assert_eq!(u.mean, 1.0);
    }

    #[test]
    fn zero_and_product_kernels() {
        let u = evaluate(&ConstantKernel(0.0), &data(&[1.0, 2.0, 3.0]));
        assert_eq!((u.sum, u.mean), (0.0, 0.0));
        // (Σx)² − Σx² = 36 − 14
        let u = evaluate(&ProductKernel { mean: 0.0 }, &data(&[1.0, 2.0, 3.0]));
        assert_eq!(u.sum, 22.0);
    }

    #[test]
    fn too_few_observations() {
        assert!(Sample::univariate(&[1.0]).is_err());
        assert!(Sample::univariate(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn product_kernel_decomposition() {
        let parts =
            hoeffding_decompose(&ProductKernel { mean: 2.0 }, &data(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(parts.theta_sum, 24.0);
        assert_eq!(parts.linear, 0.0);
        assert_eq!(parts.remainder, -2.0);
        assert_eq!(parts.total(), 22.0);
    }

    #[test]
    fn degenerate_decomposition_is_all_remainder() {
        let sample = data(&[0.3, -1.2, 2.5, 0.7]);
        let kernel = ProductKernel { mean: 0.0 };
        assert!(kernel.is_degenerate());
        let parts = hoeffding_decompose(&kernel, &sample).unwrap();
        assert_eq!(parts.linear, 0.0);
        assert_eq!(parts.theta_sum, 0.0);
        assert_eq!(parts.remainder, evaluate(&kernel, &sample).sum);
    }

    #[test]
    fn constant_kernel_decomposition() {
        let parts =
            hoeffding_decompose(&ConstantKernel(1.5), &data(&[4.0, 5.0, 6.0, 7.0])).unwrap();
        assert_eq!(parts.theta_sum, 12.0 * 1.5);
        assert_eq!(parts.linear, 0.0);
        assert_eq!(parts.remainder, 0.0);
    }

    #[test]
    fn missing_projection_is_unsupported() {
        let kernel = FnKernel::new(|x: &[f64], y: &[f64]| x[0] * y[0], 1);
        assert!(matches!(
            hoeffding_decompose(&kernel, &data(&[1.0, 2.0])),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn asymmetric_closure_is_symmetrized() {
        let kernel = FnKernel::new(|x: &[f64], y: &[f64]| x[0] - 2.0 * y[0], 1);
        assert!(kernel.is_symmetrized());
        assert_eq!(kernel.eval(&[1.0], &[3.0]), kernel.eval(&[3.0], &[1.0]));
        let symmetric = FnKernel::new(|x: &[f64], y: &[f64]| (x[0] - y[0]).abs(), 1);
        assert!(!symmetric.is_symmetrized());
    }

    #[test]
    fn hall_ratio_for_product_kernel() {
        let ratio = hall_diagnostic(&KernelMoments {
            gamma_sq: 1.0,
            h_sq: 1.0,
            h_fourth: 9.0,
            n: 100,
        })
        .unwrap();
        assert!((ratio - 1.09).abs() < 1e-12);
        let zero = KernelMoments {
            gamma_sq: 0.0,
            h_sq: 2.0,
            h_fourth: 0.0,
            n: 10,
        };
        assert_eq!(hall_diagnostic(&zero).unwrap(), 0.0);
        assert!(hall_diagnostic(&KernelMoments { h_sq: 0.0, ..zero }).is_err());
    }
}
