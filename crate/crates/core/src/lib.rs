//! U-statistics under cross-sectional dependence.
//!
//! Index sets with an economic distance ([`index_space`]), sparsity counts
//! of index vectors ([`sparsity`]), β-mixing models and couplings
//! ([`mixing`]), U-statistic evaluation and Hoeffding decomposition
//! ([`ustat`]), normal-approximation bound evaluators ([`bounds`]), the
//! kernel-smoothing specification test ([`spec_test`]) and its Monte Carlo
//! harness ([`mc`], [`clt`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod clt;
pub mod error;
pub mod index_space;
pub mod io;
pub mod mc;
pub mod mixing;
pub mod rng;
pub mod sparsity;
pub mod ustat;

#[cfg(test)]
mod properties;

pub use bounds::{
    degenerate_bound, nondegenerate_bound, sweep_m, variance_condition, wasserstein1_empirical,
    wasserstein1_to_normal, BoundIngredients, BoundReport, BoundTerm, EtaInputs, TauInputs,
    VarianceCheck,
};
pub use clt::{clt_demo, CltConfig, CltErrors, CltRow, CltStatistic};
pub use error::{Error, Result};
pub use index_space::{Distance, IndexSpace, Representation};
pub use mc::{
    run_mc, simulate_dataset, table1_suite, DgpConfig, ErrorModel, McConfig, McResult, MeanModel,
    Table1, Table1Config,
};
pub use mixing::{beta_discrete, BerbeeCoupler, DiscreteJoint, GroupSize, MixingModel};
pub use sparsity::{m_profile, tau_bound, tau_exact, IndexVector, MProfile, TauTable};
pub use spec_test::{
    compute_statistic, fit_null, run_test, Bandwidth, RegressionData, SmoothingKernel,
    SpecTestConfig, SpecTestResult,
};
pub use ustat::{evaluate, hoeffding_decompose, Sample, UKernel, UStatistic};
