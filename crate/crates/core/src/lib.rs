//! Exponential tail bounds for sums and U-statistics of i.i.d. variables with
//! a prescribed tail-generating function.
//!
//! A tail-generating function `g` (convex, nondecreasing, `g(0) = 0`,
//! superlinear) describes the tails `P(|ξ| > t) ≤ exp(-g(t))`. From it the
//! crate computes Legendre–Fenchel conjugates, the bounds
//! `P(|S_n| > t) ≤ 2 exp(-n g(t / (C √n)))` and their U-statistic analogue,
//! calibrates the constant `C` against a log-MGF, evaluates U-statistics
//! exactly, and checks the bounds by Monte Carlo.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod conjugate;
pub mod error;
pub mod generators;
pub mod mgf;
pub mod numeric;
pub mod simulate;
pub mod ustat;

pub use bounds::{
    bound_curve, calibrate_constant, calibrate_constant_with, chernoff_crosscheck, invert_bound, nu_n,
    sum_tail_bound, ustat_tail_bound, BoundQuery, BoundResult, Calibration, CalibrationOptions, ChernoffCheck,
    Regime, Side,
};
pub use conjugate::{biconjugate, conjugate, conjugate_at, conjugate_with, ConjugateOptions, ConjugateTable};
pub use error::{Error, Result};
pub use generators::{
    fit_from_samples, Fit, FitOptions, GeneratorKind, GeneratorSpec, TailGenerator, ValidationMode,
    ValidationOptions, ValidationReport, Violation,
};
pub use mgf::MgfSource;
pub use simulate::{
    dkw_epsilon, empirical_tail, run_sum_experiment, run_ustat_experiment, sample_extremal, ExperimentOptions,
    Family, SamplerSpec, TailReport,
};
pub use ustat::{
    binomial, decoupling_check, evaluate_ustat, exact_ustat_law, k_of, DecouplingLaw, DecouplingReport, FiniteLaw,
    Kernel, UStatSpec, UStatValue,
};
