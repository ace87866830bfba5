//! Exponential tail bounds for normalized sums and U-statistics.
//!
//! For i.i.d. centered summands whose MGF satisfies `ln E e^{λξ} ≤ g*(C λ)`,
//! the normalized sum `S_n = n^{-1/2} Σ ξ_i` obeys
//!
//! ```text
//! max(P(S_n > t), P(S_n < -t)) ≤ exp(-n g(t / (C √n)))
//! P(|S_n| > t)                  ≤ 2 exp(-n g(t / (C √n)))
//! ```
//!
//! and `√n U_n` for a degree-`m` U-statistic obeys the same form with the
//! kernel generator `l` and a constant `C₃(m)`. The production path evaluates
//! `g` directly; [`chernoff_crosscheck`] recomputes the exponent as the
//! numerical Legendre transform of `ν_n(λ) = n g*(C λ / √n)`.
//!
//! All probability arithmetic stays in log space until the final `exp`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::conjugate::{conjugate, conjugate_at, default_lambda_grid, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::generators::{Growth, TailGenerator};
use crate::mgf::MgfSource;
use crate::numeric::fmt_sig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
    Bilateral,
}

impl Side {
    pub fn multiplier(self) -> f64 {
        match self {
            Side::Bilateral => 2.0,
            Side::Upper | Side::Lower => 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundQuery {
    generator: TailGenerator,
    constant: f64,
    n: u64,
    degree: u32,
    side: Side,
}

impl BoundQuery {
    /// `generator` plays `g` (sums) or `l` (U-statistics); `constant` plays
    /// `C₁` or `C₃(m)`.
    pub fn new(generator: TailGenerator, constant: f64, n: u64, degree: u32, side: Side) -> Result<Self> {
        generator.ensure_valid()?;
        if !(constant.is_finite() && constant > 0.0) {
            return Err(Error::invalid(format!("constant must be positive, got {constant}")));
        }
        if n == 0 {
            return Err(Error::invalid("sample size n must be at least 1"));
        }
        if degree == 0 {
            return Err(Error::invalid("degree must be at least 1"));
        }
        if n < degree as u64 {
            return Err(Error::invalid(format!(
                "sample size n = {n} is smaller than the degree m = {degree}"
            )));
        }
        Ok(BoundQuery {
            generator,
            constant,
            n,
            degree,
            side,
        })
    }

    pub fn sum(generator: TailGenerator, constant: f64, n: u64, side: Side) -> Result<Self> {
        Self::new(generator, constant, n, 1, side)
    }

    pub fn generator(&self) -> &TailGenerator {
        &self.generator
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn with_constant(&self, constant: f64) -> Result<Self> {
        Self::new(self.generator.clone(), constant, self.n, self.degree, self.side)
    }

    pub fn with_side(&self, side: Side) -> Self {
        BoundQuery { side, ..self.clone() }
    }

    /// `t / (C √n)`.
    fn scaled_argument(&self, t: f64) -> f64 {
        t / (self.constant * (self.n as f64).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Quadratic,
    Power,
    SaturatedAtOne,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Quadratic => "quadratic",
            Regime::Power => "power",
            Regime::SaturatedAtOne => "saturated_at_one",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub t: f64,
    /// `-n g(t/(C√n))`, before the side multiplier and clamp.
    pub log_bound_raw: f64,
    /// `min(0, ln(multiplier) + log_bound_raw)`.
    pub log_bound: f64,
    pub bound: f64,
    pub regime: Regime,
}

fn tail_bound(query: &BoundQuery, t: f64) -> Result<BoundResult> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("t must be positive and finite, got {t}")));
    }
    let s = query.scaled_argument(t);
    let gs = query.generator.evaluate(s).map_err(|e| match e {
        Error::Domain(msg) => Error::domain(format!("{msg}; enlarge domain_max of the generator")),
        other => other,
    })?;
    let log_bound_raw = -(query.n as f64) * gs;
    let shifted = log_bound_raw + query.side.multiplier().ln();
    let (log_bound, regime) = if shifted >= 0.0 {
        (0.0, Regime::SaturatedAtOne)
    } else {
        let regime = match query.generator.growth_at(s) {
            Growth::Quadratic => Regime::Quadratic,
            Growth::Power => Regime::Power,
        };
        (shifted, regime)
    };
    Ok(BoundResult {
        t,
        log_bound_raw,
        log_bound,
        bound: log_bound.exp(),
        regime,
    })
}

/// Bound for `S_n` (degree 1).
pub fn sum_tail_bound(query: &BoundQuery, t: f64) -> Result<BoundResult> {
    if query.degree != 1 {
        return Err(Error::invalid(format!(
            "sum bound needs degree 1, query has degree {}",
            query.degree
        )));
    }
    tail_bound(query, t)
}

/// Bound for `√n U_n`. With `m = 1` and the same constant this is the sum
/// bound, bit for bit.
pub fn ustat_tail_bound(query: &BoundQuery, t: f64) -> Result<BoundResult> {
    tail_bound(query, t)
}

/// Bound over a `t`-grid, in grid order.
pub fn bound_curve(query: &BoundQuery, t_grid: &[f64]) -> Result<Vec<BoundResult>> {
    t_grid.iter().map(|&t| tail_bound(query, t)).collect()
}

/// CSV with columns `t,log_bound_raw,bound,regime`.
pub fn write_curve_csv<W: Write>(curve: &[BoundResult], mut w: W) -> Result<()> {
    writeln!(w, "t,log_bound_raw,bound,regime")?;
    for r in curve {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_sig(r.t, 9),
            fmt_sig(r.log_bound_raw, 9),
            fmt_sig(r.bound, 9),
            r.regime.as_str()
        )?;
    }
    Ok(())
}

/// Smallest `t` whose bound (with the query's side multiplier) is at most `alpha`:
/// `t = C √n g⁻¹(ln(mult/α)/n)`.
pub fn invert_bound(query: &BoundQuery, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let y = (query.side.multiplier() / alpha).ln() / query.n as f64;
    let s = query.generator.inverse(y)?;
    Ok(query.constant * (query.n as f64).sqrt() * s)
}

/// `ν_n(λ) = n g*(C |λ| / √n)`.
pub fn nu_n(g: &TailGenerator, constant: f64, n: u64, lambda: f64) -> Result<f64> {
    if n == 0 || !(constant > 0.0) {
        return Err(Error::invalid("nu_n needs n ≥ 1 and a positive constant"));
    }
    let nf = n as f64;
    Ok(nf * conjugate_at(g, constant * lambda.abs() / nf.sqrt())?)
}

/// Both routes to the bound exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChernoffCheck {
    /// `n g(t/(C√n))`.
    pub direct: f64,
    /// `sup_λ (λ t − ν_n(λ))` over a tabulated conjugate.
    pub via_sup: f64,
    /// Allowed disagreement, `2·tol_interp` of the table.
    pub budget: f64,
    pub healthy: bool,
}

/// Recompute the exponent as `ν_n*(t)` and compare with direct evaluation.
pub fn chernoff_crosscheck(g: &TailGenerator, constant: f64, n: u64, t: f64) -> Result<ChernoffCheck> {
    if n == 0 || !(constant > 0.0) {
        return Err(Error::invalid("crosscheck needs n ≥ 1 and a positive constant"));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("t must be nonnegative, got {t}")));
    }
    let nf = n as f64;
    let root = nf.sqrt();
    let direct = nf * g.evaluate(t / (constant * root))?;

    let zs = default_lambda_grid(g, DEFAULT_NODES)?;
    let table = conjugate(g, &zs)?;
    let reach = *table.argmax_points().last().unwrap();
    if t / (constant * root) > reach {
        return Err(Error::domain(format!(
            "t/(C√n) = {} beyond the representable slope range {reach}",
            t / (constant * root)
        )));
    }
    // λ_i = √n z_i / C, so ν_n(λ_i) = n g*(z_i)
    let via_sup = table
        .lambda_grid()
        .iter()
        .zip(table.values())
        .map(|(&z, &gs)| (root * z / constant) * t - nf * gs)
        .fold(f64::NEG_INFINITY, f64::max);
    let budget = 2.0 * table.tol_interp();
    Ok(ChernoffCheck {
        direct,
        via_sup,
        budget,
        healthy: (direct - via_sup).abs() <= budget,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct CalibrationOptions {
    /// Relative resolution of the returned constant.
    pub tol: f64,
    /// Spacing of the `λ` lattice; fixed so enlarging the range only adds nodes.
    pub lambda_step: f64,
    pub lower_cap: f64,
    pub upper_cap: f64,
    /// Calibrate `ln E e^{λX} ≤ n g*(C λ / √n)`; `n = 1` is the plain envelope.
    pub n: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            tol: 1e-3,
            lambda_step: 1.0 / 128.0,
            lower_cap: 1e-9,
            upper_cap: 1e3,
            n: 1,
        }
    }
}

/// Calibrated constant and the range on which it is certified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub constant: f64,
    /// Certified on `[-lambda_range, lambda_range]`.
    pub lambda_range: f64,
    pub tol: f64,
    pub mgf_source: String,
    #[serde(default = "one")]
    pub n: u64,
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn one() -> u64 {
    1
}

/// Smallest `C` (to relative `tol`) with `ln E e^{λX} ≤ g*(C λ)` on a symmetric
/// grid over `[-Λ, Λ]`.
pub fn calibrate_constant(g: &TailGenerator, mgf: &MgfSource, lambda_range: f64, tol: f64) -> Result<Calibration> {
    calibrate_constant_with(
        g,
        mgf,
        lambda_range,
        &CalibrationOptions {
            tol,
            ..Default::default()
        },
    )
}

/// Candidates lie on the geometric lattice `lower_cap·(1+tol)^k`; the result
/// is the first lattice point that satisfies every node, so the returned `C`
/// is monotone in the set of nodes checked and `C/(1+tol)` always fails.
pub fn calibrate_constant_with(
    g: &TailGenerator,
    mgf: &MgfSource,
    lambda_range: f64,
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    g.ensure_valid()?;
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    if !(lambda_range.is_finite() && lambda_range >= opts.lambda_step) {
        return Err(Error::invalid(format!(
            "lambda_range must be at least the lattice step {}, got {lambda_range}",
            opts.lambda_step
        )));
    }
    if opts.n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let steps = (lambda_range / opts.lambda_step).floor() as i64;
    let effective_range = steps as f64 * opts.lambda_step;
    let nf = opts.n as f64;
    let root = nf.sqrt();

    let mut nodes = Vec::with_capacity(2 * steps as usize);
    for j in 1..=steps {
        let l = j as f64 * opts.lambda_step;
        for lam in [l, -l] {
            let v = mgf.log_mgf(lam)?;
            if !v.is_finite() {
                return Err(Error::invalid(format!("log-MGF is not finite at lambda = {lam}")));
            }
            nodes.push((l, v));
        }
    }

    let satisfied = |c: f64| -> Result<bool> {
        for &(l, v) in &nodes {
            if v > nf * conjugate_at(g, c * l / root)? {
                return Ok(false);
            }
        }
        Ok(true)
    };

    let ratio = 1.0 + opts.tol;
    let max_k = ((opts.upper_cap / opts.lower_cap).ln() / ratio.ln()).ceil() as i64;
    let at = |k: i64| opts.lower_cap * ratio.powi(k as i32);

    let mut warnings = Vec::new();
    if !satisfied(at(max_k))? {
        return Err(Error::CalibrationUnsatisfiable { cap: at(max_k) });
    }
    if satisfied(opts.lower_cap)? {
        warnings.push(format!(
            "log-MGF is dominated at the lower cap {}; the law looks degenerate",
            opts.lower_cap
        ));
        return Ok(Calibration {
            constant: opts.lower_cap,
            lambda_range: effective_range,
            tol: opts.tol,
            mgf_source: mgf.label(),
            n: opts.n,
            degenerate: true,
            warnings,
        });
    }
    // invariant: at(lo) fails, at(hi) holds
    let (mut lo, mut hi) = (0_i64, max_k);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if satisfied(at(mid))? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if mgf.is_degenerate() {
        warnings.push("law is a point mass at zero".into());
    }
    Ok(Calibration {
        constant: at(hi),
        lambda_range: effective_range,
        tol: opts.tol,
        mgf_source: mgf.label(),
        n: opts.n,
        degenerate: false,
        warnings,
    })
}
