//! Tail-generating functions `g` with `P(|ξ| > t) ≤ exp(-g(t))`.
//!
//! A [`TailGenerator`] is convex, nondecreasing, vanishes at the origin and
//! grows faster than linearly. The same type plays the role of `l` when it
//! describes the tail of a U-statistic kernel.
//!
//! Closed-form kinds evaluate at every `t ≥ 0`; `domain_max` only sizes the
//! grids used by the conjugate machinery. Tabulated generators are defined on
//! `[0, domain_max]` and refuse to extrapolate unless a power-law extension
//! was requested explicitly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::bisect_leftmost;

/// Grid extent used for closed-form generators when none is given.
pub const DEFAULT_DOMAIN_MAX: f64 = 8.0;

/// Number of uniform probes used when validating closed-form generators.
pub const DEFAULT_PROBES: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// All conditions including `g'(0) = 0` and `g''(0) ∈ (0, ∞)`.
    Strict,
    /// Skips the two conditions at the origin.
    Relaxed,
}

#[derive(Clone, Copy, Debug)]
pub struct ValidationOptions {
    pub mode: ValidationMode,
    /// Acceptance window `(eps, 1/eps)` for the finite-difference `g''(0)`.
    pub eps: f64,
    /// Tolerance for `|g'(0)|`, scaled by `max(1, g''(0))`.
    pub slope_tol: f64,
    /// Relative tolerance for second differences and monotonicity.
    pub tol_convex: f64,
    pub probes: usize,
}

impl ValidationOptions {
    pub fn strict() -> Self {
        ValidationOptions {
            mode: ValidationMode::Strict,
            eps: 1e-6,
            slope_tol: 1e-6,
            tol_convex: 1e-9,
            probes: DEFAULT_PROBES,
        }
    }

    pub fn relaxed() -> Self {
        ValidationOptions {
            mode: ValidationMode::Relaxed,
            ..Self::strict()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: String,
    pub witness: f64,
    pub measured: f64,
}

/// Outcome of checking a generator against its shape conditions.
/// `passed` is true iff `violations` is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub mode: ValidationMode,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(mode: ValidationMode, violations: Vec<Violation>) -> Self {
        ValidationReport {
            passed: violations.is_empty(),
            mode,
            violations,
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed {
            return write!(f, "passed ({:?})", self.mode);
        }
        write!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            write!(f, " [{} at t={} measured {}]", v.condition, v.witness, v.measured)?;
        }
        Ok(())
    }
}

/// Power-law continuation `g(t) = g(D)·(t/D)^exponent` for `t > D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerTail {
    /// Least-squares exponent over the last decade of nodes.
    pub fitted_exponent: f64,
    /// Exponent actually used; raised if needed so the junction stays convex.
    pub exponent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    grid: Vec<f64>,
    values: Vec<f64>,
    extension: Option<PowerTail>,
}

impl Table {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn extension(&self) -> Option<PowerTail> {
        self.extension
    }

    fn last(&self) -> (f64, f64) {
        let n = self.grid.len();
        (self.grid[n - 1], self.values[n - 1])
    }

    fn segment_slope(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / (self.grid[i + 1] - self.grid[i])
    }

    fn evaluate(&self, t: f64) -> Result<f64> {
        let (d, gd) = self.last();
        if t > d {
            return match self.extension {
                Some(ext) => Ok(gd * (t / d).powf(ext.exponent)),
                None => Err(Error::domain(format!(
                    "t = {t} beyond tabulated domain_max = {d}"
                ))),
            };
        }
        // first node strictly greater than t
        let j = self.grid.partition_point(|&x| x <= t);
        if j == 0 {
            return Ok(self.values[0]);
        }
        let i = j - 1;
        if self.grid[i] == t || i + 1 == self.grid.len() {
            return Ok(self.values[i]);
        }
        let w = (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        Ok(self.values[i] + w * (self.values[i + 1] - self.values[i]))
    }

    fn right_derivative(&self, t: f64) -> f64 {
        let (d, gd) = self.last();
        if t >= d {
            return match self.extension {
                Some(ext) => ext.exponent * gd / d * (t / d).powf(ext.exponent - 1.0),
                None => f64::INFINITY,
            };
        }
        let j = self.grid.partition_point(|&x| x <= t);
        self.segment_slope(j.max(1) - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorKind {
    /// `g(t) = a t²`.
    Quadratic { a: f64 },
    /// `g(t) = t²` for `t ≤ t0`, `a t^m + b` beyond, with `C¹` splice at `t0`.
    RegularizedPower { m: f64, t0: f64, a: f64, b: f64 },
    /// Piecewise-linear interpolation of node values.
    Tabulated(Table),
    /// `factor × inner(t)`.
    Scaled { inner: Box<TailGenerator>, factor: f64 },
}

/// Local growth of `g` at a point, used to label bound regimes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Growth {
    Quadratic,
    Power,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailGenerator {
    kind: GeneratorKind,
    domain_max: f64,
    validation: ValidationReport,
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be a positive finite real, got {x}")))
    }
}

impl TailGenerator {
    fn build(kind: GeneratorKind, domain_max: f64, opts: &ValidationOptions) -> Self {
        let mut g = TailGenerator {
            kind,
            domain_max,
            validation: ValidationReport::from_violations(opts.mode, Vec::new()),
        };
        g.validation = g.validate(opts);
        g
    }

    /// `g(t) = a t²` on the default grid extent.
    pub fn quadratic(a: f64) -> Result<Self> {
        Self::quadratic_on(a, DEFAULT_DOMAIN_MAX)
    }

    pub fn quadratic_on(a: f64, domain_max: f64) -> Result<Self> {
        check_positive("a", a)?;
        check_positive("domain_max", domain_max)?;
        Ok(Self::build(
            GeneratorKind::Quadratic { a },
            domain_max,
            &ValidationOptions::strict(),
        ))
    }

    /// Splice `t²` below `t0` with `a t^m + b` above, matching value and slope at `t0`.
    ///
    /// Slope continuity gives `a = 2 t0^(2-m) / m`; value continuity gives
    /// `b = t0² (1 - 2/m)`. The result must pass strict validation.
    pub fn regularized_power(m: f64, t0: f64) -> Result<Self> {
        Self::regularized_power_on(m, t0, DEFAULT_DOMAIN_MAX.max(4.0 * t0))
    }

    pub fn regularized_power_on(m: f64, t0: f64, domain_max: f64) -> Result<Self> {
        if !(m.is_finite() && m > 1.0) {
            return Err(Error::invalid(format!(
                "exponent m must exceed 1 for superlinear growth, got {m}"
            )));
        }
        check_positive("t0", t0)?;
        check_positive("domain_max", domain_max)?;
        let a = 2.0 * t0.powf(2.0 - m) / m;
        let b = t0 * t0 * (1.0 - 2.0 / m);
        if !(a.is_finite() && a >= 0.0 && b.is_finite()) {
            return Err(Error::invalid(format!(
                "splice at t0 = {t0} with m = {m} gives a = {a}, b = {b}; not a convex splice"
            )));
        }
        let g = Self::build(
            GeneratorKind::RegularizedPower { m, t0, a, b },
            domain_max,
            &ValidationOptions::strict(),
        );
        if !g.validation.passed {
            return Err(Error::Validation(g.validation));
        }
        Ok(g)
    }

    /// Piecewise-linear generator through `(grid[i], values[i])`; `grid[0]` must be 0.
    /// Validated in relaxed mode.
    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::tabulated_with(grid, values, &ValidationOptions::relaxed())
    }

    pub fn tabulated_with(grid: Vec<f64>, values: Vec<f64>, opts: &ValidationOptions) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::invalid(format!(
                "grid has {} nodes but values has {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::invalid("tabulated generator needs at least two nodes"));
        }
        if grid[0] != 0.0 {
            return Err(Error::invalid(format!("grid must start at 0, got {}", grid[0])));
        }
        if grid.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::invalid("grid and values must be finite"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        if let Some(v) = values.iter().find(|&&v| v < 0.0) {
            return Err(Error::invalid(format!("values must be nonnegative, got {v}")));
        }
        let domain_max = grid[grid.len() - 1];
        Ok(Self::build(
            GeneratorKind::Tabulated(Table {
                grid,
                values,
                extension: None,
            }),
            domain_max,
            opts,
        ))
    }

    /// `factor × inner`.
    pub fn scaled(inner: TailGenerator, factor: f64) -> Result<Self> {
        check_positive("factor", factor)?;
        let opts = ValidationOptions {
            mode: inner.validation.mode,
            ..ValidationOptions::strict()
        };
        let domain_max = inner.domain_max;
        Ok(Self::build(
            GeneratorKind::Scaled {
                inner: Box::new(inner),
                factor,
            },
            domain_max,
            &opts,
        ))
    }

    /// Resize the grid extent of a closed-form generator.
    pub fn with_domain_max(self, domain_max: f64) -> Result<Self> {
        check_positive("domain_max", domain_max)?;
        let opts = self.options_for_revalidation();
        let kind = match self.kind {
            GeneratorKind::Tabulated(_) => {
                return Err(Error::invalid(
                    "domain_max of a tabulated generator is its last node",
                ))
            }
            GeneratorKind::Scaled { inner, factor } => GeneratorKind::Scaled {
                inner: Box::new(inner.with_domain_max(domain_max)?),
                factor,
            },
            k => k,
        };
        Ok(Self::build(kind, domain_max, &opts))
    }

    /// Opt into a power-law continuation past the last node of a tabulated generator.
    ///
    /// The exponent is a least-squares fit of `ln g` against `ln t` on nodes in
    /// `[domain_max/10, domain_max]`, raised if necessary so that the
    /// continuation's slope at the junction is at least the last segment's slope.
    pub fn with_power_extension(self) -> Result<Self> {
        let opts = self.options_for_revalidation();
        let GeneratorKind::Tabulated(mut table) = self.kind else {
            return Err(Error::invalid("power extension applies to tabulated generators only"));
        };
        let (d, gd) = table.last();
        let pts: Vec<(f64, f64)> = table
            .grid
            .iter()
            .zip(&table.values)
            .filter(|(&t, &v)| t >= d / 10.0 && t > 0.0 && v > 0.0)
            .map(|(&t, &v)| (t.ln(), v.ln()))
            .collect();
        if pts.len() < 2 {
            return Err(Error::invalid(
                "power extension needs two positive nodes in the last decade",
            ));
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let fitted = sxy / sxx;
        if !(fitted.is_finite() && fitted > 1.0) {
            return Err(Error::invalid(format!(
                "fitted tail exponent {fitted} is not superlinear"
            )));
        }
        let last_slope = table.segment_slope(table.grid.len() - 2);
        let exponent = fitted.max(last_slope * d / gd);
        table.extension = Some(PowerTail {
            fitted_exponent: fitted,
            exponent,
        });
        Ok(Self::build(GeneratorKind::Tabulated(table), self.domain_max, &opts))
    }

    fn options_for_revalidation(&self) -> ValidationOptions {
        match self.validation.mode {
            ValidationMode::Strict => ValidationOptions::strict(),
            ValidationMode::Relaxed => ValidationOptions::relaxed(),
        }
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    pub fn domain_max(&self) -> f64 {
        self.domain_max
    }

    pub fn validation(&self) -> &ValidationReport {
        &self.validation
    }

    /// Error unless the stored validation passed.
    pub fn ensure_valid(&self) -> Result<()> {
        if self.validation.passed {
            Ok(())
        } else {
            Err(Error::Validation(self.validation.clone()))
        }
    }

    /// True when evaluation stops at `domain_max`.
    pub fn is_bounded(&self) -> bool {
        match &self.kind {
            GeneratorKind::Tabulated(t) => t.extension.is_none(),
            GeneratorKind::Scaled { inner, .. } => inner.is_bounded(),
            _ => false,
        }
    }

    /// The nodes of the underlying table, if any. Piecewise-linear data is
    /// conjugated exactly on its own nodes.
    pub fn natural_grid(&self) -> Option<&[f64]> {
        match &self.kind {
            GeneratorKind::Tabulated(t) => Some(&t.grid),
            GeneratorKind::Scaled { inner, .. } => inner.natural_grid(),
            _ => None,
        }
    }

    /// `g(t)`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("t must be nonnegative, got {t}")));
        }
        match &self.kind {
            GeneratorKind::Quadratic { a } => Ok(a * t * t),
            GeneratorKind::RegularizedPower { m, t0, a, b } => {
                if t <= *t0 {
                    Ok(t * t)
                } else {
                    Ok(a * t.powf(*m) + b)
                }
            }
            GeneratorKind::Tabulated(table) => table.evaluate(t),
            GeneratorKind::Scaled { inner, factor } => Ok(factor * inner.evaluate(t)?),
        }
    }

    /// Right derivative `g'(t+)`; `+∞` past the end of a bounded domain.
    pub fn right_derivative(&self, t: f64) -> f64 {
        match &self.kind {
            GeneratorKind::Quadratic { a } => 2.0 * a * t,
            GeneratorKind::RegularizedPower { m, t0, a, .. } => {
                if t < *t0 {
                    2.0 * t
                } else {
                    a * m * t.powf(m - 1.0)
                }
            }
            GeneratorKind::Tabulated(table) => table.right_derivative(t),
            GeneratorKind::Scaled { inner, factor } => factor * inner.right_derivative(t),
        }
    }

    /// Smallest `t` with `g(t) ≥ y`.
    ///
    /// Closed-form kinds invert analytically and accept any finite `y`.
    /// Tables bisect until the bracket stops shrinking in floating point,
    /// well inside `1e-10·max(1, domain_max)`; bounded tables reject
    /// `y > g(domain_max)`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) || y.is_infinite() {
            return Err(Error::invalid(format!("y must be a nonnegative finite real, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            GeneratorKind::Quadratic { a } => return Ok((y / a).sqrt()),
            GeneratorKind::RegularizedPower { m, t0, a, b } => {
                return Ok(if y <= t0 * t0 {
                    y.sqrt()
                } else {
                    ((y - b) / a).powf(1.0 / m)
                });
            }
            GeneratorKind::Scaled { inner, factor } => return inner.inverse(y / factor),
            GeneratorKind::Tabulated(_) => {}
        }
        let hi = if self.is_bounded() {
            let top = self.evaluate(self.domain_max)?;
            if y > top {
                return Err(Error::domain(format!(
                    "y = {y} exceeds g(domain_max) = {top}"
                )));
            }
            self.domain_max
        } else {
            let mut hi = self.domain_max;
            while self.evaluate(hi)? < y {
                hi *= 2.0;
                if !hi.is_finite() {
                    return Err(Error::domain(format!("no finite t reaches g(t) = {y}")));
                }
            }
            hi
        };
        Ok(bisect_leftmost(0.0, hi, |t| {
            self.evaluate(t).map(|v| v >= y).unwrap_or(true)
        }))
    }

    pub(crate) fn growth_at(&self, s: f64) -> Growth {
        match &self.kind {
            GeneratorKind::Quadratic { .. } => Growth::Quadratic,
            GeneratorKind::RegularizedPower { t0, .. } => {
                if s <= *t0 {
                    Growth::Quadratic
                } else {
                    Growth::Power
                }
            }
            GeneratorKind::Scaled { inner, .. } => inner.growth_at(s),
            GeneratorKind::Tabulated(_) => {
                let v = self.evaluate(s).unwrap_or(f64::INFINITY);
                if v <= 0.0 || !v.is_finite() {
                    return Growth::Quadratic;
                }
                let elasticity = s * self.right_derivative(s) / v;
                if elasticity <= 2.0 + 1e-9 {
                    Growth::Quadratic
                } else {
                    Growth::Power
                }
            }
        }
    }

    fn probe_points(&self, probes: usize) -> Vec<f64> {
        if let Some(grid) = self.natural_grid() {
            return grid.to_vec();
        }
        let n = probes.max(3);
        let h = self.domain_max / (n - 1) as f64;
        (0..n).map(|i| i as f64 * h).collect()
    }

    fn origin_step(&self) -> f64 {
        let t0 = match &self.kind {
            GeneratorKind::RegularizedPower { t0, .. } => *t0,
            GeneratorKind::Scaled { inner, .. } => match inner.kind {
                GeneratorKind::RegularizedPower { t0, .. } => t0,
                _ => 1.0,
            },
            _ => 1.0,
        };
        1e-4 * t0.max(1.0)
    }

    /// Check the shape conditions on a probe set.
    pub fn validate(&self, opts: &ValidationOptions) -> ValidationReport {
        const MAX_VIOLATIONS: usize = 32;
        let mut out: Vec<Violation> = Vec::new();
        let push = |out: &mut Vec<Violation>, condition: &str, witness: f64, measured: f64| {
            if out.len() < MAX_VIOLATIONS {
                out.push(Violation {
                    condition: condition.to_string(),
                    witness,
                    measured,
                });
            }
        };

        let ts = self.probe_points(opts.probes);
        let vs: Vec<f64> = ts
            .iter()
            .map(|&t| self.evaluate(t).unwrap_or(f64::NAN))
            .collect();

        if vs[0] != 0.0 {
            push(&mut out, "g(0)=0", 0.0, vs[0]);
        }
        for (&t, &v) in ts.iter().zip(&vs) {
            if !v.is_finite() {
                push(&mut out, "finite", t, v);
            } else if v < 0.0 {
                push(&mut out, "nonnegative", t, v);
            }
        }
        for i in 0..ts.len() - 1 {
            let scale = vs[i].abs().max(vs[i + 1].abs()).max(1.0);
            if vs[i + 1] < vs[i] - opts.tol_convex * scale {
                push(&mut out, "nondecreasing", ts[i + 1], vs[i + 1] - vs[i]);
            }
        }
        for i in 0..ts.len().saturating_sub(2) {
            let s0 = (vs[i + 1] - vs[i]) / (ts[i + 1] - ts[i]);
            let s1 = (vs[i + 2] - vs[i + 1]) / (ts[i + 2] - ts[i + 1]);
            let d2 = (s1 - s0) * 0.5 * (ts[i + 2] - ts[i]);
            let scale = vs[i].abs().max(vs[i + 1].abs()).max(vs[i + 2].abs()).max(1.0);
            if d2 < -opts.tol_convex * scale {
                push(&mut out, "convex", ts[i + 1], d2);
            }
        }

        let d = self.domain_max;
        let gd = self.evaluate(d).unwrap_or(f64::NAN);
        let gh = self.evaluate(d / 2.0).unwrap_or(f64::NAN);
        let ratio_full = gd / d;
        let ratio_half = gh / (d / 2.0);
        if !(ratio_full > ratio_half) {
            push(&mut out, "superlinear", d, ratio_full - ratio_half);
        }

        if opts.mode == ValidationMode::Strict {
            let h = self.origin_step();
            let g0 = vs[0];
            let g1 = self.evaluate(h).unwrap_or(f64::NAN);
            let g2 = self.evaluate(2.0 * h).unwrap_or(f64::NAN);
            let curvature = 2.0 * (g1 - g0) / (h * h);
            let slope = (-3.0 * g0 + 4.0 * g1 - g2) / (2.0 * h);
            if !(slope.abs() <= opts.slope_tol * curvature.abs().max(1.0)) {
                push(&mut out, "g'(0)=0", 0.0, slope);
            }
            if !(curvature > opts.eps && curvature < 1.0 / opts.eps) {
                push(&mut out, "g''(0) in (0,inf)", 0.0, curvature);
            }
        }

        ValidationReport::from_violations(opts.mode, out)
    }
}

/// JSON document form of a generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Quadratic {
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain_max: Option<f64>,
    },
    RegularizedPower {
        m: f64,
        t0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain_max: Option<f64>,
    },
    Tabulated {
        grid: Vec<f64>,
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        power_extension: bool,
    },
    Scaled {
        inner: Box<GeneratorSpec>,
        factor: f64,
    },
}

impl TryFrom<GeneratorSpec> for TailGenerator {
    type Error = Error;

    fn try_from(spec: GeneratorSpec) -> Result<Self> {
        match spec {
            GeneratorSpec::Quadratic { a, domain_max } => {
                TailGenerator::quadratic_on(a, domain_max.unwrap_or(DEFAULT_DOMAIN_MAX))
            }
            GeneratorSpec::RegularizedPower { m, t0, domain_max } => match domain_max {
                Some(d) => TailGenerator::regularized_power_on(m, t0, d),
                None => TailGenerator::regularized_power(m, t0),
            },
            GeneratorSpec::Tabulated {
                grid,
                values,
                power_extension,
            } => {
                let g = TailGenerator::tabulated(grid, values)?;
                if power_extension {
                    g.with_power_extension()
                } else {
                    Ok(g)
                }
            }
            GeneratorSpec::Scaled { inner, factor } => {
                TailGenerator::scaled(TailGenerator::try_from(*inner)?, factor)
            }
        }
    }
}

impl From<&TailGenerator> for GeneratorSpec {
    fn from(g: &TailGenerator) -> Self {
        match &g.kind {
            GeneratorKind::Quadratic { a } => GeneratorSpec::Quadratic {
                a: *a,
                domain_max: Some(g.domain_max),
            },
            GeneratorKind::RegularizedPower { m, t0, .. } => GeneratorSpec::RegularizedPower {
                m: *m,
                t0: *t0,
                domain_max: Some(g.domain_max),
            },
            GeneratorKind::Tabulated(t) => GeneratorSpec::Tabulated {
                grid: t.grid.clone(),
                values: t.values.clone(),
                power_extension: t.extension.is_some(),
            },
            GeneratorKind::Scaled { inner, factor } => GeneratorSpec::Scaled {
                inner: Box::new(GeneratorSpec::from(inner.as_ref())),
                factor: *factor,
            },
        }
    }
}

impl Serialize for TailGenerator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GeneratorSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TailGenerator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = GeneratorSpec::deserialize(d)?;
        TailGenerator::try_from(spec).map_err(serde::de::Error::custom)
    }
}

impl TailGenerator {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("generator serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: GeneratorSpec = serde_json::from_str(s)?;
        TailGenerator::try_from(spec)
    }
}

/// Result of [`fit_from_samples`].
#[derive(Clone, Debug)]
pub struct Fit {
    pub generator: TailGenerator,
    /// Nodes kept in the fit (0 first).
    pub grid: Vec<f64>,
    /// `-ln T̂(t)` before convex regularization.
    pub raw_values: Vec<f64>,
    /// Empirical two-sided tail at each kept node.
    pub empirical_tail: Vec<f64>,
    /// Nodes dropped because no sample exceeded them.
    pub dropped: Vec<f64>,
    pub dkw_epsilon: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub min_samples: usize,
    /// Confidence parameter of the reported DKW band.
    pub delta: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_samples: 1000,
            delta: 0.01,
        }
    }
}

/// Fit a tabulated generator to the two-sided empirical tail of `samples`.
///
/// Raw node values are `-ln T̂(t)`; the returned generator is their greatest
/// convex minorant, so `exp(-g(t_i)) ≥ T̂(t_i)` at every kept node.
pub fn fit_from_samples(samples: &[f64], grid: &[f64]) -> Result<Fit> {
    fit_from_samples_with(samples, grid, &FitOptions::default())
}

pub fn fit_from_samples_with(samples: &[f64], grid: &[f64], opts: &FitOptions) -> Result<Fit> {
    if samples.len() < opts.min_samples {
        return Err(Error::invalid(format!(
            "need at least {} samples, got {}",
            opts.min_samples,
            samples.len()
        )));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("fit grid must be nonnegative and strictly increasing"));
    }
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    if abs.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("samples contain NaN"));
    }
    abs.sort_by(f64::total_cmp);
    let n = abs.len() as f64;

    let mut nodes = Vec::with_capacity(grid.len() + 1);
    if grid.first() != Some(&0.0) {
        nodes.push(0.0);
    }
    nodes.extend_from_slice(grid);

    let mut kept = Vec::new();
    let mut raw = Vec::new();
    let mut tail = Vec::new();
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();
    for &t in &nodes {
        let above = abs.len() - abs.partition_point(|&x| x <= t);
        let p = above as f64 / n;
        if t == 0.0 {
            kept.push(0.0);
            raw.push(-p.ln());
            tail.push(p);
        } else if above == 0 {
            dropped.push(t);
        } else {
            kept.push(t);
            raw.push(-p.ln());
            tail.push(p);
        }
    }
    if !dropped.is_empty() {
        warnings.push(format!(
            "dropped {} node(s) with empty empirical tail, first at t = {}",
            dropped.len(),
            dropped[0]
        ));
    }
    if kept.len() < 2 {
        return Err(Error::invalid("fewer than two grid nodes have a nonzero empirical tail"));
    }

    // g(0) = 0 by definition; the origin anchors the minorant.
    let mut anchored = raw.clone();
    anchored[0] = 0.0;
    let values = greatest_convex_minorant(&kept, &anchored);
    let generator = TailGenerator::tabulated(kept.clone(), values)?;
    let dkw_epsilon = ((2.0 / opts.delta).ln() / (2.0 * n)).sqrt();
    Ok(Fit {
        generator,
        grid: kept,
        raw_values: raw,
        empirical_tail: tail,
        dropped,
        dkw_epsilon,
        warnings,
    })
}

/// Lower convex hull of `(xs[i], ys[i])` evaluated back at `xs`.
pub(crate) fn greatest_convex_minorant(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b if it lies on or above the chord a→i
            let cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = Vec::with_capacity(xs.len());
    let mut seg = 0;
    for i in 0..xs.len() {
        while seg + 1 < hull.len() && hull[seg + 1] <= i {
            seg += 1;
        }
        if hull[seg] == i {
            out.push(ys[i]);
            continue;
        }
        let (a, b) = (hull[seg], hull[seg + 1]);
        let w = (xs[i] - xs[a]) / (xs[b] - xs[a]);
        // rounding must not lift the minorant above the data
        out.push((ys[a] + w * (ys[b] - ys[a])).min(ys[i]));
    }
    out
}
