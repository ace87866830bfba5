//! Monte Carlo harness: reference samplers, empirical tails with DKW bands,
//! and dominance reports against the tail bounds.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), a counter-based
//! stream cipher generator. Replicate `i` of a run with seed `s` reads stream
//! `i` of the generator keyed by `s`, so results do not depend on how
//! replicates are scheduled across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{bound_curve, BoundQuery, Calibration, Side};
use crate::error::{Error, Result};
use crate::generators::TailGenerator;
use crate::mgf::MgfSource;
use crate::numeric::{exact_sum, fmt_sig};
use crate::ustat::{evaluate_ustat, UStatSpec};

/// Smallest replicate count accepted by the experiment runners.
pub const MIN_REPLICATES: usize = 10_000;

/// Largest tolerated fraction of extremal draws that fall past a bounded domain.
pub const MAX_EXHAUSTION_RATE: f64 = 1e-6;

pub const DEFAULT_DELTA: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Gaussian { sigma: f64 },
    Rademacher,
    /// `P(|ξ| > t) = exp(-g(t))` with a fair random sign.
    Extremal { generator: TailGenerator },
    /// Uniform on `[-a, a]`.
    UniformCentered { a: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub family: Family,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn new(family: Family, seed: u64) -> Result<Self> {
        match &family {
            Family::Gaussian { sigma } if !(sigma.is_finite() && *sigma > 0.0) => {
                return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
            }
            Family::UniformCentered { a } if !(a.is_finite() && *a > 0.0) => {
                return Err(Error::invalid(format!("a must be positive, got {a}")));
            }
            Family::Extremal { generator } => generator.ensure_valid()?,
            _ => {}
        }
        Ok(SamplerSpec { family, seed })
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        SamplerSpec {
            family: Family::Gaussian { sigma },
            seed,
        }
    }

    pub fn rademacher(seed: u64) -> Self {
        SamplerSpec {
            family: Family::Rademacher,
            seed,
        }
    }

    pub fn extremal(generator: TailGenerator, seed: u64) -> Result<Self> {
        Self::new(Family::Extremal { generator }, seed)
    }

    pub fn uniform_centered(a: f64, seed: u64) -> Self {
        SamplerSpec {
            family: Family::UniformCentered { a },
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SamplerSpec {
            family: self.family.clone(),
            seed,
        }
    }

    /// Draws are bounded in absolute value.
    pub fn is_bounded(&self) -> bool {
        match &self.family {
            Family::Rademacher | Family::UniformCentered { .. } => true,
            Family::Extremal { generator } => generator.is_bounded(),
            Family::Gaussian { .. } => false,
        }
    }

    /// The log-MGF of one draw, for calibration.
    pub fn mgf_source(&self) -> MgfSource {
        match &self.family {
            Family::Gaussian { sigma } => MgfSource::Gaussian { sigma: *sigma },
            Family::Rademacher => MgfSource::Rademacher,
            Family::Extremal { generator } => MgfSource::Extremal {
                generator: generator.clone(),
            },
            Family::UniformCentered { a } => MgfSource::UniformCentered { a: *a },
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// `count` draws from stream `stream`.
    pub fn draw_stream(&self, stream: u64, count: usize) -> Result<Vec<f64>> {
        let mut rng = self.rng(stream);
        let mut out = Vec::with_capacity(count);
        let mut tally = Exhaustion::default();
        self.fill(&mut rng, count, &mut out, &mut tally)?;
        tally.check()?;
        Ok(out)
    }

    fn fill(&self, rng: &mut ChaCha8Rng, count: usize, out: &mut Vec<f64>, tally: &mut Exhaustion) -> Result<()> {
        match &self.family {
            Family::Gaussian { sigma } => {
                out.extend((0..count).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)));
            }
            Family::Rademacher => {
                out.extend((0..count).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }));
            }
            Family::UniformCentered { a } => {
                out.extend((0..count).map(|_| rng.random_range(-*a..=*a)));
            }
            Family::Extremal { generator } => {
                let top = if generator.is_bounded() {
                    generator.evaluate(generator.domain_max())?
                } else {
                    f64::INFINITY
                };
                for _ in 0..count {
                    loop {
                        tally.attempts += 1;
                        // 1 − [0,1) lies in (0,1], so the level is finite
                        let u = 1.0 - rng.random::<f64>();
                        let level = -u.ln();
                        if level > top {
                            tally.exhausted += 1;
                            continue;
                        }
                        let mag = generator.inverse(level)?;
                        out.push(if rng.random::<bool>() { mag } else { -mag });
                        break;
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Exhaustion {
    attempts: u64,
    exhausted: u64,
}

impl Exhaustion {
    fn merge(self, other: Exhaustion) -> Exhaustion {
        Exhaustion {
            attempts: self.attempts + other.attempts,
            exhausted: self.exhausted + other.exhausted,
        }
    }

    fn check(&self) -> Result<()> {
        if self.exhausted > 0 && self.exhausted as f64 > MAX_EXHAUSTION_RATE * self.attempts as f64 {
            return Err(Error::domain(format!(
                "{} of {} extremal draws fell past the generator's domain; enlarge domain_max",
                self.exhausted, self.attempts
            )));
        }
        Ok(())
    }
}

/// Magnitude `g⁻¹(−ln u)` of the extremal law for a uniform level `u ∈ (0, 1]`.
pub fn extremal_magnitude(g: &TailGenerator, u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::invalid(format!("u must lie in (0, 1], got {u}")));
    }
    g.inverse(-u.ln())
}

/// `count` symmetric draws with `P(|ξ| > t) = exp(-g(t))`.
pub fn sample_extremal(g: &TailGenerator, count: usize, seed: u64) -> Result<Vec<f64>> {
    SamplerSpec::extremal(g.clone(), seed)?.draw_stream(0, count)
}

/// Fraction of samples with `|x| > t` at each node.
pub fn empirical_tail(samples: &[f64], t_grid: &[f64]) -> Result<Vec<f64>> {
    let abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    upper_tail(&abs, t_grid)
}

/// Fraction of samples with `x > t` at each node.
pub fn upper_tail(samples: &[f64], t_grid: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::invalid("empirical tail of an empty sample"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("sample contains NaN"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(t_grid
        .iter()
        .map(|&t| (sorted.len() - sorted.partition_point(|&x| x <= t)) as f64 / n)
        .collect())
}

/// Dvoretzky–Kiefer–Wolfowitz half-width `sqrt(ln(2/δ) / (2N))`.
pub fn dkw_epsilon(replicates: usize, delta: f64) -> Result<f64> {
    if replicates == 0 {
        return Err(Error::invalid("replicates must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(((2.0 / delta).ln() / (2.0 * replicates as f64)).sqrt())
}

#[derive(Clone, Debug)]
pub struct ExperimentOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Nodes with `bound < resolution / N` are marked unresolvable.
    pub resolution: f64,
    /// Recorded in the report for reproducibility.
    pub calibration: Option<Calibration>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            threads: None,
            resolution: 1.0,
            calibration: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `n^{-1/2} Σ ξ_i`.
    Sum,
    /// `√n U_n`.
    Ustat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub statistic: Statistic,
    pub side: Side,
    pub n: u64,
    pub degree: u32,
    pub sampler: SamplerSpec,
    pub seed: u64,
    pub replicates: usize,
    pub delta: f64,
    pub dkw_epsilon: f64,
    pub constant: f64,
    pub calibration: Option<Calibration>,
    pub t_grid: Vec<f64>,
    pub empirical: Vec<f64>,
    pub bound: Vec<f64>,
    /// `empirical ≤ bound + dkw_epsilon`.
    pub dominance: Vec<bool>,
    /// `bound ≥ resolution / N`; dominance at other nodes confirms nothing.
    pub resolvable: Vec<bool>,
    /// `ln(empirical / bound)`, absent where the empirical tail is 0.
    pub log_ratio: Vec<Option<f64>>,
    pub overall: bool,
}

impl TailReport {
    pub fn violations(&self) -> Vec<usize> {
        (0..self.t_grid.len()).filter(|&i| !self.dominance[i]).collect()
    }

    /// Dominance at every resolvable node.
    pub fn dominates_where_resolvable(&self) -> bool {
        self.dominance
            .iter()
            .zip(&self.resolvable)
            .all(|(&d, &r)| d || !r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV with `#` metadata lines, then `t,empirical,dkw_epsilon,bound,dominance`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# statistic={}", serde_json::to_string(&self.statistic)?.trim_matches('"'))?;
        writeln!(w, "# sampler={}", serde_json::to_string(&self.sampler)?)?;
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# replicates={}", self.replicates)?;
        writeln!(w, "# delta={}", self.delta)?;
        writeln!(w, "# n={} degree={}", self.n, self.degree)?;
        writeln!(w, "# constant={}", self.constant)?;
        if let Some(c) = &self.calibration {
            writeln!(w, "# calibration={}", serde_json::to_string(c)?)?;
        }
        writeln!(w, "t,empirical,dkw_epsilon,bound,dominance")?;
        for i in 0..self.t_grid.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_sig(self.t_grid[i], 9),
                fmt_sig(self.empirical[i], 9),
                fmt_sig(self.dkw_epsilon, 9),
                fmt_sig(self.bound[i], 9),
                self.dominance[i]
            )?;
        }
        Ok(())
    }
}

fn check_common(replicates: usize, t_grid: &[f64], delta: f64) -> Result<f64> {
    if replicates < MIN_REPLICATES {
        return Err(Error::invalid(format!(
            "at least {MIN_REPLICATES} replicates are required, got {replicates}"
        )));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::invalid("t_grid must be a nonempty list of positive reals"));
    }
    dkw_epsilon(replicates, delta)
}

/// Map replicates in parallel and collect them in replicate order.
fn run_replicates<F>(replicates: usize, threads: Option<usize>, f: F) -> Result<Vec<f64>>
where
    F: Fn(u64, &mut Exhaustion) -> Result<f64> + Sync,
{
    let work = || -> Result<Vec<f64>> {
        let out: Vec<(f64, Exhaustion)> = (0..replicates as u64)
            .into_par_iter()
            .map(|i| {
                let mut tally = Exhaustion::default();
                f(i, &mut tally).map(|v| (v, tally))
            })
            .collect::<Result<_>>()?;
        out.iter()
            .fold(Exhaustion::default(), |a, (_, t)| a.merge(*t))
            .check()?;
        Ok(out.into_iter().map(|(v, _)| v).collect())
    };
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    statistic: Statistic,
    sampler: &SamplerSpec,
    query: &BoundQuery,
    values: &[f64],
    t_grid: &[f64],
    delta: f64,
    epsilon: f64,
    opts: &ExperimentOptions,
) -> Result<TailReport> {
    let side = query.side();
    let empirical = match side {
        Side::Bilateral => empirical_tail(values, t_grid)?,
        Side::Upper => upper_tail(values, t_grid)?,
        Side::Lower => {
            let neg: Vec<f64> = values.iter().map(|v| -v).collect();
            upper_tail(&neg, t_grid)?
        }
    };
    let bound: Vec<f64> = bound_curve(query, t_grid)?.iter().map(|b| b.bound).collect();
    let replicates = values.len();
    let floor = opts.resolution / replicates as f64;
    let dominance: Vec<bool> = empirical.iter().zip(&bound).map(|(e, b)| *e <= b + epsilon).collect();
    let resolvable = bound.iter().map(|b| *b >= floor).collect();
    let log_ratio = empirical
        .iter()
        .zip(&bound)
        .map(|(e, b)| (*e > 0.0).then(|| (e / b).ln()))
        .collect();
    let overall = dominance.iter().all(|&d| d);
    Ok(TailReport {
        statistic,
        side,
        n: query.n(),
        degree: query.degree(),
        sampler: sampler.clone(),
        seed: sampler.seed,
        replicates,
        delta,
        dkw_epsilon: epsilon,
        constant: query.constant(),
        calibration: opts.calibration.clone(),
        t_grid: t_grid.to_vec(),
        empirical,
        bound,
        dominance,
        resolvable,
        log_ratio,
        overall,
    })
}

/// Tail of `S_n = n^{-1/2} Σ ξ_i` against the sum bound.
pub fn run_sum_experiment(
    sampler: &SamplerSpec,
    n: u64,
    replicates: usize,
    query: &BoundQuery,
    t_grid: &[f64],
    delta: f64,
    opts: &ExperimentOptions,
) -> Result<TailReport> {
    let epsilon = check_common(replicates, t_grid, delta)?;
    if query.degree() != 1 || query.n() != n {
        return Err(Error::invalid(format!(
            "query must have degree 1 and n = {n}, has degree {} and n = {}",
            query.degree(),
            query.n()
        )));
    }
    let root = (n as f64).sqrt();
    let values = run_replicates(replicates, opts.threads, |i, tally| {
        let mut rng = sampler.rng(i);
        let mut xs = Vec::with_capacity(n as usize);
        sampler.fill(&mut rng, n as usize, &mut xs, tally)?;
        // same arithmetic as √n·U_n with the degree-one kernel
        Ok(root * (exact_sum(xs) / n as f64))
    })?;
    build_report(Statistic::Sum, sampler, query, &values, t_grid, delta, epsilon, opts)
}

/// Tail of `√n U_n` against the U-statistic bound.
#[allow(clippy::too_many_arguments)]
pub fn run_ustat_experiment(
    sampler: &SamplerSpec,
    spec: &UStatSpec,
    n: u64,
    replicates: usize,
    query: &BoundQuery,
    t_grid: &[f64],
    delta: f64,
    opts: &ExperimentOptions,
) -> Result<TailReport> {
    let epsilon = check_common(replicates, t_grid, delta)?;
    if query.degree() != spec.degree() || query.n() != n {
        return Err(Error::invalid(format!(
            "query must have degree {} and n = {n}, has degree {} and n = {}",
            spec.degree(),
            query.degree(),
            query.n()
        )));
    }
    crate::ustat::k_of(spec.degree() as u64, n)?;
    let root = (n as f64).sqrt();
    let values = run_replicates(replicates, opts.threads, |i, tally| {
        let mut rng = sampler.rng(i);
        let mut xs = Vec::with_capacity(n as usize);
        sampler.fill(&mut rng, n as usize, &mut xs, tally)?;
        Ok(root * evaluate_ustat(spec, &xs)?.value)
    })?;
    build_report(Statistic::Ustat, sampler, query, &values, t_grid, delta, epsilon, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ustat::Kernel;

    #[test]
    fn tail_examples() {
        let s = [0.5, 1.5, 2.5];
        assert_eq!(empirical_tail(&s, &[1.0]).unwrap(), vec![2.0 / 3.0]);
        assert_eq!(empirical_tail(&s, &[3.0]).unwrap(), vec![0.0]);
        assert_eq!(empirical_tail(&s, &[0.0]).unwrap(), vec![1.0]);
        // strict inequality
        assert_eq!(empirical_tail(&[-1.5, 1.5], &[1.5]).unwrap(), vec![0.0]);
        assert!(empirical_tail(&[], &[1.0]).is_err());
    }

    #[test]
    fn extremal_inverse_transform() {
        let g = TailGenerator::quadratic(0.5).unwrap();
        let m = extremal_magnitude(&g, (-2.0f64).exp()).unwrap();
        assert!((m - 2.0).abs() < 1e-14);
        assert!(sample_extremal(&g, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn draws_are_reproducible_and_streamed() {
        let s = SamplerSpec::gaussian(1.0, 42);
        assert_eq!(s.draw_stream(3, 5).unwrap(), s.draw_stream(3, 5).unwrap());
        assert_ne!(s.draw_stream(3, 5).unwrap(), s.draw_stream(4, 5).unwrap());
        let r = SamplerSpec::rademacher(1).draw_stream(0, 100).unwrap();
        assert!(r.iter().all(|x| x.abs() == 1.0));
        let u = SamplerSpec::uniform_centered(2.0, 1).draw_stream(0, 100).unwrap();
        assert!(u.iter().all(|x| x.abs() <= 2.0));
    }

    #[test]
    fn dkw_values() {
        let e = dkw_epsilon(200_000, 0.05).unwrap();
        assert!((e - 3.04e-3).abs() < 1e-5);
        assert!(dkw_epsilon(10, 1.0).is_err());
    }

    #[test]
    fn bounded_extremal_exhaustion_is_an_error() {
        // g reaches only 1 on its domain, so about e^-1 of draws are past it
        let g = TailGenerator::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 0.25, 1.0]).unwrap();
        assert!(matches!(sample_extremal(&g, 100, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn rademacher_single_summand() {
        let g = TailGenerator::quadratic(0.5).unwrap();
        let q = BoundQuery::sum(g, 1.0, 1, Side::Bilateral).unwrap();
        let s = SamplerSpec::rademacher(9);
        let rep = run_sum_experiment(&s, 1, 10_000, &q, &[0.5], 0.01, &Default::default()).unwrap();
        assert_eq!(rep.empirical, vec![1.0]);
        assert!(rep.overall);
        assert!(run_sum_experiment(&s, 1, 9_999, &q, &[0.5], 0.01, &Default::default()).is_err());
    }

    #[test]
    fn zero_kernel_has_no_tail() {
        let g = TailGenerator::quadratic(0.5).unwrap();
        let q = BoundQuery::new(g, 1.0, 4, 2, Side::Bilateral).unwrap();
        let spec = UStatSpec::new(Kernel::Zero, 2).unwrap();
        let rep = run_ustat_experiment(
            &SamplerSpec::gaussian(1.0, 2),
            &spec,
            4,
            10_000,
            &q,
            &[0.1, 1.0],
            0.01,
            &Default::default(),
        )
        .unwrap();
        assert_eq!(rep.empirical, vec![0.0, 0.0]);
        assert!(rep.overall);
        assert_eq!(rep.log_ratio, vec![None, None]);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let g = TailGenerator::quadratic(0.5).unwrap();
        let q = BoundQuery::sum(g, 1.0, 4, Side::Bilateral).unwrap();
        let s = SamplerSpec::gaussian(1.0, 11);
        let t = [0.5, 1.0, 2.0];
        let mk = |threads| ExperimentOptions {
            threads,
            ..Default::default()
        };
        let a = run_sum_experiment(&s, 4, 10_000, &q, &t, 0.01, &mk(Some(1))).unwrap();
        let b = run_sum_experiment(&s, 4, 10_000, &q, &t, 0.01, &mk(Some(3))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_has_metadata() {
        let g = TailGenerator::quadratic(0.5).unwrap();
        let q = BoundQuery::sum(g, 1.0, 1, Side::Bilateral).unwrap();
        let rep = run_sum_experiment(&SamplerSpec::rademacher(5), 1, 10_000, &q, &[0.5], 0.01, &Default::default()).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("# seed=5\n"));
        assert!(text.contains("# replicates=10000\n"));
        assert!(text.contains("t,empirical,dkw_epsilon,bound,dominance\n0.5,1,"));
        let back: TailReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back, rep);
    }
}
