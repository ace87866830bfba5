//! Exact U-statistics by subset enumeration.
//!
//! `U_n = C(n,m)⁻¹ Σ_{i₁<…<i_m} h(X_{i₁}, …, X_{i_m})` for a symmetric kernel `h`
//! of degree `m`. Subsets are visited in colexicographic order over the sorted
//! sample and accumulated with correctly rounded summation, so the value is
//! bit-identical under any permutation of the input.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_mean_exp, log_weighted_sum_exp, ExactSum};
use crate::simulate::SamplerSpec;

/// Default cap on `C(n, m)`.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Default cap on joint states `|support|^n` for exact laws.
pub const DEFAULT_JOINT_STATE_CAP: u64 = 1 << 20;

/// Registered symmetric kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `Π x_i`; centered whenever the inputs are.
    Product,
    /// `(x − y)²/2 − σ²`, degree 2, with user-supplied `σ²`.
    SampleVariance { sigma_sq: f64 },
    /// `Π clamp(x_i, −clip, clip)`.
    ClippedProduct { clip: f64 },
    /// `h ≡ 0`.
    Zero,
}

impl Kernel {
    pub fn eval(&self, args: &[f64]) -> f64 {
        match self {
            Kernel::Product => args.iter().product(),
            Kernel::SampleVariance { sigma_sq } => {
                let d = args[0] - args[1];
                0.5 * d * d - sigma_sq
            }
            Kernel::ClippedProduct { clip } => args.iter().map(|x| x.clamp(-clip, *clip)).product(),
            Kernel::Zero => 0.0,
        }
    }

    /// Kernel values stay bounded whatever the inputs.
    pub fn is_bounded(&self) -> bool {
        matches!(self, Kernel::ClippedProduct { .. } | Kernel::Zero)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UStatSpec {
    degree: u32,
    kernel: Kernel,
    /// Asserts `E h = 0` under the intended law; not checked.
    centered: bool,
    /// `Var(η)`, carried as metadata.
    beta_sq: Option<f64>,
    /// Rank `r` with `Var(U_n) ≍ n^{-r}`, carried as metadata.
    rank: Option<u32>,
}

impl UStatSpec {
    pub fn new(kernel: Kernel, degree: u32) -> Result<Self> {
        if degree == 0 {
            return Err(Error::invalid("kernel degree must be at least 1"));
        }
        match kernel {
            Kernel::SampleVariance { sigma_sq } => {
                if degree != 2 {
                    return Err(Error::invalid("sample-variance kernel has degree 2"));
                }
                if !(sigma_sq.is_finite() && sigma_sq >= 0.0) {
                    return Err(Error::invalid("sigma_sq must be a nonnegative real"));
                }
            }
            Kernel::ClippedProduct { clip } if !(clip.is_finite() && clip > 0.0) => {
                return Err(Error::invalid("clip must be positive"));
            }
            _ => {}
        }
        let spec = UStatSpec {
            degree,
            kernel,
            centered: true,
            beta_sq: None,
            rank: None,
        };
        spec.check_symmetry()?;
        Ok(spec)
    }

    pub fn with_metadata(mut self, beta_sq: Option<f64>, rank: Option<u32>) -> Self {
        self.beta_sq = beta_sq;
        self.rank = rank;
        self
    }

    pub fn with_centered(mut self, centered: bool) -> Self {
        self.centered = centered;
        self
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn beta_sq(&self) -> Option<f64> {
        self.beta_sq
    }

    pub fn rank(&self) -> Option<u32> {
        self.rank
    }

    /// Spot-check `h` on random arguments under random permutations.
    fn check_symmetry(&self) -> Result<()> {
        let m = self.degree as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
        let mut args = vec![0.0; m];
        for _ in 0..16 {
            for a in args.iter_mut() {
                *a = rng.random_range(-3.0..3.0);
            }
            let base = self.kernel.eval(&args);
            let mut perm = args.clone();
            for _ in 0..4 {
                perm.shuffle(&mut rng);
                let v = self.kernel.eval(&perm);
                if (v - base).abs() > 1e-12 * base.abs().max(1.0) {
                    return Err(Error::invalid(format!(
                        "kernel is not symmetric: h{args:?} = {base} but h{perm:?} = {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UStatValue {
    pub value: f64,
    pub n: u64,
    /// `C(n, m)`.
    pub combinations: u64,
    /// `⌊n/m⌋`.
    pub k: u64,
}

/// `C(n, m)` if it fits in a `u64`.
pub fn binomial(n: u64, m: u64) -> Option<u64> {
    if m > n {
        return Some(0);
    }
    let m = m.min(n - m);
    let mut c: u128 = 1;
    for i in 0..m {
        c = c.checked_mul((n - i) as u128)? / (i as u128 + 1);
        if c > u64::MAX as u128 {
            return None;
        }
    }
    Some(c as u64)
}

/// `k = ⌊n/m⌋`.
pub fn k_of(m: u64, n: u64) -> Result<u64> {
    if m == 0 {
        return Err(Error::invalid("degree m must be at least 1"));
    }
    if n < m {
        return Err(Error::invalid(format!("n = {n} is smaller than m = {m}")));
    }
    Ok(n / m)
}

/// Advance `c` to the next `m`-subset of `{0..n}` in colex order.
fn next_colex(c: &mut [usize], n: usize) -> bool {
    let m = c.len();
    for i in 0..m {
        let limit = if i + 1 < m { c[i + 1] } else { n };
        if c[i] + 1 < limit {
            c[i] += 1;
            for (j, cj) in c.iter_mut().enumerate().take(i) {
                *cj = j;
            }
            return true;
        }
    }
    false
}

pub fn evaluate_ustat(spec: &UStatSpec, sample: &[f64]) -> Result<UStatValue> {
    evaluate_ustat_with_cap(spec, sample, DEFAULT_ENUMERATION_CAP)
}

pub fn evaluate_ustat_with_cap(spec: &UStatSpec, sample: &[f64], cap: u64) -> Result<UStatValue> {
    let n = sample.len() as u64;
    let m = spec.degree as u64;
    let k = k_of(m, n)?;
    let combinations = binomial(n, m).filter(|&c| c <= cap).ok_or_else(|| {
        Error::CapExceeded(format!(
            "C({n}, {m}) subsets exceed the enumeration cap {cap}; subsample the data"
        ))
    })?;
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("sample contains NaN"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);

    let m = m as usize;
    let mut idx: Vec<usize> = (0..m).collect();
    let mut args = vec![0.0; m];
    let mut acc = ExactSum::new();
    loop {
        for (a, &i) in args.iter_mut().zip(&idx) {
            *a = sorted[i];
        }
        acc.add(spec.kernel.eval(&args));
        if !next_colex(&mut idx, sorted.len()) {
            break;
        }
    }
    Ok(UStatValue {
        value: acc.value() / combinations as f64,
        n,
        combinations,
        k,
    })
}

/// A finite law `Σ p_i δ_{x_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteLaw {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl FiniteLaw {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::invalid("finite law needs matching nonempty values and probabilities"));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) || values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("finite law needs finite values and nonnegative probabilities"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        Ok(FiniteLaw { values, probs })
    }

    pub fn rademacher() -> Self {
        FiniteLaw {
            values: vec![-1.0, 1.0],
            probs: vec![0.5, 0.5],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Visit every multiset of `n` draws from `a` atoms as a count vector.
fn for_each_composition<F: FnMut(&[usize]) -> Result<()>>(a: usize, n: usize, f: &mut F) -> Result<()> {
    fn rec<F: FnMut(&[usize]) -> Result<()>>(counts: &mut Vec<usize>, left: usize, slots: usize, f: &mut F) -> Result<()> {
        if slots == 1 {
            counts.push(left);
            let r = f(counts);
            counts.pop();
            return r;
        }
        for c in 0..=left {
            counts.push(c);
            rec(counts, left - c, slots - 1, f)?;
            counts.pop();
        }
        Ok(())
    }
    rec(&mut Vec::with_capacity(a), n, a, f)
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn check_joint_states(law: &FiniteLaw, n: u64, cap: u64) -> Result<()> {
    let states = (law.values.len() as f64).powf(n as f64);
    if states > cap as f64 {
        return Err(Error::CapExceeded(format!(
            "{}^{n} joint states exceed the cap {cap}",
            law.values.len()
        )));
    }
    Ok(())
}

/// Exact law of `U_n` under i.i.d. draws from `law`, as `(value, probability)`
/// pairs. Because `U_n` is symmetric in the sample, the `|support|^n` joint
/// states are grouped by multiset with multinomial weights.
pub fn exact_ustat_law(spec: &UStatSpec, law: &FiniteLaw, n: u64) -> Result<Vec<(f64, f64)>> {
    exact_ustat_law_with_cap(spec, law, n, DEFAULT_JOINT_STATE_CAP)
}

pub fn exact_ustat_law_with_cap(spec: &UStatSpec, law: &FiniteLaw, n: u64, cap: u64) -> Result<Vec<(f64, f64)>> {
    k_of(spec.degree as u64, n)?;
    check_joint_states(law, n, cap)?;
    let a = law.values.len();
    let ln_n_fact = ln_factorial(n as usize);
    let ln_p: Vec<f64> = law.probs.iter().map(|p| p.ln()).collect();
    let mut out = Vec::new();
    let mut sample = Vec::with_capacity(n as usize);
    for_each_composition(a, n as usize, &mut |counts| {
        let mut lw = ln_n_fact;
        sample.clear();
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                if law.probs[i] == 0.0 {
                    return Ok(());
                }
                lw += c as f64 * ln_p[i] - ln_factorial(c);
                sample.extend(std::iter::repeat_n(law.values[i], c));
            }
        }
        let u = evaluate_ustat(spec, &sample)?;
        out.push((u.value, lw.exp()));
        Ok(())
    })?;
    Ok(out)
}

/// Exact law of the kernel value `η = h(X_1, …, X_m)`.
pub fn exact_kernel_law(spec: &UStatSpec, law: &FiniteLaw) -> Result<Vec<(f64, f64)>> {
    let m = spec.degree as u64;
    check_joint_states(law, m, DEFAULT_JOINT_STATE_CAP)?;
    // with n = m the U-statistic is the kernel itself
    exact_ustat_law(spec, law, m)
}

/// Input law for [`decoupling_check`].
#[derive(Clone, Debug)]
pub enum DecouplingLaw {
    Exact(FiniteLaw),
    MonteCarlo { sampler: SamplerSpec, replicates: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct DecouplingOptions {
    /// Largest `|λ|` accepted in Monte Carlo mode when the kernel is unbounded.
    pub safety_range: f64,
    /// Allowance in standard errors for Monte Carlo mode.
    pub z: f64,
}

impl Default for DecouplingOptions {
    fn default() -> Self {
        DecouplingOptions {
            safety_range: 1.0,
            z: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingEntry {
    pub lambda: f64,
    /// `ln E exp(λ U_n)`.
    pub log_lhs: f64,
    /// `k ln E exp(λ η / k)`.
    pub log_rhs: f64,
    pub allowance: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub n: u64,
    pub degree: u32,
    pub k: u64,
    pub mode: String,
    pub entries: Vec<DecouplingEntry>,
    pub verdict: bool,
    pub note: String,
}

pub const DECOUPLING_NOTE: &str = "right-hand side uses E exp(lambda*eta/k) inside the k-th power; \
the literal form E[lambda*eta/k] vanishes for centered kernels and cannot bound an MGF";

/// Check `E exp(λ U_n) ≤ {E exp(λ η / k)}^k`, `k = ⌊n/m⌋`, in log space.
pub fn decoupling_check(
    spec: &UStatSpec,
    law: &DecouplingLaw,
    n: u64,
    lambda_grid: &[f64],
    opts: &DecouplingOptions,
) -> Result<DecouplingReport> {
    let k = k_of(spec.degree as u64, n)?;
    let kf = k as f64;
    let (mode, entries): (&str, Vec<DecouplingEntry>) = match law {
        DecouplingLaw::Exact(fl) => {
            let u_law = exact_ustat_law(spec, fl, n)?;
            let eta_law = exact_kernel_law(spec, fl)?;
            let (uv, up): (Vec<f64>, Vec<f64>) = u_law.into_iter().unzip();
            let (ev, ep): (Vec<f64>, Vec<f64>) = eta_law.into_iter().unzip();
            let ln_u_total = log_weighted_sum_exp(&vec![0.0; up.len()], &up);
            let ln_e_total = log_weighted_sum_exp(&vec![0.0; ep.len()], &ep);
            let entries = lambda_grid
                .iter()
                .map(|&l| {
                    if l == 0.0 {
                        return DecouplingEntry {
                            lambda: l,
                            log_lhs: 0.0,
                            log_rhs: 0.0,
                            allowance: 0.0,
                            holds: true,
                        };
                    }
                    // normalized by the total weight, which is 1 up to rounding
                    let lhs = log_weighted_sum_exp(&uv.iter().map(|u| l * u).collect::<Vec<_>>(), &up) - ln_u_total;
                    let rhs = kf
                        * (log_weighted_sum_exp(&ev.iter().map(|e| l * e / kf).collect::<Vec<_>>(), &ep) - ln_e_total);
                    // exact arithmetic on both sides; allow only rounding
                    let allowance = 1e-12 * lhs.abs().max(rhs.abs()).max(1.0);
                    DecouplingEntry {
                        lambda: l,
                        log_lhs: lhs,
                        log_rhs: rhs,
                        allowance,
                        holds: lhs <= rhs + allowance,
                    }
                })
                .collect();
            ("exact", entries)
        }
        DecouplingLaw::MonteCarlo { sampler, replicates } => {
            if *replicates < 100_000 {
                return Err(Error::invalid(format!(
                    "Monte Carlo decoupling check needs at least 1e5 replicates, got {replicates}"
                )));
            }
            let bounded = spec.kernel.is_bounded() || sampler.is_bounded();
            if !bounded {
                if let Some(l) = lambda_grid.iter().find(|l| l.abs() > opts.safety_range) {
                    return Err(Error::invalid(format!(
                        "unbounded kernel: lambda = {l} beyond the safety range {}; MGF estimate unreliable",
                        opts.safety_range
                    )));
                }
            }
            let r = *replicates as u64;
            let us: Vec<f64> = (0..r)
                .map(|i| evaluate_ustat(spec, &sampler.draw_stream(i, n as usize)?).map(|u| u.value))
                .collect::<Result<_>>()?;
            let etas: Vec<f64> = (0..r)
                .map(|i| Ok(spec.kernel.eval(&sampler.draw_stream(r + i, spec.degree as usize)?)))
                .collect::<Result<_>>()?;
            let entries = lambda_grid
                .iter()
                .map(|&l| {
                    let (lhs, se_l) = log_mean_exp_with_se(&us, l);
                    let (rhs1, se_r) = log_mean_exp_with_se(&etas, l / kf);
                    let allowance = opts.z * (se_l + kf * se_r);
                    let rhs = kf * rhs1;
                    DecouplingEntry {
                        lambda: l,
                        log_lhs: lhs,
                        log_rhs: rhs,
                        allowance,
                        holds: lhs <= rhs + allowance,
                    }
                })
                .collect();
            ("monte_carlo", entries)
        }
    };
    let verdict = entries.iter().all(|e| e.holds);
    Ok(DecouplingReport {
        n,
        degree: spec.degree,
        k,
        mode: mode.to_string(),
        entries,
        verdict,
        note: DECOUPLING_NOTE.to_string(),
    })
}

/// `ln mean exp(λ x)` and its delta-method standard error.
fn log_mean_exp_with_se(xs: &[f64], lambda: f64) -> (f64, f64) {
    let v: Vec<f64> = xs.iter().map(|x| lambda * x).collect();
    let lme = log_mean_exp(&v);
    // relative standard deviation of exp(v − lme)
    let n = v.len() as f64;
    let m2 = v.iter().map(|x| (x - lme).exp().powi(2)).sum::<f64>() / n;
    let sd = (m2 - 1.0).max(0.0).sqrt();
    (lme, sd / n.sqrt())
}
