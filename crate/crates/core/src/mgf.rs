//! Log moment generating functions `λ ↦ ln E exp(λX)` used by calibration.

use crate::error::{Error, Result};
use crate::generators::TailGenerator;
use crate::numeric::{ln_cosh, log_mean_exp, log_sum_exp, log_weighted_sum_exp};

/// Source of a log-MGF: analytic, numerical quadrature, empirical or exact atoms.
#[derive(Clone, Debug)]
pub enum MgfSource {
    Gaussian { sigma: f64 },
    Rademacher,
    /// Point mass at zero.
    PointMass,
    /// Uniform on `[-a, a]`.
    UniformCentered { a: f64 },
    /// Symmetric law with `P(|ξ| > t) = exp(-g(t))`, by quadrature.
    Extremal { generator: TailGenerator },
    /// Log-mean-exp over samples.
    Empirical { samples: Vec<f64> },
    /// Exact finite law `Σ p_i δ_{x_i}`.
    Atoms { values: Vec<f64>, probs: Vec<f64> },
}

impl MgfSource {
    pub fn atoms(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() || values.is_empty() {
            return Err(Error::invalid("atoms need matching nonempty values and probabilities"));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(MgfSource::Atoms { values, probs })
    }

    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("empirical MGF needs finite, nonempty samples"));
        }
        Ok(MgfSource::Empirical { samples })
    }

    /// Short label recorded alongside calibration results.
    pub fn label(&self) -> String {
        match self {
            MgfSource::Gaussian { sigma } => format!("gaussian(sigma={sigma})"),
            MgfSource::Rademacher => "rademacher".into(),
            MgfSource::PointMass => "point_mass".into(),
            MgfSource::UniformCentered { a } => format!("uniform_centered(a={a})"),
            MgfSource::Extremal { generator } => format!("extremal({})", generator.to_json()),
            MgfSource::Empirical { samples } => format!("empirical(n={})", samples.len()),
            MgfSource::Atoms { values, .. } => format!("atoms(k={})", values.len()),
        }
    }

    /// True when the source is identically zero (a point mass at the origin).
    pub fn is_degenerate(&self) -> bool {
        match self {
            MgfSource::PointMass => true,
            MgfSource::Empirical { samples } => samples.iter().all(|&x| x == 0.0),
            MgfSource::Atoms { values, probs } => values
                .iter()
                .zip(probs)
                .all(|(&x, &p)| x == 0.0 || p == 0.0),
            _ => false,
        }
    }

    /// `ln E exp(λX)`.
    pub fn log_mgf(&self, lambda: f64) -> Result<f64> {
        if lambda == 0.0 {
            return Ok(0.0);
        }
        Ok(match self {
            MgfSource::Gaussian { sigma } => 0.5 * sigma * sigma * lambda * lambda,
            MgfSource::Rademacher => ln_cosh(lambda),
            MgfSource::PointMass => 0.0,
            MgfSource::UniformCentered { a } => ln_sinhc(a * lambda),
            MgfSource::Extremal { generator } => extremal_log_mgf(generator, lambda)?,
            MgfSource::Empirical { samples } => {
                let v: Vec<f64> = samples.iter().map(|&x| lambda * x).collect();
                log_mean_exp(&v)
            }
            MgfSource::Atoms { values, probs } => {
                let v: Vec<f64> = values.iter().map(|&x| lambda * x).collect();
                log_weighted_sum_exp(&v, probs)
            }
        })
    }
}

/// `ln( sinh(x)/x )`.
fn ln_sinhc(x: f64) -> f64 {
    let a = x.abs();
    if a < 1e-4 {
        let a2 = a * a;
        return a2 / 6.0 - a2 * a2 / 180.0;
    }
    // sinh(a)/a = e^a (1 − e^{−2a}) / (2a)
    a + (-(-2.0 * a).exp()).ln_1p() - (2.0 * a).ln()
}

/// `ln E cosh(λ|ξ|)` for the law with `P(|ξ| > t) = exp(-g(t))`:
/// `E cosh(λ|ξ|) = 1 + ∫₀^∞ λ sinh(λt) e^{-g(t)} dt`, integrated by composite
/// Simpson in log space.
fn extremal_log_mgf(g: &TailGenerator, lambda: f64) -> Result<f64> {
    const INTERVALS: usize = 8192;
    let z = lambda.abs();
    // log integrand is about zt − g(t); integrate until it is e^-60 below the
    // leading 1 (bounded kinds carry no mass past domain_max)
    let mut upper = g.domain_max();
    if !g.is_bounded() {
        while g.evaluate(upper)? - z * upper < 60.0 {
            upper *= 1.5;
        }
    }
    let h = upper / INTERVALS as f64;
    let mut terms = Vec::with_capacity(INTERVALS + 1);
    for i in 1..=INTERVALS {
        let t = i as f64 * h;
        let x = z * t;
        let ln_sinh = x + (-(-2.0 * x).exp()).ln_1p() - std::f64::consts::LN_2;
        let w = if i == INTERVALS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        terms.push(z.ln() + ln_sinh - g.evaluate(t)? + (w * h / 3.0).ln());
    }
    let log_integral = log_sum_exp(&terms);
    // ln(1 + e^L)
    Ok(if log_integral > 0.0 {
        log_integral + (-log_integral).exp().ln_1p()
    } else {
        log_integral.exp().ln_1p()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let g = MgfSource::Gaussian { sigma: 2.0 };
        assert_eq!(g.log_mgf(1.5).unwrap(), 0.5 * 4.0 * 2.25);
        let r = MgfSource::Rademacher;
        assert!((r.log_mgf(0.7).unwrap() - f64::cosh(0.7).ln()).abs() < 1e-15);
        assert_eq!(MgfSource::PointMass.log_mgf(3.0).unwrap(), 0.0);
        let u = MgfSource::UniformCentered { a: 1.0 };
        let x: f64 = 2.0;
        assert!((u.log_mgf(x).unwrap() - (x.sinh() / x).ln()).abs() < 1e-14);
        assert!((u.log_mgf(1e-6).unwrap() - 1e-12 / 6.0).abs() < 1e-20);
    }

    #[test]
    fn atoms_match_rademacher() {
        let a = MgfSource::atoms(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        for l in [-3.0, -0.2, 0.0, 1.0, 5.0] {
            let d = a.log_mgf(l).unwrap() - MgfSource::Rademacher.log_mgf(l).unwrap();
            assert!(d.abs() < 1e-14);
        }
        assert!(MgfSource::atoms(vec![1.0], vec![0.4]).is_err());
    }

    #[test]
    fn empirical_is_shifted() {
        let e = MgfSource::empirical(vec![1000.0, -1000.0]).unwrap();
        let v = e.log_mgf(1.0).unwrap();
        assert!((v - (1000.0 - std::f64::consts::LN_2)).abs() < 1e-9);
        assert!(MgfSource::empirical(vec![]).is_err());
    }

    #[test]
    fn extremal_quadratic_matches_closed_form() {
        // P(|ξ|>t) = exp(-t²/2): E cosh(λ|ξ|) = 1 + λ √(π/2) e^{λ²/2} erf(λ/√2)
        let g = TailGenerator::quadratic(0.5).unwrap();
        let src = MgfSource::Extremal { generator: g };
        for &l in &[0.3, 1.0, 2.5, 6.0] {
            let erf = statrs::function::erf::erf(l / std::f64::consts::SQRT_2);
            let exact = (1.0 + l * (std::f64::consts::PI / 2.0).sqrt() * (l * l / 2.0).exp() * erf).ln();
            let got = src.log_mgf(l).unwrap();
            assert!((got - exact).abs() < 1e-8 * exact.max(1.0), "{l}: {got} vs {exact}");
        }
    }
}
