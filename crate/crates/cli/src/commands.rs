use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use tailforge_core::bounds::{
    bound_curve, calibrate_constant_with, invert_bound, write_curve_csv, BoundQuery, BoundResult, Calibration,
    CalibrationOptions, Side,
};
use tailforge_core::conjugate::{biconjugate, conjugate_with, default_lambda_grid_with, ConjugateOptions};
use tailforge_core::numeric::fmt_sig;
use tailforge_core::simulate::{run_sum_experiment, run_ustat_experiment, ExperimentOptions, SamplerSpec};
use tailforge_core::ustat::{evaluate_ustat_with_cap, UStatSpec};

use crate::config::{
    load, BoundConfig, CalibrateConfig, ConjugateConfig, InvertConfig, StatisticConfig, UstatConfig, VerifyConfig,
};
use crate::{CliError, Common, Format};

pub const SEED_ENV: &str = "TAILFORGE_SEED";

/// Relative paths inside a config resolve against the config's directory.
fn base_dir(c: &Common) -> PathBuf {
    c.config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

fn sink(c: &Common) -> Result<Box<dyn Write>, CliError> {
    Ok(match &c.output {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_err(e: io::Error) -> CliError {
    CliError::Core(e.into())
}

fn write_json<T: Serialize>(c: &Common, value: &T) -> Result<(), CliError> {
    let mut w = sink(c)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Core(e.into()))?;
    writeln!(w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

#[derive(Serialize)]
struct ConjugateOut {
    lambda: Vec<f64>,
    g_star: Vec<f64>,
    argmax_t: Vec<f64>,
    tol_interp: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    biconjugate: Option<BiconjugateOut>,
}

#[derive(Serialize)]
struct BiconjugateOut {
    t: Vec<f64>,
    g_star_star: Vec<f64>,
}

pub fn conjugate(c: &Common) -> Result<(), CliError> {
    let (cfg, _) = load::<ConjugateConfig>(c.config.as_deref(), &c.sets)?;
    let g = cfg.generator.load(&base_dir(c))?;
    let opts = ConjugateOptions {
        t_nodes: cfg.t_nodes,
        naive: cfg.naive,
    };
    let ls = match (&cfg.lambda_grid, cfg.lambda_max) {
        (Some(ls), _) => ls.clone(),
        (None, Some(top)) => {
            let m = cfg.lambda_nodes.max(2);
            let mut ls: Vec<f64> = (0..m).map(|i| top * i as f64 / (m - 1) as f64).collect();
            ls[m - 1] = top;
            ls
        }
        (None, None) => default_lambda_grid_with(&g, cfg.lambda_nodes, &opts)?,
    };
    let table = conjugate_with(&g, &ls, &opts)?;
    match c.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            if cfg.biconjugate_grid.is_some() {
                eprintln!("tailforge: biconjugate_grid is only written with --format json");
            }
            let mut w = sink(c)?;
            table.write_csv(&mut w)?;
            w.flush().map_err(io_err)
        }
        Format::Json => {
            let bi = match &cfg.biconjugate_grid {
                Some(ts) => {
                    let gg = biconjugate(&table, ts)?;
                    let vals = ts.iter().map(|&t| gg.evaluate(t)).collect::<Result<_, _>>()?;
                    Some(BiconjugateOut {
                        t: ts.clone(),
                        g_star_star: vals,
                    })
                }
                None => None,
            };
            write_json(
                c,
                &ConjugateOut {
                    lambda: table.lambda_grid().to_vec(),
                    g_star: table.values().to_vec(),
                    argmax_t: table.argmax_points().to_vec(),
                    tol_interp: table.tol_interp(),
                    biconjugate: bi,
                },
            )
        }
    }
}

#[derive(Serialize)]
struct BoundOut<'a> {
    constant: f64,
    n: u64,
    degree: u32,
    side: Side,
    calibration: Option<Calibration>,
    curve: &'a [BoundResult],
}

pub fn bound(c: &Common) -> Result<(), CliError> {
    let (cfg, _) = load::<BoundConfig>(c.config.as_deref(), &c.sets)?;
    let base = base_dir(c);
    let g = cfg.generator.load(&base)?;
    let (constant, calibration) = cfg.constant_source().resolve(&base)?;
    let q = BoundQuery::new(g, constant, cfg.n, cfg.degree, cfg.side)?;
    let curve = bound_curve(&q, &cfg.t_grid)?;
    match c.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut w = sink(c)?;
            write_curve_csv(&curve, &mut w)?;
            w.flush().map_err(io_err)
        }
        Format::Json => write_json(
            c,
            &BoundOut {
                constant,
                n: cfg.n,
                degree: cfg.degree,
                side: cfg.side,
                calibration,
                curve: &curve,
            },
        ),
    }
}

#[derive(Serialize)]
struct Inversion {
    alpha: f64,
    t: f64,
}

pub fn invert(c: &Common) -> Result<(), CliError> {
    let (cfg, _) = load::<InvertConfig>(c.config.as_deref(), &c.sets)?;
    let base = base_dir(c);
    let g = cfg.generator.load(&base)?;
    let (constant, _) = cfg.constant_source().resolve(&base)?;
    let q = BoundQuery::new(g, constant, cfg.n, cfg.degree, cfg.side)?;
    let rows = cfg
        .alpha
        .iter()
        .map(|&alpha| invert_bound(&q, alpha).map(|t| Inversion { alpha, t }))
        .collect::<Result<Vec<_>, _>>()?;
    match c.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut w = sink(c)?;
            writeln!(w, "alpha,t").map_err(io_err)?;
            for r in &rows {
                writeln!(w, "{},{}", fmt_sig(r.alpha, 9), fmt_sig(r.t, 9)).map_err(io_err)?;
            }
            w.flush().map_err(io_err)
        }
        Format::Json => write_json(c, &rows),
    }
}

pub fn calibrate(c: &Common) -> Result<(), CliError> {
    let (cfg, _) = load::<CalibrateConfig>(c.config.as_deref(), &c.sets)?;
    let base = base_dir(c);
    let g = cfg.generator.load(&base)?;
    let mgf = cfg.law.mgf(&base)?;
    let mut opts = CalibrationOptions {
        tol: cfg.tol,
        n: cfg.n,
        ..Default::default()
    };
    if let Some(v) = cfg.lower_cap {
        opts.lower_cap = v;
    }
    if let Some(v) = cfg.upper_cap {
        opts.upper_cap = v;
    }
    let cal = calibrate_constant_with(&g, &mgf, cfg.lambda_range, &opts)?;
    for w in &cal.warnings {
        eprintln!("tailforge: warning: {w}");
    }
    match c.format.unwrap_or(Format::Json) {
        Format::Json => write_json(c, &cal),
        Format::Csv => {
            let mut w = sink(c)?;
            writeln!(w, "constant,lambda_range,tol,n,degenerate").map_err(io_err)?;
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_sig(cal.constant, 9),
                fmt_sig(cal.lambda_range, 9),
                fmt_sig(cal.tol, 9),
                cal.n,
                cal.degenerate
            )
            .map_err(io_err)?;
            w.flush().map_err(io_err)
        }
    }
}

/// Flag, then environment, then config.
fn effective_seed(c: &Common, config_seed: u64) -> Result<u64, CliError> {
    if let Some(s) = c.seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("{SEED_ENV}={v:?} is not a 64-bit unsigned integer"))),
        Err(_) => Ok(config_seed),
    }
}

pub fn verify(c: &Common) -> Result<(), CliError> {
    let (cfg, _) = load::<VerifyConfig>(c.config.as_deref(), &c.sets)?;
    let base = base_dir(c);
    let g = cfg.generator.load(&base)?;
    let seed = effective_seed(c, cfg.seed)?;
    let sampler = SamplerSpec::new(cfg.sampler.clone(), seed)?;
    let source = cfg.constant_source();
    let (constant, calibration) = match (&source.constant, &source.calibration, &source.calibration_file) {
        (None, None, None) => match (cfg.calibrate_lambda_range, cfg.statistic) {
            (Some(range), StatisticConfig::Sum) => {
                let cal = calibrate_constant_with(&g, &sampler.mgf_source(), range, &CalibrationOptions::default())?;
                (cal.constant, Some(cal))
            }
            (Some(_), StatisticConfig::Ustat) => {
                return Err(CliError::config(
                    "calibrate_lambda_range applies to sums; give the U-statistic constant explicitly",
                ))
            }
            (None, _) => source.resolve(&base)?,
        },
        _ => source.resolve(&base)?,
    };
    let opts = ExperimentOptions {
        threads: c.threads,
        resolution: cfg.resolution,
        calibration,
    };
    let report = match cfg.statistic {
        StatisticConfig::Sum => {
            if cfg.kernel.is_some() {
                return Err(CliError::config("`kernel` is only used with statistic = \"ustat\""));
            }
            let q = BoundQuery::new(g, constant, cfg.n, cfg.degree.unwrap_or(1), cfg.side)?;
            run_sum_experiment(&sampler, cfg.n, cfg.replicates, &q, &cfg.t_grid, cfg.delta, &opts)?
        }
        StatisticConfig::Ustat => {
            let kernel = cfg
                .kernel
                .clone()
                .ok_or_else(|| CliError::config("statistic = \"ustat\" needs `kernel`"))?;
            let degree = cfg
                .degree
                .ok_or_else(|| CliError::config("statistic = \"ustat\" needs `degree`"))?;
            let spec = UStatSpec::new(kernel, degree)?;
            let q = BoundQuery::new(g, constant, cfg.n, degree, cfg.side)?;
            run_ustat_experiment(&sampler, &spec, cfg.n, cfg.replicates, &q, &cfg.t_grid, cfg.delta, &opts)?
        }
    };
    match c.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut w = sink(c)?;
            report.write_csv(&mut w)?;
            w.flush().map_err(io_err)?;
        }
        Format::Json => write_json(c, &report)?,
    }
    let bad = report.violations();
    if bad.is_empty() {
        Ok(())
    } else {
        let ts: Vec<String> = bad.iter().map(|&i| fmt_sig(report.t_grid[i], 6)).collect();
        Err(CliError::Violation(format!(
            "empirical tail exceeds bound + {} at t = {}",
            fmt_sig(report.dkw_epsilon, 3),
            ts.join(", ")
        )))
    }
}

pub fn ustat(c: &Common) -> Result<(), CliError> {
    let (cfg, _) = load::<UstatConfig>(c.config.as_deref(), &c.sets)?;
    let xs = cfg.sample(&base_dir(c))?;
    let spec = UStatSpec::new(cfg.kernel.clone(), cfg.degree)?;
    let u = evaluate_ustat_with_cap(&spec, &xs, cfg.cap)?;
    match c.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut w = sink(c)?;
            writeln!(w, "value,n,combinations,k").map_err(io_err)?;
            writeln!(w, "{},{},{},{}", fmt_sig(u.value, 9), u.n, u.combinations, u.k).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
        Format::Json => write_json(c, &u),
    }
}
