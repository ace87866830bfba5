//! Legendre–Fenchel conjugates `g*(λ) = sup_{t≥0} (|λ| t − g(t))` and biconjugates.
//!
//! Tables are built with a monotone-maximizer sweep: because `λt − g(t)` is
//! concave in `t` and its maximizer moves right as `λ` grows, one forward pass
//! over the sorted `t`-grid serves the whole sorted `λ`-grid. A naive
//! `O(N·M)` scan is kept behind [`ConjugateOptions::naive`] as a cross-check.

use std::io::Write;

use crate::error::{Error, Result};
use crate::generators::TailGenerator;
use crate::numeric::{bisect_leftmost, fmt_sig};

/// Default node count for `t`- and `λ`-grids.
pub const DEFAULT_NODES: usize = 4096;

#[derive(Clone, Copy, Debug)]
pub struct ConjugateOptions {
    /// Uniform `t`-grid size for closed-form generators. Tabulated generators
    /// are conjugated on their own nodes.
    pub t_nodes: usize,
    /// Use the quadratic scan instead of the sweep.
    pub naive: bool,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        ConjugateOptions {
            t_nodes: DEFAULT_NODES,
            naive: false,
        }
    }
}

/// `g*` sampled on a `λ`-grid together with the maximizing `t` of each node.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugateTable {
    lambda_grid: Vec<f64>,
    values: Vec<f64>,
    argmax_points: Vec<f64>,
    source_domain_max: f64,
    t_mesh: f64,
}

impl ConjugateTable {
    pub fn lambda_grid(&self) -> &[f64] {
        &self.lambda_grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn argmax_points(&self) -> &[f64] {
        &self.argmax_points
    }

    pub fn source_domain_max(&self) -> f64 {
        self.source_domain_max
    }

    /// Largest spacing of the `t`-grid the table was computed on.
    pub fn t_mesh(&self) -> f64 {
        self.t_mesh
    }

    pub fn max_lambda(&self) -> f64 {
        *self.lambda_grid.last().expect("table is nonempty")
    }

    /// Interpolation budget `L·h`: largest slope on the grid times the `t` mesh.
    pub fn tol_interp(&self) -> f64 {
        self.max_lambda() * self.t_mesh
    }

    /// `g*(λ)` by linear interpolation between nodes; symmetric in `λ`.
    pub fn value_at(&self, lambda: f64) -> Result<f64> {
        let z = lambda.abs();
        if z.is_nan() || z > self.max_lambda() {
            return Err(Error::domain(format!(
                "|lambda| = {z} outside tabulated dual range [0, {}]",
                self.max_lambda()
            )));
        }
        let j = self.lambda_grid.partition_point(|&x| x <= z);
        let i = j - 1;
        if self.lambda_grid[i] == z || i + 1 == self.lambda_grid.len() {
            return Ok(self.values[i]);
        }
        let (l0, l1) = (self.lambda_grid[i], self.lambda_grid[i + 1]);
        let w = (z - l0) / (l1 - l0);
        Ok(self.values[i] + w * (self.values[i + 1] - self.values[i]))
    }

    /// CSV with header `lambda,g_star,argmax_t`, nine significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lambda,g_star,argmax_t")?;
        for i in 0..self.lambda_grid.len() {
            writeln!(
                w,
                "{},{},{}",
                fmt_sig(self.lambda_grid[i], 9),
                fmt_sig(self.values[i], 9),
                fmt_sig(self.argmax_points[i], 9)
            )?;
        }
        Ok(())
    }
}

/// The `t`-grid a generator is conjugated on.
pub fn evaluation_grid(g: &TailGenerator, t_nodes: usize) -> Vec<f64> {
    if let Some(grid) = g.natural_grid() {
        return grid.to_vec();
    }
    let n = t_nodes.max(2);
    let d = g.domain_max();
    let mut ts: Vec<f64> = (0..n).map(|i| d * i as f64 / (n - 1) as f64).collect();
    ts[n - 1] = d;
    ts
}

/// Uniform `λ`-grid on `[0, s]`, where `s` is the discrete slope of `g` on the
/// last cell of its evaluation grid: exactly the dual range the grid represents.
pub fn default_lambda_grid(g: &TailGenerator, nodes: usize) -> Result<Vec<f64>> {
    default_lambda_grid_with(g, nodes, &ConjugateOptions::default())
}

pub fn default_lambda_grid_with(
    g: &TailGenerator,
    nodes: usize,
    opts: &ConjugateOptions,
) -> Result<Vec<f64>> {
    let ts = evaluation_grid(g, opts.t_nodes);
    let n = ts.len();
    let top = (g.evaluate(ts[n - 1])? - g.evaluate(ts[n - 2])?) / (ts[n - 1] - ts[n - 2]);
    let m = nodes.max(2);
    let mut ls: Vec<f64> = (0..m).map(|i| top * i as f64 / (m - 1) as f64).collect();
    ls[m - 1] = top;
    Ok(ls)
}

/// Conjugate of `g` on `lambda_grid` with default options.
pub fn conjugate(g: &TailGenerator, lambda_grid: &[f64]) -> Result<ConjugateTable> {
    conjugate_with(g, lambda_grid, &ConjugateOptions::default())
}

pub fn conjugate_with(
    g: &TailGenerator,
    lambda_grid: &[f64],
    opts: &ConjugateOptions,
) -> Result<ConjugateTable> {
    g.ensure_valid()?;
    if lambda_grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    if lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::invalid("lambda grid must be finite and nonnegative"));
    }
    if lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("lambda grid must be strictly increasing"));
    }
    let mut ls = Vec::with_capacity(lambda_grid.len() + 1);
    if lambda_grid[0] != 0.0 {
        ls.push(0.0);
    }
    ls.extend_from_slice(lambda_grid);

    let ts = evaluation_grid(g, opts.t_nodes);
    let gs = ts
        .iter()
        .map(|&t| g.evaluate(t))
        .collect::<Result<Vec<f64>>>()?;
    let t_mesh = ts.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);

    let idx = if opts.naive {
        naive_argmax(&ts, &gs, &ls)
    } else {
        sweep_argmax(&ts, &gs, &ls)
    };

    let last = *idx.last().unwrap();
    if ts.len() > 1 && last == ts.len() - 1 && ls[ls.len() - 1] > 0.0 {
        return Err(Error::DomainTooShort {
            domain_max: g.domain_max(),
        });
    }

    let values = ls
        .iter()
        .zip(&idx)
        .map(|(&l, &j)| l * ts[j] - gs[j])
        .collect();
    let argmax_points = idx.iter().map(|&j| ts[j]).collect();
    Ok(ConjugateTable {
        lambda_grid: ls,
        values,
        argmax_points,
        source_domain_max: g.domain_max(),
        t_mesh,
    })
}

/// Leftmost maximizer of `λ t_j − g_j` for every `λ`, one forward pass.
fn sweep_argmax(ts: &[f64], gs: &[f64], ls: &[f64]) -> Vec<usize> {
    let mut out = Vec::with_capacity(ls.len());
    let mut j = 0;
    for &l in ls {
        // moving right pays off while λ beats the cell slope
        while j + 1 < ts.len() && l > (gs[j + 1] - gs[j]) / (ts[j + 1] - ts[j]) {
            j += 1;
        }
        debug_assert!(out.last().is_none_or(|&p| p <= j));
        out.push(j);
    }
    out
}

fn naive_argmax(ts: &[f64], gs: &[f64], ls: &[f64]) -> Vec<usize> {
    ls.iter()
        .map(|&l| {
            let mut best = 0;
            let mut best_v = l * ts[0] - gs[0];
            for j in 1..ts.len() {
                let v = l * ts[j] - gs[j];
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            best
        })
        .collect()
}

/// `g*(z)` at a single point, solved through the first-order condition
/// `g'(t) = |z|` by bisection on the right derivative. Closed-form kinds have
/// no domain limit; bounded kinds fail with [`Error::DomainTooShort`] when the
/// maximizer would sit at `domain_max`.
pub fn conjugate_at(g: &TailGenerator, z: f64) -> Result<f64> {
    let (_, v) = conjugate_point(g, z)?;
    Ok(v)
}

/// `(argmax t, g*(z))`.
pub fn conjugate_point(g: &TailGenerator, z: f64) -> Result<(f64, f64)> {
    g.ensure_valid()?;
    let z = z.abs();
    if z.is_nan() || z.is_infinite() {
        return Err(Error::invalid(format!("conjugate argument must be finite, got {z}")));
    }
    if z == 0.0 {
        return Ok((0.0, 0.0));
    }
    let hi = if g.is_bounded() {
        g.domain_max()
    } else {
        let mut hi = g.domain_max();
        while g.right_derivative(hi) < z {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::domain(format!("no maximizer for slope {z}")));
            }
        }
        hi
    };
    let t = bisect_leftmost(0.0, hi, |t| g.right_derivative(t) >= z);
    if g.is_bounded() && t >= g.domain_max() {
        return Err(Error::DomainTooShort {
            domain_max: g.domain_max(),
        });
    }
    Ok((t, z * t - g.evaluate(t)?))
}

/// `g**(t) = sup_λ (λ t − g*(λ))` over the table's nodes, returned as a
/// tabulated generator on `t_grid` (0 is prepended when missing).
///
/// Points beyond the largest stored maximizer are rejected: past it the sup is
/// a linear extrapolation that no longer tracks `g`. A table holding only
/// `λ = 0` represents the zero function everywhere.
pub fn biconjugate(table: &ConjugateTable, t_grid: &[f64]) -> Result<TailGenerator> {
    if t_grid.is_empty() {
        return Err(Error::invalid("t grid is empty"));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("t grid must be nonnegative and strictly increasing"));
    }
    let ls = &table.lambda_grid;
    let vs = &table.values;
    let degenerate = ls.len() == 1;
    let reach = *table.argmax_points.last().unwrap();
    if !degenerate {
        if let Some(&t) = t_grid.iter().find(|&&t| t > reach) {
            return Err(Error::domain(format!(
                "t = {t} outside representable slope range [0, {reach}]"
            )));
        }
    }

    let mut ts = Vec::with_capacity(t_grid.len() + 1);
    if t_grid[0] != 0.0 {
        ts.push(0.0);
    }
    ts.extend_from_slice(t_grid);

    let mut out = Vec::with_capacity(ts.len());
    let mut i = 0;
    for &t in &ts {
        while i + 1 < ls.len() && t > (vs[i + 1] - vs[i]) / (ls[i + 1] - ls[i]) {
            i += 1;
        }
        out.push((ls[i] * t - vs[i]).max(0.0));
    }
    if ts.len() == 1 {
        // a lone origin node cannot form a table; pad with a zero node
        ts.push(1.0);
        out.push(0.0);
    }
    TailGenerator::tabulated(ts, out)
}
