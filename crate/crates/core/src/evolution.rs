//! Explicit monotone time stepping for `u_t = I u + f` on the active ball,
//! with prescribed data elsewhere.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DataFn, Exterior, Grid, SpaceTimeField};
use crate::error::{domain, Error, Result};
use crate::kernels::TailQuadrature;
use crate::operators::{DiscreteOperator, LatticeState, OperatorHandle};

/// Default safety factor `theta` in `dt = theta / S`.
pub const DEFAULT_SAFETY: f64 = 0.9;

#[derive(Clone)]
pub struct ParabolicProblem {
    pub op: OperatorHandle,
    /// Right-hand side `f(x, t)`; `None` means zero.
    pub rhs: Option<DataFn>,
    /// Declared `sup |f|`.
    pub rhs_bound: f64,
    /// `u(x, t0)` on the grid.
    pub initial: DataFn,
    /// Data outside the active ball, on and beyond the grid.
    pub data: Exterior,
    pub grid: Grid,
    /// The equation holds at nodes with `|x| < active_radius - dx`.
    pub active_radius: f64,
    pub safety: f64,
    pub tail_quadrature: TailQuadrature,
}

impl std::fmt::Debug for ParabolicProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParabolicProblem")
            .field("op", &self.op.kind())
            .field("grid", &self.grid)
            .field("data", &self.data)
            .field("active_radius", &self.active_radius)
            .field("safety", &self.safety)
            .finish()
    }
}

impl ParabolicProblem {
    /// Problem in `B_1` whose initial data is the lateral data at `t0`.
    pub fn new(op: OperatorHandle, grid: Grid, data: Exterior) -> Self {
        let d = data.clone();
        let t0 = grid.t0;
        Self {
            op,
            rhs: None,
            rhs_bound: 0.0,
            initial: Arc::new(move |x, _| d.eval(x, t0)),
            data,
            grid,
            active_radius: 1.0,
            safety: DEFAULT_SAFETY,
            tail_quadrature: TailQuadrature::default(),
        }
    }

    pub fn with_rhs(mut self, f: DataFn, bound: f64) -> Self {
        self.rhs = Some(f);
        self.rhs_bound = bound;
        self
    }

    pub fn with_initial(mut self, f: DataFn) -> Self {
        self.initial = f;
        self
    }

    pub fn with_active_radius(mut self, r: f64) -> Self {
        self.active_radius = r;
        self
    }

    pub fn with_safety(mut self, theta: f64) -> Self {
        self.safety = theta;
        self
    }

    pub fn with_tail_quadrature(mut self, q: TailQuadrature) -> Self {
        self.tail_quadrature = q;
        self
    }

    /// Nodes where the equation is enforced.
    pub fn active_nodes(&self) -> Result<std::ops::Range<usize>> {
        let g = &self.grid;
        let h = g.dx();
        let lim = self.active_radius - h;
        let inside: Vec<usize> = (1..g.n_points)
            .filter(|&i| g.node(i).abs() < lim - 1e-12 * h)
            .collect();
        match (inside.first(), inside.last()) {
            (Some(&a), Some(&b)) => Ok(a..b + 1),
            _ => domain(format!(
                "no grid node satisfies |x| < {} - dx",
                self.active_radius
            )),
        }
    }

    fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.grid.n_steps == 0 || self.grid.t_end <= self.grid.t0 {
            return domain("evolution needs a nondegenerate time interval");
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return domain(format!("safety factor must lie in (0, 1], got {}", self.safety));
        }
        if !(self.rhs_bound >= 0.0 && self.rhs_bound.is_finite()) {
            return domain("right-hand side bound must be finite");
        }
        if self.active_radius > self.grid.half_width + 1e-12 {
            return domain("active ball must lie inside the grid");
        }
        Ok(())
    }

    pub fn discretize(&self) -> Result<DiscreteOperator> {
        self.op
            .discretize(&self.grid, self.data.bound(), self.tail_quadrature)
    }
}

/// `theta / S` with `S` the largest diagonal coefficient of the scheme.
pub fn cfl_timestep(op: &DiscreteOperator, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return domain(format!("safety factor must lie in (0, 1], got {theta}"));
    }
    let s = op.cfl_mass();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!(
            "degenerate operator: total mass {s}"
        )));
    }
    Ok(theta / s)
}

/// Mutable stepping state: current values and time plus the lattice buffers.
#[derive(Debug, Clone)]
pub struct StepState {
    pub values: Vec<f64>,
    pub t: f64,
    lattice: LatticeState,
    active: std::ops::Range<usize>,
}

impl StepState {
    pub fn new(problem: &ParabolicProblem, op: &DiscreteOperator, values: Vec<f64>, t: f64) -> Result<Self> {
        let active = problem.active_nodes()?;
        if values.len() != problem.grid.len() {
            return domain("state length does not match the grid");
        }
        Ok(Self {
            values,
            t,
            lattice: LatticeState::new(&problem.grid, op.tail(), active.clone())?,
            active,
        })
    }

    pub fn active(&self) -> std::ops::Range<usize> {
        self.active.clone()
    }
}

/// One explicit step: `u + dt (I u + f)` on the active nodes, data elsewhere.
pub fn step(state: &mut StepState, problem: &ParabolicProblem, op: &DiscreteOperator, dt: f64) -> Result<()> {
    let limit = 1.0 / op.cfl_mass();
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    let g = &problem.grid;
    let t = state.t;
    state.lattice.set_exterior(op.tail(), &problem.data, t);
    state.lattice.set_values(&state.values)?;
    let iu = op.apply(&state.lattice);
    let t_next = t + dt;
    let start = state.active.start;
    let rhs = problem.rhs.clone();
    let mut next: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            if state.active.contains(&i) {
                let f = rhs.as_ref().map_or(0.0, |f| f(g.node(i), t));
                state.values[i] + dt * (iu[i - start] + f)
            } else {
                problem.data.eval(g.node(i), t_next)
            }
        })
        .collect();
    if let Some(i) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            x: g.node(i),
            t: t_next,
        });
    }
    std::mem::swap(&mut state.values, &mut next);
    state.t = t_next;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CflRecord {
    pub dt: f64,
    pub total_mass: f64,
    pub safety: f64,
    pub substeps_per_level: usize,
    pub total_steps: usize,
}

/// Per stored level: range of values and the largest time difference quotient
/// on the active nodes since the previous level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub t: f64,
    pub min: f64,
    pub max: f64,
    pub max_rate: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub field: SpaceTimeField,
    pub cfl: CflRecord,
    pub diagnostics: Vec<LevelDiagnostics>,
    pub active: std::ops::Range<usize>,
    /// `sup |u(., t0)| + sup |data| sampled + T sup |f|`.
    pub comparison_bound: f64,
}

/// Iterate [`step`] from `t0` to `t_end`, storing every level of the grid.
pub fn evolve(problem: &ParabolicProblem) -> Result<Trajectory> {
    problem.validate()?;
    let op = problem.discretize()?;
    let g = problem.grid;
    let dt_max = cfl_timestep(&op, problem.safety)?;
    let level_dt = g.level_dt();
    let sub = (level_dt / dt_max).ceil().max(1.0) as usize;
    let dt = level_dt / sub as f64;

    let active = problem.active_nodes()?;
    let mut u0: Vec<f64> = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let x = g.node(i);
        let v = if active.contains(&i) {
            (problem.initial)(x, g.t0)
        } else {
            problem.data.eval(x, g.t0)
        };
        if !v.is_finite() {
            return Err(Error::NonFinite { x, t: g.t0 });
        }
        u0.push(v);
    }
    let sup0 = u0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut state = StepState::new(problem, &op, u0, g.t0)?;
    let mut values = Vec::with_capacity(g.len() * g.n_levels());
    values.extend_from_slice(&state.values);
    let mut diagnostics = vec![level_diag(&state.values, g.t0, 0.0)];
    let mut data_sup = sup0;
    for m in 1..g.n_levels() {
        let prev = state.values.clone();
        for _ in 0..sub {
            step(&mut state, problem, &op, dt)?;
        }
        // land exactly on the stored level time
        state.t = g.time(m);
        for i in 0..g.len() {
            if !active.contains(&i) {
                state.values[i] = problem.data.eval(g.node(i), state.t);
                data_sup = data_sup.max(state.values[i].abs());
            }
        }
        let rate = active
            .clone()
            .map(|i| (state.values[i] - prev[i]).abs() / level_dt)
            .fold(0.0, f64::max);
        diagnostics.push(level_diag(&state.values, state.t, rate));
        values.extend_from_slice(&state.values);
    }
    let field = SpaceTimeField::new(g, values, problem.data.clone())?;
    Ok(Trajectory {
        field,
        cfl: CflRecord {
            dt,
            total_mass: op.cfl_mass(),
            safety: problem.safety,
            substeps_per_level: sub,
            total_steps: sub * g.n_steps,
        },
        diagnostics,
        active,
        comparison_bound: data_sup + (g.t_end - g.t0) * problem.rhs_bound,
    })
}

fn level_diag(v: &[f64], t: f64, rate: f64) -> LevelDiagnostics {
    LevelDiagnostics {
        t,
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        max_rate: rate,
    }
}

#[derive(Debug, Clone, Serialize)]
struct TrajectoryMeta<'a> {
    grid: &'a Grid,
    cfl: &'a CflRecord,
    active_nodes: [usize; 2],
    comparison_bound: f64,
    sup_norm: f64,
    exterior: &'a str,
    diagnostics: &'a [LevelDiagnostics],
}

impl Trajectory {
    /// CSV with columns `t,x,u`, every `level_stride`-th level and
    /// `node_stride`-th node.
    pub fn write_csv<W: Write>(&self, mut w: W, level_stride: usize, node_stride: usize) -> Result<()> {
        let g = self.field.grid();
        writeln!(w, "t,x,u")?;
        for m in (0..g.n_levels()).step_by(level_stride.max(1)) {
            let t = g.time(m);
            for i in (0..g.len()).step_by(node_stride.max(1)) {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", t, g.node(i), self.field.value(i, m))?;
            }
        }
        Ok(())
    }

    pub fn metadata_json(&self) -> Result<serde_json::Value> {
        let meta = TrajectoryMeta {
            grid: self.field.grid(),
            cfl: &self.cfl,
            active_nodes: [self.active.start, self.active.end - 1],
            comparison_bound: self.comparison_bound,
            sup_norm: self.field.sup_norm(),
            exterior: self.field.exterior().label(),
            diagnostics: &self.diagnostics,
        };
        Ok(serde_json::to_value(meta)?)
    }

    pub fn export(&self, dir: &Path, stem: &str, level_stride: usize, node_stride: usize) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let f = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(std::io::BufWriter::new(f), level_stride, node_stride)?;
        let meta = serde_json::to_string_pretty(&self.metadata_json()?)?;
        std::fs::write(dir.join(format!("{stem}.json")), meta + "\n")?;
        Ok(())
    }
}
