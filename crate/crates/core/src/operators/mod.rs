//! Linear, extremal and Isaacs operators on the lattice, and the field
//! transforms used by the regularity diagnostics.

mod lattice;
mod transforms;

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundClass, EllipticityParams, Grid, Snapshot};
use crate::error::{domain, Error, Result};
use crate::kernels::{
    make_dyadic_rough_kernel, DiscreteKernel, Kernel, TailGeometry, TailQuadrature, UnitStencil,
};
use crate::rng::SplitMix64;

pub use lattice::LatticeState;
use lattice::lattice_sum;
pub use transforms::{increment_quotient, parabolic_rescale, parabolic_rescale_onto, rescale_operator, Affine};

/// `(u(x + y) + u(x - y)) / 2 - u(x)`.
pub fn second_difference(u: &Snapshot<'_>, x: f64, y: f64) -> f64 {
    0.5 * (u.value_at(x + y) + u.value_at(x - y)) - u.value_at(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Linear,
    PucciPlus,
    PucciMinus,
    Isaacs,
}

/// Finite Isaacs family `inf_a sup_b (L_ab u + c_ab)`, normalized so that
/// `inf_a sup_b c_ab = 0`.
#[derive(Debug, Clone)]
pub struct IsaacsFamily {
    params: EllipticityParams,
    n_alpha: usize,
    n_beta: usize,
    kernels: Vec<Kernel>,
    constants: Vec<f64>,
    shift: f64,
}

fn inf_sup(values: &[f64], n_beta: usize) -> f64 {
    values
        .chunks(n_beta)
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min)
}

impl IsaacsFamily {
    /// Rows are indexed by `alpha`, columns by `beta`.
    pub fn new(kernels: Vec<Vec<Kernel>>, constants: Vec<Vec<f64>>) -> Result<Self> {
        let n_alpha = kernels.len();
        if n_alpha == 0 || kernels[0].is_empty() {
            return domain("Isaacs family needs at least one kernel");
        }
        let n_beta = kernels[0].len();
        if kernels.iter().any(|r| r.len() != n_beta)
            || constants.len() != n_alpha
            || constants.iter().any(|r| r.len() != n_beta)
        {
            return domain("Isaacs kernels and constants must form matching rectangles");
        }
        let kernels: Vec<Kernel> = kernels.into_iter().flatten().collect();
        let params = kernels[0].params().clone();
        for k in &kernels {
            let p = k.params();
            if p.sigma != params.sigma
                || p.lambda != params.lambda
                || p.lambda_upper != params.lambda_upper
            {
                return domain("all kernels of an Isaacs family must share their ellipticity parameters");
            }
            if k.scale() != kernels[0].scale() {
                return domain("all kernels of an Isaacs family must share their scale");
            }
        }
        let mut constants: Vec<f64> = constants.into_iter().flatten().collect();
        if constants.iter().any(|c| !c.is_finite()) {
            return domain("Isaacs constants must be finite");
        }
        let shift = inf_sup(&constants, n_beta);
        for c in &mut constants {
            *c -= shift;
        }
        Ok(Self {
            params,
            n_alpha,
            n_beta,
            kernels,
            constants,
            shift,
        })
    }

    /// A single linear operator with zero constant.
    pub fn single(kernel: Kernel) -> Self {
        Self {
            params: kernel.params().clone(),
            n_alpha: 1,
            n_beta: 1,
            kernels: vec![kernel],
            constants: vec![0.0],
            shift: 0.0,
        }
    }

    /// Seeded family of dyadic rough kernels with constants in `[-1, 1]`.
    pub fn random(params: &EllipticityParams, n_alpha: usize, n_beta: usize, seed: u64) -> Result<Self> {
        let mut rng = SplitMix64::stream(seed, "isaacs-family");
        let mut kernels = Vec::with_capacity(n_alpha);
        let mut constants = Vec::with_capacity(n_alpha);
        for _ in 0..n_alpha {
            let mut kr = Vec::with_capacity(n_beta);
            let mut cr = Vec::with_capacity(n_beta);
            for _ in 0..n_beta {
                kr.push(make_dyadic_rough_kernel(params, rng.next_u64())?);
                cr.push(rng.uniform(-1.0, 1.0));
            }
            kernels.push(kr);
            constants.push(cr);
        }
        Self::new(kernels, constants)
    }

    pub fn params(&self) -> &EllipticityParams {
        &self.params
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_alpha, self.n_beta)
    }

    pub fn kernel(&self, alpha: usize, beta: usize) -> &Kernel {
        &self.kernels[alpha * self.n_beta + beta]
    }

    pub fn constant(&self, alpha: usize, beta: usize) -> f64 {
        self.constants[alpha * self.n_beta + beta]
    }

    /// The amount subtracted from the raw constants at construction.
    pub fn normalization_shift(&self) -> f64 {
        self.shift
    }

    pub fn inf_sup_constants(&self) -> f64 {
        inf_sup(&self.constants, self.n_beta)
    }

    /// Kernels rescaled by `r`, constants multiplied by `factor`.
    pub(crate) fn rescaled(&self, r: f64, factor: f64) -> Result<Self> {
        let kernels = self
            .kernels
            .iter()
            .map(|k| k.rescaled(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params: self.params.clone(),
            n_alpha: self.n_alpha,
            n_beta: self.n_beta,
            kernels,
            constants: self.constants.iter().map(|c| c * factor).collect(),
            shift: self.shift * factor,
        })
    }

    fn scale(&self) -> f64 {
        self.kernels[0].scale()
    }
}

/// Grid-independent description of an operator.
#[derive(Debug, Clone)]
pub enum OperatorHandle {
    Linear(Kernel),
    PucciPlus { params: EllipticityParams, scale: f64 },
    PucciMinus { params: EllipticityParams, scale: f64 },
    Isaacs(IsaacsFamily),
}

impl OperatorHandle {
    pub fn linear(k: Kernel) -> Self {
        OperatorHandle::Linear(k)
    }

    pub fn pucci_plus(params: &EllipticityParams) -> Self {
        OperatorHandle::PucciPlus {
            params: params.clone(),
            scale: 1.0,
        }
    }

    pub fn pucci_minus(params: &EllipticityParams) -> Self {
        OperatorHandle::PucciMinus {
            params: params.clone(),
            scale: 1.0,
        }
    }

    pub fn isaacs(f: IsaacsFamily) -> Self {
        OperatorHandle::Isaacs(f)
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            OperatorHandle::Linear(_) => OperatorKind::Linear,
            OperatorHandle::PucciPlus { .. } => OperatorKind::PucciPlus,
            OperatorHandle::PucciMinus { .. } => OperatorKind::PucciMinus,
            OperatorHandle::Isaacs(_) => OperatorKind::Isaacs,
        }
    }

    pub fn params(&self) -> &EllipticityParams {
        match self {
            OperatorHandle::Linear(k) => k.params(),
            OperatorHandle::PucciPlus { params, .. } | OperatorHandle::PucciMinus { params, .. } => {
                params
            }
            OperatorHandle::Isaacs(f) => f.params(),
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            OperatorHandle::Linear(k) => k.scale(),
            OperatorHandle::PucciPlus { scale, .. } | OperatorHandle::PucciMinus { scale, .. } => {
                *scale
            }
            OperatorHandle::Isaacs(f) => f.scale(),
        }
    }

    /// Discretize with far-field cells sized for exterior data of class `bound`.
    pub fn discretize(
        &self,
        grid: &Grid,
        bound: BoundClass,
        quadrature: TailQuadrature,
    ) -> Result<DiscreteOperator> {
        let params = self.params().clone();
        let tail = Arc::new(TailGeometry::build(&params, grid, bound, quadrature)?);
        let stencil = Arc::new(UnitStencil::build(&params, grid, self.scale(), tail)?);
        DiscreteOperator::on_stencil(self, grid, stencil)
    }
}

/// An operator resolved on a grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    kind: OperatorKind,
    params: EllipticityParams,
    grid: Grid,
    stencil: Arc<UnitStencil>,
    kernels: Vec<DiscreteKernel>,
    n_beta: usize,
    constants: Vec<f64>,
}

impl DiscreteOperator {
    pub fn on_stencil(h: &OperatorHandle, grid: &Grid, stencil: Arc<UnitStencil>) -> Result<Self> {
        if stencil.n_points != grid.n_points || stencil.dx != grid.dx() {
            return domain("stencil was built for a different grid");
        }
        let (kernels, n_beta, constants) = match h {
            OperatorHandle::Linear(k) => {
                (vec![DiscreteKernel::on_stencil(k, stencil.clone())?], 1, vec![0.0])
            }
            OperatorHandle::PucciPlus { .. } | OperatorHandle::PucciMinus { .. } => {
                (Vec::new(), 1, Vec::new())
            }
            OperatorHandle::Isaacs(f) => {
                let ks = f
                    .kernels
                    .iter()
                    .map(|k| DiscreteKernel::on_stencil(k, stencil.clone()))
                    .collect::<Result<Vec<_>>>()?;
                (ks, f.n_beta, f.constants.clone())
            }
        };
        Ok(Self {
            kind: h.kind(),
            params: h.params().clone(),
            grid: *grid,
            stencil,
            kernels,
            n_beta,
            constants,
        })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn params(&self) -> &EllipticityParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn stencil(&self) -> &Arc<UnitStencil> {
        &self.stencil
    }

    pub fn tail(&self) -> &TailGeometry {
        &self.stencil.tail
    }

    pub fn kernels(&self) -> &[DiscreteKernel] {
        &self.kernels
    }

    /// Largest diagonal coefficient of the scheme; explicit steps need
    /// `dt * mass <= 1`.
    pub fn cfl_mass(&self) -> f64 {
        match self.kind {
            OperatorKind::PucciPlus | OperatorKind::PucciMinus => {
                self.params.lambda_upper * self.stencil.total_mass()
            }
            _ => self
                .kernels
                .iter()
                .map(|k| k.total_mass)
                .fold(0.0, f64::max),
        }
    }

    /// Evaluate at node `i` of a prepared lattice state.
    pub fn eval_node(&self, st: &LatticeState, i: usize) -> f64 {
        match self.kind {
            OperatorKind::Linear => linear_node(&self.kernels[0], st, i),
            OperatorKind::PucciPlus => pucci_node(
                &self.stencil,
                self.params.lambda_upper,
                self.params.lambda,
                st,
                i,
            ),
            OperatorKind::PucciMinus => pucci_node(
                &self.stencil,
                self.params.lambda,
                self.params.lambda_upper,
                st,
                i,
            ),
            OperatorKind::Isaacs => {
                let mut best = f64::INFINITY;
                for (ks, cs) in self
                    .kernels
                    .chunks(self.n_beta)
                    .zip(self.constants.chunks(self.n_beta))
                {
                    let row = ks
                        .iter()
                        .zip(cs)
                        .map(|(k, c)| linear_node(k, st, i) + c)
                        .fold(f64::NEG_INFINITY, f64::max);
                    best = best.min(row);
                }
                best
            }
        }
    }

    /// Evaluate at every node of the state, in parallel.
    pub fn apply(&self, st: &LatticeState) -> Vec<f64> {
        st.nodes()
            .into_par_iter()
            .map(|i| self.eval_node(st, i))
            .collect()
    }

    /// Evaluate on the nodes `nodes` of one time level.
    pub fn apply_snapshot(&self, u: &Snapshot<'_>, nodes: Range<usize>) -> Result<Vec<f64>> {
        self.check_grid(u.grid)?;
        let st = LatticeState::from_snapshot(self.tail(), u, nodes)?;
        Ok(self.apply(&st))
    }

    /// Evaluate at one interior node.
    pub fn apply_at(&self, u: &Snapshot<'_>, i: usize) -> Result<f64> {
        self.check_grid(u.grid)?;
        if i == 0 || i >= u.grid.n_points {
            return domain(format!(
                "node {i} is not strictly inside the grid 0..={}",
                u.grid.n_points
            ));
        }
        let st = LatticeState::from_snapshot(self.tail(), u, i..i + 1)?;
        Ok(self.eval_node(&st, i))
    }

    fn check_grid(&self, g: &Grid) -> Result<()> {
        if g.n_points != self.grid.n_points || g.half_width != self.grid.half_width {
            return Err(Error::Domain(
                "field grid differs from the operator's grid".into(),
            ));
        }
        Ok(())
    }
}

#[inline]
fn linear_node(k: &DiscreteKernel, st: &LatticeState, i: usize) -> f64 {
    let c = i + st.grid().n_points;
    let u = st.ext[c];
    let h = k.stencil.dx;
    let mut v = lattice_sum(&k.weights, &st.ext, c, |d| d);
    v += k.w0 * ((st.ext[c + 1] + st.ext[c - 1] - 2.0 * u) / (h * h));
    let tail: f64 = k
        .tail_mass
        .iter()
        .zip(st.tail_row(i))
        .map(|(m, s)| m * (s - u))
        .sum();
    v + 2.0 * tail
}

/// The cellwise extremal value with coefficient `up` where the increment is
/// positive and `down` where it is negative.
#[inline]
fn pucci_node(s: &UnitStencil, up: f64, down: f64, st: &LatticeState, i: usize) -> f64 {
    let pick = |d: f64| if d > 0.0 { up * d } else { down * d };
    let c = i + st.grid().n_points;
    let u = st.ext[c];
    let h = s.dx;
    let mut v = lattice_sum(&s.weights, &st.ext, c, pick);
    v += s.w0 * pick((st.ext[c + 1] + st.ext[c - 1] - 2.0 * u) / (h * h));
    let tail: f64 = s
        .tail
        .cells
        .iter()
        .zip(st.tail_row(i))
        .map(|(cell, sbar)| cell.mass * pick(sbar - u))
        .sum();
    v + 2.0 * tail
}

/// `L u` at node `i` for a discretized kernel.
pub fn apply_linear(k: &DiscreteKernel, u: &Snapshot<'_>, i: usize) -> Result<f64> {
    if u.grid.n_points != k.stencil.n_points || u.grid.dx() != k.stencil.dx {
        return domain("field grid differs from the kernel's grid");
    }
    if i == 0 || i >= u.grid.n_points {
        return domain(format!("node {i} is not strictly inside the grid"));
    }
    let st = LatticeState::from_snapshot(&k.stencil.tail, u, i..i + 1)?;
    Ok(linear_node(k, &st, i))
}

fn pucci_checked(s: &UnitStencil, up: f64, down: f64, u: &Snapshot<'_>, i: usize) -> Result<f64> {
    if u.grid.n_points != s.n_points || u.grid.dx() != s.dx {
        return domain("field grid differs from the stencil's grid");
    }
    if i == 0 || i >= u.grid.n_points {
        return domain(format!("node {i} is not strictly inside the grid"));
    }
    let st = LatticeState::from_snapshot(&s.tail, u, i..i + 1)?;
    Ok(pucci_node(s, up, down, &st, i))
}

/// `M+ u` at node `i`.
pub fn pucci_plus(s: &UnitStencil, params: &EllipticityParams, u: &Snapshot<'_>, i: usize) -> Result<f64> {
    pucci_checked(s, params.lambda_upper, params.lambda, u, i)
}

/// `M- u` at node `i`.
pub fn pucci_minus(s: &UnitStencil, params: &EllipticityParams, u: &Snapshot<'_>, i: usize) -> Result<f64> {
    pucci_checked(s, params.lambda, params.lambda_upper, u, i)
}

/// `inf_a sup_b (L_ab u + c_ab)` at node `i`.
pub fn isaacs_apply(op: &DiscreteOperator, u: &Snapshot<'_>, i: usize) -> Result<f64> {
    op.apply_at(u, i)
}

#[cfg(test)]
mod tests;
