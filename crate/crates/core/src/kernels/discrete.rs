use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{unit_density, Kernel};
use crate::domain::{BoundClass, EllipticityParams, Grid};
use crate::error::{Error, Result};
use crate::quadrature::{GL4_NODES, GL4_WEIGHTS};

/// Tolerance on the truncated far-field contribution.
pub const TAIL_CUTOFF_TOL: f64 = 1e-8;
/// Geometric ratio of consecutive far-field cells.
pub const TAIL_CELL_RATIO: f64 = 1.25;
const MAX_TAIL_CELLS: usize = 4000;

/// `int_lo^hi (2 - sigma) y^(-1 - sigma) dy` in closed form, `0 < lo < hi <= inf`.
pub fn unit_cell_integral(sigma: f64, lo: f64, hi: f64) -> f64 {
    if sigma >= 2.0 || hi <= lo {
        return 0.0;
    }
    // lo^-s - hi^-s = lo^-s (1 - (lo/hi)^s), written to avoid cancellation
    (2.0 - sigma) / sigma * lo.powf(-sigma) * -(sigma * (lo / hi).ln()).exp_m1()
}

/// Sampling density of the far-field cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailQuadrature {
    /// Gauss panels per unit length of a cell.
    pub panels_per_unit: f64,
    /// Cap on panels per cell.
    pub max_panels: usize,
}

impl Default for TailQuadrature {
    fn default() -> Self {
        Self {
            panels_per_unit: 1.0,
            max_panels: 16,
        }
    }
}

impl TailQuadrature {
    /// Dense sampling for oscillating exterior data.
    pub fn fine() -> Self {
        Self {
            panels_per_unit: 4.0,
            max_panels: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCell {
    pub lo: f64,
    pub hi: f64,
    /// One-sided unit-profile mass of the cell.
    pub mass: f64,
    pub(crate) nodes: std::ops::Range<usize>,
}

/// Far-field cells beyond the lattice reach, shared by every kernel of a
/// given order on a given grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailGeometry {
    pub sigma: f64,
    pub start: f64,
    pub cutoff: f64,
    pub bound: BoundClass,
    pub quadrature: TailQuadrature,
    pub cells: Vec<TailCell>,
    /// Offsets `y` of the sample points, all cells concatenated.
    pub(crate) offsets: Vec<f64>,
    /// Sample weights; within each cell they sum to one.
    pub(crate) weights: Vec<f64>,
}

impl TailGeometry {
    /// Cells from `(N + 1/2) dx` out to where `Lambda` times the declared
    /// exterior bound times the remaining mass is below the cutoff tolerance.
    pub fn build(
        params: &EllipticityParams,
        grid: &Grid,
        bound: BoundClass,
        quadrature: TailQuadrature,
    ) -> Result<TailGeometry> {
        if params.n != 1 {
            return Err(Error::Domain(format!(
                "grids are one-dimensional; cannot discretize an n = {} class",
                params.n
            )));
        }
        let sigma = params.sigma;
        let start = (grid.n_points as f64 + 0.5) * grid.dx();
        let mut geo = TailGeometry {
            sigma,
            start,
            cutoff: start,
            bound,
            quadrature,
            cells: Vec::new(),
            offsets: Vec::new(),
            weights: Vec::new(),
        };
        if params.is_second_order() {
            return Ok(geo);
        }
        let data_at_grid = bound.at(grid.half_width);
        let err = |r: f64| -> Result<f64> {
            Ok(params.lambda_upper
                * (bound.power_tail(r, sigma)?
                    + 2.0 * data_at_grid * unit_cell_integral(sigma, r, f64::INFINITY)))
        };
        let mut lo = start;
        while err(lo)? >= TAIL_CUTOFF_TOL {
            if geo.cells.len() >= MAX_TAIL_CELLS {
                return Err(Error::Divergence(format!(
                    "far field not below {TAIL_CUTOFF_TOL} after {MAX_TAIL_CELLS} cells"
                )));
            }
            let hi = lo * TAIL_CELL_RATIO;
            let first = geo.offsets.len();
            let panels = (((hi - lo) * quadrature.panels_per_unit).ceil() as usize)
                .clamp(1, quadrature.max_panels.max(1));
            let width = (hi - lo) / panels as f64;
            let mut total = 0.0;
            for p in 0..panels {
                let a = lo + p as f64 * width;
                let mid = a + 0.5 * width;
                for (x, w) in GL4_NODES.iter().zip(GL4_WEIGHTS.iter()) {
                    let y = mid + 0.5 * width * x;
                    let wy = w * unit_density(sigma, y);
                    geo.offsets.push(y);
                    geo.weights.push(wy);
                    total += wy;
                }
            }
            for w in &mut geo.weights[first..] {
                *w /= total;
            }
            geo.cells.push(TailCell {
                lo,
                hi,
                mass: unit_cell_integral(sigma, lo, hi),
                nodes: first..geo.offsets.len(),
            });
            lo = hi;
        }
        geo.cutoff = lo;
        Ok(geo)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_samples(&self) -> usize {
        self.offsets.len()
    }

    /// Sample offsets and normalized weights of cell `c`.
    pub fn samples(&self, c: usize) -> (&[f64], &[f64]) {
        let r = self.cells[c].nodes.clone();
        (&self.offsets[r.clone()], &self.weights[r])
    }
}

/// Unit-profile lattice weights of one order on one grid.
///
/// `weights[j - 1]` is the one-sided mass of the cell `[(j - 1/2) dx, (j + 1/2) dx]`
/// for `1 <= j <= N`. The near-origin coefficient `w0` multiplies the
/// centered second difference; it is fixed so the scheme reproduces the
/// second moment `int_{|y| < R} y^2 K` exactly over the matching radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitStencil {
    pub sigma: f64,
    pub c_n: f64,
    pub dx: f64,
    pub n_points: usize,
    pub scale: f64,
    pub match_cells: usize,
    pub weights: Vec<f64>,
    pub w0: f64,
    pub tail: Arc<TailGeometry>,
}

impl UnitStencil {
    pub fn build(
        params: &EllipticityParams,
        grid: &Grid,
        scale: f64,
        tail: Arc<TailGeometry>,
    ) -> Result<UnitStencil> {
        grid.validate()?;
        let sigma = params.sigma;
        if tail.sigma != sigma {
            return Err(Error::Domain(format!(
                "far-field cells were built for sigma = {}, not {sigma}",
                tail.sigma
            )));
        }
        let h = grid.dx();
        let n = grid.n_points;
        let reach = (1.0 / scale) / h;
        let match_cells = ((reach + 1e-9).floor() as usize).min(n);
        let (weights, w0) = if params.is_second_order() {
            (vec![0.0; n], params.c_n)
        } else {
            let weights: Vec<f64> = (1..=n)
                .map(|j| {
                    let j = j as f64;
                    unit_cell_integral(sigma, (j - 0.5) * h, (j + 0.5) * h)
                })
                .collect();
            let radius = (match_cells as f64 + 0.5) * h;
            let lattice: f64 = weights[..match_cells]
                .iter()
                .enumerate()
                .map(|(j, w)| {
                    let y = (j + 1) as f64 * h;
                    w * y * y
                })
                .sum();
            (weights, (radius.powf(2.0 - sigma) - lattice).max(0.0))
        };
        Ok(UnitStencil {
            sigma,
            c_n: params.c_n,
            dx: h,
            n_points: n,
            scale,
            match_cells,
            weights,
            w0,
            tail,
        })
    }

    /// Diagonal mass `2 sum W_j + 2 w0 / dx^2 + 2 sum m_c`.
    pub fn total_mass(&self) -> f64 {
        let lattice: f64 = self.weights.iter().sum();
        let tail: f64 = self.tail.cells.iter().map(|c| c.mass).sum();
        2.0 * lattice + 2.0 * self.w0 / (self.dx * self.dx) + 2.0 * tail
    }
}

/// A kernel resolved onto a [`UnitStencil`]: every cell carries the average
/// of the profile over the cell, so the discrete operator is the unit scheme
/// with cellwise coefficients in `[lambda, Lambda]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteKernel {
    pub stencil: Arc<UnitStencil>,
    /// Profile averages per lattice cell.
    pub abar: Vec<f64>,
    /// `w_j = abar_j * W_j` for `j = 1..=N`.
    pub weights: Vec<f64>,
    pub abar0: f64,
    pub w0: f64,
    pub tail_abar: Vec<f64>,
    /// One-sided far-field cell masses of the kernel.
    pub tail_mass: Vec<f64>,
    pub total_mass: f64,
}

/// Discretize against bounded exterior data `|g| <= 1` with default far-field sampling.
pub fn discretize_kernel(k: &Kernel, grid: &Grid) -> Result<DiscreteKernel> {
    discretize_kernel_with(
        k,
        grid,
        BoundClass::Bounded { bound: 1.0 },
        TailQuadrature::default(),
    )
}

pub fn discretize_kernel_with(
    k: &Kernel,
    grid: &Grid,
    bound: BoundClass,
    quadrature: TailQuadrature,
) -> Result<DiscreteKernel> {
    let tail = Arc::new(TailGeometry::build(k.params(), grid, bound, quadrature)?);
    let stencil = Arc::new(UnitStencil::build(k.params(), grid, k.scale(), tail)?);
    DiscreteKernel::on_stencil(k, stencil)
}

impl DiscreteKernel {
    pub fn on_stencil(k: &Kernel, stencil: Arc<UnitStencil>) -> Result<DiscreteKernel> {
        if k.sigma() != stencil.sigma {
            return Err(Error::Domain(format!(
                "kernel order {} does not match stencil order {}",
                k.sigma(),
                stencil.sigma
            )));
        }
        let h = stencil.dx;
        let mut abar = Vec::with_capacity(stencil.weights.len());
        let mut weights = Vec::with_capacity(stencil.weights.len());
        for (j, &wu) in stencil.weights.iter().enumerate() {
            let jj = (j + 1) as f64;
            if wu == 0.0 {
                abar.push(k.a(jj * h));
                weights.push(0.0);
                continue;
            }
            let w = k.cell_integral((jj - 0.5) * h, (jj + 0.5) * h)?;
            check_finite(w, "lattice weight")?;
            abar.push(w / wu);
            weights.push(w);
        }
        let abar0 = k.inner_average(0.5 * h)?;
        check_finite(abar0, "near-origin coefficient")?;
        let w0 = abar0 * stencil.w0;
        let mut tail_abar = Vec::with_capacity(stencil.tail.cells.len());
        let mut tail_mass = Vec::with_capacity(stencil.tail.cells.len());
        let sampled = matches!(k.profile(), super::Profile::User(_));
        for (ci, c) in stencil.tail.cells.iter().enumerate() {
            let m = if sampled {
                // far cells are too wide for adaptive quadrature of an
                // arbitrary profile; average it on the cell's sample points
                let (ys, ws) = stencil.tail.samples(ci);
                c.mass * ys.iter().zip(ws).map(|(y, w)| w * k.a_sym(*y)).sum::<f64>()
            } else {
                k.cell_integral(c.lo, c.hi)?
            };
            check_finite(m, "far-field mass")?;
            tail_abar.push(if c.mass > 0.0 { m / c.mass } else { 0.0 });
            tail_mass.push(m);
        }
        let total_mass = 2.0 * weights.iter().sum::<f64>()
            + 2.0 * w0 / (h * h)
            + 2.0 * tail_mass.iter().sum::<f64>();
        Ok(DiscreteKernel {
            stencil,
            abar,
            weights,
            abar0,
            w0,
            tail_abar,
            tail_mass,
            total_mass,
        })
    }

    pub fn dx(&self) -> f64 {
        self.stencil.dx
    }

    pub fn sigma(&self) -> f64 {
        self.stencil.sigma
    }

    /// `w_j` for `j != 0`, symmetric in `j`.
    pub fn weight(&self, j: isize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        self.weights
            .get(j.unsigned_abs() - 1)
            .copied()
            .unwrap_or(0.0)
    }
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Quadrature(format!("{what} is not finite")))
    }
}
