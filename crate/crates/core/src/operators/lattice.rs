use std::ops::Range;

use rayon::prelude::*;

use crate::domain::{Exterior, Grid, Snapshot};
use crate::error::{domain, Result};
use crate::kernels::TailGeometry;

/// Values on the extended lattice `-N..=2N` plus, for every evaluation node,
/// the far-field cell averages of `(g(x + y) + g(x - y)) / 2`.
///
/// The exterior part is recomputed only when the time changes and the data
/// is not stationary.
#[derive(Debug, Clone)]
pub struct LatticeState {
    grid: Grid,
    pub(crate) ext: Vec<f64>,
    nodes: Range<usize>,
    n_cells: usize,
    pub(crate) tail: Vec<f64>,
    filled_at: Option<f64>,
}

impl LatticeState {
    pub fn new(grid: &Grid, geometry: &TailGeometry, nodes: Range<usize>) -> Result<Self> {
        if nodes.start == 0 || nodes.end > grid.n_points || nodes.is_empty() {
            return domain(format!(
                "evaluation nodes {nodes:?} must lie strictly inside 0..={}",
                grid.n_points
            ));
        }
        let n_cells = geometry.n_cells();
        Ok(Self {
            grid: *grid,
            ext: vec![0.0; 3 * grid.n_points + 1],
            n_cells,
            tail: vec![0.0; nodes.len() * n_cells],
            nodes,
            filled_at: None,
        })
    }

    /// State for a single time level, ready to evaluate.
    pub fn from_snapshot(
        geometry: &TailGeometry,
        u: &Snapshot<'_>,
        nodes: Range<usize>,
    ) -> Result<Self> {
        let mut st = Self::new(u.grid, geometry, nodes)?;
        st.set_exterior(geometry, u.exterior, u.t);
        st.set_values(u.values)?;
        Ok(st)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nodes(&self) -> Range<usize> {
        self.nodes.clone()
    }

    /// Fill the lattice outside the grid and the far-field table at time `t`.
    pub fn set_exterior(&mut self, geometry: &TailGeometry, exterior: &Exterior, t: f64) {
        if let Some(prev) = self.filled_at {
            if prev == t || exterior.is_time_independent() {
                return;
            }
        }
        let n = self.grid.n_points;
        let g = &self.grid;
        for k in -(n as isize)..0 {
            self.ext[(k + n as isize) as usize] = exterior.eval(g.lattice_point(k), t);
        }
        for k in (n as isize + 1)..=(2 * n as isize) {
            self.ext[(k + n as isize) as usize] = exterior.eval(g.lattice_point(k), t);
        }
        let n_cells = self.n_cells;
        if n_cells > 0 {
            let start = self.nodes.start;
            self.tail
                .par_chunks_mut(n_cells)
                .enumerate()
                .for_each(|(r, row)| {
                    let x = g.node(start + r);
                    for (c, slot) in row.iter_mut().enumerate() {
                        let (ys, ws) = geometry.samples(c);
                        *slot = ys
                            .iter()
                            .zip(ws)
                            .map(|(y, w)| w * (exterior.eval(x + y, t) + exterior.eval(x - y, t)))
                            .sum::<f64>()
                            * 0.5;
                    }
                });
        }
        self.filled_at = Some(t);
    }

    /// Copy one time level of grid values into the lattice.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        let n = self.grid.n_points;
        if values.len() != n + 1 {
            return domain(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                n + 1
            ));
        }
        self.ext[n..=2 * n].copy_from_slice(values);
        Ok(())
    }

    /// Value at lattice index `k` in `-N..=2N`.
    #[inline]
    pub fn at(&self, k: isize) -> f64 {
        self.ext[(k + self.grid.n_points as isize) as usize]
    }

    #[inline]
    pub(crate) fn tail_row(&self, i: usize) -> &[f64] {
        let r = i - self.nodes.start;
        &self.tail[r * self.n_cells..(r + 1) * self.n_cells]
    }
}

/// `sum_j w_j p(u(x + j dx) + u(x - j dx) - 2 u(x))` over `j = 1..=w.len()`,
/// with four independent accumulators in a fixed order.
#[inline]
pub(crate) fn lattice_sum<P: Fn(f64) -> f64>(w: &[f64], ext: &[f64], c: usize, p: P) -> f64 {
    let n = w.len();
    let window = &ext[c - n..=c + n];
    let mid = n;
    let u2 = 2.0 * window[mid];
    let mut acc = [0.0f64; 4];
    let full = n / 4;
    for q in 0..full {
        let base = 4 * q;
        for (l, a) in acc.iter_mut().enumerate() {
            let j = base + l + 1;
            let d = window[mid + j] + window[mid - j] - u2;
            *a += w[j - 1] * p(d);
        }
    }
    let mut rest = 0.0;
    for j in 4 * full + 1..=n {
        let d = window[mid + j] + window[mid - j] - u2;
        rest += w[j - 1] * p(d);
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + rest
}
