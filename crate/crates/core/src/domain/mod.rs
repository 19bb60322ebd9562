//! Value types shared by every other module: ellipticity parameters, the
//! space-time lattice, sampled fields with exterior data, parabolic
//! cylinders, and the weight `omega_sigma0`.

mod cylinder;
mod field;
mod grid;
mod params;
mod weight;

pub use cylinder::{cylinder, Cylinder, SnappedCylinder};
pub use field::{BoundClass, DataFn, Exterior, Snapshot, SpaceTimeField};
pub use grid::Grid;
pub use params::EllipticityParams;
pub use weight::{weight_omega, weighted_l1_norm, TAIL_RATIO, TAIL_TOL};
