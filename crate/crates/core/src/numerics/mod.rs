//! Special functions, distribution functions, inversion and sphere sampling.

mod beta;
mod dist;
mod rng;
mod root;

pub use beta::{reg_incomplete_beta, reg_incomplete_beta_complement};
pub use dist::{beta_half_cdf, beta_half_sf, fsharp_cdf, fsharp_sf, student_t_quantile, CdfHandle, DofParam};
pub use rng::{sample_unit_sphere, RngStream};
pub use root::{bisect_boundary, invert_monotone, DEFAULT_TOL};

pub(crate) use rng::fill_unit_sphere;
