//! Boundary stabilization of a 1-D reaction-diffusion equation by folding it
//! into a 2x2 system and applying backstepping.

pub mod error;
pub mod fold;
pub mod grid;
pub mod interp;
pub mod kernel_aux;
pub mod kernel_ctrl;
pub mod kernel_obs;
pub mod gains;
pub mod sim;
pub mod analysis;
pub mod synthesis;
pub mod export;
pub mod plant;
pub mod residual;

pub use error::{Error, Result};
pub use fold::{fold, folded_params, unfold, FoldedParams};
pub use grid::{Field, Grid1D, Orientation, TriGrid};
pub use plant::{gauge_transform, FoldSide, GaugeDirection, PlantSpec, Profile};
