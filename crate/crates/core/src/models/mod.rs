pub mod linear_gaussian;
pub mod sv;
pub mod toy;

pub use linear_gaussian::{LgFamily, LinearGaussian};
pub use sv::{SvFamily, SvModel, SvParams, SvPrior};
pub use toy::{DiscreteToy, ToyFamily};
