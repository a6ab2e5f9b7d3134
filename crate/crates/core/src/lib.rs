pub mod cli_io;
pub mod coupled;
pub mod error;
pub mod fp_radial;
pub mod geometry;
pub mod nordstrom;
pub mod profile;
pub mod quad;
pub mod sde_mc;
pub mod specialfn;
pub mod ultra_exact;
pub mod verify;

pub use error::{Error, Result};
