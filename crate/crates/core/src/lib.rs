pub mod approximation;
pub mod energy;
pub mod error;
pub mod io;
pub mod lipschitz;
pub mod metric;
pub mod mosco;

pub use error::{LabError, Result};
