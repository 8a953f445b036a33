pub mod apps;
pub mod baselines;
pub mod bench;
pub mod convex1d;
pub mod error;
pub mod geometry2d;
pub mod oracle;
pub mod quadform;
pub mod satred;
pub mod solution;
pub mod solver1d;
pub mod solver2d;
pub mod solverhd;

pub use error::{Error, Result};
pub use solution::Solution;
