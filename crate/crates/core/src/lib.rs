//! Numerical library for Finsleroid-regular Finsler spaces and their
//! pseudo-Riemannian counterparts: the metric function, the full closed-form
//! tensor family (metric tensor, angular metric, Cartan tensor), spray
//! coefficients with a Berwald-condition checker, a geodesic integrator, and
//! certified finite-difference oracles cross-validating every closed form.

pub mod battery;
pub mod checks;
pub mod error;
pub mod fields;
pub mod geodesic;
pub mod kernel;
pub mod linalg;
pub mod oracle;
pub mod poly;
pub mod pseudo;
pub mod report;
pub mod scenario;
pub mod spray;
pub mod tensors;

pub use error::{Error, Result};
pub use fields::{FieldSet, PointFields, Signature};
pub use kernel::ScalarKernel;
pub use scenario::Scenario;
