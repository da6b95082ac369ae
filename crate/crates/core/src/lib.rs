//! Topology-driven patch smoothers and geometric multigrid for 2D finite
//! element problems.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod error;
pub mod bench;
pub mod forms;
pub mod krylov;
pub mod linalg;
pub mod multigrid;
pub mod nonlinear;
pub mod patchsmoother;
pub mod reference;
pub mod space;
pub mod topology;

pub use error::{Error, Result};
