//! Matrix-free all-at-once solver for the time-space fractional
//! Bloch-Torrey equation with tau preconditioners.
//!
//! The crate is organised bottom-up:
//!
//! * [`discretization`]: L1 temporal weights and three spatial schemes.
//! * [`operators`]: `T`, `B` and `A = B ⊗ I_N + I_J ⊗ T` as matrix-free maps.
//! * [`tau`]: the single-sided preconditioner `P` and the two-sided pair
//!   `P_l`, `P_r`, applied through fast sine transforms.
//! * [`gmres`]: restarted GMRES and the three solver drivers.
//! * [`oracle`]: dense reference matrices and spectral checks for small sizes.
//! * [`experiment`]: the two-dimensional model problem, parameter sweeps and
//!   table rendering behind the `aaotau` binary.

pub mod discretization;
pub mod error;
pub mod experiment;
pub mod gmres;
pub mod layout;
pub mod operators;
pub mod oracle;
pub mod tau;

pub use discretization::{ProblemSpec, SpatialScheme, SpatialWeights, TemporalWeights};
pub use error::{Error, Result};
pub use gmres::{gmres_solve, solve, solve_os, solve_ts, solve_unpreconditioned, SolveReport, SolverConfig, SolverKind, StopCriterion};
pub use operators::{assemble_rhs, AllAtOnceOperator, SpatialOperator, TemporalOperator};
pub use tau::{BlockSolver, SineTransformPlan, TauPreconditioner, DEFAULT_ETA};
