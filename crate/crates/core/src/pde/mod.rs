//! Reaction-dispersion solver on the unit square.

pub mod flow;
pub mod mesh;
pub mod params;
pub mod solver;
pub mod trajectory;

pub use flow::{dispersion_at, stream_function_at, velocity_at, Branch, Point, Tensor2};
pub use mesh::{build_mesh, Mesh};
pub use params::{
    DispersionParams, FlowParams, ReactionMode, ReactionParams, SimulationConfig, SolverSettings,
};
pub use solver::{solve, solve_on, step, NodalFields, Solver, Species, StepStats};
pub use trajectory::{Frame, Trajectory};
