//! Kinodynamic motion planning with curated and learned maneuver sets.
//!
//! The toolkit plans for a skid-steer vehicle whose only state-space
//! primitive is forward propagation of piecewise-constant controls. It
//! provides:
//!
//! - [`sim`]: the vehicle model and fixed-step RK4 propagation,
//! - [`world`]: 2D workspaces, collision queries, goal regions, local
//!   occupancy/heuristic rasterization, and random environments,
//! - [`metrics`]: trajectories, plans, duration cost, and the
//!   area-between-trajectories dispersion metric,
//! - [`curation`]: online selection of an exploitative maneuver (heuristic
//!   argmin) plus exploratory maneuvers (greedy max-min dispersion) from a
//!   large random candidate pool,
//! - [`planner`]: an informed tree planner that propagates a node's informed
//!   maneuver set first and then reverts to random controls, with
//!   branch-and-bound pruning and witness sparsification,
//! - [`learn`]: a from-scratch feedforward network trained to imitate the
//!   curation process, usable as a maneuver provider at near-random cost,
//! - [`bench`]: multi-seed experiment runs and comparison tables.
//!
//! All numeric code is generic over the scalar type via [`Real`]; the
//! aliases below fix the concrete types used by the CLI and the benchmark
//! harness (`f64` for planning, `f32` for network weights, which matches
//! the on-disk model format).

pub mod bench;
pub mod curation;
pub mod learn;
pub mod metrics;
pub mod planner;
pub mod scalar;
pub mod sim;
pub mod world;

pub use scalar::Real;

/// Planning-precision state.
pub type State = sim::State<f64>;
/// Planning-precision control.
pub type Control = sim::Control<f64>;
/// Planning-precision maneuver.
pub type Maneuver = sim::Maneuver<f64>;
/// Planning-precision dynamics parameters.
pub type DynamicsParams = sim::DynamicsParams<f64>;
/// Planning-precision trajectory.
pub type Trajectory = metrics::Trajectory<f64>;
/// Planning-precision plan.
pub type Plan = metrics::Plan<f64>;
/// Planning-precision workspace.
pub type Workspace = world::Workspace<f64>;
/// Planning-precision goal region.
pub type GoalRegion = world::GoalRegion<f64>;
/// Planning-precision environment (workspace + start + goal).
pub type Environment = world::Environment<f64>;




