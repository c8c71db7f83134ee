//! Round-delay minimization: power-splitting ratios and UAV placement.
//!
//! A device's ratio only enters its own downlink SINR and its own harvest, so
//! the ratios are solved independently per device. Within a device, downlink
//! time falls strictly as the ratio grows, so the best ratio is the largest one
//! that still satisfies the per-round energy constraint.

mod delta;
mod placement;

pub use delta::{
    optimize_delta_all, optimize_delta_device, DeltaChoice, DeltaPolicy, DeltaSolution,
    DeviceContext, SolveMethod, BISECTION_MAX_ITERS, BISECTION_TOL, GRID_STEP,
};
pub use placement::{place_uav, PlacementMode, PlacementSearch, PlacementSolution};
