//! Mean-delay analysis of signalized intersections under vehicle-actuated
//! exhaustive control.
//!
//! An intersection is a polling system whose queues (flows, one per lane)
//! are partitioned into groups that receive green simultaneously. A green
//! period ends only when every flow of the group is empty, after which an
//! all-red period separates it from the next group in the cycle.
//!
//! The crate provides
//! * [`model`]: the static intersection description, load normalization,
//!   derived constants and the stability test;
//! * [`distributions`]: two-moment phase-type fits used for headways,
//!   interarrival and all-red times;
//! * [`analytic`]: heavy-traffic delay laws, light-traffic mean delays and
//!   the closed-form interpolations between them;
//! * [`fluid`]: the heavy-traffic fluid model and drain-time recursions.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod distributions;
pub mod error;
pub mod fluid;
pub mod model;

pub use analytic::{
    approx_all, approx_mean_delay, density_zero, ht_delay_law, ht_scaled_mean,
    interpolation_constants, lt_line, lt_mean_general, lt_mean_poisson, select_order,
    ApproxOptions, DelayLaw, HtFormula, InterpolationConstants, InterpolationOrder, LtLine,
    OrderChoice,
};
pub use distributions::{fit, DensityAtZero, DistributionModel, Family, FittedDistribution, Moments};
pub use error::{ModelError, Result};
pub use fluid::{
    cycle_parts, dominant_trajectories, drain_times, drain_times_with_rates, fluid_delay_law,
    fluid_drift, fluid_trajectory, CycleParts, FluidDelayLaw, FluidTrajectory, UniformPiece,
};
pub use model::{
    check_stability, derive_quantities, normalize_loads, scale, DerivedQuantities, FlowRef,
    FlowSpec, GroupLayout, GroupSpec, IntersectionSpec, LoadedFlow, LoadedScenario, Mode, NormalizedLoads, RawFlow,
    Sigma2Convention, Stability, StabilityVerdict,
};

/// Floating-point scalar accepted by the analytic machinery.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite literal")
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub type Distribution = DistributionModel<f64>;
pub type Fitted = FittedDistribution<f64>;
pub type Flow = FlowSpec<f64>;
pub type Group = GroupSpec<f64>;
pub type Intersection = IntersectionSpec<f64>;
pub type Derived = DerivedQuantities<f64>;
pub type Scenario = LoadedScenario<f64>;
pub type Law = DelayLaw<f64>;
pub type Constants = InterpolationConstants<f64>;
