//! Numerical study of shift maps along orbits of vector fields.
//!
//! A vector field `F` turns every smooth time function `alpha` into a
//! self-map of the ambient space, `x -> F(x, alpha(x))`, by sliding each
//! point along its own orbit. This crate integrates local flows with dense
//! output, evaluates and compares such shift maps on sample grids, and
//! verifies the identities that relate them across reparametrizations
//! `F -> mu F`:
//!
//! * the bridge `G(x, s) = F(x, alpha(x, s))` with
//!   `alpha(x, s) = integral of mu along the orbit`, and the induced
//!   correspondence `xi` between time functions of `G = mu F` and of `F`;
//! * the pushforward identity `h_* F = (1 + F(alpha)) F` for shift-map
//!   diffeomorphisms `h`;
//! * periodic shift maps: per-point minimal periods, the period function
//!   `theta`, its transformation `theta_bar = beta(x, theta(x))` under
//!   reparametrization, normalization `theta F` to a unit-period flow, and
//!   the rotation-block structure of the linearization at singular points.
//!
//! The `flowshift` binary drives config-defined verification suites and
//! writes JSON/CSV reports; see the crate README.

pub mod config;
pub mod error;
pub mod fields;
pub mod flow;
pub mod periodic;
pub mod pushforward;
pub mod reparam;
pub mod report;
pub mod shiftmap;
pub mod space;
pub mod suites;

pub use error::{Error, EscapeReason, Result};
pub use fields::{
    builtin_catalog, finite_difference_jacobian, scale_field, SampleGrid, ScalarFieldSpec,
    VectorFieldSpec,
};
pub use flow::{
    flow_with_integral, integrate, trajectory, IntegratorConfig, StepStats, Trajectory, Weight,
};
pub use report::VerificationReport;

/// Run items in parallel preserving order (serial without the `parallel`
/// feature, so the wasm demo builds without a thread pool).
pub(crate) fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
