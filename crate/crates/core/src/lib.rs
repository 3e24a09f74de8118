//! Leader-follower control laboratory.
//!
//! A follower vehicle tracks a leader using only a camera's bounding box
//! around a colored panel on the leader: the horizontal pixel offset drives
//! steering and the box area drives speed. The crate simulates the pair
//! deterministically, runs PID and fuzzy controllers side by side, and
//! reports how they compare.
//!
//! - [`world`]: bicycle kinematics, leader scripts, geometric errors.
//! - [`sensor`]: pinhole projection of the panel into bounding-box readings.
//! - [`control`]: PID, Mamdani fuzzy, exponential filter, servo mapping.
//! - [`experiment`]: scenario files and the closed-loop runners.
//! - [`metrics`]: step and tracking metrics, comparison reports, CSV/SVG.
//! - [`tune`]: exhaustive grid search over controller gains.

pub mod control;
pub mod experiment;
pub mod metrics;
pub mod sensor;
pub mod tune;
pub mod world;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/vehicle.md")]
    mod vehicle {}
    #[doc = include_str!("../../../book/src/camera.md")]
    mod camera {}
    #[doc = include_str!("../../../book/src/controllers.md")]
    mod controllers {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/tuning.md")]
    mod tuning {}
}
