//! Desk-scale simulator of microscopic chemical sensors in capillaries.
//!
//! Models single-file red blood cells as rigid axisymmetric bodies in Stokes
//! flow, transports a dissolved chemical by advection–diffusion, and measures
//! sensor absorption and forces for two scenarios: a band of devices embedded
//! in the vessel wall, and a free sphere riding between the cells. Each run
//! can be paired with an empty-vessel variant and closed-form baselines.
//!
//! See the `book/` guide at the repository root for the concepts and the
//! discretization, and `README.md` for the command-line interface.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod grid;
pub mod linsolve;
pub mod rng;
pub mod scenarios;
pub mod stokes;
pub mod transport;

pub use config::{derive, validate, DerivedQuantities, SimulationConfig};
pub use geometry::{build_train, gap_for_speed, solve_shape, CellShape, CellTrain};
pub use scenarios::{compare_models, run_scenario1, run_scenario2, sample_counts, RunRecord};

/// The guide chapters double as documentation tests so the book's runnable
/// snippets stay in lockstep with the API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub struct $name;
        };
    }
    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(Model, "../../../book/src/model.md");
    chapter!(Geometry, "../../../book/src/geometry.md");
    chapter!(Grid, "../../../book/src/grid.md");
    chapter!(Flow, "../../../book/src/flow.md");
    chapter!(Transport, "../../../book/src/transport.md");
    chapter!(Scenarios, "../../../book/src/scenarios.md");
    chapter!(Baselines, "../../../book/src/baselines.md");
    chapter!(Cli, "../../../book/src/cli.md");
}
