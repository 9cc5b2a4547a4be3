//! End-to-end experiments: scenario runs, deviation probes and calibration
//! sweeps.

mod run;
mod scenario;
mod sweep;
pub mod trader;

pub use run::{probe_deviations, run_scenario, AgentReport, DeviationRow, RunReport};
pub use scenario::{AgentSpec, Arrival, BeliefSpec, KPolicy, MarketParams, Scenario};
pub use sweep::{sweep_calibration, write_csv, GridSpec, SweepRow, CSV_HEADER};
