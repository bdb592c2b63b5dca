//! Scenario files, trajectory export and metrics.

pub mod config;
pub mod export;
pub mod metrics;

pub use config::{load_scenario, ConfigError, LoadedScenario, ScenarioFile};
pub use export::{export_csv, export_geojson, load_csv, ExportError};
pub use metrics::{compute_rmse, MetricsReport};
