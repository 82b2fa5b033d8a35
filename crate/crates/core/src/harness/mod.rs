//! Scenario orchestration: configuration, the simulate/attack/estimate/detect
//! loop, error metrics, parameter sweeps and file export.

mod config;
mod export;
mod metrics;
mod scenario;
mod sweep;

pub use config::{
    AttackConfig, DetectorConfig, DetectorKind, NoiseConfig, ObserverConfig, ScenarioConfig,
    ScopeChoice, SweepConfig, SweepParameter,
};
pub use export::{config_hash, export, ExportFormat, ExportedFile, Manifest, SCHEMA_VERSION};
pub use metrics::{compute_metrics, Metrics};
pub use scenario::{
    plan_attack, prepare, run_scenario, start_step, AttackPlan, ScenarioResult, ScenarioSummary,
    Setup,
};
pub use sweep::{sweep, with_parameter, write_sweep_table, SweepRow};
