//! Sample sources: a seeded synthetic stream with drift, CSV datasets, and
//! scripted scenarios that drive an instance.

mod dataset;
mod scenario;
mod synthetic;

pub use dataset::{
    cyclic_features, load_csv, read_csv, ColumnSpec, CsvLoad, CsvSchema, RangeFlag, Strictness,
};
pub use scenario::{
    replay, BootstrapSpec, CheckpointReport, RunOutput, RUN_FILES, ScenarioEvent, ScenarioRunner,
    ScenarioScript, ScriptStep, SourceSpec,
};
pub use synthetic::{generate, DriftKind, DriftSpec, SyntheticConfig, SyntheticStream};
