//! Session orchestration: random interleaving of QKD and TGI rounds, sifting
//! of the announced labels, chunked simulation and the experiment presets.

mod config;
mod engine;
mod experiment;
mod model;
mod presets;
mod schedule;

pub use config::{
    merge_tables, AnalysisSection, AttackChoice, AttackSection, ChannelSection, DetectorSection, ExperimentConfig,
    GridSection, IaSource, ProtocolSection, QkdSection, SourceSection,
};
pub use engine::{run_session, Execution, SessionPlan, SessionStats};
pub use experiment::{
    run_experiment, AnalysisSummary, ExperimentResult, NamedImage, NoiseFloorSummary, Rates, RoundCounts, Summary,
    TruthSummary,
};
pub use model::{build_grid, build_spad, RoundRecord, RoundTruth, Scratch, SessionModel};
pub use presets::{preset_table, Preset, PRESETS};
pub use schedule::{classify, schedule, sift, AliceLabel, BobLabel, RoundClass, SessionSchedule, SiftResult};
