//! Experiment orchestration: configuration, seeded streams, replication,
//! aggregation and CSV output.

pub mod config;
pub mod oracle;
pub mod rng;
pub mod run;

pub use config::{default_checkpoints, parse_config, Algorithm, EnvironmentSpec, EtaSetting, ExperimentConfig, GameSource};
pub use rng::{rng_stream, substream, Stream};
pub use run::{
    aggregate, diagnostics_csv, diagnostics_path, game_csv, parse_game_csv, parse_regret_csv, regret_csv, run_experiment, run_game, run_replication,
    summarize, sweep, sweep_csv, write_experiment, write_game, write_text, ExperimentResult, GameResult, GameRow, RegretRow,
    Replication, Summary, SweepParam,
};
