//! Simulation, experiment orchestration, decoders and the verification sweep.

pub mod config;
pub mod decoder;
pub mod experiment;
pub mod sim;
pub mod verify;

pub use config::{ExperimentConfig, ScheduleSpec};
pub use decoder::{decode, decoder_error_exact, decoder_error_monte_carlo, optimal_weights};
pub use experiment::{execute, run_experiment, write_outputs, ExperimentOutcome, ExperimentSummary};
pub use sim::{sample_round, simulate_stream, write_stream_csv, StreamSample, StreamSimulator};
pub use verify::{verify_suite, VerifyConfig, VerifyReport};
