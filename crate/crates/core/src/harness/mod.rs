//! End-to-end experiments, baseline comparisons, and lemma verification.

mod compare;
mod config;
mod experiment;
mod output;
mod verify;

pub use compare::{compare_methods, mean_se, CompareRow, MIN_SEEDS};
pub use config::{
    ClientSpec, DataSpec, DeriveSettings, ExperimentConfig, GivenConstants, Method, PSource,
    SchedulerConfig, TaskSpec,
};
pub use experiment::{
    run_experiment, run_method, ExperimentResult, RoundLogRecord, RunOverrides, Scenario,
    TaskInstance, BUDGET_SLACK,
};
pub use output::{
    compare_csv, rounds_csv, write_compare, write_json, write_rounds, write_schedule, Format,
    ScheduleDocument, COMPARE_COLUMNS, ROUNDS_COLUMNS,
};
pub use verify::{
    gamma_identity_suite, lemma1_suite, lemma2_suite, lemma3_suite, verify_lemmas, CellReport,
    LemmaSetting, Status, SuiteReport, VerifyReport, VerifySpec, MIN_TRIALS,
};
