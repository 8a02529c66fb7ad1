//! Ingestion, configuration, persistence, and the stratified fit driver.

pub mod chains;
pub mod config;
pub mod dataset_csv;
pub mod report;
pub mod stratified;

pub use chains::{read_chains, write_chains, ReadChains};
pub use config::{parse_config, ConfigFile, DataSchema, ResolvedConfig, RunSection};
pub use dataset_csv::{load_long_csv, write_long_csv};
pub use report::{
    write_bias_table_csv, write_group_report_csv, write_replicate_summaries_csv,
    write_summary_csv,
};
pub use stratified::{
    stratified_fit, AlphaSummary, GroupRecord, GroupReport, GroupStatus, RunManifest,
    StratifiedOptions,
};
