//! Repository ingestion, metadata extraction and history-wide anonymization.
//!
//! The usual flow is [`ingest`] → [`metadata::extract`] → [`metadata::select`]
//! → [`pipeline::run_pipeline`], which returns the rewritten repository, the
//! redaction manifest and the gate verdict.

pub mod config;
pub mod detect;
pub mod error;
pub mod ingest;
pub mod lang;
pub mod mask;
pub mod metadata;
pub mod pipeline;
pub mod repo;
pub mod stats;
pub mod zones;

pub use config::Config;
pub use detect::{Category, Detector, DetectorSet, Finding, Scanner, Severity, Surface, Target};
pub use error::{Result, ScrubError};
pub use ingest::{Channel, IngestReport};
pub use lang::LangMap;
pub use mask::{Manifest, MaskClass, Salt};
pub use metadata::{MetadataRecord, Reason, SelectionDecision};
pub use pipeline::{GateReport, PipelineConfig, PipelineOutcome, RunLog};
pub use repo::{Blob, BlobId, Commit, CommitId, RepoModel, Timestamp};
pub use stats::{FunnelRow, LanguageRow, SummaryRow};
pub use zones::{FileClass, FunctionSpan, Zone, ZoneKind};
