//! Dataset ingestion, model persistence and JSON reports.

mod dataset;
mod persist;
mod report;

pub use dataset::{
    build_bundle, load_adjacency, load_interactions, parse_adjacency, parse_interactions, DatasetBundle, IdMap,
    RawPairs,
};
pub use persist::{decode_model, encode_model, load_model, save_model, PersistedModel, FORMAT_VERSION, MAGIC};
pub use report::{read_report, write_report, ReportEnvelope, REPORT_FORMAT, REPORT_VERSION};
