//! Decision provenance for interconnected, data-driven systems.
//!
//! The crate records what happened to data as a hash-chained provenance log
//! ([`log`]), indexes it as a graph ([`graph`]), and answers the questions
//! reviewers ask of it: which inputs led to a decision and where its effects
//! went ([`query`]), who was involved, and which flows crossed technical or
//! organisational boundaries. Capture policies ([`capture`]) decide what is
//! stored, compliance rules ([`compliance`]) react to flows and uses of
//! data, and [`records`] turns the log into GDPR Art. 30 records, datasheets,
//! model cards and audit reports.

pub mod attrs;
pub mod capture;
pub mod compliance;
pub mod dot;
pub mod error;
pub mod glob;
pub mod graph;
pub mod log;
pub mod model;
pub mod query;
pub mod records;
pub mod time;

pub use attrs::{attrs, AttrValue, Attrs};
pub use error::{Error, Result};
pub use graph::{Direction, ProvGraph};
pub use log::{ChainReport, LoadedLog, ProvLog, Snapshot};
pub use model::{Boundary, Draft, FlowEvent, LogRecord, NodeId, NodeKind, Payload, ProvNode, ProvRelation, RelKind};
pub use time::{Timestamp, Window};
