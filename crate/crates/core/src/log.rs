//! Append-only, hash-chained provenance log backed by a JSON Lines file.
//!
//! Each line is one [`LogRecord`]; `hash = SHA-256(canonical payload ∥
//! prev_hash)`. The in-memory [`ProvGraph`] index is rebuilt on load.
//!
//! There is a single writer. Readers take a [`Snapshot`], an `Arc` of the
//! graph at some length; appends after that copy the index on write and
//! never disturb the snapshot.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ProvGraph;
use crate::model::{Draft, LogRecord, NodeId, Payload, GENESIS_HASH};

/// Shared, immutable view of a log at a fixed length.
pub type Snapshot = Arc<ProvGraph>;

/// Outcome of a chain verification.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainReport {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_bad_index: Option<usize>,
    pub records: usize,
}

/// The writer side of a log.
pub struct ProvLog {
    graph: Arc<ProvGraph>,
    sink: Option<BufWriter<File>>,
}

impl Default for ProvLog {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl ProvLog {
    pub fn in_memory() -> Self {
        Self { graph: Arc::new(ProvGraph::new()), sink: None }
    }

    /// Starts a new, empty log file at `path`, truncating any existing one.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::create(path)?;
        Ok(Self { graph: Arc::new(ProvGraph::new()), sink: Some(BufWriter::new(file)) })
    }

    /// Loads and verifies an existing log, then opens it for appending.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let graph = load_strict(path)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { graph: Arc::new(graph), sink: Some(BufWriter::new(file)) })
    }

    /// Builds an in-memory log from already-sealed records, checking the
    /// chain and every payload.
    pub fn from_records(records: impl IntoIterator<Item = LogRecord>) -> Result<Self> {
        let mut graph = ProvGraph::new();
        for (index, record) in records.into_iter().enumerate() {
            if record.prev_hash != graph.head_hash() || !record.hash_is_valid() {
                return Err(Error::Integrity { index });
            }
            graph.insert(record)?;
        }
        Ok(Self { graph: Arc::new(graph), sink: None })
    }

    pub fn graph(&self) -> &ProvGraph {
        &self.graph
    }

    pub fn snapshot(&self) -> Snapshot {
        Arc::clone(&self.graph)
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    /// Id the next generated append will receive.
    pub fn next_id(&self) -> NodeId {
        NodeId::from_seq(self.graph.len() as u64)
    }

    /// Appends a draft under the next sequence id.
    pub fn append(&mut self, draft: Draft) -> Result<NodeId> {
        let id = self.next_id();
        self.append_payload(draft.with_id(id))
    }

    /// Appends a payload that already carries its id (replay, ingest).
    pub fn append_payload(&mut self, payload: Payload) -> Result<NodeId> {
        self.graph.validate(&payload)?;
        let record = LogRecord::seal(payload, self.graph.head_hash());
        if let Some(sink) = self.sink.as_mut() {
            sink.write_all(record.to_line().as_bytes())?;
            sink.write_all(b"\n")?;
            sink.flush()?;
        }
        let id = record.payload.id().clone();
        Arc::make_mut(&mut self.graph).insert(record)?;
        Ok(id)
    }

    /// The whole log in its file form.
    pub fn to_jsonl(&self) -> String {
        to_jsonl(self.graph.records())
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

pub fn to_jsonl(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Splits file contents into lines. A single trailing newline terminates
/// the last record and does not start a new one.
fn split_lines(bytes: &[u8]) -> Vec<&[u8]> {
    if bytes.is_empty() {
        return Vec::new();
    }
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    body.split(|&b| b == b'\n').collect()
}

/// Parses one line, accepting it only if it is byte-identical to the
/// canonical rendering of what it parses to.
fn parse_canonical(line: &[u8]) -> Option<LogRecord> {
    let text = std::str::from_utf8(line).ok()?;
    let record = LogRecord::from_line(text).ok()?;
    (record.to_line().as_bytes() == line).then_some(record)
}

/// Verifies a raw log. Record `i` is good when its line is canonical, its
/// hash recomputes, and its `prev_hash` is the previous record's hash (or
/// all zeros for the first record). A file that does not end in a newline
/// is treated as a truncated last record.
pub fn verify_bytes(bytes: &[u8]) -> ChainReport {
    let lines = split_lines(bytes);
    let mut prev = GENESIS_HASH.to_owned();
    for (i, line) in lines.iter().enumerate() {
        let good = match parse_canonical(line) {
            Some(rec) => {
                rec.prev_hash == prev && rec.hash_is_valid() && {
                    prev = rec.hash;
                    true
                }
            }
            None => false,
        };
        let terminated = i + 1 < lines.len() || bytes.ends_with(b"\n");
        if !good || !terminated {
            return ChainReport { ok: false, first_bad_index: Some(i), records: lines.len() };
        }
    }
    ChainReport { ok: true, first_bad_index: None, records: lines.len() }
}

pub fn verify_chain(path: impl AsRef<Path>) -> Result<ChainReport> {
    Ok(verify_bytes(&std::fs::read(path)?))
}

/// Verifies in-memory records (same rules as [`verify_bytes`]).
pub fn verify_records(records: &[LogRecord]) -> ChainReport {
    let mut prev = GENESIS_HASH;
    for (i, r) in records.iter().enumerate() {
        if r.prev_hash != prev || !r.hash_is_valid() {
            return ChainReport { ok: false, first_bad_index: Some(i), records: records.len() };
        }
        prev = &r.hash;
    }
    ChainReport { ok: true, first_bad_index: None, records: records.len() }
}

fn load_strict(path: &Path) -> Result<ProvGraph> {
    let bytes = std::fs::read(path)?;
    let report = verify_bytes(&bytes);
    if let Some(index) = report.first_bad_index {
        return Err(Error::Integrity { index });
    }
    let mut graph = ProvGraph::new();
    for (i, line) in split_lines(&bytes).into_iter().enumerate() {
        let record = parse_canonical(line).ok_or(Error::Integrity { index: i })?;
        graph.insert(record).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
    }
    Ok(graph)
}

/// Strictly loads a log file for reading: the chain must verify.
pub fn load(path: impl AsRef<Path>) -> Result<Snapshot> {
    Ok(Arc::new(load_strict(path.as_ref())?))
}

/// A log read without trusting it: records that fail to parse or validate
/// are skipped, and the integrity verdict travels with the graph.
#[derive(Clone, Debug)]
pub struct LoadedLog {
    pub graph: Snapshot,
    pub integrity: ChainReport,
    /// Line indexes that could not be indexed.
    pub skipped: Vec<usize>,
}

impl LoadedLog {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_bytes(&std::fs::read(path)?))
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        let integrity = verify_bytes(bytes);
        let mut graph = ProvGraph::new();
        let mut skipped = Vec::new();
        for (i, line) in split_lines(bytes).into_iter().enumerate() {
            let parsed = std::str::from_utf8(line).ok().and_then(|t| LogRecord::from_line(t).ok());
            match parsed.map(|r| graph.insert(r)) {
                Some(Ok(())) => {}
                _ => skipped.push(i),
            }
        }
        Self { graph: Arc::new(graph), integrity, skipped }
    }

    pub fn from_log(log: &ProvLog) -> Self {
        Self { graph: log.snapshot(), integrity: verify_records(log.graph().records()), skipped: Vec::new() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs::attrs;
    use crate::model::{NodeKind, RelKind};
    use crate::time::Timestamp;

    fn ts(ms: i64) -> Timestamp {
        Timestamp::from_millis(ms)
    }

    fn sample() -> ProvLog {
        let mut log = ProvLog::in_memory();
        let agent = log.append(Draft::agent(ts(0), attrs([("name", "CarNet")]))).unwrap();
        let e1 = log.append(Draft::entity(ts(10), attrs([("category", "telemetry")]))).unwrap();
        let e2 = log.append(Draft::entity(ts(20), attrs([("category", "density")]))).unwrap();
        log.append(Draft::relation(RelKind::DerivedFrom, &e2, &e1, ts(20))).unwrap();
        log.append(Draft::relation(RelKind::AttributedTo, &e1, &agent, ts(20))).unwrap();
        log
    }

    #[test]
    fn first_record_chains_to_zeros() {
        let mut log = ProvLog::in_memory();
        let id = log.append(Draft::agent(ts(0), attrs([("name", "CarNet")]))).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.graph().records()[0].prev_hash, GENESIS_HASH);
        assert_eq!(log.graph().get_node(&id).unwrap().kind, NodeKind::Agent);
    }

    #[test]
    fn derived_from_later_source_is_a_temporal_violation() {
        let mut log = ProvLog::in_memory();
        let early = log.append(Draft::entity(ts(10), attrs([("k", 1i64)]))).unwrap();
        let late = log.append(Draft::entity(ts(20), attrs([("k", 2i64)]))).unwrap();
        let err = log.append(Draft::relation(RelKind::DerivedFrom, &early, &late, ts(20))).unwrap_err();
        assert!(matches!(err, Error::TemporalViolation { .. }));
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn equal_timestamps_follow_creation_order() {
        let mut log = ProvLog::in_memory();
        let a = log.append(Draft::entity(ts(10), Default::default())).unwrap();
        let b = log.append(Draft::entity(ts(10), Default::default())).unwrap();
        log.append(Draft::relation(RelKind::DerivedFrom, &b, &a, ts(10))).unwrap();
        let err = log.append(Draft::relation(RelKind::DerivedFrom, &a, &b, ts(10))).unwrap_err();
        assert!(matches!(err, Error::TemporalViolation { .. }));
        assert!(log.graph().topological_order().is_some());
    }

    #[test]
    fn dangling_and_kind_errors() {
        let mut log = sample();
        let ghost = NodeId::new("n9999999999").unwrap();
        let e1 = NodeId::from_seq(1);
        let err = log.append(Draft::relation(RelKind::DerivedFrom, &e1, &ghost, ts(30))).unwrap_err();
        assert!(matches!(err, Error::DanglingReference(_)));
        let agent = NodeId::from_seq(0);
        let err = log.append(Draft::relation(RelKind::Used, &agent, &e1, ts(30))).unwrap_err();
        assert!(matches!(err, Error::KindMismatch { .. }));
        let err = log.append(Draft::flow(&e1, &agent, &agent, crate::model::Boundary::Technical, ts(30))).unwrap_err();
        assert!(matches!(err, Error::InvalidPayload(_)));
    }

    #[test]
    fn duplicate_and_out_of_order_ids() {
        let mut log = sample();
        let dup = Draft::entity(ts(50), Default::default()).with_id(NodeId::from_seq(1));
        assert!(matches!(log.append_payload(dup), Err(Error::DuplicateId(_))));
        let early = Draft::entity(ts(50), Default::default()).with_id(NodeId::new("a").unwrap());
        assert!(matches!(log.append_payload(early), Err(Error::IdOutOfOrder { .. })));
    }

    #[test]
    fn empty_log_verifies_vacuously() {
        let r = verify_bytes(b"");
        assert!(r.ok);
        assert_eq!(r.first_bad_index, None);
        assert!(verify_records(&[]).ok);
    }

    #[test]
    fn every_prefix_verifies_and_mutations_are_located() {
        let log = sample();
        let text = log.to_jsonl();
        let bytes = text.as_bytes();
        for cut in text.match_indices('\n').map(|(i, _)| i + 1) {
            assert!(verify_bytes(&bytes[..cut]).ok);
        }
        let line_starts: Vec<usize> = std::iter::once(0).chain(text.match_indices('\n').map(|(i, _)| i + 1)).collect();
        for (k, &start) in line_starts.iter().take(log.len()).enumerate() {
            let mut copy = bytes.to_vec();
            copy[start + 3] ^= 0x01;
            let r = verify_bytes(&copy);
            assert!(!r.ok);
            assert_eq!(r.first_bad_index, Some(k));
        }
    }

    #[test]
    fn snapshot_is_unaffected_by_later_appends() {
        let mut log = sample();
        let snap = log.snapshot();
        log.append(Draft::entity(ts(99), Default::default())).unwrap();
        assert_eq!(snap.len(), 5);
        assert_eq!(log.len(), 6);
    }

    #[test]
    fn file_round_trip_and_open_for_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let mut log = ProvLog::create(&path).unwrap();
            log.append(Draft::agent(ts(0), attrs([("name", "A")]))).unwrap();
        }
        let mut log = ProvLog::open(&path).unwrap();
        log.append(Draft::agent(ts(1), attrs([("name", "B")]))).unwrap();
        drop(log);
        let report = verify_chain(&path).unwrap();
        assert!(report.ok);
        assert_eq!(report.records, 2);
        assert_eq!(load(&path).unwrap().len(), 2);
    }

    #[test]
    fn lenient_load_reports_tampering() {
        let log = sample();
        let mut bytes = log.to_jsonl().into_bytes();
        let pos = bytes.iter().position(|&b| b == b'C').unwrap();
        bytes[pos] = b'K';
        let loaded = LoadedLog::from_bytes(&bytes);
        assert!(!loaded.integrity.ok);
        assert_eq!(loaded.integrity.first_bad_index, Some(0));
        assert_eq!(loaded.graph.len(), 5);
    }
}
