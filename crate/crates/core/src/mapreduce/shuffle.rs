//! Sort-merge shuffle with bounded buffers. Each producer buffers records up
//! to a byte budget, then sorts them by `(reducer, key, kind, src)`,
//! optionally combines the messages of each key, and writes one sorted run
//! per destination reducer. Reducers k-way merge their runs and stream the
//! result one key group at a time.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};

use crate::codec::{DecodeError, KeyedRecord, RecordBody, RecordKind};
use crate::error::{Error, Result};
use crate::gas::{AggregateKind, AggregateState, Payload};
use crate::graph::{partition_of, NodeId};
use crate::math::DenseVector;
use crate::runtime::absorb_payload;

/// A sorted run of records for one reducer. In-memory runs hold the same
/// encoding as spill files so the merge reads both sequentially.
#[derive(Debug)]
pub enum SpillRun {
    Memory {
        data: Vec<u8>,
        records: u64,
    },
    File {
        path: PathBuf,
        records: u64,
        bytes: u64,
    },
}

impl SpillRun {
    pub fn num_records(&self) -> u64 {
        match self {
            SpillRun::Memory { records, .. } | SpillRun::File { records, .. } => *records,
        }
    }
}

/// Sender-side combining of messages per key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CombineSpec {
    pub kind: AggregateKind,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriterStats {
    /// Records emitted after combining.
    pub records: u64,
    pub bytes: u64,
    pub combiner_savings: u64,
    pub spilled_runs: u64,
}

pub struct ShuffleWriter<'a> {
    num_reducers: usize,
    budget: usize,
    spill_dir: &'a Path,
    tag: String,
    combine: Option<CombineSpec>,
    buf: Vec<KeyedRecord>,
    buf_bytes: usize,
    spilled: bool,
    runs: Vec<Vec<SpillRun>>,
    local: BTreeMap<NodeId, DenseVector>,
    stats: WriterStats,
}

impl<'a> ShuffleWriter<'a> {
    /// `budget` is the buffer size in encoded bytes; `usize::MAX` never spills.
    pub fn new(
        num_reducers: usize,
        budget: usize,
        spill_dir: &'a Path,
        tag: impl Into<String>,
        combine: Option<CombineSpec>,
    ) -> Self {
        ShuffleWriter {
            num_reducers,
            budget: budget.max(1),
            spill_dir,
            tag: tag.into(),
            combine,
            buf: Vec::new(),
            buf_bytes: 0,
            spilled: false,
            runs: (0..num_reducers).map(|_| Vec::new()).collect(),
            local: BTreeMap::new(),
            stats: WriterStats::default(),
        }
    }

    /// Make a payload this producer broadcast available for resolving its
    /// own references during combining.
    pub fn add_local_payload(&mut self, src: NodeId, payload: DenseVector) {
        self.local.insert(src, payload);
    }

    pub fn push(&mut self, rec: KeyedRecord) -> Result<()> {
        let len = rec.encoded_len();
        if !self.buf.is_empty() && self.buf_bytes.saturating_add(len) > self.budget {
            self.flush_run(true)?;
        }
        self.buf.push(rec);
        self.buf_bytes += len;
        if self.buf_bytes > self.budget {
            // A single record larger than the whole budget is a run of its own.
            self.flush_run(true)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(Vec<Vec<SpillRun>>, WriterStats)> {
        if !self.buf.is_empty() {
            // Nothing spilled so far: keep the final run in memory.
            let to_disk = self.spilled;
            self.flush_run(to_disk)?;
        }
        Ok((self.runs, self.stats))
    }

    fn flush_run(&mut self, to_disk: bool) -> Result<()> {
        let r = self.num_reducers;
        let mut recs = std::mem::take(&mut self.buf);
        self.buf_bytes = 0;
        recs.sort_by_cached_key(|rec| (partition_of(rec.key, r), rec.sort_key()));
        let recs = match self.combine {
            Some(spec) => {
                let before = recs.len();
                let local = &self.local;
                let out = combine_records(recs, spec, &|s| local.get(&s))?;
                self.stats.combiner_savings += (before - out.len()) as u64;
                out
            }
            None => recs,
        };
        let mut per_reducer: Vec<Vec<KeyedRecord>> = (0..r).map(|_| Vec::new()).collect();
        for rec in recs {
            self.stats.records += 1;
            self.stats.bytes += rec.encoded_len() as u64;
            per_reducer[partition_of(rec.key, r)].push(rec);
        }
        let run_index = self.runs.iter().map(Vec::len).max().unwrap_or(0);
        for (dst, recs) in per_reducer.into_iter().enumerate() {
            if recs.is_empty() {
                continue;
            }
            if !to_disk {
                let len = recs.iter().map(KeyedRecord::encoded_len).sum();
                let mut data = Vec::with_capacity(len);
                for rec in &recs {
                    rec.encode_into(&mut data);
                }
                self.runs[dst].push(SpillRun::Memory {
                    data,
                    records: recs.len() as u64,
                });
                continue;
            }
            self.spilled = true;
            let path = self
                .spill_dir
                .join(format!("{}-d{dst}-{run_index}.run", self.tag));
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            let mut bytes = 0u64;
            let mut scratch = Vec::new();
            for rec in &recs {
                scratch.clear();
                rec.encode_into(&mut scratch);
                bytes += scratch.len() as u64;
                w.write_all(&scratch).map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            self.stats.spilled_runs += 1;
            self.runs[dst].push(SpillRun::File {
                path,
                records: recs.len() as u64,
                bytes,
            });
        }
        Ok(())
    }
}

/// Merge consecutive message records sharing a key into one partial
/// aggregate. Input must be sorted by key.
fn combine_records<'p>(
    recs: Vec<KeyedRecord>,
    spec: CombineSpec,
    lookup: &impl Fn(NodeId) -> Option<&'p DenseVector>,
) -> Result<Vec<KeyedRecord>> {
    let mut out = Vec::with_capacity(recs.len());
    let mut iter = recs.into_iter().peekable();
    while let Some(rec) = iter.next() {
        let is_msg = |r: &KeyedRecord| r.kind() == RecordKind::InEdgeMsg;
        if !is_msg(&rec) || iter.peek().is_none_or(|n| n.key != rec.key || !is_msg(n)) {
            out.push(rec);
            continue;
        }
        let key = rec.key;
        let first_src = rec.src();
        let mut state = AggregateState::empty(spec.kind, spec.dim);
        let mut absorb = |r: KeyedRecord| -> Result<()> {
            if let RecordBody::InEdgeMsg { src, payload } = r.body {
                absorb_payload(&mut state, src, &payload, lookup)?;
            }
            Ok(())
        };
        absorb(rec)?;
        while let Some(n) = iter.next_if(|n| n.key == key && is_msg(n)) {
            absorb(n)?;
        }
        out.push(KeyedRecord {
            key,
            body: RecordBody::InEdgeMsg {
                src: first_src,
                payload: Payload::Partial(state),
            },
        });
    }
    Ok(out)
}

enum RunReader {
    Memory(Cursor<Vec<u8>>),
    File {
        path: PathBuf,
        reader: BufReader<File>,
    },
}

impl RunReader {
    fn open(run: SpillRun) -> Result<Self> {
        Ok(match run {
            SpillRun::Memory { data, .. } => RunReader::Memory(Cursor::new(data)),
            SpillRun::File { path, .. } => {
                let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
                RunReader::File {
                    path,
                    reader: BufReader::new(f),
                }
            }
        })
    }

    fn next(&mut self) -> Result<Option<KeyedRecord>> {
        match self {
            RunReader::Memory(cur) => KeyedRecord::read_from(cur).map_err(|e| Error::CorruptRun {
                path: PathBuf::from("<memory>"),
                msg: e.to_string(),
            }),
            RunReader::File { path, reader } => {
                KeyedRecord::read_from(reader).map_err(|e| match e {
                    DecodeError::Io(source) => Error::io(path.clone(), source),
                    DecodeError::Format(msg) => Error::CorruptRun {
                        path: path.clone(),
                        msg,
                    },
                })
            }
        }
    }
}

impl Drop for RunReader {
    fn drop(&mut self) {
        if let RunReader::File { path, .. } = self {
            let _ = std::fs::remove_file(path);
        }
    }
}

struct HeapItem {
    order: (NodeId, RecordKind, NodeId, usize),
    rec: KeyedRecord,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
    }
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    // Reversed so the max-heap pops the smallest record first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.order.cmp(&self.order)
    }
}

/// K-way merge of sorted runs, yielding one key group at a time. Ties
/// between runs go to the earlier run.
pub struct GroupedRecords {
    readers: Vec<RunReader>,
    heap: BinaryHeap<HeapItem>,
}

impl GroupedRecords {
    pub fn new(runs: Vec<SpillRun>) -> Result<Self> {
        let mut readers = Vec::with_capacity(runs.len());
        for r in runs {
            readers.push(RunReader::open(r)?);
        }
        let mut g = GroupedRecords {
            readers,
            heap: BinaryHeap::new(),
        };
        for i in 0..g.readers.len() {
            g.refill(i)?;
        }
        Ok(g)
    }

    fn refill(&mut self, run: usize) -> Result<()> {
        if let Some(rec) = self.readers[run].next()? {
            let (k, kind, s) = rec.sort_key();
            self.heap.push(HeapItem {
                order: (k, kind, s, run),
                rec,
            });
        }
        Ok(())
    }

    fn pop(&mut self) -> Result<Option<KeyedRecord>> {
        match self.heap.pop() {
            Some(item) => {
                self.refill(item.order.3)?;
                Ok(Some(item.rec))
            }
            None => Ok(None),
        }
    }

    /// Next `(key, records)` in ascending key order, records sorted by
    /// `(kind, src)`.
    pub fn next_group(&mut self) -> Result<Option<(NodeId, Vec<KeyedRecord>)>> {
        let Some(first) = self.pop()? else {
            return Ok(None);
        };
        let key = first.key;
        let mut group = vec![first];
        while self.heap.peek().is_some_and(|top| top.order.0 == key) {
            group.push(self.pop()?.expect("peeked"));
        }
        Ok(Some((key, group)))
    }
}

/// Single-reducer shuffle of a record stream.
pub fn shuffle(
    records: impl IntoIterator<Item = KeyedRecord>,
    budget: usize,
    combine: Option<CombineSpec>,
    spill_dir: &Path,
) -> Result<(GroupedRecords, WriterStats)> {
    let mut w = ShuffleWriter::new(1, budget, spill_dir, "shuffle", combine);
    for r in records {
        w.push(r)?;
    }
    let (mut runs, stats) = w.finish()?;
    Ok((GroupedRecords::new(runs.remove(0))?, stats))
}
