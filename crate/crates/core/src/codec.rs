//! Little-endian binary encoding of keyed records, messages and partial
//! aggregates. Run files are a plain concatenation of encoded records:
//!
//! ```text
//! key.raw u64 | key mirror flag u8 | key mirror group u8 | kind u8 | payload_len u32 | payload
//! ```
//!
//! The same encoding sizes every message in the communication metrics, so
//! byte counts are comparable between backends.

use std::io::{self, Read, Write};

use crate::gas::{AggregateState, Payload};
use crate::graph::{NodeId, OutEdge};
use crate::math::{DenseVector, ExactSum};

pub const RECORD_HEADER_LEN: usize = 8 + 1 + 1 + 1 + 4;
const NODE_ID_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum RecordKind {
    SelfState = 0,
    InEdgeMsg = 1,
    OutEdgeInfo = 2,
}

impl RecordKind {
    fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(RecordKind::SelfState),
            1 => Some(RecordKind::InEdgeMsg),
            2 => Some(RecordKind::OutEdgeInfo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordBody {
    /// Node state after the previous round together with everything needed
    /// to run the next one.
    SelfState {
        embedding: Vec<f32>,
        /// Logical out-degree, which can differ from `out_nbrs.len()` on a
        /// shadow-rewritten graph.
        out_degree: u64,
        out_nbrs: Vec<OutEdge>,
    },
    InEdgeMsg {
        src: NodeId,
        payload: Payload,
    },
    /// In-edge features forwarded to the destination; only produced for
    /// layers whose receivers read them.
    OutEdgeInfo {
        src: NodeId,
        features: Vec<f32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyedRecord {
    pub key: NodeId,
    pub body: RecordBody,
}

impl KeyedRecord {
    pub fn kind(&self) -> RecordKind {
        match self.body {
            RecordBody::SelfState { .. } => RecordKind::SelfState,
            RecordBody::InEdgeMsg { .. } => RecordKind::InEdgeMsg,
            RecordBody::OutEdgeInfo { .. } => RecordKind::OutEdgeInfo,
        }
    }

    /// Secondary sort field: the sender for messages, the key itself for
    /// self-state.
    pub fn src(&self) -> NodeId {
        match &self.body {
            RecordBody::SelfState { .. } => self.key,
            RecordBody::InEdgeMsg { src, .. } | RecordBody::OutEdgeInfo { src, .. } => *src,
        }
    }

    pub fn sort_key(&self) -> (NodeId, RecordKind, NodeId) {
        (self.key, self.kind(), self.src())
    }

    pub fn encoded_len(&self) -> usize {
        RECORD_HEADER_LEN + body_len(&self.body)
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        put_node_id(out, self.key);
        out.push(self.kind() as u8);
        out.extend_from_slice(&(body_len(&self.body) as u32).to_le_bytes());
        let start = out.len();
        match &self.body {
            RecordBody::SelfState {
                embedding,
                out_degree,
                out_nbrs,
            } => {
                put_vec(out, embedding);
                out.extend_from_slice(&out_degree.to_le_bytes());
                out.extend_from_slice(&(out_nbrs.len() as u32).to_le_bytes());
                for e in out_nbrs {
                    put_node_id(out, e.dst);
                    put_vec(out, &e.features);
                }
            }
            RecordBody::InEdgeMsg { src, payload } => {
                put_node_id(out, *src);
                put_payload(out, payload);
            }
            RecordBody::OutEdgeInfo { src, features } => {
                put_node_id(out, *src);
                put_vec(out, features);
            }
        }
        debug_assert_eq!(out.len() - start, body_len(&self.body));
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut v);
        v
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.encode())
    }

    /// Read the next record; `Ok(None)` at a clean end of stream.
    pub fn read_from(r: &mut impl Read) -> Result<Option<KeyedRecord>, DecodeError> {
        let mut header = [0u8; RECORD_HEADER_LEN];
        let mut filled = 0;
        while filled < header.len() {
            let n = r.read(&mut header[filled..]).map_err(DecodeError::Io)?;
            if n == 0 {
                if filled == 0 {
                    return Ok(None);
                }
                return Err(DecodeError::Format("truncated record header".into()));
            }
            filled += n;
        }
        let mut cur = Cursor::new(&header);
        let key = cur.node_id()?;
        let kind = RecordKind::from_u8(cur.u8()?)
            .ok_or_else(|| DecodeError::Format("unknown record kind".into()))?;
        let len = cur.u32()? as usize;
        let mut body = vec![0u8; len];
        r.read_exact(&mut body).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                DecodeError::Format("truncated record payload".into())
            } else {
                DecodeError::Io(e)
            }
        })?;
        let mut cur = Cursor::new(&body);
        let body = match kind {
            RecordKind::SelfState => {
                let embedding = cur.vec()?;
                let out_degree = cur.u64()?;
                let n = cur.u32()? as usize;
                let mut out_nbrs = Vec::with_capacity(n.min(len));
                for _ in 0..n {
                    let dst = cur.node_id()?;
                    let features = cur.vec()?;
                    out_nbrs.push(OutEdge { dst, features });
                }
                RecordBody::SelfState {
                    embedding,
                    out_degree,
                    out_nbrs,
                }
            }
            RecordKind::InEdgeMsg => RecordBody::InEdgeMsg {
                src: cur.node_id()?,
                payload: cur.payload()?,
            },
            RecordKind::OutEdgeInfo => RecordBody::OutEdgeInfo {
                src: cur.node_id()?,
                features: cur.vec()?,
            },
        };
        if !cur.is_empty() {
            return Err(DecodeError::Format(
                "trailing bytes in record payload".into(),
            ));
        }
        Ok(Some(KeyedRecord { key, body }))
    }
}

#[derive(Debug)]
pub enum DecodeError {
    Io(io::Error),
    Format(String),
}

impl std::fmt::Display for DecodeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecodeError::Io(e) => write!(f, "{e}"),
            DecodeError::Format(m) => f.write_str(m),
        }
    }
}

fn vec_len(v: &[f32]) -> usize {
    4 + 4 * v.len()
}

fn state_len(s: &AggregateState) -> usize {
    1 + match s {
        AggregateState::SumCount { sums, .. } => {
            8 + 4
                + sums
                    .iter()
                    .map(|e| 1 + 8 * e.partials().len())
                    .sum::<usize>()
        }
        AggregateState::Max { value, .. } => 8 + vec_len(value),
        AggregateState::Union(items) => {
            4 + items
                .iter()
                .map(|(_, m)| NODE_ID_LEN + vec_len(m))
                .sum::<usize>()
        }
    }
}

pub fn payload_len(p: &Payload) -> usize {
    1 + match p {
        Payload::Dense(v) => vec_len(v),
        Payload::Partial(s) => state_len(s),
        Payload::BroadcastRef(_) => NODE_ID_LEN,
    }
}

fn body_len(b: &RecordBody) -> usize {
    match b {
        RecordBody::SelfState {
            embedding,
            out_nbrs,
            ..
        } => {
            vec_len(embedding)
                + 8
                + 4
                + out_nbrs
                    .iter()
                    .map(|e| NODE_ID_LEN + vec_len(&e.features))
                    .sum::<usize>()
        }
        RecordBody::InEdgeMsg { payload, .. } => NODE_ID_LEN + payload_len(payload),
        RecordBody::OutEdgeInfo { features, .. } => NODE_ID_LEN + vec_len(features),
    }
}

/// Wire size of one message `src -> dst` carrying `payload`.
pub fn message_len(payload: &Payload) -> usize {
    RECORD_HEADER_LEN + NODE_ID_LEN + payload_len(payload)
}

/// Wire size of one broadcast registry entry (`src`, dense payload).
pub fn registry_entry_len(payload: &[f32]) -> usize {
    NODE_ID_LEN + vec_len(payload)
}

fn put_node_id(out: &mut Vec<u8>, id: NodeId) {
    out.extend_from_slice(&id.raw.to_le_bytes());
    match id.mirror {
        None => out.extend_from_slice(&[0, 0]),
        Some(g) => out.extend_from_slice(&[1, g]),
    }
}

fn put_vec(out: &mut Vec<u8>, v: &[f32]) {
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_state(out: &mut Vec<u8>, s: &AggregateState) {
    match s {
        AggregateState::SumCount { sums, count } => {
            out.push(0);
            out.extend_from_slice(&count.to_le_bytes());
            out.extend_from_slice(&(sums.len() as u32).to_le_bytes());
            for e in sums {
                let p = e.partials();
                out.push(p.len() as u8);
                for x in p {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        AggregateState::Max { value, count } => {
            out.push(1);
            out.extend_from_slice(&count.to_le_bytes());
            put_vec(out, value);
        }
        AggregateState::Union(items) => {
            out.push(2);
            out.extend_from_slice(&(items.len() as u32).to_le_bytes());
            for (src, m) in items {
                put_node_id(out, *src);
                put_vec(out, m);
            }
        }
    }
}

fn put_payload(out: &mut Vec<u8>, p: &Payload) {
    match p {
        Payload::Dense(v) => {
            out.push(0);
            put_vec(out, v);
        }
        Payload::Partial(s) => {
            out.push(1);
            put_state(out, s);
        }
        Payload::BroadcastRef(src) => {
            out.push(2);
            put_node_id(out, *src);
        }
    }
}

/// Encode a standalone payload (used in tests and by the run-file format).
pub fn encode_payload(p: &Payload) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload_len(p));
    put_payload(&mut out, p);
    out
}

pub fn decode_payload(bytes: &[u8]) -> Result<Payload, DecodeError> {
    let mut cur = Cursor::new(bytes);
    let p = cur.payload()?;
    if !cur.is_empty() {
        return Err(DecodeError::Format("trailing bytes after payload".into()));
    }
    Ok(p)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::Format("unexpected end of payload".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn node_id(&mut self) -> Result<NodeId, DecodeError> {
        let raw = self.u64()?;
        match (self.u8()?, self.u8()?) {
            (0, 0) => Ok(NodeId::new(raw)),
            (1, g) => Ok(NodeId::mirror(raw, g)),
            _ => Err(DecodeError::Format("bad mirror flag".into())),
        }
    }

    fn vec(&mut self) -> Result<Vec<f32>, DecodeError> {
        let n = self.u32()? as usize;
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| DecodeError::Format("vector length overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn state(&mut self) -> Result<AggregateState, DecodeError> {
        match self.u8()? {
            0 => {
                let count = self.u64()?;
                let dim = self.u32()? as usize;
                let mut sums = Vec::with_capacity(dim.min(self.buf.len()));
                for _ in 0..dim {
                    let n = self.u8()? as usize;
                    let mut parts = Vec::with_capacity(n);
                    for _ in 0..n {
                        parts.push(self.f64()?);
                    }
                    sums.push(ExactSum::from_partials(parts));
                }
                Ok(AggregateState::SumCount { sums, count })
            }
            1 => {
                let count = self.u64()?;
                Ok(AggregateState::Max {
                    value: self.vec()?,
                    count,
                })
            }
            2 => {
                let n = self.u32()? as usize;
                let mut items = Vec::with_capacity(n.min(self.buf.len()));
                for _ in 0..n {
                    let src = self.node_id()?;
                    items.push((src, self.vec()?));
                }
                Ok(AggregateState::Union(items))
            }
            t => Err(DecodeError::Format(format!("unknown aggregate tag {t}"))),
        }
    }

    fn payload(&mut self) -> Result<Payload, DecodeError> {
        match self.u8()? {
            0 => Ok(Payload::Dense(DenseVector::new(self.vec()?))),
            1 => Ok(Payload::Partial(self.state()?)),
            2 => Ok(Payload::BroadcastRef(self.node_id()?)),
            t => Err(DecodeError::Format(format!("unknown payload tag {t}"))),
        }
    }
}
