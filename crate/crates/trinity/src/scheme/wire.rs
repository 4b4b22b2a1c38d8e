//! Messages exchanged between owner, user and server.
//!
//! Every message starts with a version byte and an op code, followed by a
//! little-endian body. The parties run in one process, but every exchange
//! still goes through these encodings.

use smallvec::SmallVec;

use super::SchemeConfig;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::ordertoken::{SaltKey, SearchCapability};
use crate::shve::ShveToken;

pub const WIRE_VERSION: u8 = 1;

/// Upper bound on the hash family size accepted from the wire.
pub(crate) const MAX_HASHES: usize = 16;

pub trait Message: Sized {
    const OP: u8;

    fn encode_body(&self, w: &mut Writer);
    fn decode_body(r: &mut Reader) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(WIRE_VERSION).u8(Self::OP);
        self.encode_body(&mut w);
        w.finish()
    }

    fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        let (version, op) = (r.u8()?, r.u8()?);
        if version != WIRE_VERSION {
            return Err(Error::VersionMismatch { found: version as u16, expected: WIRE_VERSION as u16 });
        }
        if op != Self::OP {
            return Err(Error::Malformed(format!("expected op {}, got {op}", Self::OP)));
        }
        let m = Self::decode_body(&mut r)?;
        r.expect_end()?;
        Ok(m)
    }
}

/// Op code of an encoded message, after checking its version.
pub fn peek_op(buf: &[u8]) -> Result<u8> {
    match buf {
        [WIRE_VERSION, op, ..] => Ok(*op),
        [v, _, ..] => Err(Error::VersionMismatch { found: *v as u16, expected: WIRE_VERSION as u16 }),
        _ => Err(Error::Malformed("message shorter than its header".into())),
    }
}

/// The filter-side image of one prefix element: its `t` fingerprints and the
/// SHVE aggregate of their bytes. Salted when it travels to the cache.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ElementUpdate {
    pub fingerprints: SmallVec<[u64; 4]>,
    pub aggregate: [u8; 16],
}

impl ElementUpdate {
    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u8(self.fingerprints.len() as u8);
        for &f in &self.fingerprints {
            w.u64(f);
        }
        w.raw(&self.aggregate);
    }

    pub(crate) fn decode(r: &mut Reader) -> Result<Self> {
        let t = r.u8()? as usize;
        if t == 0 || t > MAX_HASHES {
            return Err(Error::Malformed(format!("element with {t} fingerprints")));
        }
        let fingerprints = (0..t).map(|_| r.u64()).collect::<Result<_>>()?;
        Ok(ElementUpdate { fingerprints, aggregate: r.array()? })
    }
}

fn encode_elements(w: &mut Writer, v: &[ElementUpdate]) {
    w.u32(v.len() as u32);
    for e in v {
        e.encode(w);
    }
}

fn decode_elements(r: &mut Reader) -> Result<Vec<ElementUpdate>> {
    let n = r.count(25)?;
    (0..n).map(|_| ElementUpdate::decode(r)).collect()
}

fn encode_opt_bytes(w: &mut Writer, v: &Option<Vec<u8>>) {
    match v {
        Some(b) => w.u8(1).bytes(b),
        None => w.u8(0),
    };
}

fn decode_opt_bytes(r: &mut Reader) -> Result<Option<Vec<u8>>> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(r.bytes()?.to_vec())),
        f => Err(Error::Malformed(format!("bad option flag {f}"))),
    }
}

/// Owner to server: public parameters of a new EDB.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupMessage {
    pub config: SchemeConfig,
    /// The pre-shared salt key, present for Trinity-II.
    pub salt_key: Option<SaltKey>,
}

impl Message for SetupMessage {
    const OP: u8 = 1;

    fn encode_body(&self, w: &mut Writer) {
        self.config.encode(w);
        match &self.salt_key {
            Some(k) => w.u8(1).raw(k.as_bytes()),
            None => w.u8(0),
        };
    }

    fn decode_body(r: &mut Reader) -> Result<Self> {
        let config = SchemeConfig::decode(r)?;
        let salt_key = match r.u8()? {
            0 => None,
            1 => Some(SaltKey::from_bytes(r.array()?)),
            f => return Err(Error::Malformed(format!("bad option flag {f}"))),
        };
        Ok(SetupMessage { config, salt_key })
    }
}

/// Owner to server: one object. A nonzero counter marks a salted Trinity-II
/// addition bound for the cache.
#[derive(Debug, Clone, PartialEq)]
pub struct AddMessage {
    pub counter: u64,
    pub elements: Vec<ElementUpdate>,
    /// The object's identifier, sealed under the owner's key.
    pub ind: Vec<u8>,
    pub verify: Option<Vec<u8>>,
}

impl Message for AddMessage {
    const OP: u8 = 2;

    fn encode_body(&self, w: &mut Writer) {
        w.u64(self.counter);
        encode_elements(w, &self.elements);
        w.bytes(&self.ind);
        encode_opt_bytes(w, &self.verify);
    }

    fn decode_body(r: &mut Reader) -> Result<Self> {
        Ok(AddMessage {
            counter: r.u64()?,
            elements: decode_elements(r)?,
            ind: r.bytes()?.to_vec(),
            verify: decode_opt_bytes(r)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddReceipt {
    pub handle: u32,
}

impl Message for AddReceipt {
    const OP: u8 = 3;

    fn encode_body(&self, w: &mut Writer) {
        w.u32(self.handle);
    }

    fn decode_body(r: &mut Reader) -> Result<Self> {
        Ok(AddReceipt { handle: r.u32()? })
    }
}

/// Owner to server: remove one stored object. `elements` are the unsalted
/// images for the main filter; `cached` are the images salted under the
/// object's addition counter, in case it still sits in the cache.
#[derive(Debug, Clone, PartialEq)]
pub struct DeleteMessage {
    pub handle: u32,
    pub elements: Vec<ElementUpdate>,
    pub cached: Vec<ElementUpdate>,
}

impl Message for DeleteMessage {
    const OP: u8 = 4;

    fn encode_body(&self, w: &mut Writer) {
        w.u32(self.handle);
        encode_elements(w, &self.elements);
        encode_elements(w, &self.cached);
    }

    fn decode_body(r: &mut Reader) -> Result<Self> {
        Ok(DeleteMessage {
            handle: r.u32()?,
            elements: decode_elements(r)?,
            cached: decode_elements(r)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeleteReceipt {
    pub removed: bool,
}

impl Message for DeleteReceipt {
    const OP: u8 = 5;

    fn encode_body(&self, w: &mut Writer) {
        w.u8(self.removed as u8);
    }

    fn decode_body(r: &mut Reader) -> Result<Self> {
        match r.u8()? {
            0 => Ok(DeleteReceipt { removed: false }),
            1 => Ok(DeleteReceipt { removed: true }),
            f => Err(Error::Malformed(format!("bad flag {f}"))),
        }
    }
}

/// One query prefix element: the canonical slots of its fingerprints and an
/// SHVE token over the fingerprint bytes. Remainders are never sent.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchElement {
    pub quotients: SmallVec<[u64; 4]>,
    pub token: ShveToken,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRequest {
    /// Quotient width the tokens were cut for.
    pub quotient_bits: u32,
    pub capability: Option<SearchCapability>,
    pub elements: Vec<SearchElement>,
}

impl Message for SearchRequest {
    const OP: u8 = 6;

    fn encode_body(&self, w: &mut Writer) {
        w.u8(self.quotient_bits as u8);
        match &self.capability {
            Some(c) => {
                w.u8(1);
                c.encode(w);
            }
            None => {
                w.u8(0);
            }
        }
        w.u32(self.elements.len() as u32);
        for e in &self.elements {
            w.u8(e.quotients.len() as u8);
            for &q in &e.quotients {
                w.u64(q);
            }
            e.token.encode(w);
        }
    }

    fn decode_body(r: &mut Reader) -> Result<Self> {
        let quotient_bits = r.u8()? as u32;
        let capability = match r.u8()? {
            0 => None,
            1 => Some(SearchCapability::decode(r)?),
            f => return Err(Error::Malformed(format!("bad option flag {f}"))),
        };
        let n = r.count(9)?;
        let mut elements = Vec::with_capacity(n);
        for _ in 0..n {
            let t = r.u8()? as usize;
            if t == 0 || t > MAX_HASHES {
                return Err(Error::Malformed(format!("element with {t} quotients")));
            }
            let quotients = (0..t).map(|_| r.u64()).collect::<Result<_>>()?;
            elements.push(SearchElement { quotients, token: ShveToken::decode(r)? });
        }
        Ok(SearchRequest { quotient_bits, capability, elements })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchHit {
    pub handle: u32,
    pub ind: Vec<u8>,
    pub verify: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SearchResponse {
    pub hits: Vec<SearchHit>,
}

impl Message for SearchResponse {
    const OP: u8 = 7;

    fn encode_body(&self, w: &mut Writer) {
        w.u32(self.hits.len() as u32);
        for h in &self.hits {
            w.u32(h.handle).bytes(&h.ind);
            encode_opt_bytes(w, &h.verify);
        }
    }

    fn decode_body(r: &mut Reader) -> Result<Self> {
        let n = r.count(9)?;
        let hits = (0..n)
            .map(|_| {
                Ok(SearchHit {
                    handle: r.u32()?,
                    ind: r.bytes()?.to_vec(),
                    verify: decode_opt_bytes(r)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SearchResponse { hits })
    }
}

/// Desalt every cached addition into the main filter. Sent implicitly by a
/// Trinity-II search; journaled on its own so replay skips token work.
#[derive(Debug, Clone, PartialEq)]
pub struct FlushMessage {
    pub capability: SearchCapability,
}

impl Message for FlushMessage {
    const OP: u8 = 8;

    fn encode_body(&self, w: &mut Writer) {
        self.capability.encode(w);
    }

    fn decode_body(r: &mut Reader) -> Result<Self> {
        Ok(FlushMessage { capability: SearchCapability::decode(r)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlushReceipt {
    pub merged: u64,
}

impl Message for FlushReceipt {
    const OP: u8 = 9;

    fn encode_body(&self, w: &mut Writer) {
        w.u64(self.merged);
    }

    fn decode_body(r: &mut Reader) -> Result<Self> {
        Ok(FlushReceipt { merged: r.u64()? })
    }
}
