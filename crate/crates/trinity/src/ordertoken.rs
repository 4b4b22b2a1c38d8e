//! GGM-tree order tokens and range-constrained search capabilities.
//!
//! Leaves of a depth-64 GGM tree are indexed by the update counter. A
//! capability for bound `c` holds the roots of the minimal dyadic cover of
//! `[1, c]`, so it derives exactly the order tokens `OT_1 .. OT_c`.

use crate::codec::{Reader, Writer};
use crate::crypto::{self, Prf};
use crate::error::{Error, Result};
use crate::prefixcover::range_cover;

const DEPTH: u32 = 64;

#[derive(Clone, PartialEq, Eq)]
pub struct OrderKey([u8; 16]);

impl std::fmt::Debug for OrderKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("OrderKey(..)")
    }
}

impl OrderKey {
    pub fn from_bytes(b: [u8; 16]) -> Self {
        OrderKey(b)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OrderToken(pub [u8; 16]);

// Length-doubling generator: one keyed hash yields both children.
fn children(seed: &[u8; 16]) -> ([u8; 16], [u8; 16]) {
    let out = crypto::prf(seed, &[b"ggm"]);
    (out[..16].try_into().unwrap(), out[16..].try_into().unwrap())
}

// Follows the low `levels` bits of `path`, most significant first.
fn descend(mut node: [u8; 16], path: u64, levels: u32) -> [u8; 16] {
    for i in (0..levels).rev() {
        let (l, r) = children(&node);
        node = if (path >> i) & 1 == 1 { r } else { l };
    }
    node
}

/// Order token of counter `c`; counters start at 1.
pub fn ot_eval(msk: &OrderKey, c: u64) -> OrderToken {
    OrderToken(descend(msk.0, c, DEPTH))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapabilityNode {
    pub depth: u8,
    /// The node's path from the root, as a `depth`-bit number.
    pub index: u64,
    pub secret: [u8; 16],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchCapability {
    pub bound: u64,
    pub nodes: Vec<CapabilityNode>,
}

/// Capability for counters `1 ..= c`; empty for `c = 0`.
pub fn constrain(msk: &OrderKey, c: u64) -> SearchCapability {
    if c == 0 {
        return SearchCapability { bound: 0, nodes: Vec::new() };
    }
    let nodes = range_cover(1, c, DEPTH)
        .elements
        .iter()
        .map(|e| {
            let depth = e.prefix_len();
            CapabilityNode {
                depth: depth as u8,
                index: e.head(),
                secret: descend(msk.0, e.head(), depth),
            }
        })
        .collect();
    SearchCapability { bound: c, nodes }
}

/// Derives `OT_j` from a capability.
pub fn cap_eval(cap: &SearchCapability, j: u64) -> Result<OrderToken> {
    if j == 0 || j > cap.bound {
        return Err(Error::OutOfRange { j, bound: cap.bound });
    }
    let node = cap
        .nodes
        .iter()
        .find(|n| n.depth == 0 || j >> (DEPTH - n.depth as u32) == n.index)
        .ok_or(Error::OutOfRange { j, bound: cap.bound })?;
    let rest = DEPTH - node.depth as u32;
    let path = if rest == 64 { j } else { j & ((1u64 << rest) - 1) };
    Ok(OrderToken(descend(node.secret, path, rest)))
}

/// Per-update salt material derived as `H(K, OT_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Salt {
    /// XOR mask for 64-bit fingerprints.
    pub fingerprint: u64,
    /// XOR mask for the 16-byte ciphertext aggregates stored with an entry.
    pub pad: [u8; 16],
}

/// The key `K` of the salt hash `H(K, OT)`.
#[derive(Clone)]
pub struct SaltKey {
    key: [u8; 32],
    prf: Prf,
}

impl std::fmt::Debug for SaltKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SaltKey(..)")
    }
}

impl PartialEq for SaltKey {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl SaltKey {
    pub fn from_bytes(key: [u8; 32]) -> Self {
        SaltKey { key, prf: Prf::new(&key) }
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.key
    }
}

pub fn salt(k: &SaltKey, ot: &OrderToken) -> Salt {
    let h = k.prf.eval(&[&ot.0]);
    Salt {
        fingerprint: u64::from_le_bytes(h[..8].try_into().unwrap()),
        pad: h[8..24].try_into().unwrap(),
    }
}

/// `e xor H(K, OT)`; applying it twice restores `e`.
pub fn salt_fingerprint(e: u64, k: &SaltKey, ot: &OrderToken) -> u64 {
    e ^ salt(k, ot).fingerprint
}

impl SearchCapability {
    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u64(self.bound).u32(self.nodes.len() as u32);
        for n in &self.nodes {
            w.u8(n.depth).u64(n.index).raw(&n.secret);
        }
    }

    pub(crate) fn decode(r: &mut Reader) -> Result<Self> {
        let bound = r.u64()?;
        let n = r.count(25)?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let depth = r.u8()?;
            if depth as u32 > DEPTH {
                return Err(Error::Malformed(format!("capability node depth {depth}")));
            }
            nodes.push(CapabilityNode { depth, index: r.u64()?, secret: r.array()? });
        }
        Ok(SearchCapability { bound, nodes })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        let cap = SearchCapability::decode(&mut r)?;
        r.expect_end()?;
        Ok(cap)
    }
}
