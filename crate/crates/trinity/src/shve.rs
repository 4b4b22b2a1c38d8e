//! Symmetric-key hidden vector encryption over byte vectors.
//!
//! Every position `l` of an index vector is masked as `F(msk, l, value)`.
//! A token for a predicate fixes a subset `S` of positions. It carries
//! `d0 = K xor (xor of F(msk, l, v_l) for l in S)` and a wrap of the payload
//! master key under a fresh key `K`. Query xors the ciphertext components
//! over `S` into `d0` and tries to unwrap. Any mismatch in `S` yields a
//! wrong `K` and the authenticated unwrap fails.
//!
//! Anyone holding a matching token can derive the payload master key and so
//! read the payload of every ciphertext under `msk`. The payload only hides
//! `mu` from parties that never see a matching token.

use rand::{CryptoRng, RngCore};

use crate::codec::{Reader, Writer};
use crate::crypto::{self, xor16, Prf, NONCE_LEN};
use crate::error::{Error, Result};

const VERSION: u8 = 1;

#[derive(Clone)]
pub struct ShveMasterKey {
    key: Vec<u8>,
    prf: Prf,
    payload_key: [u8; 32],
}

impl std::fmt::Debug for ShveMasterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ShveMasterKey({} bits)", self.key.len() * 8)
    }
}

impl PartialEq for ShveMasterKey {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl ShveMasterKey {
    pub fn from_bytes(key: &[u8]) -> Result<Self> {
        if key.len() < 16 {
            return Err(Error::InvalidConfig("SHVE key must be at least 128 bits".into()));
        }
        let prf = Prf::new(key);
        let payload_key = prf.eval(&[b"payload"]);
        Ok(ShveMasterKey { key: key.to_vec(), prf, payload_key })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.key
    }

    /// Mask of symbol `value` at `position`.
    pub fn component(&self, position: u32, value: u8) -> [u8; 16] {
        self.prf.eval16(&[&position.to_le_bytes(), &[value]])
    }

    /// XOR of the masks of every position of `ind`. A ciphertext reduced to
    /// this value still answers tokens whose position set is all of `ind`.
    pub fn aggregate(&self, ind: &[u8]) -> [u8; 16] {
        let mut acc = [0u8; 16];
        for (l, &v) in ind.iter().enumerate() {
            xor16(&mut acc, &self.component(l as u32, v));
        }
        acc
    }

    /// Masks of every symbol at positions `0..dim`, for fast aggregation.
    pub fn table(&self, dim: usize) -> ComponentTable {
        let masks = (0..dim as u32)
            .flat_map(|l| (0..=255u8).map(move |v| (l, v)))
            .map(|(l, v)| self.component(l, v))
            .collect();
        ComponentTable { dim, masks }
    }
}

#[derive(Clone)]
pub struct ComponentTable {
    dim: usize,
    masks: Vec<[u8; 16]>,
}

impl std::fmt::Debug for ComponentTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ComponentTable(dim {})", self.dim)
    }
}

impl ComponentTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same as [`ShveMasterKey::aggregate`] for vectors of length `dim`.
    pub fn aggregate(&self, ind: &[u8]) -> [u8; 16] {
        assert_eq!(ind.len(), self.dim, "vector length must match the table");
        let mut acc = [0u8; 16];
        for (l, &v) in ind.iter().enumerate() {
            xor16(&mut acc, &self.masks[l * 256 + v as usize]);
        }
        acc
    }
}

/// Fresh master key of `lambda` bits (a multiple of 8, at least 128).
pub fn setup(lambda: usize, rng: &mut (impl RngCore + CryptoRng)) -> Result<ShveMasterKey> {
    if lambda < 128 || !lambda.is_multiple_of(8) {
        return Err(Error::InvalidConfig(format!("unsupported security parameter {lambda}")));
    }
    let mut key = vec![0u8; lambda / 8];
    rng.fill_bytes(&mut key);
    ShveMasterKey::from_bytes(&key)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShveCiphertext {
    pub nonce: [u8; NONCE_LEN],
    pub components: Vec<[u8; 16]>,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShveToken {
    pub dim: u32,
    /// Non-wildcard positions, ascending.
    pub positions: Vec<u32>,
    pub d0: [u8; 16],
    pub nonce: [u8; NONCE_LEN],
    pub wrapped: Vec<u8>,
}

fn payload_key(pmk: &[u8; 32], nonce: &[u8; NONCE_LEN]) -> [u8; 32] {
    crypto::prf(pmk, &[b"ct", nonce])
}

fn wrap_key(k: &[u8; 16]) -> [u8; 32] {
    crypto::prf(k, &[b"wrap"])
}

/// Deterministic in `(msk, mu, ind, nonce)`.
pub fn encrypt_with_nonce(
    msk: &ShveMasterKey,
    mu: &[u8],
    ind: &[u8],
    nonce: [u8; NONCE_LEN],
) -> ShveCiphertext {
    let components = ind
        .iter()
        .enumerate()
        .map(|(l, &v)| msk.component(l as u32, v))
        .collect();
    let aad = (ind.len() as u32).to_le_bytes();
    let payload = crypto::seal(&payload_key(&msk.payload_key, &nonce), &nonce, &aad, mu);
    ShveCiphertext { nonce, components, payload }
}

pub fn encrypt(
    msk: &ShveMasterKey,
    mu: &[u8],
    ind: &[u8],
    rng: &mut (impl RngCore + CryptoRng),
) -> ShveCiphertext {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    encrypt_with_nonce(msk, mu, ind, nonce)
}

/// Token for predicate `v`, where `None` is a wildcard.
pub fn keygen(
    msk: &ShveMasterKey,
    v: &[Option<u8>],
    rng: &mut (impl RngCore + CryptoRng),
) -> ShveToken {
    let mut k = [0u8; 16];
    rng.fill_bytes(&mut k);
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let mut d0 = k;
    let mut positions = Vec::new();
    for (l, sym) in v.iter().enumerate() {
        if let Some(s) = sym {
            xor16(&mut d0, &msk.component(l as u32, *s));
            positions.push(l as u32);
        }
    }
    let wrapped = crypto::seal(&wrap_key(&k), &nonce, b"", &msk.payload_key);
    ShveToken { dim: v.len() as u32, positions, d0, nonce, wrapped }
}

/// Token whose position set is every position of `v`.
pub fn keygen_exact(msk: &ShveMasterKey, v: &[u8], rng: &mut (impl RngCore + CryptoRng)) -> ShveToken {
    keygen_aggregate(msk, v.len() as u32, &msk.aggregate(v), rng)
}

/// Full-position token for a vector given only by its aggregate.
pub fn keygen_aggregate(
    msk: &ShveMasterKey,
    dim: u32,
    aggregate: &[u8; 16],
    rng: &mut (impl RngCore + CryptoRng),
) -> ShveToken {
    let mut k = [0u8; 16];
    rng.fill_bytes(&mut k);
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let mut d0 = *aggregate;
    xor16(&mut d0, &k);
    let wrapped = crypto::seal(&wrap_key(&k), &nonce, b"", &msk.payload_key);
    ShveToken { dim, positions: (0..dim).collect(), d0, nonce, wrapped }
}

fn unwrap(tok: &ShveToken, acc: &[u8; 16]) -> Option<[u8; 32]> {
    let mut k = tok.d0;
    xor16(&mut k, acc);
    let pmk = crypto::open(&wrap_key(&k), &tok.nonce, b"", &tok.wrapped)?;
    pmk.try_into().ok()
}

/// Returns `mu` iff the ciphertext's vector agrees with the token's
/// predicate on every non-wildcard position.
pub fn query(c: &ShveCiphertext, tok: &ShveToken) -> Result<Option<Vec<u8>>> {
    if c.components.len() != tok.dim as usize {
        return Err(Error::DimensionMismatch { ciphertext: c.components.len(), token: tok.dim as usize });
    }
    let mut acc = [0u8; 16];
    for &l in &tok.positions {
        let comp = c.components.get(l as usize).ok_or_else(|| {
            Error::Malformed(format!("token position {l} outside dimension {}", tok.dim))
        })?;
        xor16(&mut acc, comp);
    }
    let Some(pmk) = unwrap(tok, &acc) else {
        return Ok(None);
    };
    let aad = tok.dim.to_le_bytes();
    Ok(crypto::open(&payload_key(&pmk, &c.nonce), &c.nonce, &aad, &c.payload))
}

/// Match test against an aggregated ciphertext (see
/// [`ShveMasterKey::aggregate`]); valid for tokens covering every position.
pub fn matches_aggregate(aggregate: &[u8; 16], tok: &ShveToken) -> bool {
    unwrap(tok, aggregate).is_some()
}

impl ShveCiphertext {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(VERSION).u32(self.components.len() as u32).raw(&self.nonce);
        for c in &self.components {
            w.raw(c);
        }
        w.bytes(&self.payload);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        check_version(r.u8()?)?;
        let d = r.count(16)?;
        let nonce = r.array()?;
        let components = (0..d).map(|_| r.array()).collect::<Result<_>>()?;
        let payload = r.bytes()?.to_vec();
        r.expect_end()?;
        Ok(ShveCiphertext { nonce, components, payload })
    }
}

impl ShveToken {
    /// Number of constrained positions.
    pub fn constrained(&self) -> usize {
        self.positions.len()
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u8(VERSION).u32(self.dim);
        let dense = self.positions.len() == self.dim as usize;
        if dense {
            w.u8(1);
        } else {
            w.u8(0).u32(self.positions.len() as u32);
            for &p in &self.positions {
                w.u32(p);
            }
        }
        w.raw(&self.d0).raw(&self.nonce).bytes(&self.wrapped);
    }

    pub(crate) fn decode(r: &mut Reader) -> Result<Self> {
        check_version(r.u8()?)?;
        let dim = r.u32()?;
        let positions = match r.u8()? {
            1 => (0..dim).collect(),
            0 => {
                let n = r.count(4)?;
                let p: Vec<u32> = (0..n).map(|_| r.u32()).collect::<Result<_>>()?;
                if p.windows(2).any(|w| w[0] >= w[1]) || p.last().is_some_and(|&l| l >= dim) {
                    return Err(Error::Malformed("token positions not ascending within dimension".into()));
                }
                p
            }
            f => return Err(Error::Malformed(format!("unknown position encoding {f}"))),
        };
        let d0 = r.array()?;
        let nonce = r.array()?;
        let wrapped = r.bytes()?.to_vec();
        Ok(ShveToken { dim, positions, d0, nonce, wrapped })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        let t = ShveToken::decode(&mut r)?;
        r.expect_end()?;
        Ok(t)
    }
}

fn check_version(v: u8) -> Result<()> {
    if v != VERSION {
        return Err(Error::VersionMismatch { found: v as u16, expected: VERSION as u16 });
    }
    Ok(())
}
