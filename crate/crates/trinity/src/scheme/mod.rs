//! Trinity-I and Trinity-II: setup, search, addition, deletion and result
//! verification.
//!
//! An object's Hilbert value is expanded into its `w + 1` prefix elements.
//! Each element is hashed by `t` seeded hashes into `p`-bit fingerprints,
//! which go into the server's quotient filter; the SHVE aggregate of the
//! fingerprint bytes is stored beside them. A query range becomes the
//! minimum prefix cover of its Hilbert intervals, and each cover element
//! becomes a token carrying only the canonical slots of its fingerprints
//! plus an SHVE token over the full fingerprint bytes.
//!
//! Trinity-II adds forward-secure additions: fingerprints and aggregates
//! are salted with `H(K, OT_c)` and parked in the server's cache until the
//! next search hands over a capability for `OT_1 .. OT_c`. Every object also
//! carries an encrypted bitmap of its prefix family so the user can drop
//! filter false positives.

pub mod bitmap;
pub mod server;
pub mod wire;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

pub use self::bitmap::CompressedBitmap;
pub use self::server::{CacheEntry, Edb};
use self::wire::*;
use crate::codec::{Reader, Writer};
use crate::crypto::{self, xor16, NONCE_LEN};
use crate::error::{Error, Result};
use crate::geocode::{self, CoordUnits, GridConfig, Origin, SpaceTimePoint, SpaceTimeRange};
use crate::ordertoken::{self, OrderKey, OrderToken, SaltKey};
use crate::prefixcover::{self, PrefixElement, RangeCover};
use crate::qfilter::QfParams;
use crate::shve::{self, ComponentTable, ShveMasterKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    One,
    Two,
}

/// Public deployment parameters, known to every party.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub variant: Variant,
    pub grid: GridConfig,
    pub origin: Origin,
    /// Hash family size `t`.
    pub hashes: u32,
    /// Fingerprint width `p`.
    pub fingerprint_bits: u32,
    /// Quotient width of the freshly created filter.
    pub initial_quotient_bits: u32,
    /// Entry/slot ratio at which the filter doubles.
    pub load_threshold: f64,
}

impl SchemeConfig {
    /// One 64-bit fingerprint per element, expansion at 1/20 load.
    pub fn trinity1(grid: GridConfig) -> Self {
        SchemeConfig {
            variant: Variant::One,
            grid,
            origin: Origin::default(),
            hashes: 1,
            fingerprint_bits: 64,
            initial_quotient_bits: 10,
            load_threshold: 1.0 / 20.0,
        }
    }

    /// Four 32-bit fingerprints per element, expansion at 1/5 load.
    pub fn trinity2(grid: GridConfig) -> Self {
        SchemeConfig {
            variant: Variant::Two,
            hashes: 4,
            fingerprint_bits: 32,
            load_threshold: 1.0 / 5.0,
            ..SchemeConfig::trinity1(grid)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.hashes == 0 || self.hashes as usize > MAX_HASHES {
            return Err(Error::InvalidConfig(format!("hash family size {} outside 1..={MAX_HASHES}", self.hashes)));
        }
        if !(2..=64).contains(&self.fingerprint_bits) {
            return Err(Error::InvalidConfig(format!("fingerprint width {} outside 2..=64", self.fingerprint_bits)));
        }
        if self.initial_quotient_bits == 0 || self.initial_quotient_bits >= self.fingerprint_bits {
            return Err(Error::InvalidConfig("initial quotient width must lie in [1, p)".into()));
        }
        self.qf_params().map(|_| ())
    }

    pub fn qf_params(&self) -> Result<QfParams> {
        QfParams::new(
            self.initial_quotient_bits,
            self.fingerprint_bits - self.initial_quotient_bits,
            self.load_threshold,
        )
    }

    /// Bytes per fingerprint in the SHVE vector.
    fn fingerprint_bytes(&self) -> usize {
        self.fingerprint_bits.div_ceil(8) as usize
    }

    /// SHVE vector length: the bytes of all `t` fingerprints.
    pub fn shve_dim(&self) -> usize {
        self.hashes as usize * self.fingerprint_bytes()
    }

    /// Worst-case false-positive rate of the filter stage for an absent
    /// element: `(1 - e^(-t n / m))^t` with `t n / m` at most the load
    /// threshold.
    pub fn fpr_bound(&self) -> f64 {
        (1.0 - (-self.load_threshold).exp()).powi(self.hashes as i32)
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u8(match self.variant {
            Variant::One => 1,
            Variant::Two => 2,
        });
        w.u64(self.grid.spatial_cell_size.to_bits())
            .u64(self.grid.temporal_cell_size.to_bits())
            .u8(self.grid.order_h as u8)
            .u8(self.grid.dims_d as u8);
        w.u64(self.origin.x.to_bits())
            .u64(self.origin.y.to_bits())
            .u64(self.origin.t.to_bits())
            .u8(match self.origin.units {
                CoordUnits::Meters => 0,
                CoordUnits::Degrees => 1,
            });
        w.u8(self.hashes as u8)
            .u8(self.fingerprint_bits as u8)
            .u8(self.initial_quotient_bits as u8)
            .u64(self.load_threshold.to_bits());
    }

    pub(crate) fn decode(r: &mut Reader) -> Result<Self> {
        let variant = match r.u8()? {
            1 => Variant::One,
            2 => Variant::Two,
            v => return Err(Error::Malformed(format!("unknown scheme variant {v}"))),
        };
        let grid = GridConfig {
            spatial_cell_size: f64::from_bits(r.u64()?),
            temporal_cell_size: f64::from_bits(r.u64()?),
            order_h: r.u8()? as u32,
            dims_d: r.u8()? as u32,
        };
        let (x, y, t) = (f64::from_bits(r.u64()?), f64::from_bits(r.u64()?), f64::from_bits(r.u64()?));
        let units = match r.u8()? {
            0 => CoordUnits::Meters,
            1 => CoordUnits::Degrees,
            u => return Err(Error::Malformed(format!("unknown coordinate units {u}"))),
        };
        let cfg = SchemeConfig {
            variant,
            grid,
            origin: Origin { x, y, t, units },
            hashes: r.u8()? as u32,
            fingerprint_bits: r.u8()? as u32,
            initial_quotient_bits: r.u8()? as u32,
            load_threshold: f64::from_bits(r.u64()?),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Secrets shared by the owner and its users.
#[derive(Clone, PartialEq)]
pub struct KeySet {
    pub msk: ShveMasterKey,
    /// One seed per member of the hash family.
    pub hash_seeds: Vec<u64>,
    /// `K`, the salt key; pre-shared with the server for Trinity-II.
    pub salt_key: SaltKey,
    /// Root of the order-token tree.
    pub order_key: OrderKey,
    /// Seals identifiers and verify tokens.
    pub sk: [u8; 32],
}

impl std::fmt::Debug for KeySet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeySet(t = {})", self.hash_seeds.len())
    }
}

impl KeySet {
    pub fn generate(hashes: u32, rng: &mut (impl RngCore + CryptoRng)) -> Result<KeySet> {
        let msk = shve::setup(128, rng)?;
        let hash_seeds = (0..hashes).map(|_| rng.next_u64()).collect();
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        let mut ok = [0u8; 16];
        rng.fill_bytes(&mut ok);
        let mut sk = [0u8; 32];
        rng.fill_bytes(&mut sk);
        Ok(KeySet {
            msk,
            hash_seeds,
            salt_key: SaltKey::from_bytes(k),
            order_key: OrderKey::from_bytes(ok),
            sk,
        })
    }

    fn encode(&self, w: &mut Writer) {
        w.bytes(self.msk.as_bytes()).u8(self.hash_seeds.len() as u8);
        for &s in &self.hash_seeds {
            w.u64(s);
        }
        w.raw(self.salt_key.as_bytes()).raw(self.order_key.as_bytes()).raw(&self.sk);
    }

    fn decode(r: &mut Reader) -> Result<Self> {
        let msk = ShveMasterKey::from_bytes(r.bytes()?)?;
        let n = r.u8()?;
        let hash_seeds = (0..n).map(|_| r.u64()).collect::<Result<_>>()?;
        Ok(KeySet {
            msk,
            hash_seeds,
            salt_key: SaltKey::from_bytes(r.array()?),
            order_key: OrderKey::from_bytes(r.array()?),
            sk: r.array()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpaceTimeObject {
    pub point: SpaceTimePoint,
    /// Opaque file identifier.
    pub ind: Vec<u8>,
}

impl SpaceTimeObject {
    pub fn new(point: SpaceTimePoint, ind: impl Into<Vec<u8>>) -> Self {
        SpaceTimeObject { point, ind: ind.into() }
    }
}

/// A search predicate: a box, or raw inclusive Hilbert intervals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    Range(SpaceTimeRange),
    Intervals(Vec<(u64, u64)>),
}

impl From<SpaceTimeRange> for Query {
    fn from(r: SpaceTimeRange) -> Self {
        Query::Range(r)
    }
}

impl From<&SpaceTimeRange> for Query {
    fn from(r: &SpaceTimeRange) -> Self {
        Query::Range(*r)
    }
}

impl Query {
    /// Sorted, disjoint Hilbert intervals of the query.
    pub fn intervals(&self, grid: &GridConfig) -> Result<Vec<(u64, u64)>> {
        match self {
            Query::Range(r) => Ok(geocode::range_to_intervals(r, grid)),
            Query::Intervals(v) => {
                let mut v = v.clone();
                if v.iter().any(|&(lo, hi)| lo > hi || hi > grid.max_value()) {
                    return Err(Error::InvalidConfig("Hilbert interval outside the curve".into()));
                }
                v.sort_unstable();
                let mut out: Vec<(u64, u64)> = Vec::with_capacity(v.len());
                for (lo, hi) in v {
                    match out.last_mut() {
                        Some(prev) if lo <= prev.1.saturating_add(1) => prev.1 = prev.1.max(hi),
                        _ => out.push((lo, hi)),
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn cover(&self, grid: &GridConfig) -> Result<RangeCover> {
        Ok(prefixcover::cover_intervals(&self.intervals(grid)?, grid.width()))
    }

    /// Plaintext membership, the ground truth searches are measured against.
    pub fn matches(&self, p: &SpaceTimePoint, grid: &GridConfig) -> bool {
        match self {
            Query::Range(r) => r.contains(p),
            Query::Intervals(v) => {
                let h = geocode::hilbert_encode(p, grid);
                v.iter().any(|&(lo, hi)| (lo..=hi).contains(&h))
            }
        }
    }
}

/// Where one stored copy of an object lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub handle: u32,
    /// Addition counter it was salted under; 0 when unsalted.
    pub counter: u64,
    pub point: SpaceTimePoint,
}

/// What the owner remembers between operations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OwnerState {
    pub counter: u64,
    pub placements: BTreeMap<Vec<u8>, Vec<Placement>>,
}

/// A search result before verification.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Candidate {
    pub ind: Vec<u8>,
    /// Sealed verify token; Trinity-II only.
    pub verify: Option<Vec<u8>>,
}

/// Owner/user side of the scheme: keys, parameters and owner state.
#[derive(Clone)]
pub struct Client {
    pub keys: KeySet,
    pub config: SchemeConfig,
    pub state: OwnerState,
    table: ComponentTable,
    ind_key: [u8; 32],
    verify_key: [u8; 32],
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("config", &self.config)
            .field("counter", &self.state.counter)
            .finish_non_exhaustive()
    }
}

const CLIENT_MAGIC: &[u8; 4] = b"TRK\0";
const CLIENT_VERSION: u16 = 1;

fn mask(bits: u32) -> u64 {
    if bits >= 64 { u64::MAX } else { (1u64 << bits) - 1 }
}

/// Seeded 64-bit hash of a canonical prefix string.
pub fn element_hash(seed: u64, canonical: &[u8]) -> u64 {
    let seed_bytes = seed.to_le_bytes();
    let mut src = (&seed_bytes[..]).chain(canonical);
    murmur3::murmur3_x64_128(&mut src, (seed ^ (seed >> 32)) as u32).expect("reading from memory") as u64
}

impl Client {
    pub fn new(keys: KeySet, config: SchemeConfig) -> Result<Client> {
        config.validate()?;
        if keys.hash_seeds.len() != config.hashes as usize {
            return Err(Error::InvalidConfig(format!(
                "key set has {} hash seeds, configuration needs {}",
                keys.hash_seeds.len(),
                config.hashes
            )));
        }
        let table = keys.msk.table(config.shve_dim());
        let ind_key = crypto::prf(&keys.sk, &[b"ind"]);
        let verify_key = crypto::prf(&keys.sk, &[b"verify"]);
        Ok(Client { keys, config, state: OwnerState::default(), table, ind_key, verify_key })
    }

    pub fn counter(&self) -> u64 {
        self.state.counter
    }

    /// The `t` fingerprints of a prefix element.
    pub fn fingerprints(&self, e: &PrefixElement) -> SmallVec<[u64; 4]> {
        let mut buf = [0u8; 64];
        let canon = e.write_canonical(&mut buf);
        let m = mask(self.config.fingerprint_bits);
        self.keys.hash_seeds.iter().map(|&s| element_hash(s, canon) & m).collect()
    }

    fn aggregate(&self, fps: &[u64]) -> [u8; 16] {
        let nb = self.config.fingerprint_bytes();
        let mut v: SmallVec<[u8; 64]> = SmallVec::new();
        for f in fps {
            v.extend_from_slice(&f.to_le_bytes()[..nb]);
        }
        self.table.aggregate(&v)
    }

    pub fn element_update(&self, e: &PrefixElement) -> ElementUpdate {
        let fingerprints = self.fingerprints(e);
        let aggregate = self.aggregate(&fingerprints);
        ElementUpdate { fingerprints, aggregate }
    }

    pub fn point_family(&self, p: &SpaceTimePoint) -> Result<Vec<PrefixElement>> {
        self.config.grid.check(p)?;
        let h = geocode::hilbert_encode(p, &self.config.grid);
        Ok(prefixcover::prefix_family(h, self.config.grid.width()).elements)
    }

    pub fn point_updates(&self, p: &SpaceTimePoint) -> Result<Vec<ElementUpdate>> {
        Ok(self.point_family(p)?.iter().map(|e| self.element_update(e)).collect())
    }

    fn salted(&self, updates: &[ElementUpdate], counter: u64) -> Vec<ElementUpdate> {
        let ot = ordertoken::ot_eval(&self.keys.order_key, counter);
        let s = ordertoken::salt(&self.keys.salt_key, &ot);
        let m = mask(self.config.fingerprint_bits);
        updates
            .iter()
            .map(|u| {
                let mut u = u.clone();
                for f in u.fingerprints.iter_mut() {
                    *f ^= s.fingerprint & m;
                }
                xor16(&mut u.aggregate, &s.pad);
                u
            })
            .collect()
    }

    fn seal_ind(&self, ind: &[u8], rng: &mut (impl RngCore + CryptoRng)) -> Vec<u8> {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let mut out = nonce.to_vec();
        out.extend(crypto::seal(&self.ind_key, &nonce, b"ind", ind));
        out
    }

    pub fn open_ind(&self, sealed: &[u8]) -> Result<Vec<u8>> {
        let (nonce, ct) = split_nonce(sealed)?;
        crypto::open(&self.ind_key, nonce, b"ind", ct).ok_or(Error::TokenCorrupt)
    }

    /// Sealed bitmap of the trie positions of the point's prefix family,
    /// bound to `ind`.
    pub fn verify_token(&self, p: &SpaceTimePoint, ind: &[u8], rng: &mut (impl RngCore + CryptoRng)) -> Result<Vec<u8>> {
        let bm = CompressedBitmap::from_positions(self.point_family(p)?.iter().map(|e| e.trie_index()));
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let mut out = nonce.to_vec();
        out.extend(crypto::seal(&self.verify_key, &nonce, ind, &bm.to_bytes()));
        Ok(out)
    }

    pub fn open_verify_token(&self, ind: &[u8], vt: &[u8]) -> Result<CompressedBitmap> {
        let (nonce, ct) = split_nonce(vt)?;
        let plain = crypto::open(&self.verify_key, nonce, ind, ct).ok_or(Error::TokenCorrupt)?;
        CompressedBitmap::from_bytes(&plain).map_err(|_| Error::TokenCorrupt)
    }

    /// Builds the addition message. Trinity-II additions outside setup take
    /// the next counter and are salted under `OT_c`.
    pub fn prepare_add(
        &mut self,
        obj: &SpaceTimeObject,
        during_setup: bool,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<AddMessage> {
        let updates = self.point_updates(&obj.point)?;
        let two = self.config.variant == Variant::Two;
        let verify = if two { Some(self.verify_token(&obj.point, &obj.ind, rng)?) } else { None };
        let ind = self.seal_ind(&obj.ind, rng);
        if !two || during_setup {
            return Ok(AddMessage { counter: 0, elements: updates, ind, verify });
        }
        let c = self
            .state
            .counter
            .checked_add(1)
            .ok_or_else(|| Error::InvalidConfig("update counter exhausted".into()))?;
        self.state.counter = c;
        Ok(AddMessage { counter: c, elements: self.salted(&updates, c), ind, verify })
    }

    pub fn finish_add(&mut self, obj: &SpaceTimeObject, msg: &AddMessage, receipt: AddReceipt) {
        self.state.placements.entry(obj.ind.clone()).or_default().push(Placement {
            handle: receipt.handle,
            counter: msg.counter,
            point: obj.point,
        });
    }

    /// `None` when the owner holds no copy of `obj`.
    pub fn prepare_delete(&self, obj: &SpaceTimeObject) -> Result<Option<DeleteMessage>> {
        let Some(pl) = self
            .state
            .placements
            .get(&obj.ind)
            .and_then(|v| v.iter().rev().find(|p| p.point == obj.point))
        else {
            return Ok(None);
        };
        let elements = self.point_updates(&obj.point)?;
        let cached = if pl.counter > 0 { self.salted(&elements, pl.counter) } else { Vec::new() };
        Ok(Some(DeleteMessage { handle: pl.handle, elements, cached }))
    }

    pub fn finish_delete(&mut self, obj: &SpaceTimeObject, handle: u32) {
        if let Some(v) = self.state.placements.get_mut(&obj.ind) {
            v.retain(|p| p.handle != handle);
            if v.is_empty() {
                self.state.placements.remove(&obj.ind);
            }
        }
    }

    /// Tokens for every element of the query's cover, cut for a filter
    /// with `quotient_bits` quotient bits. `None` for a query that covers
    /// nothing.
    pub fn search_request(
        &self,
        query: &Query,
        quotient_bits: u32,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<Option<SearchRequest>> {
        let p = self.config.fingerprint_bits;
        if quotient_bits == 0 || quotient_bits >= p {
            return Err(Error::InvalidConfig(format!("quotient width {quotient_bits} for {p}-bit fingerprints")));
        }
        let cover = query.cover(&self.config.grid)?;
        if cover.is_empty() {
            return Ok(None);
        }
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let shift = p - quotient_bits;
        let dim = self.config.shve_dim() as u32;
        let elements = cover
            .elements
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let mut r = ChaCha20Rng::from_seed(seed);
                r.set_stream(i as u64);
                let fps = self.fingerprints(e);
                let agg = self.aggregate(&fps);
                SearchElement {
                    quotients: fps.iter().map(|f| f >> shift).collect(),
                    token: shve::keygen_aggregate(&self.keys.msk, dim, &agg, &mut r),
                }
            })
            .collect();
        let capability = (self.config.variant == Variant::Two)
            .then(|| ordertoken::constrain(&self.keys.order_key, self.state.counter));
        Ok(Some(SearchRequest { quotient_bits, capability, elements }))
    }

    pub fn open_response(&self, resp: &SearchResponse) -> Result<Vec<Candidate>> {
        resp.hits
            .iter()
            .map(|h| Ok(Candidate { ind: self.open_ind(&h.ind)?, verify: h.verify.clone() }))
            .collect()
    }

    /// Keeps the candidates whose prefix-family bitmap meets the query's
    /// cover. Fails with `TokenCorrupt` if a token does not authenticate.
    pub fn verify(&self, query: &Query, candidates: &[Candidate]) -> Result<BTreeSet<Vec<u8>>> {
        let cover: HashSet<u64> = query.cover(&self.config.grid)?.elements.iter().map(|e| e.trie_index()).collect();
        let mut out = BTreeSet::new();
        for c in candidates {
            let vt = c.verify.as_deref().ok_or(Error::TokenCorrupt)?;
            let bm = self.open_verify_token(&c.ind, vt)?;
            if bm.iter().any(|i| cover.contains(&i)) {
                out.insert(c.ind.clone());
            }
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(CLIENT_MAGIC).u16(CLIENT_VERSION);
        self.config.encode(&mut w);
        self.keys.encode(&mut w);
        w.u64(self.state.counter).u32(self.state.placements.len() as u32);
        for (ind, v) in &self.state.placements {
            w.bytes(ind).u32(v.len() as u32);
            for p in v {
                w.u32(p.handle).u64(p.counter).u64(p.point.x).u64(p.point.y).u64(p.point.t);
            }
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Client> {
        let mut r = Reader::new(buf);
        if r.raw(4).ok() != Some(&CLIENT_MAGIC[..]) {
            return Err(Error::CorruptHeader("not a Trinity key file".into()));
        }
        let v = r.u16()?;
        if v != CLIENT_VERSION {
            return Err(Error::VersionMismatch { found: v, expected: CLIENT_VERSION });
        }
        let config = SchemeConfig::decode(&mut r)?;
        let keys = KeySet::decode(&mut r)?;
        let mut client = Client::new(keys, config)?;
        client.state.counter = r.u64()?;
        let n = r.count(8)?;
        for _ in 0..n {
            let ind = r.bytes()?.to_vec();
            let m = r.count(36)?;
            let v = (0..m)
                .map(|_| {
                    Ok(Placement {
                        handle: r.u32()?,
                        counter: r.u64()?,
                        point: SpaceTimePoint::new(r.u64()?, r.u64()?, r.u64()?),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            client.state.placements.insert(ind, v);
        }
        r.expect_end()?;
        Ok(client)
    }
}

fn split_nonce(buf: &[u8]) -> Result<(&[u8; NONCE_LEN], &[u8])> {
    if buf.len() < NONCE_LEN {
        return Err(Error::TokenCorrupt);
    }
    let (n, ct) = buf.split_at(NONCE_LEN);
    Ok((n.try_into().unwrap(), ct))
}

fn require(client: &Client, variant: Variant) -> Result<()> {
    if client.config.variant != variant {
        return Err(Error::InvalidConfig(format!("operation needs {variant:?}, client runs {:?}", client.config.variant)));
    }
    Ok(())
}

/// Something that answers wire requests on behalf of the server.
pub trait Transport {
    fn call(&mut self, request: &[u8]) -> Result<Vec<u8>>;
    /// Quotient width of the server's filter, which tokens are cut for.
    fn quotient_bits(&self) -> u32;
}

impl Transport for Edb {
    fn call(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        self.dispatch(request)
    }

    fn quotient_bits(&self) -> u32 {
        Edb::quotient_bits(self)
    }
}

fn roundtrip<M: Message, R: Message>(server: &mut impl Transport, msg: &M) -> Result<R> {
    R::from_bytes(&server.call(&msg.to_bytes())?)
}

/// Setup for either variant. Objects are stored unsalted in the main
/// filter and the counter starts at 0.
pub fn setup(db: &[SpaceTimeObject], config: SchemeConfig, rng: &mut (impl RngCore + CryptoRng)) -> Result<(Client, Edb)> {
    config.validate()?;
    let keys = KeySet::generate(config.hashes, rng)?;
    let mut client = Client::new(keys, config)?;
    let salt_key = (config.variant == Variant::Two).then(|| client.keys.salt_key.clone());
    let msg = SetupMessage { config, salt_key };
    let mut edb = Edb::from_setup(&SetupMessage::from_bytes(&msg.to_bytes())?)?;
    for obj in db {
        let m = client.prepare_add(obj, true, rng)?;
        let receipt: AddReceipt = roundtrip(&mut edb, &m)?;
        client.finish_add(obj, &m, receipt);
    }
    Ok((client, edb))
}

pub fn add(client: &mut Client, obj: &SpaceTimeObject, edb: &mut impl Transport, rng: &mut (impl RngCore + CryptoRng)) -> Result<()> {
    let m = client.prepare_add(obj, false, rng)?;
    let receipt: AddReceipt = roundtrip(edb, &m)?;
    client.finish_add(obj, &m, receipt);
    Ok(())
}

/// Removes one stored copy of `obj`. Returns false when there was none.
pub fn delete(client: &mut Client, obj: &SpaceTimeObject, edb: &mut impl Transport) -> Result<bool> {
    let Some(m) = client.prepare_delete(obj)? else {
        return Ok(false);
    };
    let receipt: DeleteReceipt = roundtrip(edb, &m)?;
    client.finish_delete(obj, m.handle);
    Ok(receipt.removed)
}

/// Unverified search for either variant; a Trinity-II search also flushes
/// the server's cache.
pub fn search(
    client: &Client,
    query: impl Into<Query>,
    edb: &mut impl Transport,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Vec<Candidate>> {
    let query = query.into();
    let Some(req) = client.search_request(&query, edb.quotient_bits(), rng)? else {
        return Ok(Vec::new());
    };
    let resp: SearchResponse = roundtrip(edb, &req)?;
    client.open_response(&resp)
}

pub fn t1_setup(db: &[SpaceTimeObject], config: SchemeConfig, rng: &mut (impl RngCore + CryptoRng)) -> Result<(Client, Edb)> {
    if config.variant != Variant::One {
        return Err(Error::InvalidConfig("t1_setup needs a Trinity-I configuration".into()));
    }
    setup(db, config, rng)
}

/// Read-only; results may include filter false positives.
pub fn t1_search(
    client: &Client,
    query: impl Into<Query>,
    edb: &Edb,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<BTreeSet<Vec<u8>>> {
    require(client, Variant::One)?;
    let query = query.into();
    let Some(req) = client.search_request(&query, edb.quotient_bits(), rng)? else {
        return Ok(BTreeSet::new());
    };
    let req = SearchRequest::from_bytes(&req.to_bytes())?;
    let resp = SearchResponse::from_bytes(&edb.search(&req)?.to_bytes())?;
    Ok(client.open_response(&resp)?.into_iter().map(|c| c.ind).collect())
}

pub fn t1_add(client: &mut Client, obj: &SpaceTimeObject, edb: &mut Edb, rng: &mut (impl RngCore + CryptoRng)) -> Result<()> {
    require(client, Variant::One)?;
    add(client, obj, edb, rng)
}

pub fn t1_delete(client: &mut Client, obj: &SpaceTimeObject, edb: &mut Edb) -> Result<bool> {
    require(client, Variant::One)?;
    delete(client, obj, edb)
}

/// Returns the order token the first post-setup addition will use.
pub fn t2_setup(
    db: &[SpaceTimeObject],
    config: SchemeConfig,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<(Client, Edb, OrderToken)> {
    if config.variant != Variant::Two {
        return Err(Error::InvalidConfig("t2_setup needs a Trinity-II configuration".into()));
    }
    let (client, edb) = setup(db, config, rng)?;
    let ot = ordertoken::ot_eval(&client.keys.order_key, client.state.counter + 1);
    Ok((client, edb, ot))
}

/// Candidates with their verify tokens; pass them to [`verify`].
pub fn t2_search(
    client: &Client,
    query: impl Into<Query>,
    edb: &mut Edb,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Vec<Candidate>> {
    require(client, Variant::Two)?;
    search(client, query, edb, rng)
}

pub fn t2_add(client: &mut Client, obj: &SpaceTimeObject, edb: &mut Edb, rng: &mut (impl RngCore + CryptoRng)) -> Result<()> {
    require(client, Variant::Two)?;
    add(client, obj, edb, rng)
}

pub fn t2_delete(client: &mut Client, obj: &SpaceTimeObject, edb: &mut Edb) -> Result<bool> {
    require(client, Variant::Two)?;
    delete(client, obj, edb)
}

pub fn verify(client: &Client, query: impl Into<Query>, candidates: &[Candidate]) -> Result<BTreeSet<Vec<u8>>> {
    client.verify(&query.into(), candidates)
}
