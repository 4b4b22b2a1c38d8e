//! Server-side state and request handling.
//!
//! The filter holds the `t` fingerprints of every distinct stored prefix
//! element. A record, keyed by the element's first fingerprint, keeps the
//! SHVE aggregate of the element and the multiset of object handles that
//! contain it. Fingerprints enter the filter when a record is created and
//! leave it when the record's last handle goes.

use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use smallvec::SmallVec;

use super::wire::*;
use super::{SchemeConfig, Variant};
use crate::error::{Error, Result};
use crate::ordertoken::{self, SaltKey, SearchCapability};
use crate::qfilter::QuotientFilter;
use crate::shve;

/// Lists longer than this are kept as counted hash maps. Elements near the
/// root of the trie are shared by nearly every object, and a linear scan of
/// their handles would make deletion grow with the database.
const INLINE_POSTINGS: usize = 16;

/// A multiset of object handles. The representation is a function of the
/// size alone, so equal multisets built by different histories compare
/// equal after a round trip through storage.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Postings {
    Inline(SmallVec<[u32; 2]>),
    Counted { counts: HashMap<u32, u32>, total: usize },
}

impl Postings {
    pub fn one(h: u32) -> Self {
        Postings::Inline(smallvec::smallvec![h])
    }

    /// Rebuilds from handles in stored order.
    pub fn from_handles(v: Vec<u32>) -> Self {
        if v.len() <= INLINE_POSTINGS {
            return Postings::Inline(v.into());
        }
        let mut counts = HashMap::with_capacity(v.len());
        for &h in &v {
            *counts.entry(h).or_insert(0) += 1;
        }
        Postings::Counted { counts, total: v.len() }
    }

    pub fn len(&self) -> usize {
        match self {
            Postings::Inline(v) => v.len(),
            Postings::Counted { total, .. } => *total,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, h: u32) -> bool {
        match self {
            Postings::Inline(v) => v.contains(&h),
            Postings::Counted { counts, .. } => counts.contains_key(&h),
        }
    }

    pub fn push(&mut self, h: u32) {
        match self {
            Postings::Inline(v) if v.len() < INLINE_POSTINGS => v.push(h),
            Postings::Inline(v) => {
                let mut all = v.to_vec();
                all.push(h);
                *self = Postings::from_handles(all);
            }
            Postings::Counted { counts, total } => {
                *counts.entry(h).or_insert(0) += 1;
                *total += 1;
            }
        }
    }

    /// Removes one copy of `h`.
    pub fn remove(&mut self, h: u32) -> bool {
        match self {
            Postings::Inline(v) => match v.iter().position(|&x| x == h) {
                Some(i) => {
                    v.swap_remove(i);
                    true
                }
                None => false,
            },
            Postings::Counted { counts, total } => {
                let Some(c) = counts.get_mut(&h) else {
                    return false;
                };
                *c -= 1;
                if *c == 0 {
                    counts.remove(&h);
                }
                *total -= 1;
                if *total <= INLINE_POSTINGS {
                    *self = Postings::Inline(self.handles().into());
                }
                true
            }
        }
    }

    /// Distinct handles, in no particular order.
    pub fn distinct(&self) -> impl Iterator<Item = u32> + '_ {
        let (a, b) = match self {
            Postings::Inline(v) => (Some(v.iter().copied()), None),
            Postings::Counted { counts, .. } => (None, Some(counts.keys().copied())),
        };
        a.into_iter().flatten().chain(b.into_iter().flatten())
    }

    /// Every copy, in the canonical stored order.
    pub fn handles(&self) -> Vec<u32> {
        match self {
            Postings::Inline(v) => v.to_vec(),
            Postings::Counted { counts, .. } => {
                let mut keys: Vec<u32> = counts.keys().copied().collect();
                keys.sort_unstable();
                keys.into_iter().flat_map(|h| std::iter::repeat_n(h, counts[&h] as usize)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Record {
    pub agg: [u8; 16],
    pub handles: Postings,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct StoredObject {
    pub ind: Vec<u8>,
    pub verify: Option<Vec<u8>>,
}

/// A salted addition waiting for the next search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub counter: u64,
    pub handle: u32,
    pub element: ElementUpdate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edb {
    pub(crate) config: SchemeConfig,
    pub(crate) filter: QuotientFilter,
    pub(crate) records: HashMap<u64, SmallVec<[Record; 1]>>,
    pub(crate) objects: HashMap<u32, StoredObject>,
    pub(crate) next_handle: u32,
    pub(crate) cache: Vec<CacheEntry>,
    /// Live objects with entries in the cache.
    pub(crate) cached_handles: HashSet<u32>,
    pub(crate) counter: u64,
    pub(crate) salt_key: Option<SaltKey>,
}

fn mask(bits: u32) -> u64 {
    if bits >= 64 { u64::MAX } else { (1u64 << bits) - 1 }
}

impl Edb {
    pub fn from_setup(msg: &SetupMessage) -> Result<Edb> {
        msg.config.validate()?;
        if (msg.config.variant == Variant::Two) != msg.salt_key.is_some() {
            return Err(Error::InvalidConfig("a salt key is required exactly for Trinity-II".into()));
        }
        Ok(Edb {
            config: msg.config,
            filter: QuotientFilter::new(msg.config.qf_params()?)?,
            records: HashMap::new(),
            objects: HashMap::new(),
            next_handle: 0,
            cache: Vec::new(),
            cached_handles: HashSet::new(),
            counter: 0,
            salt_key: msg.salt_key.clone(),
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn filter(&self) -> &QuotientFilter {
        &self.filter
    }

    /// Quotient width search tokens must be cut for.
    pub fn quotient_bits(&self) -> u32 {
        self.filter.params().q
    }

    /// Highest addition counter seen.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    /// Distinct stored prefix elements in the main filter.
    pub fn record_count(&self) -> usize {
        self.records.values().map(|v| v.len()).sum()
    }

    pub fn cache(&self) -> &[CacheEntry] {
        &self.cache
    }

    /// The filter stage of a search: whether every canonical slot is
    /// occupied. With `t` quotients this is a Bloom-style test over the
    /// occupancy bits.
    pub fn filter_stage(&self, quotients: &[u64]) -> bool {
        let cap = self.filter.capacity();
        quotients.iter().all(|&q| q < cap && self.filter.is_occupied(q))
    }

    /// Handles a request in wire form and returns the encoded reply.
    pub fn dispatch(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        match peek_op(request)? {
            AddMessage::OP => Ok(self.apply_add(&AddMessage::from_bytes(request)?)?.to_bytes()),
            DeleteMessage::OP => Ok(self.apply_delete(&DeleteMessage::from_bytes(request)?)?.to_bytes()),
            SearchRequest::OP => Ok(self.search_and_flush(&SearchRequest::from_bytes(request)?)?.to_bytes()),
            FlushMessage::OP => Ok(self.flush(&FlushMessage::from_bytes(request)?.capability)?.to_bytes()),
            op => Err(Error::Malformed(format!("server cannot handle op {op}"))),
        }
    }

    fn check_element(&self, e: &ElementUpdate) -> Result<()> {
        let p = self.config.fingerprint_bits;
        if e.fingerprints.len() != self.config.hashes as usize || e.fingerprints.iter().any(|&f| f & !mask(p) != 0) {
            return Err(Error::Malformed(format!(
                "element must carry {} fingerprints of {p} bits",
                self.config.hashes
            )));
        }
        Ok(())
    }

    pub fn apply_add(&mut self, msg: &AddMessage) -> Result<AddReceipt> {
        for e in &msg.elements {
            self.check_element(e)?;
        }
        let salted = msg.counter > 0;
        if salted {
            if self.config.variant != Variant::Two {
                return Err(Error::Malformed("salted addition sent to a Trinity-I EDB".into()));
            }
            if msg.counter <= self.counter {
                return Err(Error::Malformed(format!(
                    "addition counter {} does not advance past {}",
                    msg.counter, self.counter
                )));
            }
        }
        let handle = self.next_handle;
        self.next_handle = handle
            .checked_add(1)
            .ok_or_else(|| Error::InvalidConfig("object handle space exhausted".into()))?;
        if salted {
            self.counter = msg.counter;
            self.cached_handles.insert(handle);
            self.cache.extend(msg.elements.iter().map(|e| CacheEntry {
                counter: msg.counter,
                handle,
                element: e.clone(),
            }));
        } else {
            for e in &msg.elements {
                self.link(e, handle)?;
            }
        }
        self.objects.insert(handle, StoredObject { ind: msg.ind.clone(), verify: msg.verify.clone() });
        Ok(AddReceipt { handle })
    }

    fn insert_fingerprint(&mut self, fp: u64) -> Result<()> {
        while self.filter.needs_expansion() {
            self.filter.expand()?;
        }
        self.filter.insert(fp)
    }

    fn link(&mut self, e: &ElementUpdate, handle: u32) -> Result<()> {
        let list = self.records.entry(e.fingerprints[0]).or_default();
        if let Some(rec) = list.iter_mut().find(|r| r.agg == e.aggregate) {
            rec.handles.push(handle);
            return Ok(());
        }
        list.push(Record { agg: e.aggregate, handles: Postings::one(handle) });
        for &fp in &e.fingerprints {
            self.insert_fingerprint(fp)?;
        }
        Ok(())
    }

    fn unlink(&mut self, e: &ElementUpdate, handle: u32) {
        let key = e.fingerprints[0];
        let Some(list) = self.records.get_mut(&key) else {
            return;
        };
        let Some(ri) = list.iter().position(|r| r.agg == e.aggregate && r.handles.contains(handle)) else {
            return;
        };
        let rec = &mut list[ri];
        rec.handles.remove(handle);
        if !rec.handles.is_empty() {
            return;
        }
        list.swap_remove(ri);
        if list.is_empty() {
            self.records.remove(&key);
        }
        for &fp in &e.fingerprints {
            let found = self.filter.delete(fp);
            debug_assert!(found, "record fingerprint missing from the filter");
        }
    }

    /// Deleting an unknown handle is a no-op.
    pub fn apply_delete(&mut self, msg: &DeleteMessage) -> Result<DeleteReceipt> {
        for e in msg.elements.iter().chain(&msg.cached) {
            self.check_element(e)?;
        }
        if self.objects.remove(&msg.handle).is_none() {
            return Ok(DeleteReceipt { removed: false });
        }
        if self.cached_handles.remove(&msg.handle) {
            let mut pending: Vec<&ElementUpdate> = msg.cached.iter().collect();
            self.cache.retain(|c| {
                if c.handle != msg.handle {
                    return true;
                }
                match pending.iter().position(|e| **e == c.element) {
                    Some(i) => {
                        pending.swap_remove(i);
                        false
                    }
                    // Entries the owner could not name are orphaned; the
                    // flush drops them because the handle is gone.
                    None => true,
                }
            });
        } else {
            for e in &msg.elements {
                self.unlink(e, msg.handle);
            }
        }
        Ok(DeleteReceipt { removed: true })
    }

    fn check_capability(&self, cap: Option<&SearchCapability>) -> Result<()> {
        if self.config.variant == Variant::Two {
            let bound = cap.map_or(0, |c| c.bound);
            if bound < self.counter {
                return Err(Error::StaleCapability { token: bound, server: self.counter });
            }
        }
        Ok(())
    }

    /// Cache entries with their salt removed, skipping deleted objects.
    fn desalted(&self, cap: Option<&SearchCapability>) -> Result<Vec<(u32, ElementUpdate)>> {
        if self.cache.is_empty() {
            return Ok(Vec::new());
        }
        let (Some(cap), Some(k)) = (cap, &self.salt_key) else {
            return Err(Error::StaleCapability { token: 0, server: self.counter });
        };
        let pmask = mask(self.config.fingerprint_bits);
        let mut out = Vec::with_capacity(self.cache.len());
        let mut memo: Option<(u64, ordertoken::Salt)> = None;
        for c in &self.cache {
            if !self.objects.contains_key(&c.handle) {
                continue;
            }
            let s = match memo {
                Some((j, s)) if j == c.counter => s,
                _ => {
                    let s = ordertoken::salt(k, &ordertoken::cap_eval(cap, c.counter)?);
                    memo = Some((c.counter, s));
                    s
                }
            };
            let mut e = c.element.clone();
            for f in e.fingerprints.iter_mut() {
                *f ^= s.fingerprint & pmask;
            }
            crate::crypto::xor16(&mut e.aggregate, &s.pad);
            out.push((c.handle, e));
        }
        Ok(out)
    }

    fn merge(&mut self, desalted: Vec<(u32, ElementUpdate)>) -> Result<u64> {
        self.cache.clear();
        self.cached_handles.clear();
        let n = desalted.len() as u64;
        for (h, e) in desalted {
            self.link(&e, h)?;
        }
        Ok(n)
    }

    /// Desalts the cache into the main filter.
    pub fn flush(&mut self, cap: &SearchCapability) -> Result<FlushReceipt> {
        self.check_capability(Some(cap))?;
        let d = self.desalted(Some(cap))?;
        Ok(FlushReceipt { merged: self.merge(d)? })
    }

    /// Evaluates a request without changing state. Cached additions are
    /// desalted on the fly and included.
    pub fn search(&self, req: &SearchRequest) -> Result<SearchResponse> {
        self.check_capability(req.capability.as_ref())?;
        let d = self.desalted(req.capability.as_ref())?;
        self.evaluate(req, &d)
    }

    /// Evaluates a request, then moves the desalted cache into the filter.
    pub fn search_and_flush(&mut self, req: &SearchRequest) -> Result<SearchResponse> {
        self.check_capability(req.capability.as_ref())?;
        let d = self.desalted(req.capability.as_ref())?;
        let resp = self.evaluate(req, &d)?;
        self.merge(d)?;
        Ok(resp)
    }

    fn evaluate(&self, req: &SearchRequest, cached: &[(u32, ElementUpdate)]) -> Result<SearchResponse> {
        let q = self.filter.params().q;
        if req.quotient_bits != q {
            return Err(Error::Malformed(format!(
                "tokens cut for {} quotient bits, filter uses {q}",
                req.quotient_bits
            )));
        }
        let t = self.config.hashes as usize;
        let cap = self.filter.capacity();
        for e in &req.elements {
            if e.quotients.len() != t || e.quotients.iter().any(|&x| x >= cap) {
                return Err(Error::Malformed("search element does not fit the filter".into()));
            }
        }
        let shift = self.filter.params().r;
        let mut by_slot: HashMap<u64, Vec<usize>> = HashMap::new();
        for (i, (_, e)) in cached.iter().enumerate() {
            by_slot.entry(e.fingerprints[0] >> shift).or_default().push(i);
        }
        let handles: BTreeSet<u32> = req
            .elements
            .par_iter()
            .map(|e| {
                let mut out: Vec<u32> = Vec::new();
                self.probe_main(e, &mut out);
                if let Some(ix) = by_slot.get(&e.quotients[0]) {
                    for &i in ix {
                        let (h, c) = &cached[i];
                        let same_slots = c.fingerprints.iter().zip(&e.quotients).all(|(f, q)| f >> shift == *q);
                        if same_slots && shve::matches_aggregate(&c.aggregate, &e.token) {
                            out.push(*h);
                        }
                    }
                }
                out
            })
            .flatten_iter()
            .collect();
        let hits = handles
            .into_iter()
            .filter_map(|h| {
                self.objects.get(&h).map(|o| SearchHit { handle: h, ind: o.ind.clone(), verify: o.verify.clone() })
            })
            .collect();
        Ok(SearchResponse { hits })
    }

    fn probe_main(&self, e: &SearchElement, out: &mut Vec<u32>) {
        if !self.filter_stage(&e.quotients) {
            return;
        }
        let q0 = e.quotients[0];
        let r = self.filter.params().r;
        let mut last = None;
        self.filter.for_each_in_run(q0, |rem| {
            if last == Some(rem) {
                return;
            }
            last = Some(rem);
            if let Some(list) = self.records.get(&((q0 << r) | rem)) {
                for rec in list {
                    if shve::matches_aggregate(&rec.agg, &e.token) {
                        out.extend(rec.handles.distinct());
                    }
                }
            }
        });
    }

    /// Cross-structure consistency, for tests and after journal replay.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        self.filter.check_invariants()?;
        let t = self.config.hashes as u64;
        let records = self.record_count() as u64;
        if self.filter.entries() != records * t {
            return Err(format!("filter holds {} entries for {records} records", self.filter.entries()));
        }
        for list in self.records.values() {
            for rec in list {
                if rec.handles.is_empty() {
                    return Err("record without handles".into());
                }
                if let Some(h) = rec.handles.distinct().find(|h| !self.objects.contains_key(h)) {
                    return Err(format!("record names unknown handle {h}"));
                }
            }
        }
        if let Some(c) = self.cache.iter().find(|c| c.counter > self.counter) {
            return Err(format!("cache entry counter {} exceeds {}", c.counter, self.counter));
        }
        let live: HashSet<u32> =
            self.cache.iter().map(|c| c.handle).filter(|h| self.objects.contains_key(h)).collect();
        if live != self.cached_handles {
            return Err("cached handle index disagrees with the cache".into());
        }
        if self.objects.keys().any(|&h| h >= self.next_handle) {
            return Err("handle at or beyond the next free handle".into());
        }
        Ok(())
    }
}
