//! Quotient filter with sorted runs, true deletion and expansion by
//! borrowing one remainder bit into the quotient.
//!
//! Duplicate fingerprints are kept as separate entries, so the filter holds
//! a multiset. The `occupied` bit belongs to a slot index; `continuation`,
//! `shifted` and the remainder belong to the entry stored in that slot and
//! travel with it when entries are shifted.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const MAGIC: u32 = u32::from_le_bytes(*b"TQF\0");
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfParams {
    pub q: u32,
    pub r: u32,
    pub load_threshold: f64,
}

impl QfParams {
    pub fn new(q: u32, r: u32, load_threshold: f64) -> Result<Self> {
        let p = QfParams { q, r, load_threshold };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.q < 1 || self.r < 1 || self.q + self.r > 64 {
            return Err(Error::InvalidConfig(format!(
                "need q >= 1, r >= 1 and q + r <= 64 (q = {}, r = {})",
                self.q, self.r
            )));
        }
        if self.q > 40 {
            return Err(Error::InvalidConfig(format!("q = {} is too large", self.q)));
        }
        if !(self.load_threshold > 0.0 && self.load_threshold <= 1.0) {
            return Err(Error::InvalidConfig("load threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Fingerprint width `p = q + r`.
    pub fn p(&self) -> u32 {
        self.q + self.r
    }

    pub fn capacity(&self) -> u64 {
        1u64 << self.q
    }
}

/// A `p`-bit fingerprint split into quotient and remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    pub quotient: u64,
    pub remainder: u64,
}

impl Fingerprint {
    pub fn split(value: u64, q: u32, r: u32) -> Self {
        debug_assert!(q + r == 64 || value >> (q + r) == 0);
        Fingerprint {
            quotient: if r == 64 { 0 } else { value >> r },
            remainder: value & mask(r),
        }
    }

    pub fn join(&self, r: u32) -> u64 {
        (self.quotient << r) | self.remainder
    }
}

fn mask(bits: u32) -> u64 {
    if bits >= 64 { u64::MAX } else { (1u64 << bits) - 1 }
}

/// Metadata and remainder of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QfSlot {
    pub is_occupied: bool,
    pub is_continuation: bool,
    pub is_shifted: bool,
    pub remainder: u64,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    cont: bool,
    shifted: bool,
    rem: u64,
}

/// Fixed-width unsigned fields packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
struct PackedArray {
    words: Vec<u64>,
    width: u32,
}

impl PackedArray {
    fn new(len: u64, width: u32) -> Self {
        let n = (len * width as u64).div_ceil(64) as usize + 1;
        PackedArray { words: vec![0; n], width }
    }

    #[inline]
    fn get(&self, i: u64) -> u64 {
        let bit = i * self.width as u64;
        let (w, off) = ((bit / 64) as usize, (bit % 64) as u32);
        let mut v = self.words[w] >> off;
        if off + self.width > 64 {
            v |= self.words[w + 1] << (64 - off);
        }
        v & mask(self.width)
    }

    #[inline]
    fn set(&mut self, i: u64, v: u64) {
        let m = mask(self.width);
        let v = v & m;
        let bit = i * self.width as u64;
        let (w, off) = ((bit / 64) as usize, (bit % 64) as u32);
        self.words[w] = (self.words[w] & !(m << off)) | (v << off);
        if off + self.width > 64 {
            let hi = 64 - off;
            self.words[w + 1] = (self.words[w + 1] & !(m >> hi)) | (v >> hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct BitVec(Vec<u64>);

impl BitVec {
    fn new(len: u64) -> Self {
        BitVec(vec![0; len.div_ceil(64) as usize])
    }

    #[inline]
    fn get(&self, i: u64) -> bool {
        (self.0[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    #[inline]
    fn set(&mut self, i: u64, v: bool) {
        let w = &mut self.0[(i / 64) as usize];
        if v {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuotientFilter {
    params: QfParams,
    entries: u64,
    occupied: BitVec,
    continuation: BitVec,
    shifted: BitVec,
    remainders: PackedArray,
}

impl PartialEq for QuotientFilter {
    fn eq(&self, other: &Self) -> bool {
        self.params.q == other.params.q
            && self.params.r == other.params.r
            && self.entries == other.entries
            && self.occupied == other.occupied
            && self.continuation == other.continuation
            && self.shifted == other.shifted
            && self.remainders == other.remainders
    }
}

impl QuotientFilter {
    pub fn new(params: QfParams) -> Result<Self> {
        params.validate()?;
        let cap = params.capacity();
        Ok(QuotientFilter {
            params,
            entries: 0,
            occupied: BitVec::new(cap),
            continuation: BitVec::new(cap),
            shifted: BitVec::new(cap),
            remainders: PackedArray::new(cap, params.r),
        })
    }

    pub fn params(&self) -> QfParams {
        self.params
    }

    pub fn capacity(&self) -> u64 {
        self.params.capacity()
    }

    pub fn entries(&self) -> u64 {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    pub fn load(&self) -> f64 {
        self.entries as f64 / self.capacity() as f64
    }

    /// True once the entry count has reached the load threshold.
    pub fn needs_expansion(&self) -> bool {
        self.entries as f64 >= self.params.load_threshold * self.capacity() as f64
    }

    pub fn set_load_threshold(&mut self, load_threshold: f64) -> Result<()> {
        self.params = QfParams::new(self.params.q, self.params.r, load_threshold)?;
        Ok(())
    }

    pub fn split(&self, fp: u64) -> Fingerprint {
        Fingerprint::split(fp, self.params.q, self.params.r)
    }

    pub fn slot(&self, i: u64) -> QfSlot {
        QfSlot {
            is_occupied: self.occupied.get(i),
            is_continuation: self.continuation.get(i),
            is_shifted: self.shifted.get(i),
            remainder: self.remainders.get(i),
        }
    }

    #[inline]
    fn next(&self, i: u64) -> u64 {
        (i + 1) & (self.capacity() - 1)
    }

    #[inline]
    fn prev(&self, i: u64) -> u64 {
        i.wrapping_sub(1) & (self.capacity() - 1)
    }

    #[inline]
    fn is_empty_slot(&self, i: u64) -> bool {
        !self.occupied.get(i) && !self.continuation.get(i) && !self.shifted.get(i)
    }

    #[inline]
    fn read(&self, i: u64) -> Entry {
        Entry {
            cont: self.continuation.get(i),
            shifted: self.shifted.get(i),
            rem: self.remainders.get(i),
        }
    }

    #[inline]
    fn write(&mut self, i: u64, e: Entry) {
        self.continuation.set(i, e.cont);
        self.shifted.set(i, e.shifted);
        self.remainders.set(i, e.rem);
    }

    /// True when some entry has quotient `fq`.
    pub fn is_occupied(&self, fq: u64) -> bool {
        self.occupied.get(fq)
    }

    // Index where the run for `fq` starts, or where it would start if the
    // occupied bit of `fq` has just been set for a new run.
    fn run_start(&self, fq: u64) -> u64 {
        let mut b = fq;
        while self.shifted.get(b) {
            b = self.prev(b);
        }
        let mut s = b;
        while b != fq {
            loop {
                s = self.next(s);
                if !self.continuation.get(s) {
                    break;
                }
            }
            loop {
                b = self.next(b);
                if self.occupied.get(b) {
                    break;
                }
            }
        }
        s
    }

    fn next_occupied_after(&self, q: u64) -> u64 {
        let mut i = self.next(q);
        while !self.occupied.get(i) {
            i = self.next(i);
        }
        i
    }

    pub fn insert(&mut self, fp: u64) -> Result<()> {
        self.insert_parts(self.split(fp))
    }

    /// Inserts one copy of the fingerprint, keeping its run sorted.
    pub fn insert_parts(&mut self, fp: Fingerprint) -> Result<()> {
        let Fingerprint { quotient: fq, remainder: fr } = fp;
        debug_assert!(fq < self.capacity() && fr <= mask(self.params.r));
        if self.entries >= self.capacity() {
            return Err(Error::FilterFull { capacity: self.capacity() });
        }
        if self.is_empty_slot(fq) {
            self.occupied.set(fq, true);
            self.write(fq, Entry { cont: false, shifted: false, rem: fr });
            self.entries += 1;
            return Ok(());
        }
        let had_run = self.occupied.get(fq);
        self.occupied.set(fq, true);
        let start = self.run_start(fq);
        if !had_run {
            self.shift_in(start, Entry { cont: false, shifted: start != fq, rem: fr });
        } else {
            let mut s = start;
            loop {
                if self.remainders.get(s) > fr {
                    break;
                }
                s = self.next(s);
                if !self.continuation.get(s) {
                    break;
                }
            }
            if s == start {
                // New head: the old head moves one slot right and becomes a continuation.
                self.shift_in(start, Entry { cont: false, shifted: start != fq, rem: fr });
                let n = self.next(start);
                self.continuation.set(n, true);
            } else {
                self.shift_in(s, Entry { cont: true, shifted: true, rem: fr });
            }
        }
        self.entries += 1;
        Ok(())
    }

    fn shift_in(&mut self, mut i: u64, mut cur: Entry) {
        loop {
            if self.is_empty_slot(i) {
                self.write(i, cur);
                return;
            }
            let prev = self.read(i);
            self.write(i, cur);
            cur = Entry { shifted: true, ..prev };
            i = self.next(i);
        }
    }

    pub fn contains(&self, fp: u64) -> bool {
        self.contains_parts(self.split(fp))
    }

    pub fn contains_parts(&self, fp: Fingerprint) -> bool {
        let Fingerprint { quotient: fq, remainder: fr } = fp;
        if !self.occupied.get(fq) {
            return false;
        }
        let mut s = self.run_start(fq);
        loop {
            let rem = self.remainders.get(s);
            if rem == fr {
                return true;
            }
            if rem > fr {
                return false;
            }
            s = self.next(s);
            if !self.continuation.get(s) {
                return false;
            }
        }
    }

    /// Calls `f` with every remainder in the run of `fq`, in ascending order.
    pub fn for_each_in_run(&self, fq: u64, mut f: impl FnMut(u64)) {
        if !self.occupied.get(fq) {
            return;
        }
        let mut s = self.run_start(fq);
        loop {
            f(self.remainders.get(s));
            s = self.next(s);
            if !self.continuation.get(s) {
                return;
            }
        }
    }

    pub fn delete(&mut self, fp: u64) -> bool {
        self.delete_parts(self.split(fp))
    }

    /// Removes one copy of the fingerprint. Returns whether a copy was found.
    pub fn delete_parts(&mut self, fp: Fingerprint) -> bool {
        let Fingerprint { quotient: fq, remainder: fr } = fp;
        if !self.occupied.get(fq) {
            return false;
        }
        let start = self.run_start(fq);
        let mut s = start;
        loop {
            let rem = self.remainders.get(s);
            if rem == fr {
                break;
            }
            if rem > fr {
                return false;
            }
            s = self.next(s);
            if !self.continuation.get(s) {
                return false;
            }
        }
        let head = s == start;
        if head && !self.continuation.get(self.next(s)) {
            self.occupied.set(fq, false);
        }
        self.slide_left(s, fq, head);
        self.entries -= 1;
        true
    }

    fn slide_left(&mut self, orig: u64, fq: u64, head_removed: bool) {
        let mut j = orig;
        let mut q = fq;
        loop {
            let n = self.next(j);
            if n == orig || self.is_empty_slot(n) || !self.shifted.get(n) {
                self.write(j, Entry { cont: false, shifted: false, rem: 0 });
                return;
            }
            let e = self.read(n);
            let moved = if j == orig && head_removed && e.cont {
                Entry { cont: false, shifted: j != q, rem: e.rem }
            } else if !e.cont {
                q = self.next_occupied_after(q);
                Entry { cont: false, shifted: j != q, rem: e.rem }
            } else {
                Entry { cont: true, shifted: true, rem: e.rem }
            };
            self.write(j, moved);
            j = n;
        }
    }

    // First slot of some cluster, or an empty slot, from which a full
    // circular scan sees every cluster from its start.
    fn scan_origin(&self) -> Option<u64> {
        if self.entries == 0 {
            return None;
        }
        (0..self.capacity()).find(|&i| self.is_empty_slot(i) || !self.shifted.get(i))
    }

    /// Calls `f` with every stored fingerprint, clusters in slot order.
    pub fn for_each(&self, mut f: impl FnMut(Fingerprint)) {
        let Some(origin) = self.scan_origin() else {
            return;
        };
        let mut q = 0;
        let mut i = origin;
        for _ in 0..self.capacity() {
            if !self.is_empty_slot(i) {
                if !self.shifted.get(i) {
                    q = i;
                } else if !self.continuation.get(i) {
                    q = self.next_occupied_after(q);
                }
                f(Fingerprint { quotient: q, remainder: self.remainders.get(i) });
            }
            i = self.next(i);
        }
    }

    pub fn fingerprints(&self) -> Vec<Fingerprint> {
        let mut v = Vec::with_capacity(self.entries as usize);
        self.for_each(|fp| v.push(fp));
        v
    }

    /// Number of runs and clusters, from a metadata scan.
    pub fn run_and_cluster_counts(&self) -> (u64, u64) {
        let mut runs = 0;
        let mut clusters = 0;
        for i in 0..self.capacity() {
            if self.is_empty_slot(i) {
                continue;
            }
            if !self.continuation.get(i) {
                runs += 1;
            }
            if !self.shifted.get(i) {
                clusters += 1;
            }
        }
        (runs, clusters)
    }

    /// Doubles capacity: each stored `p`-bit fingerprint is re-split with
    /// one more quotient bit and one fewer remainder bit.
    pub fn expanded(&self) -> Result<QuotientFilter> {
        if self.params.r <= 1 {
            return Err(Error::RemainderExhausted);
        }
        let r = self.params.r;
        let mut next = QuotientFilter::new(QfParams {
            q: self.params.q + 1,
            r: r - 1,
            ..self.params
        })?;
        let top = 1u64 << (r - 1);
        let mut fps = self.fingerprints();
        fps.sort_unstable_by_key(|fp| (fp.quotient, fp.remainder));
        for fp in fps {
            next.insert_parts(Fingerprint {
                quotient: (fp.quotient << 1) | u64::from(fp.remainder & top != 0),
                remainder: fp.remainder & (top - 1),
            })?;
        }
        Ok(next)
    }

    pub fn expand(&mut self) -> Result<()> {
        *self = self.expanded()?;
        Ok(())
    }

    /// Expands until the load threshold admits one more entry, then inserts.
    /// Returns the number of expansions performed.
    pub fn insert_with_growth(&mut self, fp: u64) -> Result<u32> {
        let mut grown = 0;
        while self.needs_expansion() {
            self.expand()?;
            grown += 1;
        }
        self.insert(fp)?;
        Ok(grown)
    }

    /// Checks every structural invariant, describing the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let cap = self.capacity();
        let mut filled = 0u64;
        for i in 0..cap {
            let s = self.slot(i);
            if self.is_empty_slot(i) {
                if s.remainder != 0 {
                    return Err(format!("empty slot {i} holds remainder {}", s.remainder));
                }
                continue;
            }
            filled += 1;
            if !s.is_shifted && s.is_continuation {
                return Err(format!("slot {i} is a continuation but not shifted"));
            }
            if !s.is_shifted && !s.is_occupied {
                return Err(format!("slot {i} is unshifted but its canonical bit is clear"));
            }
        }
        if filled != self.entries {
            return Err(format!("{filled} filled slots but {} entries", self.entries));
        }
        let Some(origin) = self.scan_origin() else {
            return match (0..cap).find(|&i| self.occupied.get(i)) {
                Some(i) => Err(format!("empty filter has occupied bit at {i}")),
                None => Ok(()),
            };
        };
        let mut run_quotients = Vec::new();
        let mut i = origin;
        let mut cluster_start = 0;
        let mut q = 0;
        let mut last_rem = 0;
        for _ in 0..cap {
            if !self.is_empty_slot(i) {
                let s = self.slot(i);
                if !s.is_shifted {
                    cluster_start = i;
                    q = i;
                    run_quotients.push(q);
                } else if !s.is_continuation {
                    let nq = self.next_occupied_after(q);
                    let dist = |x: u64| x.wrapping_sub(cluster_start) & (cap - 1);
                    if dist(nq) <= dist(q) || dist(nq) > dist(i) {
                        return Err(format!("run at slot {i} has no canonical slot at or before it"));
                    }
                    if nq == i {
                        return Err(format!("run start at its canonical slot {i} is marked shifted"));
                    }
                    q = nq;
                    run_quotients.push(q);
                } else if s.remainder < last_rem {
                    return Err(format!("run of quotient {q} unsorted at slot {i}"));
                }
                last_rem = s.remainder;
            }
            i = self.next(i);
        }
        run_quotients.sort_unstable();
        let occupied: Vec<u64> = (0..cap).filter(|&i| self.occupied.get(i)).collect();
        if run_quotients != occupied {
            return Err("occupied bits do not match the set of run quotients".into());
        }
        Ok(())
    }

    /// Serialized size in bytes.
    pub fn serialized_len(&self) -> u64 {
        20 + (self.capacity() * (3 + self.params.r) as u64).div_ceil(8)
    }

    /// Little-endian header followed by `3 + r` bit slots packed LSB first
    /// (occupied, continuation, shifted, then the remainder).
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&MAGIC.to_le_bytes())?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.params.q as u8, self.params.r as u8])?;
        w.write_all(&self.entries.to_le_bytes())?;
        w.write_all(&((self.params.load_threshold * 1e6).round() as u32).to_le_bytes())?;
        let mut bits = BitWriter::new(w);
        for i in 0..self.capacity() {
            let s = self.slot(i);
            let meta = u64::from(s.is_occupied)
                | u64::from(s.is_continuation) << 1
                | u64::from(s.is_shifted) << 2;
            bits.push(meta, 3)?;
            bits.push(s.remainder, self.params.r)?;
        }
        bits.finish()
    }

    pub fn read_from(r: &mut impl Read) -> Result<QuotientFilter> {
        let mut head = [0u8; 20];
        r.read_exact(&mut head)?;
        if u32::from_le_bytes(head[0..4].try_into().unwrap()) != MAGIC {
            return Err(Error::CorruptHeader("bad quotient filter magic".into()));
        }
        let version = u16::from_le_bytes(head[4..6].try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionMismatch { found: version, expected: VERSION });
        }
        let threshold = u32::from_le_bytes(head[16..20].try_into().unwrap()) as f64 / 1e6;
        let params = QfParams::new(head[6] as u32, head[7] as u32, threshold)?;
        let entries = u64::from_le_bytes(head[8..16].try_into().unwrap());
        let mut f = QuotientFilter::new(params)?;
        let mut bits = BitReader::new(r);
        for i in 0..f.capacity() {
            let meta = bits.pull(3)?;
            let rem = bits.pull(params.r)?;
            f.occupied.set(i, meta & 1 != 0);
            f.continuation.set(i, meta & 2 != 0);
            f.shifted.set(i, meta & 4 != 0);
            f.remainders.set(i, rem);
        }
        f.entries = entries;
        f.check_invariants().map_err(Error::CorruptHeader)?;
        Ok(f)
    }
}

struct BitWriter<'a, W: Write> {
    out: std::io::BufWriter<&'a mut W>,
    acc: u128,
    n: u32,
}

impl<'a, W: Write> BitWriter<'a, W> {
    fn new(w: &'a mut W) -> Self {
        BitWriter { out: std::io::BufWriter::with_capacity(1 << 16, w), acc: 0, n: 0 }
    }

    fn push(&mut self, v: u64, bits: u32) -> Result<()> {
        self.acc |= ((v & mask(bits)) as u128) << self.n;
        self.n += bits;
        if self.n >= 64 {
            self.out.write_all(&(self.acc as u64).to_le_bytes())?;
            self.acc >>= 64;
            self.n -= 64;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        let bytes = self.n.div_ceil(8) as usize;
        self.out.write_all(&(self.acc as u64).to_le_bytes()[..bytes])?;
        self.out.flush()?;
        Ok(())
    }
}

struct BitReader<'a, R: Read> {
    input: std::io::BufReader<&'a mut R>,
    acc: u128,
    n: u32,
}

impl<'a, R: Read> BitReader<'a, R> {
    fn new(r: &'a mut R) -> Self {
        BitReader { input: std::io::BufReader::with_capacity(1 << 16, r), acc: 0, n: 0 }
    }

    fn pull(&mut self, bits: u32) -> Result<u64> {
        while self.n < bits {
            let mut b = [0u8; 1];
            self.input.read_exact(&mut b)?;
            self.acc |= (b[0] as u128) << self.n;
            self.n += 8;
        }
        let v = (self.acc as u64) & mask(bits);
        self.acc >>= bits;
        self.n -= bits;
        Ok(v)
    }
}
