//! On-disk EDB: a sectioned snapshot file plus a write-ahead journal.
//!
//! Snapshot layout, all integers little-endian:
//!
//! ```text
//! magic "TRDB" | version u16 | header length u32 | header | sections | footer
//! header: variant u8, generation u64, counter u64, next handle u32,
//!         config, section count u8, then (id u8, offset u64, length u64)
//!         per section, then the CRC-32 of everything before it
//! footer: CRC-32 per section in table order, then magic "BDRT"
//! ```
//!
//! The journal at `<path>.wal` starts with its own magic, version and the
//! generation of the snapshot it extends. Each record is a length, a CRC-32
//! and one wire message (add, delete or flush). A journal whose generation
//! differs from the snapshot's is stale and ignored. Replay stops at the
//! first incomplete or damaged record.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use smallvec::SmallVec;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geocode::{self, CoordUnits, GridConfig, Origin};
use crate::ordertoken::SaltKey;
use crate::qfilter::QuotientFilter;
use crate::scheme::server::{Postings, Record, StoredObject};
use crate::scheme::wire::{ElementUpdate, FlushMessage, Message, SearchRequest};
use crate::scheme::{CacheEntry, Edb, SchemeConfig, SpaceTimeObject, Transport, Variant};

pub const FORMAT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"TRDB";
const FOOTER_MAGIC: &[u8; 4] = b"BDRT";
const WAL_MAGIC: &[u8; 4] = b"TRWL";
const WAL_HEADER_LEN: u64 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
enum Section {
    Filter = 1,
    Records = 2,
    Objects = 3,
    Cache = 4,
    SaltKey = 5,
}

const SECTIONS: [Section; 5] = [Section::Filter, Section::Records, Section::Objects, Section::Cache, Section::SaltKey];

/// Decoded snapshot header.
#[derive(Debug, Clone, PartialEq)]
pub struct EdbHeader {
    pub version: u16,
    pub variant: Variant,
    pub generation: u64,
    pub counter: u64,
    pub next_handle: u32,
    pub config: SchemeConfig,
    /// `(id, offset, length)` of each section.
    pub sections: Vec<(u8, u64, u64)>,
}

fn fingerprint_bytes(cfg: &SchemeConfig) -> usize {
    cfg.fingerprint_bits.div_ceil(8) as usize
}

fn put_fp(w: &mut Writer, fp: u64, nb: usize) {
    w.raw(&fp.to_le_bytes()[..nb]);
}

fn get_fp(r: &mut Reader, nb: usize) -> Result<u64> {
    let mut b = [0u8; 8];
    b[..nb].copy_from_slice(r.raw(nb)?);
    Ok(u64::from_le_bytes(b))
}

fn varint_u32(r: &mut Reader) -> Result<u32> {
    u32::try_from(r.varint()?).map_err(|_| Error::Malformed("handle exceeds 32 bits".into()))
}

// Records sorted by key, keys delta coded.
fn encode_records(edb: &Edb) -> Vec<u8> {
    let mut keys: Vec<u64> = edb.records.keys().copied().collect();
    keys.sort_unstable();
    let mut w = Writer::new();
    w.varint(keys.len() as u64);
    let mut prev = 0;
    for k in keys {
        let list = &edb.records[&k];
        w.varint(k - prev).varint(list.len() as u64);
        prev = k;
        for rec in list {
            let handles = rec.handles.handles();
            w.raw(&rec.agg).varint(handles.len() as u64);
            for h in handles {
                w.varint(h as u64);
            }
        }
    }
    w.finish()
}

fn decode_records(buf: &[u8]) -> Result<HashMap<u64, SmallVec<[Record; 1]>>> {
    let mut r = Reader::new(buf);
    let n = r.varint()? as usize;
    if n > buf.len() {
        return Err(Error::Malformed("record count exceeds section".into()));
    }
    let mut out = HashMap::with_capacity(n);
    let mut key = 0u64;
    for i in 0..n {
        let delta = r.varint()?;
        if i > 0 && delta == 0 {
            return Err(Error::Malformed("record keys not strictly increasing".into()));
        }
        key = key.checked_add(delta).ok_or_else(|| Error::Malformed("record key overflow".into()))?;
        let m = r.varint()? as usize;
        let mut list = SmallVec::new();
        for _ in 0..m {
            let agg = r.array()?;
            let hn = r.varint()? as usize;
            if hn > r.remaining() {
                return Err(Error::Malformed("handle count exceeds section".into()));
            }
            let handles = (0..hn).map(|_| varint_u32(&mut r)).collect::<Result<Vec<_>>>()?;
            list.push(Record { agg, handles: Postings::from_handles(handles) });
        }
        out.insert(key, list);
    }
    r.expect_end()?;
    Ok(out)
}

fn encode_objects(edb: &Edb) -> Vec<u8> {
    let mut handles: Vec<u32> = edb.objects.keys().copied().collect();
    handles.sort_unstable();
    let mut w = Writer::new();
    w.varint(handles.len() as u64);
    let mut prev = 0;
    for h in handles {
        let o = &edb.objects[&h];
        w.varint((h - prev) as u64);
        prev = h;
        w.varint(o.ind.len() as u64).raw(&o.ind);
        match &o.verify {
            Some(v) => w.varint(v.len() as u64 + 1).raw(v),
            None => w.varint(0),
        };
    }
    w.finish()
}

fn decode_objects(buf: &[u8]) -> Result<HashMap<u32, StoredObject>> {
    let mut r = Reader::new(buf);
    let n = r.varint()? as usize;
    if n > buf.len() {
        return Err(Error::Malformed("object count exceeds section".into()));
    }
    let mut out = HashMap::with_capacity(n);
    let mut h = 0u32;
    for i in 0..n {
        let delta = varint_u32(&mut r)?;
        if i > 0 && delta == 0 {
            return Err(Error::Malformed("object handles not strictly increasing".into()));
        }
        h = h.checked_add(delta).ok_or_else(|| Error::Malformed("object handle overflow".into()))?;
        let len = r.varint()? as usize;
        let ind = r.raw(len)?.to_vec();
        let verify = match r.varint()? as usize {
            0 => None,
            len => Some(r.raw(len - 1)?.to_vec()),
        };
        out.insert(h, StoredObject { ind, verify });
    }
    r.expect_end()?;
    Ok(out)
}

fn encode_cache(edb: &Edb) -> Vec<u8> {
    let nb = fingerprint_bytes(&edb.config);
    let mut w = Writer::new();
    w.varint(edb.cache.len() as u64);
    for c in &edb.cache {
        w.varint(c.counter).varint(c.handle as u64);
        for &f in &c.element.fingerprints {
            put_fp(&mut w, f, nb);
        }
        w.raw(&c.element.aggregate);
    }
    w.finish()
}

fn decode_cache(buf: &[u8], cfg: &SchemeConfig) -> Result<Vec<CacheEntry>> {
    let nb = fingerprint_bytes(cfg);
    let t = cfg.hashes as usize;
    let mut r = Reader::new(buf);
    let n = r.varint()? as usize;
    if n > buf.len() {
        return Err(Error::Malformed("cache count exceeds section".into()));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let counter = r.varint()?;
        let handle = varint_u32(&mut r)?;
        let fingerprints = (0..t).map(|_| get_fp(&mut r, nb)).collect::<Result<_>>()?;
        let element = ElementUpdate { fingerprints, aggregate: r.array()? };
        out.push(CacheEntry { counter, handle, element });
    }
    r.expect_end()?;
    Ok(out)
}

fn encode_header(edb: &Edb, generation: u64, sections: &[(u8, u64, u64)]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(match edb.config.variant {
        Variant::One => 1,
        Variant::Two => 2,
    });
    w.u64(generation).u64(edb.counter).u32(edb.next_handle);
    edb.config.encode(&mut w);
    w.u8(sections.len() as u8);
    for &(id, off, len) in sections {
        w.u8(id).u64(off).u64(len);
    }
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.finish()
}

/// Counts bytes and checksums them on the way through.
struct Tally<W> {
    inner: W,
    len: u64,
    crc: crc32fast::Hasher,
}

impl<W: Write> Tally<W> {
    fn new(inner: W) -> Self {
        Tally { inner, len: 0, crc: crc32fast::Hasher::new() }
    }
}

impl<W: Write> Write for Tally<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.len += n as u64;
        self.crc.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn section_bodies(edb: &Edb) -> Vec<Vec<u8>> {
    vec![
        encode_records(edb),
        encode_objects(edb),
        encode_cache(edb),
        edb.salt_key.as_ref().map_or_else(Vec::new, |k| k.as_bytes().to_vec()),
    ]
}

fn section_table(edb: &Edb, generation: u64, bodies: &[Vec<u8>]) -> Vec<u8> {
    let lens: Vec<u64> = std::iter::once(edb.filter.serialized_len())
        .chain(bodies.iter().map(|b| b.len() as u64))
        .collect();
    // The header length does not depend on the offsets it records.
    let probe = encode_header(edb, generation, &vec![(0, 0, 0); lens.len()]);
    let mut off = 10 + probe.len() as u64;
    let mut table = Vec::new();
    for (s, len) in SECTIONS.iter().zip(&lens) {
        table.push((*s as u8, off, *len));
        off += len;
    }
    encode_header(edb, generation, &table)
}

/// Writes a complete snapshot of `edb` and returns its size in bytes.
pub fn write_snapshot(edb: &Edb, generation: u64, out: impl Write) -> Result<u64> {
    let bodies = section_bodies(edb);
    let header = section_table(edb, generation, &bodies);
    let mut w = Tally::new(out);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    let mut crcs = Vec::with_capacity(SECTIONS.len());
    {
        let mut f = Tally::new(&mut w);
        edb.filter.write_to(&mut f)?;
        crcs.push(f.crc.finalize());
    }
    for b in &bodies {
        w.write_all(b)?;
        crcs.push(crc32fast::hash(b));
    }
    for c in crcs {
        w.write_all(&c.to_le_bytes())?;
    }
    w.write_all(FOOTER_MAGIC)?;
    w.flush()?;
    Ok(w.len)
}

/// Snapshot size without writing it anywhere.
pub fn snapshot_len(edb: &Edb) -> Result<u64> {
    write_snapshot(edb, 0, io::sink())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptHeader(msg.into())
}

/// Parses and checks the header of a snapshot held in memory.
pub fn read_header(buf: &[u8]) -> Result<EdbHeader> {
    if buf.len() < 10 || &buf[..4] != MAGIC {
        return Err(corrupt("not a Trinity EDB file"));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let hlen = u32::from_le_bytes(buf[6..10].try_into().unwrap()) as usize;
    if hlen < 4 || buf.len() - 10 < hlen {
        return Err(corrupt("header length exceeds file"));
    }
    let (body, crc) = buf[10..10 + hlen].split_at(hlen - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(corrupt("header checksum mismatch"));
    }
    let mut r = Reader::new(body);
    let bad = |e: Error| corrupt(format!("header: {e}"));
    let variant = match r.u8().map_err(bad)? {
        1 => Variant::One,
        2 => Variant::Two,
        v => return Err(corrupt(format!("unknown variant {v}"))),
    };
    let generation = r.u64().map_err(bad)?;
    let counter = r.u64().map_err(bad)?;
    let next_handle = r.u32().map_err(bad)?;
    let config = SchemeConfig::decode(&mut r).map_err(bad)?;
    if config.variant != variant {
        return Err(corrupt("variant byte disagrees with the configuration"));
    }
    let n = r.u8().map_err(bad)? as usize;
    let mut sections = Vec::with_capacity(n);
    for _ in 0..n {
        sections.push((r.u8().map_err(bad)?, r.u64().map_err(bad)?, r.u64().map_err(bad)?));
    }
    r.expect_end().map_err(bad)?;
    let footer_at = buf.len() as u64 - 4 - 4 * n as u64;
    let mut end = 10 + hlen as u64;
    for (i, &(id, off, len)) in sections.iter().enumerate() {
        if SECTIONS.get(i).map(|s| *s as u8) != Some(id) {
            return Err(corrupt(format!("unexpected section {id} at position {i}")));
        }
        if off != end || off.checked_add(len).is_none_or(|e| e > footer_at) {
            return Err(corrupt(format!("section {id} overlaps or overruns")));
        }
        end = off + len;
    }
    if n != SECTIONS.len() || end != footer_at || &buf[buf.len() - 4..] != FOOTER_MAGIC {
        return Err(corrupt("file is truncated or has trailing data"));
    }
    Ok(EdbHeader { version, variant, generation, counter, next_handle, config, sections })
}

/// Decodes a snapshot held in memory; returns the EDB and its generation.
pub fn read_snapshot(buf: &[u8]) -> Result<(Edb, u64)> {
    let h = read_header(buf)?;
    let footer = buf.len() - 4 - 4 * h.sections.len();
    let mut parts = Vec::with_capacity(h.sections.len());
    for (i, &(id, off, len)) in h.sections.iter().enumerate() {
        let s = &buf[off as usize..(off + len) as usize];
        let at = footer + 4 * i;
        if crc32fast::hash(s) != u32::from_le_bytes(buf[at..at + 4].try_into().unwrap()) {
            return Err(corrupt(format!("section {id} checksum mismatch")));
        }
        parts.push(s);
    }
    let section = |e: Error| corrupt(format!("section: {e}"));
    let mut filter = QuotientFilter::read_from(&mut &*parts[0])?;
    if filter.params().p() != h.config.fingerprint_bits {
        return Err(corrupt("filter fingerprint width disagrees with the configuration"));
    }
    filter.set_load_threshold(h.config.load_threshold)?;
    let salt_key = match parts[4].len() {
        0 => None,
        32 => Some(SaltKey::from_bytes(parts[4].try_into().unwrap())),
        n => return Err(corrupt(format!("salt key section of {n} bytes"))),
    };
    let objects = decode_objects(parts[2]).map_err(section)?;
    let cache = decode_cache(parts[3], &h.config).map_err(section)?;
    let cached_handles = cache.iter().map(|c| c.handle).filter(|h| objects.contains_key(h)).collect();
    let edb = Edb {
        config: h.config,
        filter,
        records: decode_records(parts[1]).map_err(section)?,
        objects,
        next_handle: h.next_handle,
        cache,
        cached_handles,
        counter: h.counter,
        salt_key,
    };
    if (edb.config.variant == Variant::Two) != edb.salt_key.is_some() {
        return Err(corrupt("salt key presence disagrees with the variant"));
    }
    edb.check_invariants().map_err(|e| corrupt(format!("inconsistent state: {e}")))?;
    Ok((edb, h.generation))
}

pub fn wal_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".wal");
    PathBuf::from(s)
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".tmp");
    PathBuf::from(s)
}

fn sync_parent(path: &Path) {
    // Directory fsync is best effort; some platforms refuse it.
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
}

/// Write-new, fsync, rename.
fn replace_atomically(path: &Path, write: impl FnOnce(&mut BufWriter<&File>) -> Result<()>) -> Result<()> {
    let tmp = tmp_path(path);
    let file = File::create(&tmp)?;
    {
        let mut w = BufWriter::new(&file);
        write(&mut w)?;
        w.flush()?;
    }
    file.sync_all()?;
    fs::rename(&tmp, path)?;
    sync_parent(path);
    Ok(())
}

fn wal_header(generation: u64) -> Vec<u8> {
    let mut v = WAL_MAGIC.to_vec();
    v.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    v.extend_from_slice(&generation.to_le_bytes());
    v
}

/// Complete journal records in `buf` and the byte length they span.
/// Anything after the first incomplete or damaged record is ignored.
pub fn wal_records(buf: &[u8]) -> (Vec<&[u8]>, usize) {
    let mut out = Vec::new();
    let mut pos = WAL_HEADER_LEN as usize;
    while buf.len() - pos >= 8 {
        let len = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(buf[pos + 4..pos + 8].try_into().unwrap());
        let Some(rec) = buf.get(pos + 8..pos + 8 + len) else {
            break;
        };
        if crc32fast::hash(rec) != crc {
            break;
        }
        out.push(rec);
        pos += 8 + len;
    }
    (out, pos)
}

/// An EDB bound to its files. Updates are applied in memory, then journaled
/// before the reply is returned; [`EdbStore::commit`] folds the journal into
/// a fresh snapshot.
#[derive(Debug)]
pub struct EdbStore {
    path: PathBuf,
    edb: Edb,
    generation: u64,
    wal: File,
    journaled: u64,
}

impl EdbStore {
    /// Writes `edb` as a new store. Fails if `path` exists unless
    /// `overwrite` is set.
    pub fn create(path: impl AsRef<Path>, edb: Edb, overwrite: bool) -> Result<EdbStore> {
        let path = path.as_ref().to_path_buf();
        if !overwrite && path.exists() {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::AlreadyExists,
                format!("{} already exists", path.display()),
            )));
        }
        let mut store = EdbStore { wal: reset_wal(&path, 1)?, path, edb, generation: 0, journaled: 0 };
        store.commit()?;
        Ok(store)
    }

    /// Loads the snapshot and replays its journal.
    pub fn open(path: impl AsRef<Path>) -> Result<EdbStore> {
        let path = path.as_ref().to_path_buf();
        let (mut edb, generation) = read_snapshot(&fs::read(&path)?)?;
        let wp = wal_path(&path);
        let buf = match fs::read(&wp) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let current = buf.len() as u64 >= WAL_HEADER_LEN && buf[..WAL_HEADER_LEN as usize] == wal_header(generation)[..];
        if !current {
            let wal = reset_wal(&path, generation)?;
            return Ok(EdbStore { path, edb, generation, wal, journaled: 0 });
        }
        let (records, valid) = wal_records(&buf);
        for (i, rec) in records.iter().enumerate() {
            edb.dispatch(rec).map_err(|e| Error::ReplayFailure(format!("journal record {}: {e}", i + 1)))?;
        }
        edb.check_invariants().map_err(|e| Error::ReplayFailure(format!("state after replay: {e}")))?;
        let wal = OpenOptions::new().read(true).write(true).open(&wp)?;
        wal.set_len(valid as u64)?;
        let mut wal = wal;
        wal.seek(SeekFrom::End(0))?;
        Ok(EdbStore { path, edb, generation, wal, journaled: records.len() as u64 })
    }

    pub fn edb(&self) -> &Edb {
        &self.edb
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Records journaled since the last commit.
    pub fn journaled(&self) -> u64 {
        self.journaled
    }

    /// Serves one wire request, journaling any state change.
    pub fn execute(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        use crate::scheme::wire::{peek_op, AddMessage, DeleteMessage};
        let op = peek_op(request)?;
        let flush = if op == SearchRequest::OP && !self.edb.cache.is_empty() {
            SearchRequest::from_bytes(request)?.capability.map(|capability| FlushMessage { capability })
        } else {
            None
        };
        let reply = self.edb.dispatch(request)?;
        match op {
            AddMessage::OP | DeleteMessage::OP | FlushMessage::OP => self.append(request)?,
            _ => {
                if let Some(f) = flush {
                    self.append(&f.to_bytes())?;
                }
            }
        }
        Ok(reply)
    }

    fn append(&mut self, rec: &[u8]) -> Result<()> {
        let mut buf = Vec::with_capacity(rec.len() + 8);
        buf.extend_from_slice(&(rec.len() as u32).to_le_bytes());
        buf.extend_from_slice(&crc32fast::hash(rec).to_le_bytes());
        buf.extend_from_slice(rec);
        self.wal.write_all(&buf)?;
        self.wal.sync_data()?;
        self.journaled += 1;
        Ok(())
    }

    /// Writes a new snapshot generation and starts an empty journal.
    pub fn commit(&mut self) -> Result<()> {
        let generation = self.generation + 1;
        replace_atomically(&self.path, |w| write_snapshot(&self.edb, generation, w).map(|_| ()))?;
        self.wal = reset_wal(&self.path, generation)?;
        self.generation = generation;
        self.journaled = 0;
        Ok(())
    }

    pub fn into_edb(self) -> Edb {
        self.edb
    }
}

impl Transport for EdbStore {
    fn call(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        self.execute(request)
    }

    fn quotient_bits(&self) -> u32 {
        self.edb.quotient_bits()
    }
}

fn reset_wal(path: &Path, generation: u64) -> Result<File> {
    let wp = wal_path(path);
    replace_atomically(&wp, |w| Ok(w.write_all(&wal_header(generation))?))?;
    let mut f = OpenOptions::new().read(true).write(true).open(&wp)?;
    f.seek(SeekFrom::End(0))?;
    Ok(f)
}

/// Opens the store at `path` and returns its state with the journal applied.
pub fn edb_open(path: impl AsRef<Path>) -> Result<Edb> {
    Ok(EdbStore::open(path)?.into_edb())
}

/// Replaces the snapshot at `path` with `edb` and clears its journal.
pub fn edb_commit(edb: &Edb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let generation = peek_generation(path).unwrap_or(0) + 1;
    replace_atomically(path, |w| write_snapshot(edb, generation, w).map(|_| ()))?;
    reset_wal(path, generation)?;
    Ok(())
}

fn peek_generation(path: &Path) -> Option<u64> {
    let mut f = File::open(path).ok()?;
    let mut head = [0u8; 19];
    f.read_exact(&mut head).ok()?;
    (&head[..4] == MAGIC).then(|| u64::from_le_bytes(head[11..19].try_into().unwrap()))
}

/// A CSV row that fell outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub line: u64,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingest {
    pub objects: Vec<SpaceTimeObject>,
    pub rejects: Vec<Reject>,
    /// The origin the rows were quantized against.
    pub origin: Origin,
}

struct Row {
    line: u64,
    id: String,
    lon: f64,
    lat: f64,
    t: f64,
}

fn parse_rows(path: &Path) -> Result<Vec<Row>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(e) => Error::Io(e),
            k => Error::Parse { line: 0, msg: format!("{k:?}") },
        })?;
    let mut rows = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rd.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(Error::Parse { line, msg: e.to_string() });
            }
        }
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 4 {
            return Err(Error::Parse { line, msg: format!("expected 4 columns (id,lon,lat,timestamp), found {}", rec.len()) });
        }
        let num = |i: usize, name: &str| {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line, msg: format!("{name} {:?} is not a finite number", &rec[i]) })
        };
        let parsed = (num(1, "longitude"), num(2, "latitude"), num(3, "timestamp"));
        match parsed {
            (Ok(lon), Ok(lat), Ok(t)) => rows.push(Row { line, id: rec[0].to_string(), lon, lat, t }),
            // A non-numeric first row is a header.
            _ if rows.is_empty() && line == 1 => continue,
            (a, b, c) => {
                a?;
                b?;
                c?;
            }
        }
    }
    Ok(rows)
}

/// Reads `id,lon,lat,timestamp` rows (degrees and seconds) and quantizes
/// them onto `grid`. With no origin, the minimum corner of the data is used.
/// Rows off the grid are reported, not fatal.
pub fn ingest_csv(path: impl AsRef<Path>, grid: &GridConfig, origin: Option<Origin>) -> Result<Ingest> {
    grid.validate()?;
    let rows = parse_rows(path.as_ref())?;
    let origin = origin.unwrap_or_else(|| {
        let min = |f: fn(&Row) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
        if rows.is_empty() {
            Origin { units: CoordUnits::Degrees, ..Origin::default() }
        } else {
            Origin { x: min(|r| r.lon), y: min(|r| r.lat), t: min(|r| r.t), units: CoordUnits::Degrees }
        }
    });
    let mut objects = Vec::with_capacity(rows.len());
    let mut rejects = Vec::new();
    for r in rows {
        match geocode::quantize((r.lon, r.lat, r.t), grid, &origin) {
            Ok(p) => objects.push(SpaceTimeObject::new(p, r.id.into_bytes())),
            Err(e @ Error::OutOfGrid { .. }) => rejects.push(Reject { line: r.line, id: r.id, reason: e.to_string() }),
            Err(e) => return Err(e),
        }
    }
    Ok(Ingest { objects, rejects, origin })
}
