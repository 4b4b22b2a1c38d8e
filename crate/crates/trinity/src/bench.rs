//! Latency, size and false-positive measurements.
//!
//! Each phase is timed with a monotonic clock around the scheme call alone;
//! file IO is never inside a timed region.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::edbstore;
use crate::error::{Error, Result};
use crate::geocode::{self, GridConfig, SpaceTimePoint, SpaceTimeRange};
use crate::prefixcover::PrefixElement;
use crate::scheme::{self, Client, Edb, Query, SchemeConfig, SpaceTimeObject, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Setup,
    Tokengen,
    Search,
    Add,
    Delete,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::Setup, Phase::Tokengen, Phase::Search, Phase::Add, Phase::Delete];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Tokengen => "tokengen",
            Phase::Search => "search",
            Phase::Add => "add",
            Phase::Delete => "delete",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Phase> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown phase {s:?}")))
    }
}

/// Summary of one phase's samples, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub runs: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl PhaseStats {
    pub fn from_samples(ms: &[f64]) -> PhaseStats {
        let mut v = ms.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = match n {
            0 => 0.0,
            _ if n % 2 == 1 => v[n / 2],
            _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
        };
        PhaseStats {
            runs: n,
            mean_ms: if n == 0 { 0.0 } else { v.iter().sum::<f64>() / n as f64 },
            median_ms: median,
            min_ms: v.first().copied().unwrap_or(0.0),
            max_ms: v.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scheme: String,
    pub objects: usize,
    /// Fingerprints in the main filter.
    pub entries: u64,
    /// Distinct stored prefix elements.
    pub records: u64,
    pub quotient_bits: u32,
    pub edb_bytes: u64,
    /// Share of absent full-length elements that pass the filter stage.
    pub fpr_observed: f64,
    pub fpr_bound: f64,
    pub fpr_probes: u64,
    pub phases: BTreeMap<Phase, PhaseStats>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scheme        {}", self.scheme);
        let _ = writeln!(s, "objects       {}", self.objects);
        let _ = writeln!(s, "records       {}", self.records);
        let _ = writeln!(s, "entries       {} (2^{} slots)", self.entries, self.quotient_bits);
        let _ = writeln!(s, "edb bytes     {}", self.edb_bytes);
        let _ = writeln!(
            s,
            "fpr           {:.5} over {} probes (bound {:.5})",
            self.fpr_observed, self.fpr_probes, self.fpr_bound
        );
        let _ = writeln!(s, "{:<10} {:>5} {:>12} {:>12} {:>12} {:>12}", "phase", "runs", "mean ms", "median ms", "min ms", "max ms");
        for (p, st) in &self.phases {
            let _ = writeln!(
                s,
                "{:<10} {:>5} {:>12.3} {:>12.3} {:>12.3} {:>12.3}",
                p.name(),
                st.runs,
                st.mean_ms,
                st.median_ms,
                st.min_ms,
                st.max_ms
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub phases: Vec<Phase>,
    pub repeat: usize,
    pub seed: u64,
    /// Edge length, in cells, of the query boxes.
    pub query_side: u64,
    pub fpr_probes: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { phases: Phase::ALL.to_vec(), repeat: 3, seed: 1, query_side: 16, fpr_probes: 20_000 }
    }
}

/// Uniform random points with ids `s0, s1, ...`.
pub fn synthetic_objects(n: usize, grid: &GridConfig, seed: u64) -> Vec<SpaceTimeObject> {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|i| SpaceTimeObject::new(random_point(grid, &mut r), format!("s{i}"))).collect()
}

fn random_point(grid: &GridConfig, r: &mut ChaCha20Rng) -> SpaceTimePoint {
    let side = grid.side();
    let t = if grid.dims_d == 3 { r.gen_range(0..side) } else { 0 };
    SpaceTimePoint::new(r.gen_range(0..side), r.gen_range(0..side), t)
}

/// A box of the given edge length at a random position.
pub fn random_box(grid: &GridConfig, edge: u64, r: &mut ChaCha20Rng) -> SpaceTimeRange {
    let side = grid.side();
    let e = edge.clamp(1, side);
    let mut lo = || r.gen_range(0..=side - e);
    let (x, y) = (lo(), lo());
    let t = if grid.dims_d == 3 { lo() } else { 0 };
    let te = if grid.dims_d == 3 { e - 1 } else { 0 };
    SpaceTimeRange::new(SpaceTimePoint::new(x, y, t), SpaceTimePoint::new(x + e - 1, y + e - 1, t + te))
        .expect("corners ordered")
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Filter-stage positive rate over random full-length elements whose
/// points are not stored.
pub fn probe_fpr(client: &Client, edb: &Edb, stored: &HashSet<u64>, probes: usize, seed: u64) -> (f64, u64) {
    let grid = client.config.grid;
    let w = grid.width();
    let shift = edb.filter().params().r;
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let (mut hits, mut n) = (0u64, 0u64);
    while (n as usize) < probes {
        let h = r.gen_range(0..=grid.max_value());
        if stored.contains(&h) {
            if stored.len() as u64 > grid.max_value() {
                break;
            }
            continue;
        }
        let qs: Vec<u64> = client.fingerprints(&PrefixElement::new(h, w, w)).iter().map(|f| f >> shift).collect();
        hits += edb.filter_stage(&qs) as u64;
        n += 1;
    }
    (if n == 0 { 0.0 } else { hits as f64 / n as f64 }, n)
}

/// Measures every requested phase on `db` under `config`. Setup is timed
/// `repeat` times; the last EDB is kept for the other phases.
pub fn run(db: &[SpaceTimeObject], config: SchemeConfig, opts: &BenchOptions) -> Result<BenchReport> {
    let mut r = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut samples: BTreeMap<Phase, Vec<f64>> = BTreeMap::new();
    let rounds = if opts.phases.contains(&Phase::Setup) { opts.repeat.max(1) } else { 1 };
    let mut built = None;
    for _ in 0..rounds {
        let t0 = Instant::now();
        let out = scheme::setup(db, config, &mut r)?;
        samples.entry(Phase::Setup).or_default().push(ms(t0));
        built = Some(out);
    }
    if !opts.phases.contains(&Phase::Setup) {
        samples.clear();
    }
    let (mut client, mut edb) = built.expect("at least one setup round");
    let stored = db.iter().map(|o| geocode::hilbert_encode(&o.point, &config.grid)).collect();
    let mut report = run_on(&mut client, &mut edb, &stored, opts, &mut r)?;
    report.phases.extend(samples.into_iter().map(|(p, v)| (p, PhaseStats::from_samples(&v))));
    Ok(report)
}

/// Measures the post-setup phases on an existing EDB. `stored` holds the
/// Hilbert values already present, so false-positive probes avoid them.
pub fn run_on(
    client: &mut Client,
    edb: &mut Edb,
    stored: &HashSet<u64>,
    opts: &BenchOptions,
    r: &mut ChaCha20Rng,
) -> Result<BenchReport> {
    let grid = client.config.grid;
    let repeat = opts.repeat.max(1);
    let mut samples: BTreeMap<Phase, Vec<f64>> = BTreeMap::new();
    let want = |p: Phase| opts.phases.contains(&p);

    if want(Phase::Tokengen) || want(Phase::Search) {
        for _ in 0..repeat {
            let q: Query = random_box(&grid, opts.query_side, r).into();
            let t0 = Instant::now();
            let req = client.search_request(&q, edb.quotient_bits(), r)?;
            samples.entry(Phase::Tokengen).or_default().push(ms(t0));
            drop(req);
            let t0 = Instant::now();
            match client.config.variant {
                Variant::One => {
                    scheme::t1_search(client, q, edb, r)?;
                }
                Variant::Two => {
                    let c = scheme::t2_search(client, q.clone(), edb, r)?;
                    scheme::verify(client, q, &c)?;
                }
            }
            samples.entry(Phase::Search).or_default().push(ms(t0));
        }
    }

    if want(Phase::Add) || want(Phase::Delete) {
        let fresh: Vec<SpaceTimeObject> = (0..repeat)
            .map(|i| SpaceTimeObject::new(random_point(&grid, r), format!("bench-{i}")))
            .collect();
        for o in &fresh {
            let t0 = Instant::now();
            scheme::add(client, o, edb, r)?;
            samples.entry(Phase::Add).or_default().push(ms(t0));
        }
        for o in &fresh {
            let t0 = Instant::now();
            scheme::delete(client, o, edb)?;
            samples.entry(Phase::Delete).or_default().push(ms(t0));
        }
    }
    samples.retain(|p, _| want(*p));

    let (fpr_observed, fpr_probes) = probe_fpr(client, edb, stored, opts.fpr_probes, opts.seed ^ 0x5eed);
    Ok(BenchReport {
        scheme: match client.config.variant {
            Variant::One => "trinity-1".into(),
            Variant::Two => "trinity-2".into(),
        },
        objects: edb.object_count(),
        entries: edb.filter().entries(),
        records: edb.record_count() as u64,
        quotient_bits: edb.quotient_bits(),
        edb_bytes: edbstore::snapshot_len(edb)?,
        fpr_observed,
        fpr_bound: client.config.fpr_bound(),
        fpr_probes,
        phases: samples.into_iter().map(|(p, v)| (p, PhaseStats::from_samples(&v))).collect(),
    })
}
