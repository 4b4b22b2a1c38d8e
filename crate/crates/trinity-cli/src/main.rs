//! `trinity`: owner, user and server roles over a single EDB file.
//!
//! The server state lives in `<edb>` and its journal `<edb>.wal`; the
//! owner's keys and update state live in `<edb>.keys` unless `--keys` says
//! otherwise.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use trinity::bench::{self, BenchOptions, Phase};
use trinity::edbstore::{self, EdbStore};
use trinity::geocode::{self, CoordUnits, GridConfig, Origin, SpaceTimePoint, SpaceTimeRange};
use trinity::scheme::{self, Client, Query, SchemeConfig, SpaceTimeObject, Variant};

/// Store rewrites its snapshot once the journal holds this many records.
const COMPACT_AFTER: u64 = 4096;

#[derive(Parser)]
#[command(name = "trinity", version, about = "Encrypted spatio-temporal range search")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build an EDB from a CSV of id,lon,lat,timestamp rows.
    Setup(SetupArgs),
    /// Print the ids of objects inside a box, one per line.
    Search(SearchArgs),
    /// Add one object.
    Add(UpdateArgs),
    /// Delete one object.
    Delete(UpdateArgs),
    /// Measure latencies, EDB size and false-positive rate.
    Bench(BenchArgs),
    /// Show an EDB's parameters and counts.
    Info(InfoArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SchemeArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

impl SchemeArg {
    fn config(self, grid: GridConfig) -> SchemeConfig {
        match self {
            SchemeArg::One => SchemeConfig::trinity1(grid),
            SchemeArg::Two => SchemeConfig::trinity2(grid),
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Hilbert order h: cells per axis are 2^h.
    #[arg(long = "order", default_value_t = 16)]
    order: u32,
    /// 2 (space only) or 3 (space and time).
    #[arg(long, default_value_t = 3)]
    dims: u32,
    /// Spatial cell edge in meters.
    #[arg(long, default_value_t = 10.0)]
    cell_size: f64,
    /// Temporal cell length in seconds.
    #[arg(long, default_value_t = 300.0)]
    time_cell: f64,
}

impl GridArgs {
    fn grid(&self) -> Result<GridConfig> {
        let g = GridConfig {
            spatial_cell_size: self.cell_size,
            temporal_cell_size: self.time_cell,
            order_h: self.order,
            dims_d: self.dims,
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Args)]
struct SetupArgs {
    csv: PathBuf,
    out: PathBuf,
    #[arg(long, value_enum, default_value = "2")]
    scheme: SchemeArg,
    #[command(flatten)]
    grid: GridArgs,
    /// Grid origin as lon,lat,time, or `auto` for the data's minimum corner.
    #[arg(long, default_value = "auto", value_parser = parse_origin)]
    origin: OriginArg,
    /// Initial quotient bits of the filter.
    #[arg(long, default_value_t = 10)]
    quotient_bits: u32,
    /// Overwrite an existing EDB and key file.
    #[arg(long)]
    force: bool,
    /// Seed for key generation; fresh entropy when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Key file; defaults to `<out>.keys`.
    #[arg(long)]
    keys: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    edb: PathBuf,
    /// x0,y0,t0,x1,y1,t1 as lon, lat and seconds, or cells with --cells.
    #[arg(long = "box", value_parser = parse_box, allow_hyphen_values = true)]
    bbox: [f64; 6],
    /// Read coordinates as grid cell indices.
    #[arg(long)]
    cells: bool,
    #[arg(long)]
    keys: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct UpdateArgs {
    edb: PathBuf,
    /// x,y,t as lon, lat and seconds, or cells with --cells.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    point: (f64, f64, f64),
    #[arg(long)]
    ind: String,
    #[arg(long)]
    cells: bool,
    #[arg(long)]
    keys: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Measure an existing EDB (changes are not saved).
    #[arg(long, conflicts_with = "synthetic")]
    edb: Option<PathBuf>,
    /// Generate this many uniform random objects.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, value_enum, default_value = "2")]
    scheme: SchemeArg,
    #[command(flatten)]
    grid: GridArgs,
    /// Comma-separated subset of setup,tokengen,search,add,delete.
    #[arg(long, value_delimiter = ',')]
    phases: Option<Vec<Phase>>,
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Query box edge in cells.
    #[arg(long, default_value_t = 16)]
    query_side: u64,
    #[arg(long, default_value_t = 20_000)]
    fpr_probes: usize,
    /// Print the report as one JSON object.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    keys: Option<PathBuf>,
}

#[derive(Args)]
struct InfoArgs {
    edb: PathBuf,
}

fn floats<const N: usize>(s: &str, what: &str) -> std::result::Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("{what}: {p:?} is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    let a: [f64; N] = v.try_into().map_err(|v: Vec<f64>| format!("{what} needs {N} comma-separated numbers, got {}", v.len()))?;
    if a.iter().any(|x| !x.is_finite()) {
        return Err(format!("{what} must be finite"));
    }
    Ok(a)
}

fn parse_box(s: &str) -> std::result::Result<[f64; 6], String> {
    let b = floats::<6>(s, "box")?;
    if b[0] > b[3] || b[1] > b[4] || b[2] > b[5] {
        return Err("box lower corner exceeds upper corner".into());
    }
    Ok(b)
}

fn parse_point(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    let [x, y, t] = floats::<3>(s, "point")?;
    Ok((x, y, t))
}

#[derive(Clone, Copy)]
struct OriginArg(Option<(f64, f64, f64)>);

fn parse_origin(s: &str) -> std::result::Result<OriginArg, String> {
    if s == "auto" {
        return Ok(OriginArg(None));
    }
    let [x, y, t] = floats::<3>(s, "origin")?;
    Ok(OriginArg(Some((x, y, t))))
}

fn make_rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn keys_path(edb: &Path, keys: Option<&PathBuf>) -> PathBuf {
    keys.cloned().unwrap_or_else(|| {
        let mut s = edb.as_os_str().to_owned();
        s.push(".keys");
        PathBuf::from(s)
    })
}

fn load_client(path: &Path) -> Result<Client> {
    let bytes = fs::read(path).with_context(|| format!("reading key file {}", path.display()))?;
    Client::from_bytes(&bytes).with_context(|| format!("key file {}", path.display()))
}

fn save_client(client: &Client, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, client.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn open_pair(edb: &Path, keys: Option<&PathBuf>) -> Result<(EdbStore, Client, PathBuf)> {
    let store = EdbStore::open(edb).with_context(|| format!("opening {}", edb.display()))?;
    let kp = keys_path(edb, keys);
    let client = load_client(&kp)?;
    if client.config != *store.edb().config() {
        bail!("key file {} belongs to a different EDB", kp.display());
    }
    Ok((store, client, kp))
}

fn maybe_compact(store: &mut EdbStore) -> Result<()> {
    if store.journaled() >= COMPACT_AFTER {
        store.commit()?;
    }
    Ok(())
}

fn cmd_setup(a: &SetupArgs) -> Result<()> {
    let grid = a.grid.grid()?;
    let kp = keys_path(&a.out, a.keys.as_ref());
    if !a.force {
        for p in [&a.out, &kp] {
            if p.exists() {
                bail!("{} already exists (use --force to overwrite)", p.display());
            }
        }
    }
    let origin = a.origin.0.map(|(x, y, t)| Origin { x, y, t, units: CoordUnits::Degrees });
    let ingest = edbstore::ingest_csv(&a.csv, &grid, origin).with_context(|| format!("reading {}", a.csv.display()))?;
    for r in &ingest.rejects {
        eprintln!("warning: line {} ({}) rejected: {}", r.line, r.id, r.reason);
    }
    let mut config = a.scheme.config(grid);
    config.origin = ingest.origin;
    config.initial_quotient_bits = a.quotient_bits;
    let mut rng = make_rng(a.seed);
    let (client, edb) = scheme::setup(&ingest.objects, config, &mut rng)?;
    let store = EdbStore::create(&a.out, edb, a.force)?;
    save_client(&client, &kp)?;
    let e = store.edb();
    println!("objects {}", e.object_count());
    println!("rejected {}", ingest.rejects.len());
    println!("records {}", e.record_count());
    println!("filter entries {}", e.filter().entries());
    println!("bytes {}", fs::metadata(&a.out)?.len());
    Ok(())
}

fn to_cells(raw: (f64, f64, f64), cells: bool, client: &Client) -> Result<SpaceTimePoint> {
    let grid = &client.config.grid;
    if cells {
        let c = |v: f64| if v >= 0.0 && v.fract() == 0.0 { Ok(v as u64) } else { bail!("cell index {v} is not a whole number") };
        let p = SpaceTimePoint::new(c(raw.0)?, c(raw.1)?, c(raw.2)?);
        grid.check(&p)?;
        Ok(p)
    } else {
        Ok(geocode::quantize(raw, grid, &client.config.origin)?)
    }
}

fn cmd_search(a: &SearchArgs) -> Result<()> {
    let (mut store, client, _) = open_pair(&a.edb, a.keys.as_ref())?;
    let b = a.bbox;
    let grid = client.config.grid;
    let range = if a.cells {
        let lo = SpaceTimePoint::new(b[0] as u64, b[1] as u64, b[2] as u64);
        let hi = SpaceTimePoint::new(b[3] as u64, b[4] as u64, b[5] as u64);
        if b.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            bail!("cell coordinates must be whole non-negative numbers");
        }
        SpaceTimeRange::new(lo, hi)?.clip(&grid)
    } else {
        geocode::quantize_range((b[0], b[1], b[2]), (b[3], b[4], b[5]), &grid, &client.config.origin)?
    };
    let Some(range) = range else {
        return Ok(());
    };
    let mut rng = make_rng(a.seed);
    let query = Query::from(range);
    let cand = scheme::search(&client, query.clone(), &mut store, &mut rng)?;
    let ids = match client.config.variant {
        Variant::One => cand.into_iter().map(|c| c.ind).collect(),
        Variant::Two => scheme::verify(&client, query, &cand)?,
    };
    for id in ids {
        println!("{}", String::from_utf8_lossy(&id));
    }
    maybe_compact(&mut store)
}

fn cmd_add(a: &UpdateArgs) -> Result<()> {
    let (mut store, mut client, kp) = open_pair(&a.edb, a.keys.as_ref())?;
    let obj = SpaceTimeObject::new(to_cells(a.point, a.cells, &client)?, a.ind.as_bytes());
    let mut rng = make_rng(a.seed);
    scheme::add(&mut client, &obj, &mut store, &mut rng)?;
    save_client(&client, &kp)?;
    maybe_compact(&mut store)
}

fn cmd_delete(a: &UpdateArgs) -> Result<()> {
    let (mut store, mut client, kp) = open_pair(&a.edb, a.keys.as_ref())?;
    let obj = SpaceTimeObject::new(to_cells(a.point, a.cells, &client)?, a.ind.as_bytes());
    if !scheme::delete(&mut client, &obj, &mut store)? {
        eprintln!("warning: no object {:?} at that point; nothing deleted", a.ind);
        return Ok(());
    }
    save_client(&client, &kp)?;
    maybe_compact(&mut store)
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let opts = BenchOptions {
        phases: a.phases.clone().unwrap_or_else(|| Phase::ALL.to_vec()),
        repeat: a.repeat,
        seed: a.seed,
        query_side: a.query_side,
        fpr_probes: a.fpr_probes,
    };
    let report = match (&a.edb, a.synthetic) {
        (Some(path), _) => {
            if opts.phases.contains(&Phase::Setup) && a.phases.is_some() {
                bail!("the setup phase needs --synthetic data");
            }
            let (store, mut client, _) = open_pair(path, a.keys.as_ref())?;
            let mut edb = store.into_edb();
            let grid = client.config.grid;
            let stored: HashSet<u64> = client
                .state
                .placements
                .values()
                .flatten()
                .map(|p| geocode::hilbert_encode(&p.point, &grid))
                .collect();
            let opts = BenchOptions { phases: opts.phases.into_iter().filter(|p| *p != Phase::Setup).collect(), ..opts };
            let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
            bench::run_on(&mut client, &mut edb, &stored, &opts, &mut rng)?
        }
        (None, Some(n)) => {
            let grid = a.grid.grid()?;
            let db = bench::synthetic_objects(n, &grid, a.seed);
            bench::run(&db, a.scheme.config(grid), &opts)?
        }
        (None, None) => bail!("bench needs --edb or --synthetic"),
    };
    if a.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.table());
    }
    Ok(())
}

fn cmd_info(a: &InfoArgs) -> Result<()> {
    let store = EdbStore::open(&a.edb).with_context(|| format!("opening {}", a.edb.display()))?;
    let e = store.edb();
    let c = e.config();
    println!("scheme {}", if c.variant == Variant::One { 1 } else { 2 });
    println!("grid order {} dims {} cell {} m / {} s", c.grid.order_h, c.grid.dims_d, c.grid.spatial_cell_size, c.grid.temporal_cell_size);
    println!("origin {},{},{}", c.origin.x, c.origin.y, c.origin.t);
    println!("hashes {} fingerprint bits {}", c.hashes, c.fingerprint_bits);
    println!("objects {}", e.object_count());
    println!("records {}", e.record_count());
    println!("filter entries {} slots 2^{}", e.filter().entries(), e.quotient_bits());
    println!("cache entries {}", e.cache().len());
    println!("counter {}", e.counter());
    println!("generation {} journal records {}", store.generation(), store.journaled());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Setup(a) => cmd_setup(a),
        Cmd::Search(a) => cmd_search(a),
        Cmd::Add(a) => cmd_add(a),
        Cmd::Delete(a) => cmd_delete(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Info(a) => cmd_info(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
