//! Grid quantization and the d-dimensional Hilbert curve.
//!
//! Points live on a `2^h` grid per axis. The curve maps a cell to a `d*h`
//! bit distance. Aligned blocks of `2^(d*k)` consecutive distances always
//! map to an aligned sub-cube, which is what [`range_to_intervals`] relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Edge length of a spatial cell, in meters.
    pub spatial_cell_size: f64,
    /// Length of a temporal cell, in seconds.
    pub temporal_cell_size: f64,
    pub order_h: u32,
    pub dims_d: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            spatial_cell_size: 10.0,
            temporal_cell_size: 300.0,
            order_h: 16,
            dims_d: 3,
        }
    }
}

impl GridConfig {
    pub fn new(order_h: u32, dims_d: u32) -> Result<Self> {
        let cfg = GridConfig {
            order_h,
            dims_d,
            ..GridConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order_h < 1 {
            return Err(Error::InvalidConfig("order_h must be at least 1".into()));
        }
        if self.dims_d != 2 && self.dims_d != 3 {
            return Err(Error::InvalidConfig(format!(
                "dims_d must be 2 or 3, got {}",
                self.dims_d
            )));
        }
        if self.width() > 62 {
            return Err(Error::InvalidConfig(format!(
                "d*h = {} exceeds 62 bits",
                self.width()
            )));
        }
        if !(self.spatial_cell_size > 0.0) || !(self.temporal_cell_size > 0.0) {
            return Err(Error::InvalidConfig("cell sizes must be positive".into()));
        }
        Ok(())
    }

    /// Bit width `d*h` of a Hilbert value.
    pub fn width(&self) -> u32 {
        self.dims_d * self.order_h
    }

    /// Cells per axis.
    pub fn side(&self) -> u64 {
        1u64 << self.order_h
    }

    pub fn max_value(&self) -> u64 {
        (1u64 << self.width()) - 1
    }

    pub fn contains(&self, p: &SpaceTimePoint) -> bool {
        self.check(p).is_ok()
    }

    /// `OutOfGrid` naming the first axis that does not fit.
    pub fn check(&self, p: &SpaceTimePoint) -> Result<()> {
        let max = self.side() - 1;
        let t_max = if self.dims_d == 2 { 0 } else { max };
        for (axis, v, m) in [('x', p.x, max), ('y', p.y, max), ('t', p.t, t_max)] {
            if v > m {
                return Err(Error::OutOfGrid { axis, index: v as i128, max: m });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: u64,
    pub y: u64,
    pub t: u64,
}

impl SpaceTimePoint {
    pub fn new(x: u64, y: u64, t: u64) -> Self {
        SpaceTimePoint { x, y, t }
    }
}

pub type HilbertValue = u64;

/// Inclusive axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceTimeRange {
    pub lo: SpaceTimePoint,
    pub hi: SpaceTimePoint,
}

impl SpaceTimeRange {
    pub fn new(lo: SpaceTimePoint, hi: SpaceTimePoint) -> Result<Self> {
        if lo.x > hi.x || lo.y > hi.y || lo.t > hi.t {
            return Err(Error::InvalidConfig(format!(
                "range lower corner {lo:?} exceeds upper corner {hi:?}"
            )));
        }
        Ok(SpaceTimeRange { lo, hi })
    }

    pub fn point(p: SpaceTimePoint) -> Self {
        SpaceTimeRange { lo: p, hi: p }
    }

    pub fn contains(&self, p: &SpaceTimePoint) -> bool {
        (self.lo.x..=self.hi.x).contains(&p.x)
            && (self.lo.y..=self.hi.y).contains(&p.y)
            && (self.lo.t..=self.hi.t).contains(&p.t)
    }

    /// Clips the box to the grid; `None` when nothing is left.
    pub fn clip(&self, cfg: &GridConfig) -> Option<SpaceTimeRange> {
        let top = cfg.side() - 1;
        let t_top = if cfg.dims_d == 2 { 0 } else { top };
        if self.lo.x > top || self.lo.y > top || self.lo.t > t_top {
            return None;
        }
        Some(SpaceTimeRange {
            lo: self.lo,
            hi: SpaceTimePoint {
                x: self.hi.x.min(top),
                y: self.hi.y.min(top),
                t: self.hi.t.min(t_top),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CoordUnits {
    #[default]
    Meters,
    /// Longitude/latitude in degrees, projected with an equirectangular
    /// approximation around the origin's latitude.
    Degrees,
}

/// Raw-space anchor of grid cell (0, 0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Origin {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub units: CoordUnits,
}

const METERS_PER_DEGREE: f64 = 111_320.0;

// Fractional cell coordinates of a raw sample; `t` is 0 on 2-d grids.
fn cell_coords(raw: (f64, f64, f64), cfg: &GridConfig, origin: &Origin) -> [f64; 3] {
    let (dx, dy) = match origin.units {
        CoordUnits::Meters => (raw.0 - origin.x, raw.1 - origin.y),
        CoordUnits::Degrees => {
            let scale = origin.y.to_radians().cos();
            (
                (raw.0 - origin.x) * METERS_PER_DEGREE * scale,
                (raw.1 - origin.y) * METERS_PER_DEGREE,
            )
        }
    };
    let dt = if cfg.dims_d == 2 { 0.0 } else { (raw.2 - origin.t) / cfg.temporal_cell_size };
    [
        (dx / cfg.spatial_cell_size).floor(),
        (dy / cfg.spatial_cell_size).floor(),
        dt.floor(),
    ]
}

/// Maps a raw `(x, y, time)` sample to its grid cell by floor division of
/// the offset from `origin`.
pub fn quantize(raw: (f64, f64, f64), cfg: &GridConfig, origin: &Origin) -> Result<SpaceTimePoint> {
    let max = cfg.side() - 1;
    let mut out = [0u64; 3];
    for ((axis, idx), o) in ['x', 'y', 't'].into_iter().zip(cell_coords(raw, cfg, origin)).zip(&mut out) {
        if !idx.is_finite() || idx < 0.0 || idx > max as f64 {
            return Err(Error::OutOfGrid {
                axis,
                index: if idx.is_finite() { idx as i128 } else { i128::MAX },
                max,
            });
        }
        *o = idx as u64;
    }
    Ok(SpaceTimePoint { x: out[0], y: out[1], t: out[2] })
}

/// Cells of the raw box `[lo, hi]`, clipped to the grid; `None` when the
/// box misses the grid entirely.
pub fn quantize_range(
    lo: (f64, f64, f64),
    hi: (f64, f64, f64),
    cfg: &GridConfig,
    origin: &Origin,
) -> Result<Option<SpaceTimeRange>> {
    let a = cell_coords(lo, cfg, origin);
    let b = cell_coords(hi, cfg, origin);
    if a.iter().chain(&b).any(|v| v.is_nan()) {
        return Err(Error::InvalidConfig("box corners must be numbers".into()));
    }
    let max = (cfg.side() - 1) as f64;
    let t_max = if cfg.dims_d == 2 { 0.0 } else { max };
    let mut lo_c = [0u64; 3];
    let mut hi_c = [0u64; 3];
    for i in 0..3 {
        let top = if i == 2 { t_max } else { max };
        if a[i] > b[i] {
            return Err(Error::InvalidConfig("box lower corner exceeds upper corner".into()));
        }
        if b[i] < 0.0 || a[i] > top {
            return Ok(None);
        }
        lo_c[i] = a[i].max(0.0) as u64;
        hi_c[i] = b[i].min(top) as u64;
    }
    let p = |c: [u64; 3]| SpaceTimePoint { x: c[0], y: c[1], t: c[2] };
    Ok(Some(SpaceTimeRange::new(p(lo_c), p(hi_c))?))
}

fn axes(p: &SpaceTimePoint, d: usize) -> [u32; 3] {
    let mut a = [p.x as u32, p.y as u32, p.t as u32];
    if d == 2 {
        a[2] = 0;
    }
    a
}

// Skilling's transform between axis coordinates and the "transposed"
// Hilbert index, in which bit j of axis i is bit (j*d + d-1-i) of the index.
fn axes_to_transpose(x: &mut [u32], bits: u32) {
    let n = x.len();
    let m = 1u32 << (bits - 1);
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in x.iter_mut() {
        *v ^= t;
    }
}

fn transpose_to_axes(x: &mut [u32], bits: u32) {
    let n = x.len();
    let top = 2u64 << (bits - 1);
    let t = x[n - 1] >> 1;
    for i in (1..n).rev() {
        x[i] ^= x[i - 1];
    }
    x[0] ^= t;
    let mut q = 2u64;
    while q != top {
        let p = (q - 1) as u32;
        let qb = q as u32;
        for i in (0..n).rev() {
            if x[i] & qb != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q <<= 1;
    }
}

fn interleave(x: &[u32], bits: u32) -> u64 {
    let mut v = 0u64;
    for j in (0..bits).rev() {
        for xi in x {
            v = (v << 1) | ((xi >> j) & 1) as u64;
        }
    }
    v
}

fn deinterleave(v: u64, bits: u32, x: &mut [u32]) {
    let n = x.len() as u32;
    x.iter_mut().for_each(|xi| *xi = 0);
    for j in 0..bits {
        for (i, xi) in x.iter_mut().enumerate() {
            let shift = j * n + (n - 1 - i as u32);
            *xi |= (((v >> shift) & 1) as u32) << j;
        }
    }
}

pub fn hilbert_encode(p: &SpaceTimePoint, cfg: &GridConfig) -> HilbertValue {
    debug_assert!(cfg.contains(p), "{p:?} outside grid");
    let d = cfg.dims_d as usize;
    let mut a = axes(p, d);
    axes_to_transpose(&mut a[..d], cfg.order_h);
    interleave(&a[..d], cfg.order_h)
}

pub fn hilbert_decode(v: HilbertValue, cfg: &GridConfig) -> SpaceTimePoint {
    debug_assert!(v <= cfg.max_value());
    let d = cfg.dims_d as usize;
    let mut a = [0u32; 3];
    deinterleave(v, cfg.order_h, &mut a[..d]);
    transpose_to_axes(&mut a[..d], cfg.order_h);
    SpaceTimePoint {
        x: a[0] as u64,
        y: a[1] as u64,
        t: if d == 3 { a[2] as u64 } else { 0 },
    }
}

/// Decomposes a box into sorted, disjoint, maximal inclusive intervals of
/// Hilbert values whose union is exactly the set of values inside the box.
pub fn range_to_intervals(r: &SpaceTimeRange, cfg: &GridConfig) -> Vec<(HilbertValue, HilbertValue)> {
    let Some(r) = r.clip(cfg) else {
        return Vec::new();
    };
    let mut out: Vec<(u64, u64)> = Vec::new();
    descend(&r, cfg, 0, 0, &mut out);
    out
}

fn descend(r: &SpaceTimeRange, cfg: &GridConfig, level: u32, prefix: u64, out: &mut Vec<(u64, u64)>) {
    let d = cfg.dims_d;
    let rest = cfg.order_h - level;
    let first = prefix << (d * rest);
    let corner = hilbert_decode(first, cfg);
    let span = (1u64 << rest) - 1;
    let lo = [corner.x >> rest << rest, corner.y >> rest << rest, corner.t >> rest << rest];
    let hi = [lo[0] + span, lo[1] + span, if d == 3 { lo[2] + span } else { 0 }];
    let rlo = [r.lo.x, r.lo.y, r.lo.t];
    let rhi = [r.hi.x, r.hi.y, r.hi.t];
    let axes = d as usize;
    if (0..axes).any(|i| hi[i] < rlo[i] || lo[i] > rhi[i]) {
        return;
    }
    if (0..axes).all(|i| rlo[i] <= lo[i] && hi[i] <= rhi[i]) {
        let last = first + ((1u64 << (d * rest)) - 1);
        match out.last_mut() {
            Some(prev) if prev.1 + 1 == first => prev.1 = last,
            _ => out.push((first, last)),
        }
        return;
    }
    for child in 0..(1u64 << d) {
        descend(r, cfg, level + 1, (prefix << d) | child, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_floors_offsets() {
        let cfg = GridConfig::default();
        let origin = Origin::default();
        assert_eq!(quantize((0.0, 0.0, 0.0), &cfg, &origin).unwrap(), SpaceTimePoint::new(0, 0, 0));
        assert_eq!(
            quantize((25.0, 9.0, 600.0), &cfg, &origin).unwrap(),
            SpaceTimePoint::new(2, 0, 2)
        );
    }

    #[test]
    fn quantize_rejects_points_beyond_the_grid() {
        let cfg = GridConfig::new(4, 3).unwrap();
        let origin = Origin::default();
        assert!(matches!(
            quantize((160.0, 0.0, 0.0), &cfg, &origin),
            Err(Error::OutOfGrid { axis: 'x', .. })
        ));
        assert!(matches!(
            quantize((0.0, -1.0, 0.0), &cfg, &origin),
            Err(Error::OutOfGrid { axis: 'y', .. })
        ));
        assert!(quantize((159.9, 0.0, 0.0), &cfg, &origin).is_ok());
    }

    #[test]
    fn config_limits() {
        assert!(GridConfig::new(0, 3).is_err());
        assert!(GridConfig::new(21, 3).is_err());
        assert!(GridConfig::new(31, 2).is_ok());
        assert!(GridConfig::new(4, 4).is_err());
    }

    #[test]
    fn points_differing_in_time_get_distinct_values() {
        let cfg = GridConfig::new(4, 3).unwrap();
        let a = hilbert_encode(&SpaceTimePoint::new(3, 5, 0), &cfg);
        let b = hilbert_encode(&SpaceTimePoint::new(3, 5, 1), &cfg);
        assert_ne!(a, b);
    }

    #[test]
    fn full_grid_is_one_interval() {
        let cfg = GridConfig::new(3, 3).unwrap();
        let r = SpaceTimeRange::new(SpaceTimePoint::new(0, 0, 0), SpaceTimePoint::new(7, 7, 7)).unwrap();
        assert_eq!(range_to_intervals(&r, &cfg), vec![(0, 511)]);
    }

    #[test]
    fn single_cell_is_one_point_interval() {
        let cfg = GridConfig::new(3, 3).unwrap();
        let p = SpaceTimePoint::new(5, 1, 6);
        let v = hilbert_encode(&p, &cfg);
        assert_eq!(range_to_intervals(&SpaceTimeRange::point(p), &cfg), vec![(v, v)]);
    }

    #[test]
    fn box_outside_grid_is_empty() {
        let cfg = GridConfig::new(2, 2).unwrap();
        let r = SpaceTimeRange::new(SpaceTimePoint::new(4, 0, 0), SpaceTimePoint::new(9, 9, 0)).unwrap();
        assert!(range_to_intervals(&r, &cfg).is_empty());
    }
}
