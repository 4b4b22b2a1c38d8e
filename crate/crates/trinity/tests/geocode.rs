use std::collections::BTreeSet;

use proptest::prelude::*;
use trinity::geocode::*;

fn all_cells(cfg: &GridConfig) -> Vec<SpaceTimePoint> {
    let s = cfg.side();
    let ts = if cfg.dims_d == 3 { s } else { 1 };
    let mut v = Vec::new();
    for x in 0..s {
        for y in 0..s {
            for t in 0..ts {
                v.push(SpaceTimePoint::new(x, y, t));
            }
        }
    }
    v
}

fn l1(a: &SpaceTimePoint, b: &SpaceTimePoint) -> u64 {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y) + a.t.abs_diff(b.t)
}

#[test]
fn order_one_square_is_a_bijective_adjacent_walk() {
    let cfg = GridConfig::new(1, 2).unwrap();
    let mut seen = BTreeSet::new();
    for p in all_cells(&cfg) {
        seen.insert(hilbert_encode(&p, &cfg));
    }
    assert_eq!(seen, (0..4).collect());
    for v in 0..3 {
        assert_eq!(l1(&hilbert_decode(v, &cfg), &hilbert_decode(v + 1, &cfg)), 1);
    }
}

#[test]
fn exhaustive_round_trip_and_adjacency_small_grids() {
    for (h, d) in [(1, 2), (2, 2), (3, 2), (5, 2), (7, 2), (1, 3), (2, 3), (3, 3), (4, 3), (5, 3)] {
        let cfg = GridConfig::new(h, d).unwrap();
        let mut seen = vec![false; 1 << cfg.width()];
        for p in all_cells(&cfg) {
            let v = hilbert_encode(&p, &cfg);
            assert!(!seen[v as usize], "value {v} hit twice at h={h} d={d}");
            seen[v as usize] = true;
            assert_eq!(hilbert_decode(v, &cfg), p);
        }
        for v in 0..cfg.max_value() {
            let a = hilbert_decode(v, &cfg);
            let b = hilbert_decode(v + 1, &cfg);
            assert_eq!(l1(&a, &b), 1, "h={h} d={d} v={v}");
        }
    }
}

fn brute_force(r: &SpaceTimeRange, cfg: &GridConfig) -> BTreeSet<u64> {
    let mut s = BTreeSet::new();
    for x in r.lo.x..=r.hi.x {
        for y in r.lo.y..=r.hi.y {
            for t in r.lo.t..=r.hi.t {
                s.insert(hilbert_encode(&SpaceTimePoint::new(x, y, t), cfg));
            }
        }
    }
    s
}

fn check_intervals(r: &SpaceTimeRange, cfg: &GridConfig) {
    let iv = range_to_intervals(r, cfg);
    let mut got = BTreeSet::new();
    for w in iv.windows(2) {
        assert!(w[0].1 + 1 < w[1].0, "intervals {w:?} not sorted, disjoint and maximal");
    }
    for &(a, b) in &iv {
        assert!(a <= b);
        got.extend(a..=b);
    }
    assert_eq!(got, brute_force(r, cfg), "range {r:?}");
}

#[test]
fn decomposition_matches_enumeration_for_every_box_2d() {
    for h in 1..=3 {
        let cfg = GridConfig::new(h, 2).unwrap();
        let s = cfg.side();
        for x0 in 0..s {
            for x1 in x0..s {
                for y0 in 0..s {
                    for y1 in y0..s {
                        let r = SpaceTimeRange::new(
                            SpaceTimePoint::new(x0, y0, 0),
                            SpaceTimePoint::new(x1, y1, 0),
                        )
                        .unwrap();
                        check_intervals(&r, &cfg);
                    }
                }
            }
        }
    }
}

#[test]
fn decomposition_matches_enumeration_for_every_box_3d() {
    for h in 1..=3 {
        let cfg = GridConfig::new(h, 3).unwrap();
        let s = cfg.side();
        let spans: Vec<(u64, u64)> = (0..s).flat_map(|a| (a..s).map(move |b| (a, b))).collect();
        for &(x0, x1) in &spans {
            for &(y0, y1) in &spans {
                for &(t0, t1) in &spans {
                    let r = SpaceTimeRange::new(
                        SpaceTimePoint::new(x0, y0, t0),
                        SpaceTimePoint::new(x1, y1, t1),
                    )
                    .unwrap();
                    check_intervals(&r, &cfg);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn round_trip_at_default_order(x in 0u64..1 << 16, y in 0u64..1 << 16, t in 0u64..1 << 16) {
        let cfg = GridConfig::default();
        let p = SpaceTimePoint::new(x, y, t);
        let v = hilbert_encode(&p, &cfg);
        prop_assert!(v <= cfg.max_value());
        prop_assert_eq!(hilbert_decode(v, &cfg), p);
    }

    #[test]
    fn consecutive_values_are_neighbours(v in 0u64..(1u64 << 48) - 1) {
        let cfg = GridConfig::default();
        prop_assert_eq!(l1(&hilbert_decode(v, &cfg), &hilbert_decode(v + 1, &cfg)), 1);
    }

    #[test]
    fn random_boxes_at_order_five(
        x0 in 0u64..32, y0 in 0u64..32, t0 in 0u64..32,
        dx in 0u64..12, dy in 0u64..12, dt in 0u64..12,
    ) {
        let cfg = GridConfig::new(5, 3).unwrap();
        let r = SpaceTimeRange::new(
            SpaceTimePoint::new(x0, y0, t0),
            SpaceTimePoint::new((x0 + dx).min(31), (y0 + dy).min(31), (t0 + dt).min(31)),
        ).unwrap();
        check_intervals(&r, &cfg);
    }
}
