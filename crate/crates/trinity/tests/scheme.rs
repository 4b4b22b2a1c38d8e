use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use trinity::geocode::{hilbert_decode, GridConfig, SpaceTimePoint, SpaceTimeRange};
use trinity::prefixcover::prefix_family;
use trinity::scheme::wire::*;
use trinity::scheme::{self, *};
use trinity::Error;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn obj_at(h: u64, grid: &GridConfig, name: &str) -> SpaceTimeObject {
    SpaceTimeObject::new(hilbert_decode(h, grid), name)
}

fn names(v: &[&str]) -> BTreeSet<Vec<u8>> {
    v.iter().map(|s| s.as_bytes().to_vec()).collect()
}

fn random_objects(n: usize, grid: &GridConfig, r: &mut ChaCha20Rng) -> Vec<SpaceTimeObject> {
    let side = grid.side();
    (0..n)
        .map(|i| {
            let t = if grid.dims_d == 3 { r.gen_range(0..side) } else { 0 };
            let p = SpaceTimePoint::new(r.gen_range(0..side), r.gen_range(0..side), t);
            SpaceTimeObject::new(p, format!("obj-{i}"))
        })
        .collect()
}

fn random_box(grid: &GridConfig, max_side: u64, r: &mut ChaCha20Rng) -> SpaceTimeRange {
    let side = grid.side();
    let mut axis = || {
        let len = r.gen_range(1..=max_side.min(side));
        let lo = r.gen_range(0..=side - len);
        (lo, lo + len - 1)
    };
    let (x, y) = (axis(), axis());
    let t = if grid.dims_d == 3 { axis() } else { (0, 0) };
    SpaceTimeRange::new(SpaceTimePoint::new(x.0, y.0, t.0), SpaceTimePoint::new(x.1, y.1, t.1)).unwrap()
}

fn oracle(db: &[SpaceTimeObject], q: &Query, grid: &GridConfig) -> BTreeSet<Vec<u8>> {
    db.iter().filter(|o| q.matches(&o.point, grid)).map(|o| o.ind.clone()).collect()
}

fn four_objects() -> (GridConfig, Vec<SpaceTimeObject>) {
    let grid = GridConfig::new(2, 2).unwrap();
    let db = vec![
        obj_at(5, &grid, "O1"),
        obj_at(1, &grid, "O2"),
        obj_at(10, &grid, "O3"),
        obj_at(14, &grid, "O4"),
    ];
    (grid, db)
}

#[test]
fn hilbert_interval_examples_trinity1() {
    let (grid, db) = four_objects();
    let mut r = rng(1);
    let (client, edb) = t1_setup(&db, SchemeConfig::trinity1(grid), &mut r).unwrap();
    let r1 = t1_search(&client, Query::Intervals(vec![(4, 7)]), &edb, &mut r).unwrap();
    assert_eq!(r1, names(&["O1"]));
    let r2 = t1_search(&client, Query::Intervals(vec![(10, 15)]), &edb, &mut r).unwrap();
    assert_eq!(r2, names(&["O3", "O4"]));
}

#[test]
fn hilbert_interval_examples_trinity2() {
    let (grid, db) = four_objects();
    let mut r = rng(2);
    let (client, mut edb, _) = t2_setup(&db, SchemeConfig::trinity2(grid), &mut r).unwrap();
    for (q, want) in [((4, 7), names(&["O1"])), ((10, 15), names(&["O3", "O4"]))] {
        let q = Query::Intervals(vec![q]);
        let c = t2_search(&client, q.clone(), &mut edb, &mut r).unwrap();
        assert_eq!(scheme::verify(&client, q, &c).unwrap(), want);
    }
}

#[test]
fn empty_database_returns_nothing() {
    let grid = GridConfig::new(3, 3).unwrap();
    let mut r = rng(3);
    let (c1, e1) = t1_setup(&[], SchemeConfig::trinity1(grid), &mut r).unwrap();
    let all = SpaceTimeRange::new(SpaceTimePoint::new(0, 0, 0), SpaceTimePoint::new(7, 7, 7)).unwrap();
    assert!(t1_search(&c1, all, &e1, &mut r).unwrap().is_empty());
    let (c2, mut e2, _) = t2_setup(&[], SchemeConfig::trinity2(grid), &mut r).unwrap();
    assert!(t2_search(&c2, all, &mut e2, &mut r).unwrap().is_empty());
}

#[test]
fn degenerate_interval_query_is_empty() {
    let (grid, db) = four_objects();
    let mut r = rng(4);
    let (client, edb) = t1_setup(&db, SchemeConfig::trinity1(grid), &mut r).unwrap();
    assert!(t1_search(&client, Query::Intervals(vec![]), &edb, &mut r).unwrap().is_empty());
    assert!(matches!(
        t1_search(&client, Query::Intervals(vec![(3, 99)]), &edb, &mut r),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn random_boxes_match_plaintext_oracle() {
    let grid = GridConfig::new(4, 3).unwrap();
    let mut r = rng(5);
    let db = random_objects(1000, &grid, &mut r);
    let (c1, e1) = t1_setup(&db, SchemeConfig::trinity1(grid), &mut r).unwrap();
    let (c2, mut e2, _) = t2_setup(&db, SchemeConfig::trinity2(grid), &mut r).unwrap();
    e1.check_invariants().unwrap();
    e2.check_invariants().unwrap();
    for _ in 0..40 {
        let q: Query = random_box(&grid, 8, &mut r).into();
        let want = oracle(&db, &q, &grid);
        let got1 = t1_search(&c1, q.clone(), &e1, &mut r).unwrap();
        assert!(got1.is_superset(&want));
        let cand = t2_search(&c2, q.clone(), &mut e2, &mut r).unwrap();
        let raw: BTreeSet<Vec<u8>> = cand.iter().map(|c| c.ind.clone()).collect();
        assert!(raw.is_superset(&want));
        assert_eq!(scheme::verify(&c2, q, &cand).unwrap(), want);
    }
}

#[test]
fn additions_expand_a_small_filter() {
    let grid = GridConfig::new(4, 3).unwrap();
    let mut r = rng(6);
    let db = random_objects(21, &grid, &mut r);
    let cfg = SchemeConfig { initial_quotient_bits: 5, ..SchemeConfig::trinity1(grid) };
    let (mut client, mut edb) = t1_setup(&[], cfg, &mut r).unwrap();
    for o in &db {
        t1_add(&mut client, o, &mut edb, &mut r).unwrap();
        edb.check_invariants().unwrap();
    }
    assert!(edb.quotient_bits() > 5);
    assert!(edb.filter().load() <= cfg.load_threshold);
    for o in &db {
        let got = t1_search(&client, SpaceTimeRange::point(o.point), &edb, &mut r).unwrap();
        assert!(got.contains(&o.ind));
    }
}

#[test]
fn duplicate_copies_are_deleted_one_at_a_time() {
    let grid = GridConfig::new(3, 3).unwrap();
    let mut r = rng(7);
    let o = SpaceTimeObject::new(SpaceTimePoint::new(1, 2, 3), "dup");
    let q = SpaceTimeRange::point(o.point);
    let (mut client, mut edb) = t1_setup(&[], SchemeConfig::trinity1(grid), &mut r).unwrap();
    t1_add(&mut client, &o, &mut edb, &mut r).unwrap();
    t1_add(&mut client, &o, &mut edb, &mut r).unwrap();
    let records = edb.record_count();
    assert!(t1_delete(&mut client, &o, &mut edb).unwrap());
    assert_eq!(edb.record_count(), records);
    assert_eq!(t1_search(&client, q, &edb, &mut r).unwrap(), names(&["dup"]));
    assert!(t1_delete(&mut client, &o, &mut edb).unwrap());
    assert!(t1_search(&client, q, &edb, &mut r).unwrap().is_empty());
    assert_eq!(edb.record_count(), 0);
    assert!(edb.filter().is_empty());
    assert!(!t1_delete(&mut client, &o, &mut edb).unwrap());
    edb.check_invariants().unwrap();
}

#[test]
fn colocated_objects_share_records() {
    let grid = GridConfig::new(3, 3).unwrap();
    let mut r = rng(8);
    let p = SpaceTimePoint::new(4, 4, 4);
    let a = SpaceTimeObject::new(p, "a");
    let b = SpaceTimeObject::new(p, "b");
    let (mut client, mut edb) = t1_setup(&[a.clone(), b.clone()], SchemeConfig::trinity1(grid), &mut r).unwrap();
    assert_eq!(edb.record_count(), grid.width() as usize + 1);
    assert!(t1_delete(&mut client, &a, &mut edb).unwrap());
    let q = SpaceTimeRange::point(p);
    assert_eq!(t1_search(&client, q, &edb, &mut r).unwrap(), names(&["b"]));
    edb.check_invariants().unwrap();
}

#[test]
fn deleting_an_absent_object_is_a_no_op() {
    let (grid, db) = four_objects();
    let mut r = rng(9);
    let (mut client, mut edb) = t1_setup(&db, SchemeConfig::trinity1(grid), &mut r).unwrap();
    let before = edb.clone();
    let ghost = obj_at(3, &grid, "ghost");
    assert!(!t1_delete(&mut client, &ghost, &mut edb).unwrap());
    let moved = obj_at(3, &grid, "O1");
    assert!(!t1_delete(&mut client, &moved, &mut edb).unwrap());
    assert_eq!(edb, before);
    let unknown = DeleteMessage { handle: 999, elements: vec![], cached: vec![] };
    let reply = DeleteReceipt::from_bytes(&edb.dispatch(&unknown.to_bytes()).unwrap()).unwrap();
    assert!(!reply.removed);
}

#[test]
fn trinity2_additions_wait_in_the_cache() {
    let grid = GridConfig::new(3, 3).unwrap();
    let mut r = rng(10);
    let db = random_objects(30, &grid, &mut r);
    let (mut client, mut edb, ot1) = t2_setup(&db, SchemeConfig::trinity2(grid), &mut r).unwrap();
    assert_eq!(ot1, trinity::ordertoken::ot_eval(&client.keys.order_key, 1));
    assert_eq!(edb.counter(), 0);
    let records = edb.record_count();
    let extra = SpaceTimeObject::new(SpaceTimePoint::new(7, 0, 7), "late");
    t2_add(&mut client, &extra, &mut edb, &mut r).unwrap();
    assert_eq!(client.counter(), 1);
    assert_eq!(edb.counter(), 1);
    assert_eq!(edb.cache().len(), grid.width() as usize + 1);
    assert_eq!(edb.record_count(), records);
    edb.check_invariants().unwrap();

    let q = SpaceTimeRange::point(extra.point);
    let cand = t2_search(&client, q, &mut edb, &mut r).unwrap();
    assert!(scheme::verify(&client, q, &cand).unwrap().contains(&extra.ind));
    assert!(edb.cache().is_empty());
    edb.check_invariants().unwrap();
    let cand = t2_search(&client, q, &mut edb, &mut r).unwrap();
    assert!(scheme::verify(&client, q, &cand).unwrap().contains(&extra.ind));
}

#[test]
fn salted_images_differ_across_counters() {
    let grid = GridConfig::new(3, 3).unwrap();
    let mut r = rng(11);
    let (mut client, _edb, _) = t2_setup(&[], SchemeConfig::trinity2(grid), &mut r).unwrap();
    let o = SpaceTimeObject::new(SpaceTimePoint::new(2, 3, 4), "x");
    let plain = client.point_updates(&o.point).unwrap();
    let m1 = client.prepare_add(&o, false, &mut r).unwrap();
    let m2 = client.prepare_add(&o, false, &mut r).unwrap();
    assert_eq!((m1.counter, m2.counter), (1, 2));
    for i in 0..plain.len() {
        assert_ne!(m1.elements[i], plain[i]);
        assert_ne!(m1.elements[i].fingerprints, m2.elements[i].fingerprints);
        assert_ne!(m1.elements[i].aggregate, m2.elements[i].aggregate);
    }
}

#[test]
fn stale_capability_is_refused() {
    let grid = GridConfig::new(3, 3).unwrap();
    let mut r = rng(12);
    let (mut client, mut edb, _) = t2_setup(&[], SchemeConfig::trinity2(grid), &mut r).unwrap();
    let stale = client.clone();
    let o = SpaceTimeObject::new(SpaceTimePoint::new(0, 0, 0), "x");
    t2_add(&mut client, &o, &mut edb, &mut r).unwrap();
    let q = SpaceTimeRange::point(o.point);
    assert!(matches!(
        t2_search(&stale, q, &mut edb, &mut r),
        Err(Error::StaleCapability { token: 0, server: 1 })
    ));
    assert_eq!(edb.cache().len(), grid.width() as usize + 1);
}

#[test]
fn deleting_a_cached_addition_empties_its_cache_entries() {
    let grid = GridConfig::new(3, 3).unwrap();
    let mut r = rng(13);
    let db = random_objects(10, &grid, &mut r);
    let (mut client, mut edb, _) = t2_setup(&db, SchemeConfig::trinity2(grid), &mut r).unwrap();
    let a = SpaceTimeObject::new(SpaceTimePoint::new(5, 5, 5), "a");
    let b = SpaceTimeObject::new(SpaceTimePoint::new(6, 5, 5), "b");
    t2_add(&mut client, &a, &mut edb, &mut r).unwrap();
    t2_add(&mut client, &b, &mut edb, &mut r).unwrap();
    assert!(t2_delete(&mut client, &a, &mut edb).unwrap());
    assert_eq!(edb.cache().len(), grid.width() as usize + 1);
    edb.check_invariants().unwrap();
    let q = SpaceTimeRange::new(SpaceTimePoint::new(5, 5, 5), SpaceTimePoint::new(6, 5, 5)).unwrap();
    let cand = t2_search(&client, q, &mut edb, &mut r).unwrap();
    let want = oracle(&db, &q.into(), &grid).into_iter().chain([b.ind.clone()]).collect::<BTreeSet<_>>();
    assert_eq!(scheme::verify(&client, q, &cand).unwrap(), want);
    assert!(t2_delete(&mut client, &b, &mut edb).unwrap());
    let cand = t2_search(&client, q, &mut edb, &mut r).unwrap();
    assert!(!scheme::verify(&client, q, &cand).unwrap().contains(&b.ind));
    edb.check_invariants().unwrap();
}

#[test]
fn verification_removes_planted_false_positives() {
    // Eight-bit fingerprints collide often, so the filter stage lets
    // absent cells through and only the verify tokens tell them apart.
    let grid = GridConfig::new(4, 2).unwrap();
    let cfg = SchemeConfig {
        hashes: 1,
        fingerprint_bits: 8,
        initial_quotient_bits: 4,
        load_threshold: 0.9,
        ..SchemeConfig::trinity2(grid)
    };
    let mut r = rng(14);
    let db = random_objects(6, &grid, &mut r);
    let (client, mut edb, _) = t2_setup(&db, cfg, &mut r).unwrap();
    let mut planted = 0;
    for h in 0..=grid.max_value() {
        let q = Query::Intervals(vec![(h, h)]);
        let want = oracle(&db, &q, &grid);
        let cand = t2_search(&client, q.clone(), &mut edb, &mut r).unwrap();
        let raw: BTreeSet<Vec<u8>> = cand.iter().map(|c| c.ind.clone()).collect();
        assert!(raw.is_superset(&want));
        if raw.len() > want.len() {
            planted += 1;
        }
        assert_eq!(scheme::verify(&client, q, &cand).unwrap(), want);
    }
    assert!(planted > 0, "no false positive arose");
}

#[test]
fn verify_tokens_record_the_prefix_family() {
    let grid = GridConfig::new(3, 3).unwrap();
    let mut r = rng(15);
    let (client, _, _) = t2_setup(&[], SchemeConfig::trinity2(grid), &mut r).unwrap();
    let p = SpaceTimePoint::new(3, 1, 6);
    let vt = client.verify_token(&p, b"id", &mut r).unwrap();
    let bm = client.open_verify_token(b"id", &vt).unwrap();
    assert_eq!(bm.len(), grid.width() as u64 + 1);
    let h = trinity::geocode::hilbert_encode(&p, &grid);
    let want: BTreeSet<u64> = prefix_family(h, grid.width()).elements.iter().map(|e| e.trie_index()).collect();
    assert_eq!(bm.iter().collect::<BTreeSet<_>>(), want);
    assert!(matches!(client.open_verify_token(b"other", &vt), Err(Error::TokenCorrupt)));
}

#[test]
fn tampered_or_missing_verify_tokens_are_rejected() {
    let (grid, db) = four_objects();
    let mut r = rng(16);
    let (client, mut edb, _) = t2_setup(&db, SchemeConfig::trinity2(grid), &mut r).unwrap();
    let q = Query::Intervals(vec![(0, 15)]);
    let mut cand = t2_search(&client, q.clone(), &mut edb, &mut r).unwrap();
    assert_eq!(cand.len(), 4);
    assert!(scheme::verify(&client, q.clone(), &[]).unwrap().is_empty());
    let mut bad = cand.clone();
    let vt = bad[0].verify.as_mut().unwrap();
    let last = vt.len() - 1;
    vt[last] ^= 1;
    assert!(matches!(scheme::verify(&client, q.clone(), &bad), Err(Error::TokenCorrupt)));
    cand[1].verify = None;
    assert!(matches!(scheme::verify(&client, q, &cand), Err(Error::TokenCorrupt)));
}

#[test]
fn both_variants_agree_after_updates() {
    let grid = GridConfig::new(4, 3).unwrap();
    let mut r = rng(17);
    let mut db = random_objects(200, &grid, &mut r);
    let (mut c1, mut e1) = t1_setup(&db[..100], SchemeConfig::trinity1(grid), &mut r).unwrap();
    let (mut c2, mut e2, _) = t2_setup(&db[..100], SchemeConfig::trinity2(grid), &mut r).unwrap();
    for o in &db[100..] {
        t1_add(&mut c1, o, &mut e1, &mut r).unwrap();
        t2_add(&mut c2, o, &mut e2, &mut r).unwrap();
    }
    for o in db.drain(50..80).collect::<Vec<_>>() {
        assert!(t1_delete(&mut c1, &o, &mut e1).unwrap());
        assert!(t2_delete(&mut c2, &o, &mut e2).unwrap());
    }
    e1.check_invariants().unwrap();
    e2.check_invariants().unwrap();
    for _ in 0..20 {
        let q: Query = random_box(&grid, 10, &mut r).into();
        let want = oracle(&db, &q, &grid);
        let got1 = t1_search(&c1, q.clone(), &e1, &mut r).unwrap();
        let cand = t2_search(&c2, q.clone(), &mut e2, &mut r).unwrap();
        let got2 = scheme::verify(&c2, q, &cand).unwrap();
        assert_eq!(got2, want);
        assert!(got1.is_superset(&got2));
    }
}

#[test]
fn variant_specific_entry_points_check_the_client() {
    let (grid, db) = four_objects();
    let mut r = rng(18);
    assert!(t1_setup(&db, SchemeConfig::trinity2(grid), &mut r).is_err());
    assert!(t2_setup(&db, SchemeConfig::trinity1(grid), &mut r).is_err());
    let (mut client, mut edb) = t1_setup(&db, SchemeConfig::trinity1(grid), &mut r).unwrap();
    assert!(t2_add(&mut client, &db[0], &mut edb, &mut r).is_err());
}

#[test]
fn requests_cut_for_another_filter_size_are_refused() {
    let (grid, db) = four_objects();
    let mut r = rng(19);
    let (client, edb) = t1_setup(&db, SchemeConfig::trinity1(grid), &mut r).unwrap();
    let q = Query::Intervals(vec![(0, 3)]);
    let req = client.search_request(&q, edb.quotient_bits() + 1, &mut r).unwrap().unwrap();
    assert!(matches!(edb.search(&req), Err(Error::Malformed(_))));
}

#[test]
fn client_state_survives_serialization() {
    let grid = GridConfig::new(3, 3).unwrap();
    let mut r = rng(20);
    let db = random_objects(20, &grid, &mut r);
    let (mut client, mut edb, _) = t2_setup(&db, SchemeConfig::trinity2(grid), &mut r).unwrap();
    t2_add(&mut client, &db[0], &mut edb, &mut r).unwrap();
    let copy = Client::from_bytes(&client.to_bytes()).unwrap();
    assert_eq!(copy.keys, client.keys);
    assert_eq!(copy.state, client.state);
    assert_eq!(copy.config, client.config);
    let q = Query::Intervals(vec![(0, grid.max_value())]);
    let cand = t2_search(&copy, q.clone(), &mut edb, &mut r).unwrap();
    assert_eq!(scheme::verify(&copy, q.clone(), &cand).unwrap(), oracle(&db, &q, &grid));
    let mut bytes = client.to_bytes();
    bytes[4] = 9;
    assert!(matches!(Client::from_bytes(&bytes), Err(Error::VersionMismatch { .. })));
    assert!(matches!(Client::from_bytes(b"nope"), Err(Error::CorruptHeader(_))));
}

#[test]
fn wire_messages_round_trip() {
    let (grid, db) = four_objects();
    let mut r = rng(21);
    let (mut client, edb, _) = t2_setup(&db, SchemeConfig::trinity2(grid), &mut r).unwrap();
    let add = client.prepare_add(&db[0], false, &mut r).unwrap();
    assert_eq!(AddMessage::from_bytes(&add.to_bytes()).unwrap(), add);
    let del = client.prepare_delete(&db[1]).unwrap().unwrap();
    assert_eq!(DeleteMessage::from_bytes(&del.to_bytes()).unwrap(), del);
    let q = Query::Intervals(vec![(2, 9)]);
    let req = client.search_request(&q, edb.quotient_bits(), &mut r).unwrap().unwrap();
    assert_eq!(SearchRequest::from_bytes(&req.to_bytes()).unwrap(), req);
    let setup = SetupMessage { config: *edb.config(), salt_key: Some(client.keys.salt_key.clone()) };
    assert_eq!(SetupMessage::from_bytes(&setup.to_bytes()).unwrap(), setup);

    let bytes = add.to_bytes();
    assert!(matches!(DeleteMessage::from_bytes(&bytes), Err(Error::Malformed(_))));
    assert!(AddMessage::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut v = bytes.clone();
    v[0] = 7;
    assert!(matches!(peek_op(&v), Err(Error::VersionMismatch { .. })));
    assert!(matches!(peek_op(&[1]), Err(Error::Malformed(_))));
}

#[test]
fn malformed_updates_are_refused() {
    let (grid, db) = four_objects();
    let mut r = rng(22);
    let (mut client, mut edb) = t1_setup(&db, SchemeConfig::trinity1(grid), &mut r).unwrap();
    let mut add = client.prepare_add(&db[0], false, &mut r).unwrap();
    add.elements[0].fingerprints.push(1);
    assert!(matches!(edb.dispatch(&add.to_bytes()), Err(Error::Malformed(_))));
    let mut add = client.prepare_add(&db[0], false, &mut r).unwrap();
    add.counter = 5;
    assert!(matches!(edb.dispatch(&add.to_bytes()), Err(Error::Malformed(_))));
    assert!(matches!(edb.dispatch(&AddReceipt { handle: 0 }.to_bytes()), Err(Error::Malformed(_))));
}

proptest! {
    #[test]
    fn bitmap_matches_a_set(
        a in proptest::collection::btree_set(0u64..300, 0..80),
        b in proptest::collection::btree_set(0u64..300, 0..80),
        probe in 0u64..310,
    ) {
        let ba = CompressedBitmap::from_positions(a.iter().copied());
        let bb = CompressedBitmap::from_positions(b.iter().copied());
        prop_assert_eq!(ba.len(), a.len() as u64);
        prop_assert_eq!(ba.iter().collect::<Vec<_>>(), a.iter().copied().collect::<Vec<_>>());
        prop_assert_eq!(ba.contains(probe), a.contains(&probe));
        prop_assert_eq!(ba.intersects(&bb), !a.is_disjoint(&b));
        prop_assert_eq!(CompressedBitmap::from_bytes(&ba.to_bytes()).unwrap(), ba);
    }

    #[test]
    fn bitmap_decoding_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..40)) {
        if let Ok(bm) = CompressedBitmap::from_bytes(&bytes) {
            prop_assert_eq!(CompressedBitmap::from_bytes(&bm.to_bytes()).unwrap(), bm);
        }
    }
}

#[test]
fn bitmap_handles_extreme_positions() {
    let bm = CompressedBitmap::from_positions([0, 1, 2, u64::MAX - 1]);
    assert_eq!(CompressedBitmap::from_bytes(&bm.to_bytes()).unwrap(), bm);
    assert!(bm.contains(u64::MAX - 1) && !bm.contains(3));
    assert!(CompressedBitmap::new().is_empty());
}
