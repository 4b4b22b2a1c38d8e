use trinity::ordertoken::*;
use trinity::Error;

fn key(b: u8) -> OrderKey {
    OrderKey::from_bytes([b; 16])
}

// Size of the minimal dyadic decomposition of [1, c]: [0, c] splits into
// popcount(c + 1) aligned blocks; removing leaf 0 from the largest block of
// size 2^k leaves k blocks in its place.
fn dyadic_count(c: u64) -> usize {
    let n = c + 1;
    let k = 63 - n.leading_zeros();
    (n.count_ones() - 1 + k) as usize
}

#[test]
fn evaluation_is_deterministic_and_distinct() {
    let k = key(1);
    assert_eq!(ot_eval(&k, 5), ot_eval(&k, 5));
    assert_ne!(ot_eval(&k, 5), ot_eval(&k, 6));
    assert_ne!(ot_eval(&k, 5), ot_eval(&key(2), 5));
}

#[test]
fn capability_paths_agree_with_direct_evaluation() {
    let k = key(3);
    let direct: Vec<OrderToken> = (0..=256).map(|j| ot_eval(&k, j)).collect();
    for c in 1..=256u64 {
        let cap = constrain(&k, c);
        assert_eq!(cap.nodes.len(), dyadic_count(c), "c={c}");
        for j in 1..=c {
            assert_eq!(cap_eval(&cap, j).unwrap(), direct[j as usize], "c={c} j={j}");
        }
        assert!(matches!(cap_eval(&cap, c + 1), Err(Error::OutOfRange { .. })));
        assert!(matches!(cap_eval(&cap, 0), Err(Error::OutOfRange { .. })));
    }
}

#[test]
fn node_counts_at_power_of_two_bounds() {
    let k = key(4);
    for e in 0..=7 {
        let c = 1u64 << e;
        let n = constrain(&k, c).nodes.len();
        assert!(n <= e as usize + 1, "c={c} n={n}");
        assert_eq!(n, dyadic_count(c));
    }
    for c in 1..=128 {
        assert_eq!(constrain(&k, c).nodes.len(), dyadic_count(c));
    }
}

#[test]
fn power_of_two_capability_covers_exactly_its_leaves() {
    let k = key(5);
    for e in 0..=10 {
        let c = 1u64 << e;
        let cap = constrain(&k, c);
        let covered: u64 = cap.nodes.iter().map(|n| 1u64 << (64 - n.depth as u32)).sum();
        assert_eq!(covered, c);
    }
}

#[test]
fn large_counters() {
    let k = key(6);
    let c = u64::MAX - 1;
    let cap = constrain(&k, c);
    assert!(cap.nodes.len() <= 2 * 64);
    for j in [1, 2, 1 << 40, (1 << 63) + 12345, c] {
        assert_eq!(cap_eval(&cap, j).unwrap(), ot_eval(&k, j));
    }
    assert!(cap_eval(&cap, u64::MAX).is_err());
}

#[test]
fn salting_is_an_involution() {
    let k = SaltKey::from_bytes([7; 32]);
    let ot1 = ot_eval(&key(8), 1);
    let ot2 = ot_eval(&key(8), 2);
    for e in [0u64, 1, 0xdead_beef, u64::MAX] {
        let s = salt_fingerprint(e, &k, &ot1);
        assert_eq!(salt_fingerprint(s, &k, &ot1), e);
        assert_ne!(s, salt_fingerprint(e, &k, &ot2));
    }
    assert_eq!(salt_fingerprint(0, &k, &ot1), salt(&k, &ot1).fingerprint);
}

#[test]
fn capability_serialization_round_trips() {
    let cap = constrain(&key(9), 1000);
    let bytes = cap.to_bytes();
    assert_eq!(bytes.len(), 12 + 25 * cap.nodes.len());
    assert_eq!(SearchCapability::from_bytes(&bytes).unwrap(), cap);
    assert!(SearchCapability::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}
