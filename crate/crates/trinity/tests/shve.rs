use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use trinity::shve::{self, ShveCiphertext, ShveToken};
use trinity::Error;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn plain_match(ind: &[u8], v: &[Option<u8>]) -> bool {
    ind.iter().zip(v).all(|(a, b)| b.is_none_or(|b| b == *a))
}

#[test]
fn truth_table_for_binary_vectors_up_to_four() {
    let mut r = rng(1);
    let msk = shve::setup(128, &mut r).unwrap();
    for d in 1..=4u32 {
        for bits in 0..1u32 << d {
            let ind: Vec<u8> = (0..d).map(|l| ((bits >> l) & 1) as u8).collect();
            let c = shve::encrypt(&msk, b"True", &ind, &mut r);
            for code in 0..3u32.pow(d) {
                let v: Vec<Option<u8>> = (0..d)
                    .map(|l| match code / 3u32.pow(l) % 3 {
                        2 => None,
                        s => Some(s as u8),
                    })
                    .collect();
                let t = shve::keygen(&msk, &v, &mut r);
                let got = shve::query(&c, &t).unwrap();
                assert_eq!(got.is_some(), plain_match(&ind, &v), "ind {ind:?} v {v:?}");
                if let Some(mu) = got {
                    assert_eq!(mu, b"True");
                }
            }
        }
    }
}

#[test]
fn keys_are_fresh_and_sized() {
    let mut r = rng(2);
    let a = shve::setup(128, &mut r).unwrap();
    let b = shve::setup(128, &mut r).unwrap();
    assert_ne!(a, b);
    assert_eq!(a.as_bytes().len(), 16);
    assert_eq!(shve::setup(256, &mut r).unwrap().as_bytes().len(), 32);
    assert!(shve::setup(64, &mut r).is_err());
    assert_eq!(shve::setup(128, &mut rng(9)).unwrap(), shve::setup(128, &mut rng(9)).unwrap());
}

#[test]
fn encryption_and_keygen_are_deterministic_under_seeded_randomness() {
    let msk = shve::setup(128, &mut rng(3)).unwrap();
    let c1 = shve::encrypt_with_nonce(&msk, b"m", &[4, 5, 6], [7; 12]);
    let c2 = shve::encrypt_with_nonce(&msk, b"m", &[4, 5, 6], [7; 12]);
    assert_eq!(c1, c2);
    let v = [Some(4), None, Some(6)];
    assert_eq!(shve::keygen(&msk, &v, &mut rng(4)), shve::keygen(&msk, &v, &mut rng(4)));
}

#[test]
fn wildcard_positions_carry_no_key_material() {
    let mut r = rng(5);
    let msk = shve::setup(128, &mut r).unwrap();
    let t = shve::keygen(&msk, &[None, Some(9), None, None, Some(1)], &mut r);
    assert_eq!(t.positions, [1, 4]);
    assert_eq!(t.constrained(), 2);
    let all = shve::keygen(&msk, &[None; 6], &mut r);
    assert!(all.positions.is_empty());
    // Tokens for different values at the same positions have the same shape.
    let u = shve::keygen(&msk, &[None, Some(200), None, None, Some(77)], &mut r);
    assert_eq!(t.to_bytes().len(), u.to_bytes().len());
}

#[test]
fn tampering_never_yields_a_wrong_message() {
    let mut r = rng(6);
    let msk = shve::setup(128, &mut r).unwrap();
    let ind = [3u8, 1, 4, 1, 5];
    let c = shve::encrypt(&msk, b"payload", &ind, &mut r);
    let t = shve::keygen(&msk, &ind.map(Some), &mut r);
    assert_eq!(shve::query(&c, &t).unwrap().unwrap(), b"payload");
    let bytes = c.to_bytes();
    for i in 0..bytes.len() {
        let mut bad = bytes.clone();
        bad[i] ^= 0x20;
        let Ok(cc) = ShveCiphertext::from_bytes(&bad) else { continue };
        match shve::query(&cc, &t) {
            Ok(Some(mu)) => assert_eq!(mu, b"payload", "byte {i}"),
            Ok(None) | Err(_) => {}
        }
    }
    let mut bad = c.clone();
    bad.payload[0] ^= 1;
    assert_eq!(shve::query(&bad, &t).unwrap(), None);
    let mut bad = c.clone();
    bad.components[2][0] ^= 1;
    assert_eq!(shve::query(&bad, &t).unwrap(), None);
}

#[test]
fn dimension_mismatch_is_an_error() {
    let mut r = rng(7);
    let msk = shve::setup(128, &mut r).unwrap();
    let c = shve::encrypt(&msk, b"x", &[1, 2, 3], &mut r);
    let t = shve::keygen(&msk, &[Some(1), None], &mut r);
    assert!(matches!(
        shve::query(&c, &t),
        Err(Error::DimensionMismatch { ciphertext: 3, token: 2 })
    ));
}

#[test]
fn aggregate_answers_full_tokens() {
    let mut r = rng(8);
    let msk = shve::setup(128, &mut r).unwrap();
    let ind = [10u8, 20, 30, 40];
    let agg = msk.aggregate(&ind);
    assert!(shve::matches_aggregate(&agg, &shve::keygen_exact(&msk, &ind, &mut r)));
    assert!(!shve::matches_aggregate(&agg, &shve::keygen_exact(&msk, &[10, 20, 30, 41], &mut r)));
    let c = shve::encrypt(&msk, b"True", &ind, &mut r);
    let t = shve::keygen_exact(&msk, &ind, &mut r);
    assert_eq!(shve::query(&c, &t).unwrap().unwrap(), b"True");
}

#[test]
fn component_table_matches_direct_aggregation() {
    let mut r = rng(10);
    let msk = shve::setup(128, &mut r).unwrap();
    let table = msk.table(6);
    for ind in [[0u8; 6], [255; 6], [1, 2, 3, 4, 5, 6], [9, 0, 255, 17, 17, 128]] {
        let agg = table.aggregate(&ind);
        assert_eq!(agg, msk.aggregate(&ind));
        let t = shve::keygen_aggregate(&msk, 6, &agg, &mut r);
        let c = shve::encrypt(&msk, b"m", &ind, &mut r);
        assert_eq!(shve::query(&c, &t).unwrap().unwrap(), b"m");
    }
}

#[test]
fn serializations_round_trip() {
    let mut r = rng(9);
    let msk = shve::setup(128, &mut r).unwrap();
    let c = shve::encrypt(&msk, b"abc", &[1, 2, 3, 4], &mut r);
    assert_eq!(ShveCiphertext::from_bytes(&c.to_bytes()).unwrap(), c);
    for v in [vec![Some(1), None, Some(3), None], vec![Some(1); 4], vec![None; 4]] {
        let t = shve::keygen(&msk, &v, &mut r);
        assert_eq!(ShveToken::from_bytes(&t.to_bytes()).unwrap(), t);
    }
    let mut bytes = c.to_bytes();
    bytes[0] = 2;
    assert!(matches!(ShveCiphertext::from_bytes(&bytes), Err(Error::VersionMismatch { .. })));
    assert!(ShveCiphertext::from_bytes(&c.to_bytes()[..10]).is_err());
}

#[test]
fn concurrent_queries_agree() {
    let mut r = rng(10);
    let msk = shve::setup(128, &mut r).unwrap();
    let ind: Vec<u8> = (0..64).map(|_| r.gen()).collect();
    let c = shve::encrypt(&msk, b"True", &ind, &mut r);
    let toks: Vec<ShveToken> = (0..32)
        .map(|i| {
            let mut v: Vec<Option<u8>> = ind.iter().map(|&x| Some(x)).collect();
            if i % 2 == 1 {
                v[i] = Some(ind[i].wrapping_add(1));
            }
            shve::keygen(&msk, &v, &mut r)
        })
        .collect();
    let serial: Vec<bool> = toks.iter().map(|t| shve::query(&c, t).unwrap().is_some()).collect();
    let parallel: Vec<bool> = std::thread::scope(|s| {
        let handles: Vec<_> = toks
            .iter()
            .map(|t| s.spawn(|| shve::query(&c, t).unwrap().is_some()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(serial, parallel);
    assert_eq!(serial.iter().filter(|&&m| m).count(), 16);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_predicates_over_long_vectors(
        seed in any::<u64>(),
        ind in prop::collection::vec(0u8..4, 1..256),
        mask in prop::collection::vec(0u8..4, 256),
    ) {
        let mut r = rng(seed);
        let msk = shve::setup(128, &mut r).unwrap();
        let c = shve::encrypt(&msk, b"True", &ind, &mut r);
        // mask 0: wildcard, 1: copy, 2: copy, 3: flip to a different symbol
        let v: Vec<Option<u8>> = ind.iter().zip(&mask).map(|(&x, &m)| match m {
            0 => None,
            3 => Some(x ^ 1),
            _ => Some(x),
        }).collect();
        let t = shve::keygen(&msk, &v, &mut r);
        prop_assert_eq!(shve::query(&c, &t).unwrap().is_some(), plain_match(&ind, &v));
    }
}
