mod common;

use aeqsim::model_io::{encode_model, parse_model, ModelFileError};
use aeqsim::random::{random_model, RandomConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample_bytes() -> Vec<u8> {
    let cfg = RandomConfig { timesteps: 3, ..RandomConfig::default() };
    encode_model(&random_model(21, "7x8x2-3C3-P3-2C1-F4", &cfg).unwrap())
}

#[test]
fn every_single_byte_change_is_rejected() {
    let bytes = sample_bytes();
    for pos in 0..bytes.len() {
        for flip in [0x01u8, 0x80, 0xff] {
            let mut b = bytes.clone();
            b[pos] ^= flip;
            assert!(parse_model(&b).is_err(), "flip {flip:#x} at {pos} accepted");
        }
    }
}

#[test]
fn every_truncation_is_rejected() {
    let bytes = sample_bytes();
    for len in 0..bytes.len() {
        match parse_model(&bytes[..len]) {
            Err(ModelFileError::Truncated { .. }) | Err(ModelFileError::BadMagic(_)) => {}
            other => panic!("prefix of {len} bytes gave {other:?}"),
        }
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(parse_model(&long), Err(ModelFileError::TrailingBytes(1))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_models_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, net) = common::random_net(&mut rng);
        let bytes = encode_model(&net);
        prop_assert_eq!(parse_model(&bytes).unwrap(), net.clone());
        prop_assert_eq!(encode_model(&parse_model(&bytes).unwrap()), bytes);
    }

    #[test]
    fn arbitrary_bytes_never_panic(noise in prop::collection::vec(any::<u8>(), 0..256), keep_magic in any::<bool>()) {
        let mut b = noise;
        if keep_magic {
            b.splice(0..0, *b"SSNN\x01\x00");
        }
        prop_assert!(parse_model(&b).is_err());
    }

    #[test]
    fn scattered_corruption_is_rejected(edits in prop::collection::vec((any::<prop::sample::Index>(), 1u8..=255), 1..6)) {
        let mut b = sample_bytes();
        let n = b.len();
        for (at, x) in edits {
            b[at.index(n)] ^= x;
        }
        prop_assume!(b != sample_bytes());
        prop_assert!(parse_model(&b).is_err());
    }
}
