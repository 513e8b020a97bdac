mod common;

use common::random_matrix;
use mpo_core::mpo::{decompose, plan_shapes};
use mpo_core::persistence::{
    bundle_size, decode_bundle, encode_bundle, load_bundle, save_bundle, Bundle, FLAG_SPECTRA, MAGIC,
};
use mpo_core::{BondProfile, Error, MpoLinear};
use proptest::prelude::*;

fn bundle(rows: usize, cols: usize, n: usize, cap: usize, layer: bool, freeze: bool, seed: u64) -> Bundle {
    let m = random_matrix(rows, cols, seed);
    let plan = plan_shapes(rows, cols, n, None, None).unwrap();
    let f = decompose(&m, &plan).unwrap();
    let dims = f.bonds().dims.iter().map(|&d| d.min(cap)).collect();
    let (f, _) = f.truncate(&BondProfile::new(dims).realizable(&plan), None).unwrap();
    if layer {
        let bias = (0..cols).map(|j| j as f64 * 0.25 - 1.0).collect();
        Bundle::Layer(MpoLinear::from_factorization(f, bias, freeze).unwrap())
    } else {
        Bundle::Factorization(f)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn bundles_round_trip_bit_exact(
        rows in 1usize..30, cols in 1usize..30, n in 2usize..6, cap in 1usize..20,
        layer in any::<bool>(), freeze in any::<bool>(), seed in any::<u64>(),
    ) {
        let b = bundle(rows, cols, n, cap, layer, freeze, seed);
        let bytes = encode_bundle(&b).unwrap();
        let f = b.factorization();
        prop_assert_eq!(bytes.len(), bundle_size(f.plan(), f.bonds(), layer));
        let back = decode_bundle(&bytes).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(encode_bundle(&back).unwrap(), bytes);
    }

    #[test]
    fn any_single_bit_flip_is_rejected(seed in any::<u64>(), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let b = bundle(12, 9, 3, 6, true, false, seed);
        let mut bytes = encode_bundle(&b).unwrap();
        let at = pos.index(bytes.len());
        bytes[at] ^= 1 << bit;
        prop_assert!(decode_bundle(&bytes).is_err());
    }
}

#[test]
fn file_round_trip_and_exact_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("layer.mpob");
    let b = bundle(30, 20, 3, 8, true, true, 1);
    save_bundle(&b, &path).unwrap();
    let f = b.factorization();
    let n = f.plan().n();
    let tensors: usize = f.tensors().iter().map(|t| 16 + 8 * t.numel()).sum();
    let expected = 48 + 12 * n + tensors + 8 * 20 + 4;
    assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, expected);
    assert_eq!(load_bundle(&path).unwrap(), b);
    // only the bundle is left behind by the atomic write
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn truncated_bundle_is_smaller_by_the_dropped_elements() {
    let full = bundle(16, 16, 2, usize::MAX, false, false, 2);
    let cut = bundle(16, 16, 2, 3, false, false, 2);
    let dropped = full.factorization().parameter_count() - cut.factorization().parameter_count();
    assert_eq!(encode_bundle(&full).unwrap().len() - encode_bundle(&cut).unwrap().len(), 8 * dropped);
}

#[test]
fn header_errors_are_specific() {
    let bytes = encode_bundle(&bundle(8, 8, 2, 4, false, false, 3)).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_bundle(&bad), Err(Error::BadMagic(_))));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(decode_bundle(&bad), Err(Error::UnsupportedVersion(9))));
    let mut bad = bytes.clone();
    let last = bad.len() - 1;
    bad[last] ^= 0xff;
    assert!(matches!(decode_bundle(&bad), Err(Error::ChecksumMismatch { .. })));
    assert!(decode_bundle(&bytes[..bytes.len() - 9]).is_err());
    assert_eq!(&bytes[..4], &MAGIC);
}

#[test]
fn reserved_flag_is_rejected_even_with_a_valid_checksum() {
    let mut bytes = encode_bundle(&bundle(8, 8, 2, 4, false, false, 4)).unwrap();
    let n = 2;
    let flags_at = 4 + 2 + 2 + 32 + 4 * (3 * n + 1) + 2;
    bytes[flags_at] |= FLAG_SPECTRA as u8;
    let body = bytes.len() - 4;
    let crc = crc32fast::hash(&bytes[..body]);
    bytes[body..].copy_from_slice(&crc.to_le_bytes());
    assert!(matches!(decode_bundle(&bytes), Err(Error::CorruptBundle(_))));
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(load_bundle("/nonexistent/dir/x.mpob"), Err(Error::Io(_))));
}
