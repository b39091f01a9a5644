use c2f::{rvol, weights};
use c2f_core::nn::{ModelWeights, UNetSpec};
use c2f_core::volume::{Dims3, Grid, Spacing};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = Dims3> {
    (1usize..6, 1usize..7, 1usize..7).prop_map(|(d, r, c)| Dims3::new(d, r, c))
}

proptest! {
    #[test]
    fn volume_round_trip_is_bit_exact(
        dims in dims(),
        spacing in (0.1f32..5.0, 0.1f32..5.0, 0.1f32..5.0),
        seed in any::<u64>(),
    ) {
        let data: Vec<f32> = (0..dims.len())
            .map(|i| f32::from_bits((seed.wrapping_mul(i as u64 + 1) >> 33) as u32 & 0x3fff_ffff))
            .collect();
        let v = Grid::new(dims, Spacing::new(spacing.0, spacing.1, spacing.2).unwrap(), data).unwrap();
        let back = rvol::decode(&rvol::encode_volume(&v)).unwrap();
        prop_assert_eq!(back, rvol::RvolData::Volume(v));
    }

    #[test]
    fn mask_round_trip(dims in dims(), bits in proptest::collection::vec(0u8..2, 252)) {
        let m = Grid::new(dims, Spacing::NORMALIZED, bits[..dims.len()].to_vec()).unwrap();
        prop_assert_eq!(rvol::decode(&rvol::encode_mask(&m)).unwrap(), rvol::RvolData::Mask(m));
    }

    #[test]
    fn weights_round_trip(base in 1usize..4, depth in 1usize..3, seed in any::<u64>()) {
        let w = ModelWeights::<f32>::init(&UNetSpec::new(base, depth), seed);
        prop_assert_eq!(weights::decode(&weights::encode(&w).unwrap()).unwrap(), w);
    }

    #[test]
    fn every_truncation_is_rejected(cut in 0usize..1000) {
        let w = ModelWeights::<f32>::init(&UNetSpec::new(1, 1), 0);
        let b = weights::encode(&w).unwrap();
        let cut = cut % b.len();
        prop_assert!(weights::decode(&b[..cut]).is_err());
        let m = Grid::new(Dims3::new(2, 3, 4), Spacing::NORMALIZED, vec![1u8; 24]).unwrap();
        let r = rvol::encode_mask(&m);
        prop_assert!(rvol::decode(&r[..cut % r.len()]).is_err());
    }
}

#[test]
fn wrong_kind_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.rvol");
    let m = Grid::new(Dims3::new(1, 1, 2), Spacing::NORMALIZED, vec![0u8, 1]).unwrap();
    rvol::write_mask(&m, &p).unwrap();
    assert_eq!(rvol::read_mask(&p).unwrap(), m);
    assert!(matches!(
        rvol::read_volume(&p),
        Err(rvol::RvolError::WrongKind { .. })
    ));
}
