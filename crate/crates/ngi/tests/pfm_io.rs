use ngi::pfm::{self, PfmError};
use ngi_core::scenegen::Image;
use proptest::prelude::*;

fn bits(img: &Image) -> Vec<u32> {
    img.data.iter().map(|v| v.to_bits()).collect()
}

#[test]
fn extremes_and_denormals_survive_bit_exact() {
    let specials = [
        0.0,
        -0.0,
        f32::MIN_POSITIVE,
        f32::MIN_POSITIVE / 8.0,
        -f32::from_bits(1),
        f32::MAX,
        f32::MIN,
        1.0 / 3.0,
        65504.0,
    ];
    let data: Vec<f32> = (0..5 * 4 * 3).map(|i| specials[i % specials.len()]).collect();
    let img = Image::from_data(5, 4, 3, data).unwrap();
    let back = pfm::decode(&pfm::encode(&img).unwrap()).unwrap();
    assert_eq!(back.dims(), img.dims());
    assert_eq!(bits(&back), bits(&img));
}

#[test]
fn files_round_trip_and_report_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("depth.pfm");
    let img = Image::from_data(3, 2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    pfm::write_pfm(&img, &path).unwrap();
    let h = pfm::read_header(&path).unwrap();
    assert_eq!((h.width, h.height, h.channels, h.little_endian), (3, 2, 1, true));
    assert_eq!(pfm::read_pfm(&path).unwrap(), img);
    assert!(matches!(
        pfm::read_pfm_channels(&path, 3),
        Err(PfmError::Channels { expected: 3, found: 1 })
    ));
}

#[test]
fn malformed_inputs_are_rejected() {
    let img = Image::from_data(2, 2, 3, vec![0.5; 12]).unwrap();
    let bytes = pfm::encode(&img).unwrap();
    assert!(matches!(pfm::decode(&bytes[..bytes.len() - 1]), Err(PfmError::ShortRead { .. })));
    assert!(matches!(pfm::decode(b"P6\n2 2\n255\n"), Err(PfmError::BadMagic(_))));
    assert!(matches!(pfm::decode(b"PF\n2 x\n-1.0\n"), Err(PfmError::BadHeader(_))));
    let mut nan = img.clone();
    nan.data[5] = f32::NAN;
    assert!(matches!(pfm::encode(&nan), Err(PfmError::NonFinite(5))));
    let four = Image::zeros(2, 2, 4);
    assert!(matches!(pfm::encode(&four), Err(PfmError::Unsupported(4))));
}

proptest! {
    #[test]
    fn any_finite_image_round_trips(
        w in 1usize..9,
        h in 1usize..9,
        gray in any::<bool>(),
        seed in prop::collection::vec(any::<u32>(), 243),
    ) {
        let c = if gray { 1 } else { 3 };
        let data: Vec<f32> = (0..w * h * c)
            .map(|i| {
                let v = f32::from_bits(seed[i % seed.len()].wrapping_mul(i as u32 + 1));
                if v.is_finite() { v } else { 0.25 }
            })
            .collect();
        let img = Image::from_data(w, h, c, data).unwrap();
        let bytes = pfm::encode(&img).unwrap();
        prop_assert_eq!(bytes.clone(), pfm::encode(&pfm::decode(&bytes).unwrap()).unwrap());
        prop_assert_eq!(bits(&pfm::decode(&bytes).unwrap()), bits(&img));
    }
}
