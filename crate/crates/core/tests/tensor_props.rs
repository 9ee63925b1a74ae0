use num_complex::Complex64;
use proptest::prelude::*;
use scatter_core::harness::tensor::DType;
use scatter_core::harness::{read_tensor, write_tensor, Tensor, TensorData};

fn dims_strategy() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..5, 0..4)
}

fn data_for(dims: &[u64], kind: u8, seed: u64) -> TensorData {
    let len = dims.iter().product::<u64>() as usize;
    let v = |i: usize| ((i as u64).wrapping_mul(2654435761) ^ seed) as f64 * 1e-7 - 3.0;
    match kind {
        0 => TensorData::F32((0..len).map(|i| v(i) as f32).collect()),
        1 => TensorData::F64((0..len).map(v).collect()),
        2 => TensorData::C64((0..len).map(|i| num_complex::Complex32::new(v(i) as f32, -v(i + 1) as f32)).collect()),
        _ => TensorData::C128((0..len).map(|i| Complex64::new(v(i), v(2 * i + 7))).collect()),
    }
}

proptest! {
    #[test]
    fn encode_decode_round_trip(dims in dims_strategy(), kind in 0u8..4, seed in any::<u64>()) {
        let t = Tensor::new(dims.clone(), data_for(&dims, kind, seed)).unwrap();
        let bytes = t.encode();
        let elems = dims.iter().product::<u64>() as usize;
        let elem = t.data.dtype().elem_size();
        prop_assert_eq!(bytes.len(), 8 + 8 * dims.len() + elem * elems);
        prop_assert_eq!(bytes.len(), t.encoded_len());
        prop_assert_eq!(&bytes[0..4], b"SCTN");
        prop_assert_eq!(bytes[4], 1);
        prop_assert_eq!(bytes[6] as usize, dims.len());
        let back = Tensor::decode(&bytes).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn truncated_payload_is_rejected(dims in prop::collection::vec(1u64..4, 1..3), cut in 1usize..8) {
        let t = Tensor::new(dims.clone(), data_for(&dims, 3, 1)).unwrap();
        let bytes = t.encode();
        prop_assert!(Tensor::decode(&bytes[..bytes.len() - cut]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert!(Tensor::decode(&longer).is_err());
    }
}

#[test]
fn dtype_codes() {
    assert_eq!(DType::from_code(1), Some(DType::F32));
    assert_eq!(DType::from_code(4), Some(DType::C128));
    assert_eq!(DType::from_code(0), None);
    assert_eq!(DType::from_code(5), None);
}

#[test]
fn empty_tensor_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.sctn");
    let t = Tensor::complex(vec![0, 7], vec![]).unwrap();
    write_tensor(&path, &t).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 + 16);
    assert_eq!(read_tensor(&path).unwrap(), t);

    let scalar = Tensor::real(vec![], vec![2.5]).unwrap();
    write_tensor(&path, &scalar).unwrap();
    assert_eq!(std::fs::read(&path).unwrap().len(), 16);
    assert_eq!(read_tensor(&path).unwrap().to_f64(), Some(vec![2.5]));
}

#[test]
fn real_tensors_widen_to_complex() {
    let t = Tensor::new(vec![2], TensorData::F32(vec![1.5, -2.0])).unwrap();
    assert_eq!(t.to_f64(), Some(vec![1.5, -2.0]));
    assert_eq!(t.to_c128(), vec![Complex64::new(1.5, 0.0), Complex64::new(-2.0, 0.0)]);
    let c = Tensor::complex(vec![1], vec![Complex64::new(0.0, 1.0)]).unwrap();
    assert_eq!(c.to_f64(), None);
}
