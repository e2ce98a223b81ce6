mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{random_tensor, rng};
use ttreg::estimators::{LambdaChoice, Method};
use ttreg::io::{
    decode, encode, matrix_from_csv, matrix_to_csv, read_dataset, read_matrix_csv, read_tensor, write_matrix_csv,
    write_tensor, RunConfig,
};
use ttreg::tensor::DenseTensor;

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = random_tensor(&mut rng(1), &[3, 4, 2]);
    write_tensor(dir.path().join("t.ttr"), &t).unwrap();
    assert_eq!(read_tensor(dir.path().join("t.ttr")).unwrap(), t);

    let m = DMatrix::from_row_slice(3, 4, &[1.0, -0.5, 1e-300, 3.25, 0.1, 0.2, 0.3, f64::MIN_POSITIVE, 7.0, 8.0, 9.0, -1e300]);
    write_matrix_csv(dir.path().join("m.csv"), &m).unwrap();
    assert_eq!(read_matrix_csv(dir.path().join("m.csv")).unwrap(), m);
}

#[test]
fn datasets_load_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let x = DMatrix::from_fn(2, 5, |i, j| (i + j) as f64);
    write_tensor(dir.path().join("x.ttr"), &DenseTensor::from_matrix(&x)).unwrap();
    write_tensor(dir.path().join("y.ttr"), &random_tensor(&mut rng(2), &[2, 2, 5])).unwrap();
    let ds = read_dataset(dir.path().join("x.ttr"), dir.path().join("y.ttr")).unwrap();
    assert_eq!((ds.q(), ds.n(), ds.p()), (2, 5, 4));
    write_tensor(dir.path().join("bad.ttr"), &random_tensor(&mut rng(3), &[2, 2, 4])).unwrap();
    assert!(read_dataset(dir.path().join("x.ttr"), dir.path().join("bad.ttr")).is_err());
}

#[test]
fn corrupt_bytes_are_rejected() {
    let t = random_tensor(&mut rng(4), &[2, 2]);
    let bytes = encode(&t).unwrap();
    assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode(&bad).is_err());
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(decode(&bad).is_err());
}

#[test]
fn config_round_trips() {
    let text = "method = \"host\"\nnu = 10\nfolds = 3\nseed = 7\npenalty = \"group\"\nhost_split = \"two-batch\"\n[sim]\nmodel = \"m4-bat\"\nreplicates = 5\n";
    let c = RunConfig::from_toml_str(text).unwrap();
    assert_eq!(c.method().unwrap(), Some(Method::Host));
    assert_eq!(c.fit_config().unwrap().lambda, LambdaChoice::Cv { folds: 3, seed: 7 });
    assert_eq!(c.sim_config().unwrap().replicates, 5);
    let again = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
    assert_eq!(again, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tensor_encoding_is_bit_exact(
        dims in prop::collection::vec(1usize..5, 1..5),
        bits in prop::collection::vec(any::<u64>(), 256),
    ) {
        let len: usize = dims.iter().product();
        let data: Vec<f64> = bits.iter().cycle().take(len).map(|b| f64::from_bits(*b)).collect();
        let t = DenseTensor::new(dims, data).unwrap();
        let back = decode(&encode(&t).unwrap()).unwrap();
        prop_assert_eq!(back.dims(), t.dims());
        for (a, b) in back.data().iter().zip(t.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_is_value_exact(rows in 1usize..6, cols in 1usize..6, vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 36)) {
        let m = DMatrix::from_fn(rows, cols, |i, j| vals[i * cols + j]);
        prop_assert_eq!(matrix_from_csv(&matrix_to_csv(&m).unwrap()).unwrap(), m);
    }
}
