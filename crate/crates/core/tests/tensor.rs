mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::{kron, kron_all, random_matrix, random_scale, random_tensor, rng};
use ttreg::tensor::{ar_matrix, kron_materialize, linear_offset, mahalanobis_sq, multi_index, DenseTensor, KroneckerScale};

#[test]
fn two_by_two_vectorizes_column_major() {
    let t = DenseTensor::from_fn(&[2, 2], |i| (1 + i[0] + 2 * i[1]) as f64).unwrap();
    assert_eq!(t.get(&[1, 0]), 2.0);
    assert_eq!(t.get(&[0, 1]), 3.0);
    assert_eq!(t.vectorize(), vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn index_map_matches_enumeration() {
    let dims = [2, 3, 4];
    let mut r = rng(1);
    let t = random_tensor(&mut r, &dims);
    let v = t.vectorize();
    // Walk the cells with the first index fastest.
    let mut j = 0;
    for i3 in 0..4 {
        for i2 in 0..3 {
            for i1 in 0..2 {
                assert_eq!(linear_offset(&dims, &[i1, i2, i3]), j);
                assert_eq!(v[j], t.get(&[i1, i2, i3]));
                j += 1;
            }
        }
    }
    // One-based (2,1,3) is entry 14.
    assert_eq!(linear_offset(&dims, &[1, 0, 2]) + 1, 14);
}

#[test]
fn matricizing_a_matrix() {
    let m = random_matrix(&mut rng(2), 3, 5);
    let t = DenseTensor::from_matrix(&m);
    assert_eq!(t.matricize(0).unwrap(), m);
    assert_eq!(t.matricize(1).unwrap(), m.transpose());
}

#[test]
fn mode_two_columns_are_fibers() {
    let dims = [2, 3, 2];
    let t = random_tensor(&mut rng(3), &dims);
    let m = t.matricize(1).unwrap();
    assert_eq!(m.shape(), (3, 4));
    let mut col = 0;
    for i3 in 0..2 {
        for i1 in 0..2 {
            for i2 in 0..3 {
                assert_eq!(m[(i2, col)], t.get(&[i1, i2, i3]));
            }
            col += 1;
        }
    }
    assert_eq!(DenseTensor::fold(&m, 1, &dims).unwrap(), t);
}

#[test]
fn mode_product_examples() {
    let mut r = rng(4);
    let a = random_tensor(&mut r, &[3, 4]);
    assert_eq!(a.mode_product(&DMatrix::identity(3, 3), 0).unwrap(), a);
    let b = DenseTensor::from_fn(&[2, 2], |i| if i[0] == i[1] { 1.0 } else { 0.5 }).unwrap();
    let doubled = b.mode_product(&(DMatrix::identity(2, 2) * 2.0), 0).unwrap();
    assert_eq!(doubled.data(), b.scaled(2.0).data());

    let g = random_matrix(&mut r, 2, 3);
    let prod = a.mode_product(&g, 0).unwrap();
    let oracle = &g * a.to_matrix(3).unwrap();
    assert_eq!(prod.dims(), &[2, 4]);
    for (x, y) in prod.data().iter().zip(oracle.iter()) {
        assert_relative_eq!(*x, *y, epsilon = 1e-12);
    }
}

#[test]
fn tucker_identities() {
    let mut r = rng(5);
    let a = random_tensor(&mut r, &[2, 2, 2]);
    let i2 = DMatrix::identity(2, 2);
    assert_eq!(a.tucker(&[Some(&i2), Some(&i2), Some(&i2)]).unwrap(), a);

    let g1 = random_matrix(&mut r, 2, 2);
    let g2 = random_matrix(&mut r, 2, 2);
    let g3 = random_matrix(&mut r, 2, 2);
    let ab = a.mode_product(&g1, 0).unwrap().mode_product(&g2, 1).unwrap();
    let ba = a.mode_product(&g2, 1).unwrap().mode_product(&g1, 0).unwrap();
    for (x, y) in ab.data().iter().zip(ba.data()) {
        assert!((x - y).abs() < 1e-12);
    }

    let t = a.tucker(&[Some(&g1), Some(&g2), Some(&g3)]).unwrap();
    let oracle = kron(&g3, &kron(&g2, &g1)) * DVector::from_vec(a.vectorize());
    for (x, y) in t.data().iter().zip(oracle.iter()) {
        assert_relative_eq!(*x, *y, epsilon = 1e-12);
    }
}

#[test]
fn mahalanobis_examples() {
    let id = KroneckerScale::identity(&[2, 2]);
    let ones = DenseTensor::from_fn(&[2, 2], |_| 1.0).unwrap();
    assert_eq!(mahalanobis_sq(&ones, &id).unwrap(), 4.0);
    assert_eq!(mahalanobis_sq(&DenseTensor::zeros(&[2, 2]).unwrap(), &id).unwrap(), 0.0);

    let xi = KroneckerScale::new(vec![ar_matrix(2, 0.5).unwrap(), ar_matrix(3, 0.5).unwrap()]).unwrap();
    let d = random_tensor(&mut rng(6), &[2, 3]);
    let v = DVector::from_vec(d.vectorize());
    let full = kron_all(xi.modes());
    let oracle = (v.transpose() * full.try_inverse().unwrap() * &v)[(0, 0)];
    assert_relative_eq!(mahalanobis_sq(&d, &xi).unwrap(), oracle, max_relative = 1e-10);
}

#[test]
fn kron_materialize_examples() {
    assert_eq!(kron_materialize(&KroneckerScale::identity(&[2, 3])).unwrap(), DMatrix::identity(6, 6));
    let s = ar_matrix(3, 0.5).unwrap();
    assert_eq!(kron_materialize(&KroneckerScale::new(vec![s.clone()]).unwrap()).unwrap(), s);

    let a = ar_matrix(2, 0.5).unwrap();
    let b = ar_matrix(2, 0.3).unwrap();
    let full = kron_materialize(&KroneckerScale::new(vec![a.clone(), b.clone()]).unwrap()).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_relative_eq!(full[(i, j)], b[(i / 2, j / 2)] * a[(i % 2, j % 2)], epsilon = 1e-15);
        }
    }
}

#[test]
fn ar_matrix_examples() {
    assert_eq!(ar_matrix(3, 0.0).unwrap(), DMatrix::identity(3, 3));
    assert_eq!(ar_matrix(2, 0.5).unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
    let eig = ar_matrix(4, 0.5).unwrap().symmetric_eigenvalues();
    assert!(eig.iter().all(|e| *e > 0.0));
}

#[test]
fn precision_column_matches_inverse() {
    let xi = random_scale(&mut rng(7), &[2, 3, 2]);
    let inv = kron_all(xi.modes()).try_inverse().unwrap();
    let f = xi.factor().unwrap();
    let mut col = Vec::new();
    for j in 0..12 {
        f.precision_column(j, &mut col);
        for i in 0..12 {
            assert_relative_eq!(col[i], inv[(i, j)], epsilon = 1e-9, max_relative = 1e-9);
        }
        assert_relative_eq!(f.precision_diagonal()[j], inv[(j, j)], max_relative = 1e-9);
    }
    let ld = kron_all(xi.modes()).determinant().ln();
    assert_relative_eq!(f.log_det(), ld, max_relative = 1e-10);
}

proptest! {
    #[test]
    fn devectorize_inverts_vectorize(dims in prop::collection::vec(1usize..4, 1..4), seed in any::<u64>()) {
        let t = random_tensor(&mut rng(seed), &dims);
        prop_assert_eq!(DenseTensor::devectorize(&t.vectorize(), &dims).unwrap(), t);
    }

    #[test]
    fn fold_inverts_matricize(dims in prop::collection::vec(1usize..4, 2..4), seed in any::<u64>(), n in 0usize..3) {
        let n = n % dims.len();
        let t = random_tensor(&mut rng(seed), &dims);
        prop_assert_eq!(DenseTensor::fold(&t.matricize(n).unwrap(), n, &dims).unwrap(), t);
    }

    #[test]
    fn offsets_round_trip(dims in prop::collection::vec(1usize..5, 1..4), k in any::<usize>()) {
        let total: usize = dims.iter().product();
        let off = k % total;
        prop_assert_eq!(linear_offset(&dims, &multi_index(&dims, off)), off);
    }

    #[test]
    fn normalization_preserves_kronecker(seed in any::<u64>()) {
        let xi = random_scale(&mut rng(seed), &[2, 3]);
        let nz = xi.normalize().unwrap();
        prop_assert!(nz.is_normalized());
        let a = kron_all(xi.modes());
        let b = kron_all(nz.modes());
        prop_assert!((a - b).abs().max() < 1e-12 * kron_all(xi.modes()).abs().max().max(1.0));
    }
}
