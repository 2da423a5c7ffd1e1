//! Cross-checks of the in-crate Jacobi SVD against an independent dense
//! linear-algebra implementation (nalgebra) on randomized matrices.

use dg_core::linalg::{singular_values, svd, Matrix};
use dg_core::network::{ActivationKind, MlpModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-2.0..=2.0))
        .collect();
    Matrix::from_flat(rows, cols, data).unwrap()
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn na_singular_values(m: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

fn assert_spectra_match(ours: &[f64], reference: &[f64], context: &str) {
    assert_eq!(ours.len(), reference.len(), "{context}: spectrum length");
    let scale = reference.first().copied().unwrap_or(1.0).max(1.0);
    for (i, (a, b)) in ours.iter().zip(reference).enumerate() {
        assert!(
            (a - b).abs() <= 1e-9 * scale,
            "{context}: σ_{i} = {a} vs {b}"
        );
    }
}

#[test]
fn random_spectra_match_reference_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5D_0001);
    for &(rows, cols) in &[(5, 5), (8, 3), (3, 8), (6, 2), (2, 7)] {
        for _ in 0..4 {
            let m = random_matrix(&mut rng, rows, cols);
            let ours = singular_values(&m).unwrap();
            let reference = na_singular_values(&m);
            assert_spectra_match(&ours, &reference, &format!("{rows}x{cols}"));
        }
    }
}

#[test]
fn product_spectrum_matches_reference_on_explicit_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5D_0002);
    for seed in 0..5u64 {
        let model = MlpModel::init(&[4, 6, 5, 3], ActivationKind::Abs, 77 + seed).unwrap();
        let ours = model.singular_spectrum().unwrap();

        // Multiply the layers independently inside nalgebra, then take its SVD.
        let mut product = DMatrix::<f64>::identity(4, 4);
        for layer in model.layers() {
            product = to_na(layer) * product;
        }
        let mut reference: Vec<f64> = product.singular_values().iter().copied().collect();
        reference.sort_by(|a, b| b.partial_cmp(a).unwrap());

        assert_spectra_match(&ours, &reference, "layer product");
        let _ = rng.random::<u64>();
    }
}

#[test]
fn factors_reconstruct_the_original_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5D_0003);
    for &(rows, cols) in &[(6, 4), (4, 6), (5, 5)] {
        let m = random_matrix(&mut rng, rows, cols);
        let f = svd(&m).unwrap();
        let back = f.reconstruct(&f.s).unwrap();
        let mut err = 0.0f64;
        for i in 0..rows {
            for j in 0..cols {
                err = err.max((back.get(i, j) - m.get(i, j)).abs());
            }
        }
        assert!(
            err <= 1e-10 * m.frobenius_norm().max(1.0),
            "reconstruction error {err}"
        );
    }
}

#[test]
fn rank_deficient_spectrum_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5D_0004);
    // Rank-2 5×5 built from two outer products.
    let u1: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let v1: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let u2: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let v2: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut data = vec![0.0f64; 25];
    for i in 0..5 {
        for j in 0..5 {
            data[i * 5 + j] = 3.0 * u1[i] * v1[j] + 0.5 * u2[i] * v2[j];
        }
    }
    let m = Matrix::from_flat(5, 5, data).unwrap();
    let ours = singular_values(&m).unwrap();
    let reference = na_singular_values(&m);
    assert_spectra_match(&ours, &reference, "rank-2");
    for &s in &ours[2..] {
        assert!(s <= 1e-10 * ours[0], "trailing σ = {s} not negligible");
    }
}
