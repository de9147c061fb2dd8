mod common;

use intsense_core::transforms::*;
use intsense_core::Error;
use intsense_testkit::{brute_box_sum, brute_integral, dense_integral_matrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn integer_image(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols)
        .map(|_| rng.random_range(-50i32..=255) as f64)
        .collect()
}

#[test]
fn integral_hand_cases() {
    let op = IntegralOperator::new(2, 2).unwrap();
    assert_eq!(op.apply(&[1.0; 4]).unwrap(), vec![1.0, 2.0, 2.0, 4.0]);
    let mut delta = vec![0.0; 12];
    delta[0] = 1.0;
    assert_eq!(
        IntegralOperator::new(3, 4).unwrap().apply(&delta).unwrap(),
        vec![1.0; 12]
    );
    assert!(matches!(op.apply(&[1.0; 3]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn integral_box_and_rows_match_brute_force_on_random_integer_images() {
    let mut rng = common::rng(2024);
    for _ in 0..200 {
        let rows = rng.random_range(1..=16);
        let cols = rng.random_range(1..=16);
        let img = integer_image(&mut rng, rows, cols);
        let op = IntegralOperator::new(rows, cols).unwrap();
        let fast = op.apply(&img).unwrap();
        assert_eq!(fast, brute_integral(&img, rows, cols));

        let i = rng.random_range(0..rows * cols);
        let h = op.row(i).unwrap();
        let dot: f64 = h.iter().zip(&img).map(|(a, b)| a * b).sum();
        assert_eq!(dot, fast[i]);

        for k in (1..=rows.min(cols)).step_by(2) {
            assert_eq!(
                box_filter_from_integral(&fast, rows, cols, k).unwrap(),
                brute_box_sum(&img, rows, cols, k)
            );
        }
    }
}

#[test]
fn integral_rows_are_rectangle_indicators() {
    let op = IntegralOperator::square(4).unwrap();
    let first = op.row(0).unwrap();
    assert_eq!(first[0], 1.0);
    assert_eq!(first.iter().sum::<f64>(), 1.0);
    assert_eq!(op.row(15).unwrap(), vec![1.0; 16]);
    assert!(matches!(op.row(16), Err(Error::IndexOutOfRange { index: 16, len: 16 })));

    let dense = dense_integral_matrix(4, 4);
    for i in 0..16 {
        let h = op.row(i).unwrap();
        for j in 0..16 {
            assert_eq!(h[j], dense[(i, j)]);
        }
    }
    let mut rng = common::rng(5);
    for _ in 0..20 {
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = op.apply(&x).unwrap();
        let i = rng.random_range(0..16);
        let dot: f64 = op.row(i).unwrap().iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((dot - t[i]).abs() < 1e-12);
    }
}

#[test]
fn integral_transpose_matches_dense() {
    let op = IntegralOperator::new(3, 5).unwrap();
    let dense = dense_integral_matrix(3, 5);
    let mut rng = common::rng(8);
    let x: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut buf = x.clone();
    op.apply_transpose_in_place(&mut buf);
    let want = dense.transpose() * DVector::from_column_slice(&x);
    for (a, b) in buf.iter().zip(want.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn box_filter_cases() {
    let rows = 6;
    let cols = 7;
    let ones = IntegralOperator::new(rows, cols)
        .unwrap()
        .apply(&vec![1.0; rows * cols])
        .unwrap();
    let b = box_filter_from_integral(&ones, rows, cols, 3).unwrap();
    assert_eq!(b[2 * cols + 3], 9.0);
    assert_eq!(b[0], 4.0);
    let mut rng = common::rng(9);
    let img = integer_image(&mut rng, rows, cols);
    let t = IntegralOperator::new(rows, cols).unwrap().apply(&img).unwrap();
    assert_eq!(box_filter_from_integral(&t, rows, cols, 1).unwrap(), img);
    assert!(box_filter_from_integral(&t, rows, cols, 4).is_err());
    assert!(box_filter_from_integral(&t, rows, cols, 9).is_err());

    let img7 = integer_image(&mut rng, 7, 7);
    let t7 = IntegralOperator::square(7).unwrap().apply(&img7).unwrap();
    for k in [3, 5, 7] {
        assert_eq!(
            box_filter_from_integral(&t7, 7, 7, k).unwrap(),
            brute_box_sum(&img7, 7, 7, k)
        );
    }
}

fn orthogonality_error(b: &WaveletBasis) -> f64 {
    let m = b.matrix_t();
    (m * m.transpose() - DMatrix::identity(m.nrows(), m.nrows())).norm() / (m.nrows() as f64).sqrt()
}

#[test]
fn wavelet_bases_are_orthogonal_with_constant_first_row() {
    let families = [
        WaveletFamily::Haar,
        WaveletFamily::Daubechies(2),
        WaveletFamily::Daubechies(3),
        WaveletFamily::Daubechies(4),
        WaveletFamily::Daubechies(5),
    ];
    for f in [2, 4, 8, 16] {
        for family in families {
            for levels in [1, max_levels(f)] {
                let b = build_wavelet_basis(f, levels, family).unwrap();
                assert!(orthogonality_error(&b) < 1e-10, "{family} f = {f} levels = {levels}");
                let inv = 1.0 / f as f64;
                assert!(b.matrix_t().row(0).iter().all(|v| (v - inv).abs() < 1e-12));
                assert_eq!(b.detail_rows().nrows(), f * f - 1);
            }
        }
    }
}

#[test]
fn haar_two_by_two() {
    let b = build_wavelet_basis(2, max_levels(2), WaveletFamily::Haar).unwrap();
    let m = b.matrix_t();
    assert!(m.row(0).iter().all(|v| (v - 0.5).abs() < 1e-15));
    for r in 1..4 {
        let row = m.row(r);
        assert!(row.iter().sum::<f64>().abs() < 1e-15);
        let nnz = row.iter().filter(|v| v.abs() > 1e-12).count();
        assert!(nnz == 2 || nnz == 4);
    }
}

#[test]
fn db4_constant_image_has_no_detail() {
    let b = build_wavelet_basis(8, max_levels(8), WaveletFamily::Daubechies(4)).unwrap();
    let mean = 0.37;
    let c = b.analyze(&vec![mean; 64]).unwrap();
    assert!((c[0] - 8.0 * mean).abs() < 1e-12);
    assert!(c[1..].iter().all(|v| v.abs() < 1e-10));
    let back = b.synthesize(&c).unwrap();
    assert!(back.iter().all(|v| (v - mean).abs() < 1e-12));
}

#[test]
fn wavelet_configuration_errors() {
    assert!(matches!(
        build_wavelet_basis(6, 1, WaveletFamily::Haar),
        Err(Error::Config(_) | Error::Domain(_))
    ));
    assert!(build_wavelet_basis(8, max_levels(8) + 1, WaveletFamily::Haar).is_err());
    assert!(build_wavelet_basis(8, 0, WaveletFamily::Haar).is_err());
    assert!(build_wavelet_basis(8, 2, WaveletFamily::Daubechies(9)).is_err());
    assert_eq!("db4".parse::<WaveletFamily>().unwrap(), WaveletFamily::Daubechies(4));
    assert!("sym4".parse::<WaveletFamily>().is_err());
}

#[test]
fn rsnr_cases() {
    let exact = [1.0, -2.0, 3.0];
    assert_eq!(rsnr(&exact, &exact).unwrap(), RSNR_CAP_DB);
    let doubled: Vec<f64> = exact.iter().map(|v| 2.0 * v).collect();
    assert!((rsnr(&doubled, &exact).unwrap() - 20.0 * 2f64.log10()).abs() < 1e-12);
    assert!((rsnr(&doubled, &exact).unwrap() - 6.0206).abs() < 1e-4);
    assert!(matches!(rsnr(&exact, &[0.0; 3]), Err(Error::Domain(_))));
    assert!(rsnr(&exact, &[1.0; 2]).is_err());
}

#[test]
fn layout_partition_cases() {
    let layout = BlockLayout::new(64, 64, 32).unwrap();
    assert_eq!(layout.block_count(), 4);
    let img: Vec<f64> = (0..64 * 64).map(|v| v as f64).collect();
    let blocks = partition_blocks(&img, &layout).unwrap();
    // Second block in raster order of the grid is the top-right quadrant.
    for r in 0..32 {
        for c in 0..32 {
            assert_eq!(blocks[1][r * 32 + c], img[r * 64 + 32 + c]);
        }
    }
    assert_eq!(reassemble_blocks(&blocks, &layout).unwrap(), img);

    let small = BlockLayout::new(2, 2, 2).unwrap();
    assert_eq!(
        partition_blocks(&[1.0, 2.0, 3.0, 4.0], &small).unwrap(),
        vec![vec![1.0, 2.0, 3.0, 4.0]]
    );
    assert!(BlockLayout::new(10, 8, 4).is_err());

    let cropped = BlockLayout::center_cropped(10, 13, 4).unwrap();
    assert_eq!((cropped.image_rows(), cropped.image_cols()), (8, 12));
    assert_eq!(cropped.crop_offset(), (1, 0));
    let src: Vec<f64> = (0..130).map(|v| v as f64).collect();
    let c = cropped.crop(&src).unwrap();
    assert_eq!(c[0], src[13]);
    assert_eq!(c[12 * 8 - 1], src[8 * 13 + 11]);
}

proptest! {
    #[test]
    fn integral_is_linear(rows in 1usize..10, cols in 1usize..10, a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let x: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let op = IntegralOperator::new(rows, cols).unwrap();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = op.apply(&mix).unwrap();
        let tx = op.apply(&x).unwrap();
        let ty = op.apply(&y).unwrap();
        let scale = lhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (a * tx[i] + b * ty[i])).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn layout_roundtrip(bd in 1usize..5, ba in 1usize..5, f in 1usize..6, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let layout = BlockLayout::new(bd * f, ba * f, f).unwrap();
        let img: Vec<f64> = (0..layout.image_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let blocks = partition_blocks(&img, &layout).unwrap();
        prop_assert_eq!(blocks.len(), bd * ba);
        prop_assert_eq!(reassemble_blocks(&blocks, &layout).unwrap(), img);
    }

    #[test]
    fn rsnr_scale_invariant(k in 0.01f64..100.0, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e: Vec<f64> = x.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        let xs: Vec<f64> = x.iter().map(|v| v * k).collect();
        let es: Vec<f64> = e.iter().map(|v| v * k).collect();
        prop_assert!((rsnr(&e, &x).unwrap() - rsnr(&es, &xs).unwrap()).abs() < 1e-10);
    }
}
