use matsketch::io::{
    file_digest, open_row_stream, parse_csv, parse_matrix_market, read_matrix, write_binary, write_csv,
    write_matrix_market, MatrixFormat,
};
use matsketch::linalg::DenseMatrix;
use matsketch::rng::derive_rng;
use matsketch::stream::collect_matrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn bits(a: &DenseMatrix) -> Vec<u64> {
    a.as_slice().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn binary_round_trip_is_bit_identical() {
    let mut rng = derive_rng(12, 0);
    let a = DenseMatrix::from_fn(100, 50, |_, _| rng.sample::<f64, _>(StandardNormal) * 1e3);
    let dir = tempfile::tempdir().unwrap();
    let (p, q) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    write_binary(&p, &a).unwrap();
    let back = read_matrix(&p, MatrixFormat::Auto).unwrap();
    assert_eq!(back.shape(), (100, 50));
    assert_eq!(bits(&back), bits(&a));
    write_binary(&q, &back).unwrap();
    assert_eq!(file_digest(&p).unwrap(), file_digest(&q).unwrap());
    let streamed = collect_matrix(open_row_stream(&p, MatrixFormat::Binary).unwrap().as_mut()).unwrap();
    assert_eq!(bits(&streamed), bits(&a));
}

#[test]
fn text_formats_agree_with_binary() {
    let a = DenseMatrix::from_fn(7, 3, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) - 0.5);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    let mtx = dir.path().join("a.mtx");
    write_csv(&csv, &a).unwrap();
    write_matrix_market(&mtx, &a).unwrap();
    assert_eq!(bits(&read_matrix(&csv, MatrixFormat::Auto).unwrap()), bits(&a));
    assert_eq!(bits(&read_matrix(&mtx, MatrixFormat::Auto).unwrap()), bits(&a));
    let streamed = collect_matrix(open_row_stream(&csv, MatrixFormat::Csv).unwrap().as_mut()).unwrap();
    assert_eq!(bits(&streamed), bits(&a));
}

#[test]
fn small_text_inputs() {
    assert_eq!(parse_csv("1,0\n0,1".as_bytes()).unwrap(), DenseMatrix::identity(2));
    let dup = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 2.0\n";
    assert!(matches!(parse_matrix_market(dup.as_bytes()), Err(matsketch::Error::Parse { line: 4, .. })));
    assert!(matches!(parse_csv("1,2\n3\n".as_bytes()), Err(matsketch::Error::ShapeMismatch(_))));
}

proptest! {
    #[test]
    fn csv_round_trip(m in 1usize..8, n in 1usize..8, seed in any::<u64>()) {
        let mut rng = derive_rng(seed, 0);
        let a = DenseMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal) * 10f64.powi(rng.random_range(-8..8)));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(&p, &a).unwrap();
        prop_assert_eq!(bits(&read_matrix(&p, MatrixFormat::Csv).unwrap()), bits(&a));
    }
}
