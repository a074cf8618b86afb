use faer::Mat;
use proptest::prelude::*;
use ukpca::io::{parse_samples, read_samples, write_matrix};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, any::<f64>().prop_filter("finite", |x| x.is_finite())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn written_matrices_read_back_exactly(rows in 1usize..12, cols in 1usize..5, vals in prop::collection::vec(finite(), 60)) {
        let a = Mat::from_fn(rows, cols, |i, j| vals[(i * cols + j) % vals.len()]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let header: Vec<String> = (0..cols).map(|j| format!("c{j}")).collect();
        write_matrix(&path, &header, a.as_ref()).unwrap();
        let s = read_samples(&path).unwrap();
        prop_assert_eq!((s.len(), s.dim()), (rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                prop_assert_eq!(s.point(i)[j].to_bits(), a[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn ragged_rows_report_their_line(width in 2usize..5, good in 1usize..8) {
        let mut text = String::new();
        for _ in 0..good {
            text.push_str(&vec!["1.5"; width].join(","));
            text.push('\n');
        }
        text.push_str(&vec!["2"; width - 1].join(","));
        text.push('\n');
        match parse_samples(text.as_bytes(), std::path::Path::new("r.csv")) {
            Err(ukpca::CliError::Parse { line, .. }) => prop_assert_eq!(line, good as u64 + 1),
            other => prop_assert!(false, "{:?}", other),
        }
    }
}
