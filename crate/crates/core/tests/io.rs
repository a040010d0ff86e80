mod common;

use common::lattice_dataset;
use gwle::io::{
    read_dataset, read_dataset_from, read_targets_from, sidecar_path, write_dataset, write_dataset_to, write_fits_to,
};
use gwle::{fit_surface, FitConfig, KernelSpec, ScaleMatrix};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn csv_round_trip_is_lossless(seed in 0u64..10_000, n1 in 2usize..7, n2 in 2usize..7, p in 1usize..4) {
        let ds = lattice_dataset(n1, n2, p, 3.7, seed, |u, x| u[0].exp() * x[0] - 1e-7 * u[1] / 3.0);
        let mut buf = Vec::new();
        write_dataset_to(&ds, &mut buf).unwrap();
        let back = read_dataset_from(buf.as_slice(), true, Some(vec![n1, n2])).unwrap();
        prop_assert_eq!(back, ds);
    }
}

#[test]
fn sidecar_carries_intercept_and_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let ds = lattice_dataset(4, 5, 2, 1.0, 1, |u, _| u[0]);
    write_dataset(&ds, &path).unwrap();
    assert!(sidecar_path(&path).is_file());
    let back = read_dataset(&path, None, None).unwrap();
    assert_eq!(back, ds);
    // Without a sidecar the intercept flag defaults to false.
    std::fs::remove_file(sidecar_path(&path)).unwrap();
    let bare = read_dataset(&path, None, None).unwrap();
    assert!(!bare.intercept());
    assert_eq!(bare.lattice_sizes(), &[4, 5]);
}

#[test]
fn targets_ignore_extra_columns() {
    let text = "id,u2,u1\n7,0.2,0.1\n8,0.4,0.3\n";
    let t = read_targets_from(text.as_bytes(), 2).unwrap();
    assert_eq!(t, vec![vec![0.1, 0.2], vec![0.3, 0.4]]);
    assert!(read_targets_from("u1\n0.5\n".as_bytes(), 2).is_err());
}

#[test]
fn fit_output_marks_failed_targets() {
    let ds = lattice_dataset(6, 6, 1, 1.0, 2, |u, _| u[0] + u[1]);
    let cfg = FitConfig::new(KernelSpec::epanechnikov(), ScaleMatrix::identity(2), 0.3).unwrap();
    let targets = vec![vec![0.5, 0.5], vec![9.0, 9.0]];
    let fits = fit_surface(&ds, &targets, &cfg).unwrap();
    let mut buf = Vec::new();
    write_fits_to(&mut buf, &targets, &fits, 1).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "u1,u2,beta1,grad_1_1,grad_2_1,effective_n,flag");
    assert!(lines[1].ends_with(",well_posed"));
    assert!(lines[2].ends_with(",,,,error:insufficient_support"), "{}", lines[2]);
}
