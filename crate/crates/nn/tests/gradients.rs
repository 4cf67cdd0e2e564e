use dgh_nn::gradcheck::suite;

#[test]
fn every_operation_matches_finite_differences() {
    let entries = suite(17, 20).unwrap();
    let mut failed = Vec::new();
    for e in &entries {
        println!(
            "{:<22} max rel err {:.3e} over {}",
            e.name, e.report.max_relative_error, e.report.checked
        );
        if !e.passes() {
            failed.push(format!("{}: {:?}", e.name, e.report.worst));
        }
    }
    assert!(failed.is_empty(), "{failed:?}");
}

#[test]
fn backward_is_repeatable() {
    let a = suite(3, 4).unwrap();
    let b = suite(3, 4).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.report, y.report);
    }
}
