mod common;

use common::{fixture, local_classes, CLASSES};
use edgekt::metrics::{evaluation_from_confusion, format_confusion_csv, parse_confusion_csv};

#[test]
fn fixture_rows_are_full_test_classes() {
    let m = fixture();
    assert!(m.row_sums().iter().all(|&s| s == 1000));
    assert_eq!(m.total(), 10_000);
    assert_eq!(m.diagonal_sum(), 6497);
}

#[test]
fn fixture_accuracies() {
    let eval = evaluation_from_confusion(fixture(), &local_classes());
    assert_eq!(eval.combined_acc, 0.6497);
    assert_eq!(eval.local_acc, 0.9515);
    assert_eq!(eval.remote_acc, 2691.0 / 6000.0);
    let recombined = (4000.0 * eval.local_acc + 6000.0 * eval.remote_acc) / 10_000.0;
    assert!((recombined - eval.combined_acc).abs() < 1e-15);
}

#[test]
fn fixture_survives_csv_round_trip() {
    let names: Vec<String> = CLASSES.iter().map(|s| s.to_string()).collect();
    let text = format_confusion_csv(&fixture(), &names).unwrap();
    assert_eq!(text.lines().next().unwrap(), CLASSES.join(","));
    assert_eq!(text.lines().nth(7).unwrap(), "2,0,4,7,5,6,961,9,4,2");
    let (parsed_names, parsed) = parse_confusion_csv(&text).unwrap();
    assert_eq!(parsed_names, names);
    assert_eq!(parsed, fixture());
}
