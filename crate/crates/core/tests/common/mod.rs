//! Fixtures shared by integration tests.

use std::collections::BTreeSet;

use edgekt::metrics::ConfusionMatrix;

pub const CLASSES: [&str; 10] = [
    "plane", "car", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck",
];

/// Classes held by the local agent the matrix was recorded on.
pub const LOCAL_CLASSES: [&str; 4] = ["frog", "horse", "ship", "truck"];

/// Local-only model evaluated on 1000 test images per class.
pub const LOCAL_ONLY: [[u64; 10]; 10] = [
    [537, 1, 35, 2, 13, 5, 36, 45, 193, 133],
    [5, 510, 0, 2, 3, 7, 34, 14, 103, 322],
    [52, 1, 405, 25, 50, 30, 236, 139, 48, 14],
    [15, 0, 22, 312, 26, 88, 286, 171, 52, 28],
    [13, 1, 36, 32, 452, 7, 174, 235, 43, 7],
    [6, 1, 19, 103, 18, 475, 135, 212, 18, 13],
    [2, 0, 4, 7, 5, 6, 961, 9, 4, 2],
    [1, 0, 2, 5, 8, 7, 19, 942, 7, 9],
    [4, 3, 0, 1, 1, 0, 9, 2, 953, 27],
    [3, 3, 0, 5, 0, 0, 9, 14, 16, 950],
];

pub fn fixture() -> ConfusionMatrix {
    let rows: Vec<Vec<u64>> = LOCAL_ONLY.iter().map(|r| r.to_vec()).collect();
    ConfusionMatrix::from_rows(&rows).unwrap()
}

pub fn local_classes() -> BTreeSet<usize> {
    LOCAL_CLASSES
        .iter()
        .map(|name| CLASSES.iter().position(|c| c == name).unwrap())
        .collect()
}
