//! The three-meter, nine-period worked example, with its reference solution
//! tables for golden tests.

use crate::model::{AnonymizedInstance, ReadingMatrix, Wh};

/// Pseudonymized readings, one row per period.
pub const PERIODS: [[Wh; 3]; 9] = [
    [117, 104, 362],
    [89, 50, 64],
    [25, 119, 86],
    [23, 25, 149],
    [86, 140, 49],
    [36, 87, 117],
    [42, 146, 108],
    [24, 83, 92],
    [56, 24, 87],
];

pub const TOTALS: [Wh; 3] = [991, 473, 926];

/// The three value-distinct joint solutions, each as one row per meter.
pub const JOINT_SOLUTIONS: [[[Wh; 9]; 3]; 3] = [
    [
        [362, 64, 119, 23, 140, 36, 108, 83, 56],
        [117, 50, 25, 25, 49, 117, 42, 24, 24],
        [104, 89, 86, 149, 86, 87, 146, 92, 87],
    ],
    [
        [362, 64, 86, 25, 140, 36, 108, 83, 87],
        [117, 50, 25, 23, 49, 87, 42, 24, 56],
        [104, 89, 119, 149, 86, 117, 146, 92, 24],
    ],
    [
        [362, 89, 86, 25, 140, 36, 146, 83, 24],
        [117, 50, 25, 23, 49, 87, 42, 24, 56],
        [104, 64, 119, 149, 86, 117, 108, 92, 87],
    ],
];

/// The 22 value sequences summing to meter 1's total.
pub const RELAXED_SOLUTIONS: [[Wh; 9]; 22] = [
    [362, 64, 119, 23, 140, 36, 108, 83, 56],
    [117, 64, 119, 149, 140, 117, 146, 83, 56],
    [362, 64, 119, 25, 49, 87, 146, 83, 56],
    [362, 64, 25, 149, 86, 117, 108, 24, 56],
    [362, 50, 119, 149, 49, 36, 146, 24, 56],
    [362, 89, 86, 25, 86, 117, 146, 24, 56],
    [362, 89, 86, 25, 86, 87, 108, 92, 56],
    [362, 89, 25, 149, 140, 36, 42, 92, 56],
    [362, 50, 86, 23, 140, 36, 146, 92, 56],
    [362, 64, 25, 149, 140, 36, 108, 83, 24],
    [362, 89, 86, 25, 140, 36, 146, 83, 24],
    [362, 64, 86, 23, 86, 117, 146, 83, 24],
    [362, 64, 119, 25, 140, 87, 146, 24, 24],
    [362, 64, 86, 149, 49, 87, 146, 24, 24],
    [362, 89, 119, 23, 49, 87, 146, 92, 24],
    [362, 50, 119, 25, 86, 87, 146, 92, 24],
    [362, 64, 86, 25, 140, 36, 108, 83, 87],
    [362, 64, 119, 149, 49, 36, 42, 83, 87],
    [362, 89, 25, 23, 140, 36, 146, 83, 87],
    [362, 64, 119, 23, 49, 117, 146, 24, 87],
    [362, 89, 25, 25, 86, 117, 108, 92, 87],
    [362, 64, 119, 23, 49, 87, 108, 92, 87],
];

/// The instance in its reference order.
pub fn instance() -> AnonymizedInstance {
    AnonymizedInstance::new(
        PERIODS.iter().map(|p| p.to_vec()).collect(),
        TOTALS.to_vec(),
    )
    .expect("embedded example is consistent")
}

/// Readings arranged by the first joint solution, taken as the true assignment.
pub fn ground_truth_matrix() -> ReadingMatrix {
    ReadingMatrix::from_rows(JOINT_SOLUTIONS[0].iter().map(|r| r.to_vec()).collect())
        .expect("embedded example is rectangular")
}
