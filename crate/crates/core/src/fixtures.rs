//! Bundled real dissolution datasets (twelve units per group, times 1..8).

use crate::data::{parse_groups, CsvFormat, DissolutionDataset};

pub const DATASET1_CSV: &str = include_str!("../data/dataset1.csv");
pub const DATASET2_CSV: &str = include_str!("../data/dataset2.csv");

fn load(src: &str) -> (DissolutionDataset, DissolutionDataset) {
    let mut groups = parse_groups(src.as_bytes(), &CsvFormat::Long).expect("bundled fixture parses");
    let test = groups.pop().expect("test group");
    let reference = groups.pop().expect("reference group");
    (reference, test)
}

/// Dataset 1: reference and test differ by a tensioactive in the medium.
pub fn dataset1() -> (DissolutionDataset, DissolutionDataset) {
    load(DATASET1_CSV)
}

/// Dataset 2: a small medium change, similarity expected.
pub fn dataset2() -> (DissolutionDataset, DissolutionDataset) {
    load(DATASET2_CSV)
}

/// Looks a bundled dataset up by name (`dataset1` / `dataset2`).
pub fn by_name(name: &str) -> Option<(DissolutionDataset, DissolutionDataset)> {
    match name {
        "dataset1" | "1" => Some(dataset1()),
        "dataset2" | "2" => Some(dataset2()),
        _ => None,
    }
}
