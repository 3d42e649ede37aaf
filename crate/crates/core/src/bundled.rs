//! Task sets and plant models shipped with the crate.

use crate::control::PlantFile;
use crate::taskmodel::TaskSet;

pub const TAB1_JSON: &str = include_str!("../configs/tab1.json");
pub const TAB2_JSON: &str = include_str!("../configs/tab2.json");
pub const TAB3_LOW_JSON: &str = include_str!("../configs/tab3_low.json");
pub const TAB3_HIGH_JSON: &str = include_str!("../configs/tab3_high.json");
pub const PLANTS_JSON: &str = include_str!("../configs/plants.json");

/// One victim with menu {4, 5} and two untrusted tasks.
pub fn tab1() -> TaskSet {
    TaskSet::from_json(TAB1_JSON).expect("bundled task set is valid")
}

/// Zero-slack example with menu {2, 3}.
pub fn tab2() -> TaskSet {
    TaskSet::from_json(TAB2_JSON).expect("bundled task set is valid")
}

/// Automotive set (ESP, TTC, CC, SC) with three untrusted tasks.
pub fn tab3_low() -> TaskSet {
    TaskSet::from_json(TAB3_LOW_JSON).expect("bundled task set is valid")
}

/// Same automotive set with two extra untrusted tasks.
pub fn tab3_high() -> TaskSet {
    TaskSet::from_json(TAB3_HIGH_JSON).expect("bundled task set is valid")
}

pub fn plants() -> PlantFile {
    PlantFile::from_json(PLANTS_JSON).expect("bundled plant file is valid")
}

/// Looks up a bundled task set by short name.
pub fn taskset_by_name(name: &str) -> Option<TaskSet> {
    match name {
        "tab1" => Some(tab1()),
        "tab2" => Some(tab2()),
        "tab3-low" | "tab3_low" => Some(tab3_low()),
        "tab3-high" | "tab3_high" => Some(tab3_high()),
        _ => None,
    }
}
