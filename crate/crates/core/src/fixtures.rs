//! Shipped data files compiled into the library: the default and mini
//! catalogs, the six gold-standard scenarios and the three reference wire
//! documents. Paths on disk are available too for tools that want them.

use std::path::PathBuf;
use std::sync::OnceLock;

use crate::catalog::{load_catalog, Catalog};

macro_rules! fixture {
    ($path:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/", $path))
    };
}

pub const DEFAULT_CATALOG: &str = fixture!("catalog/default.json");
pub const MINI_CATALOG: &str = fixture!("catalog/mini.json");

pub const LISTING_WEATHER: &str = fixture!("wire/listing1.json");
pub const LISTING_ALARM: &str = fixture!("wire/listing2.json");
pub const LISTING_RULE: &str = fixture!("wire/listing3.json");

pub const GOLD: [(&str, &str); 6] = [
    ("S1", fixture!("gold/s1.json")),
    ("S2", fixture!("gold/s2.json")),
    ("S3", fixture!("gold/s3.json")),
    ("S4", fixture!("gold/s4.json")),
    ("S5", fixture!("gold/s5.json")),
    ("S6", fixture!("gold/s6.json")),
];

/// Snapshot scripts that drive each scenario's gold rule in the engine.
pub const FEED_SCRIPTS: [(&str, &str); 6] = [
    ("S1", fixture!("feeds/scripts/s1.json")),
    ("S2", fixture!("feeds/scripts/s2.json")),
    ("S3", fixture!("feeds/scripts/s3.json")),
    ("S4", fixture!("feeds/scripts/s4.json")),
    ("S5", fixture!("feeds/scripts/s5.json")),
    ("S6", fixture!("feeds/scripts/s6.json")),
];

pub const DEFAULT_MODEL: &str = fixture!("models/default.json");

/// Root of the `fixtures/` directory in the source tree.
pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn default_catalog() -> Catalog {
    static CELL: OnceLock<Catalog> = OnceLock::new();
    CELL.get_or_init(|| load_catalog(DEFAULT_CATALOG).expect("default catalog is valid"))
        .clone()
}

/// Two sensors and two effectors with two-valued attributes, small enough
/// to enumerate every voting session over it.
pub fn mini_catalog() -> Catalog {
    static CELL: OnceLock<Catalog> = OnceLock::new();
    CELL.get_or_init(|| load_catalog(MINI_CATALOG).expect("mini catalog is valid"))
        .clone()
}

pub fn gold_source(scenario_id: &str) -> Option<&'static str> {
    GOLD.iter()
        .find(|(id, _)| id.eq_ignore_ascii_case(scenario_id))
        .map(|(_, text)| *text)
}
