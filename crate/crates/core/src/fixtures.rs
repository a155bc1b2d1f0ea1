//! The three example product lines shipped with the crate.

use crate::bundle::{self, Bundle};

pub const ESHOP: &str = include_str!("../fixtures/eshop.toml");
pub const TICKETMACH: &str = include_str!("../fixtures/ticketmach.toml");
pub const ALARMSYS: &str = include_str!("../fixtures/alarmsys.toml");

/// Short names accepted by [`by_name`], in report order.
pub const NAMES: [&str; 3] = ["eshop", "ticketmach", "alarmsys"];

pub fn source(name: &str) -> Option<&'static str> {
    match name.to_ascii_lowercase().as_str() {
        "eshop" => Some(ESHOP),
        "ticketmach" => Some(TICKETMACH),
        "alarmsys" => Some(ALARMSYS),
        _ => None,
    }
}

pub fn by_name(name: &str) -> Option<Bundle> {
    source(name).map(|src| bundle::parse_bundle(src).expect("shipped fixtures parse"))
}

pub fn eshop() -> Bundle {
    by_name("eshop").expect("known fixture")
}

pub fn ticketmach() -> Bundle {
    by_name("ticketmach").expect("known fixture")
}

pub fn alarmsys() -> Bundle {
    by_name("alarmsys").expect("known fixture")
}

pub fn all() -> Vec<Bundle> {
    NAMES.iter().map(|n| by_name(n).expect("known fixture")).collect()
}
