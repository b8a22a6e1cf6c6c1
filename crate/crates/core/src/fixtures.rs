//! Bundled example systems.

use crate::model::PhasedSystem;
use crate::specfile::{parse_spec_str, SystemSpec};

pub const EXAMPLE1: &str = include_str!("../fixtures/example1.toml");
pub const EXAMPLE2: &str = include_str!("../fixtures/example2.toml");
pub const EXAMPLE3: &str = include_str!("../fixtures/example3.toml");

/// Fixture by name (`example1`, `example2`, `example3`).
pub fn spec(name: &str) -> Option<SystemSpec> {
    let text = match name {
        "example1" => EXAMPLE1,
        "example2" => EXAMPLE2,
        "example3" => EXAMPLE3,
        _ => return None,
    };
    Some(parse_spec_str(text).expect("bundled fixture parses"))
}

/// Three units; series, parallel, then A in series with (B parallel C).
pub fn example1() -> PhasedSystem {
    spec("example1").unwrap().system
}

/// Five Weibull units with late entrants; needs relaxed meta-types.
pub fn example2() -> PhasedSystem {
    spec("example2").unwrap().system
}

/// Ten units of four physical types over five phases.
pub fn example3() -> PhasedSystem {
    spec("example3").unwrap().system
}
