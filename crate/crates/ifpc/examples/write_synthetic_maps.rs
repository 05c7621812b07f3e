//! Writes the built-in synthetic maps in the text map format.
//!
//! Usage: `cargo run --example write_synthetic_maps -- <path>`

use ifpc::turbojet::maps::{CharacteristicMaps, SyntheticSpec};

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "scenarios/synthetic.map".into());
    let maps = CharacteristicMaps::synthetic(&SyntheticSpec::default());
    if let Err(e) = std::fs::write(&path, maps.to_text()) {
        eprintln!("{path}: {e}");
        std::process::exit(1);
    }
}
