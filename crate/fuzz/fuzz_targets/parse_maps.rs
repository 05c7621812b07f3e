#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(maps) = ifpc::turbojet::maps::parse_maps(text, "fuzz.map") {
        if maps.validate().is_ok() {
            let again = ifpc::turbojet::maps::parse_maps(&maps.to_text(), "round-trip").expect("serialised maps parse");
            assert_eq!(again, maps);
        }
    }
});
