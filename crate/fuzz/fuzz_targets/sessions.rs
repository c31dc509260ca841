#![no_main]

use libfuzzer_sys::fuzz_target;

use voltguard::ev::EvDefaults;

fuzz_target!(|data: &[u8]| {
    let Some((&stations, rest)) = data.split_first() else { return };
    if let Ok(text) = std::str::from_utf8(rest) {
        let _ = voltguard::env::parse_sessions(text, &EvDefaults::default(), usize::from(stations % 8));
    }
});
