#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(net) = voltguard::network::parse_case(text) {
            // Anything accepted must survive a write/parse round trip.
            let again = voltguard::network::parse_case(&voltguard::network::write_case(&net)).unwrap();
            assert_eq!(again.len(), net.len());
        }
    }
});
