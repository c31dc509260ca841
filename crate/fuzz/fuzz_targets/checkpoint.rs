#![no_main]

use libfuzzer_sys::fuzz_target;

use voltguard::nn::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ck) = Checkpoint::decode(text) {
            // Compared as text: NaN bit patterns are legal and never equal.
            let text = ck.encode();
            assert_eq!(Checkpoint::decode(&text).unwrap().encode(), text);
        }
    }
});
