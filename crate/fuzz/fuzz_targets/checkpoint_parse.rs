#![no_main]

use edgecache::sac::checkpoint::{from_json, to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ckpt) = from_json(text) {
        let json = to_json(&ckpt.params, &ckpt.config_hash).expect("loaded checkpoint must serialize");
        let again = from_json(&json).expect("serialized checkpoint must load");
        assert_eq!(again.params, ckpt.params);
    }
});
