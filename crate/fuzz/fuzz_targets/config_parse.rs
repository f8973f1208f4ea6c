#![no_main]

use edgecache::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ExperimentConfig::parse(text) {
        let again = ExperimentConfig::parse(&config.to_text()).expect("resolved config must parse");
        assert_eq!(again.to_text(), config.to_text());
    }
});
