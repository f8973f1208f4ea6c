#![no_main]

use edgecache::RequestTrace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(trace) = RequestTrace::parse(text) {
        let again = RequestTrace::parse(&trace.to_text()).expect("printed trace must parse");
        assert_eq!(again.requests, trace.requests);
    }
});
