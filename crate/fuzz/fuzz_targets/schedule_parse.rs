#![no_main]

use edgecache::ShiftSchedule;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(schedule) = ShiftSchedule::parse(text) {
        let again = ShiftSchedule::parse(&schedule.to_text()).expect("printed schedule must parse");
        assert_eq!(again, schedule);
    }
});
