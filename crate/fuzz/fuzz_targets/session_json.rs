#![no_main]

use elicit_core::session::RecordFormat;
use elicit_core::{Requester, Session};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(s) = Session::from_json(text) else { return };
    let again = Session::from_json(&s.to_json()).expect("saved session reloads");
    assert_eq!(again, s);
    let _ = s.visible_state(&Requester::Facilitator);
    if let Some(e) = s.experts.first() {
        let _ = s.visible_state(&Requester::Expert(e.id.clone()));
    }
    let _ = s.export_record(RecordFormat::Markdown);
});
