#![no_main]

use elicit_core::doseresponse::DoseElicitation;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(e) = serde_json::from_slice::<DoseElicitation>(data) else { return };
    let _ = e.validate();
});
