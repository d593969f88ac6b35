#![no_main]

use elicit_core::assurance::{PriorSpec, TrialDesign};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = serde_json::from_slice::<TrialDesign>(data) {
        if d.validate().is_ok() {
            let _ = elicit_core::power(&d, 0.5);
        }
    }
    let _ = serde_json::from_slice::<PriorSpec>(data);
});
