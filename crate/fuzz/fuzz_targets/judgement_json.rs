#![no_main]

use elicit_core::fit::fit_judgement;
use elicit_core::{Family, Judgement};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(j) = serde_json::from_slice::<Judgement>(data) else { return };
    if let Ok(targets) = j.to_targets() {
        assert!(targets.iter().all(|t| t.p > 0.0 && t.p < 1.0 && t.x.is_finite()));
        let _ = fit_judgement(&j, &[Family::Normal], None);
    }
});
