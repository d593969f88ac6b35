#![no_main]

use elicit_core::Prior;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(p) = serde_json::from_slice::<Prior>(data) else { return };
    if p.validate().is_ok() {
        let c = p.cdf(0.0);
        assert!((0.0..=1.0).contains(&c) || c.is_nan());
        let _ = p.quantile(0.5);
        let _ = p.sample(8, 1);
    }
});
