#![no_main]

use elicit_core::{Distribution, EvalKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(d) = serde_json::from_slice::<Distribution>(data) else { return };
    let text = serde_json::to_string(&d).expect("valid distribution serializes");
    let back: Distribution = serde_json::from_str(&text).expect("serialized distribution parses");
    assert_eq!(back, d);
    for p in [0.01, 0.5, 0.99] {
        let _ = d.evaluate(EvalKind::Quantile, p);
    }
    let _ = d.cdf(0.0);
    let _ = d.pdf(0.0);
});
