#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = elicit_core::api::parse_f64_list(text) {
        assert!(v.iter().all(|x| x.is_finite()));
    }
    if text.len() < 64 {
        if let Ok(g) = elicit_cli::parse_grid(text) {
            assert!(g.iter().all(|x| x.is_finite()));
            if text.matches(':').count() == 2 {
                assert!(g.len() >= 2 && g.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
});
