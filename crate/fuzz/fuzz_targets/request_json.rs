#![no_main]

use elicit_core::api::{AssuranceRequest, DoseRequest, FitRequest, OcRequest, PoolRequest, TransformRequest};
use libfuzzer_sys::fuzz_target;

// Parsing only: running a request can legitimately take seconds.
fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<FitRequest>(data);
    let _ = serde_json::from_slice::<PoolRequest>(data);
    let _ = serde_json::from_slice::<TransformRequest>(data);
    let _ = serde_json::from_slice::<DoseRequest>(data);
    let _ = serde_json::from_slice::<AssuranceRequest>(data);
    let _ = serde_json::from_slice::<OcRequest>(data);
});
