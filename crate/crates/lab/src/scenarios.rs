//! Scenarios shipped with the binary.

use crate::config::Scenario;
use crate::error::LabResult;

pub const BUILTIN: &[(&str, &str)] = &[
    ("selftest", include_str!("../scenarios/selftest.json")),
    ("forward", include_str!("../scenarios/forward.json")),
    ("dnmap", include_str!("../scenarios/dnmap.json")),
    ("runge", include_str!("../scenarios/runge.json")),
    ("reconstruct", include_str!("../scenarios/reconstruct.json")),
    ("reconstruct-data", include_str!("../scenarios/reconstruct-data.json")),
    ("stability", include_str!("../scenarios/stability.json")),
    ("genericity", include_str!("../scenarios/genericity.json")),
];

pub fn builtin(name: &str) -> Option<LabResult<Scenario>> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_json(text))
}
