//! A fully scored sample assessment for the bundled catalog.

use crate::scoring::Assessment;

/// Leaf scores for every assessment issue of the bundled catalog.
pub const WORKED_EXAMPLE_ASSESSMENT_JSON: &str = include_str!("../fixtures/worked-example.json");

pub fn worked_example_assessment() -> Assessment {
    Assessment::from_json(WORKED_EXAMPLE_ASSESSMENT_JSON).expect("fixture is valid")
}
