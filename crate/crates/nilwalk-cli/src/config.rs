//! Experiment configuration: JSON wire format, strict parsing, and the
//! content hash stamped into every emitted artifact.

use nilwalk_core::affine::FiniteMeasure;
use nilwalk_core::schema::NilGroupSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Tunable knobs shared by the commands; every field is optional and each
/// command documents which ones it reads.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// convolution power / walk length
    pub m: Option<usize>,
    /// schedule of walk lengths (dichotomy, decay tables)
    pub schedule: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    /// deviation threshold for witness reduction
    pub t: Option<f64>,
    /// Hoelder exponent
    pub alpha: Option<f64>,
    /// mass-capture rate for the center-action support estimate
    pub kappa: Option<f64>,
    /// large-deviation margin / return-time diagnostic margin
    pub omega: Option<f64>,
    /// half-width of the integer frequency box
    pub frequency_box: Option<i64>,
    /// support-size cap for exact convolutions
    pub cap: Option<usize>,
    /// truncation radius for frequency-space operators
    pub radius: Option<i64>,
    /// start point in exact rational coordinates, e.g. ["1/2", "0", "1/3"]
    pub start: Option<Vec<String>>,
    /// several start points (dichotomy table)
    pub starts: Option<Vec<Vec<String>>>,
    /// start point in float coordinates (for irrational starts)
    pub start_float: Option<Vec<f64>>,
    pub starts_float: Option<Vec<Vec<f64>>>,
    /// denominator bound for rationalization
    pub q_max: Option<i64>,
    /// height bound for subgroup detection
    pub height: Option<i64>,
    /// quadrature resolution per coordinate
    pub resolution: Option<usize>,
    /// non-concentration scales
    pub eps: Option<f64>,
    pub tau: Option<f64>,
    pub delta: Option<f64>,
    /// extra random hyperplanes for the non-concentration scan
    pub hyperplanes: Option<usize>,
    /// finite-group order for labelled commands (cyclic group)
    pub group_order: Option<usize>,
    /// per-atom group labels
    pub labels: Option<Vec<usize>>,
    /// number-of-returns per trial
    pub returns: Option<usize>,
    /// convolution power for the block-triangular center measure
    pub k: Option<usize>,
    /// modulus threshold separating "decaying" from "obstructed"
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// name of a registered scenario...
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// ...or an inline group schema plus generator measure
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<NilGroupSchema>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<FiniteMeasure>,
    #[serde(default)]
    pub params: Params,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Content hash of the canonical serialization; stamped into artifacts.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}
