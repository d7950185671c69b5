//! Shared vocabulary: subject records, group labels, method names.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-group labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Group::A),
            "B" | "b" => Ok(Group::B),
            other => Err(Error::InvalidInput(format!(
                "unknown group label {other:?} (expected A or B)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Group::A => "A",
            Group::B => "B",
        }
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One subject's region-by-time observations (rows = time points).
#[derive(Debug, Clone)]
pub struct SubjectData {
    pub id: String,
    pub group: Group,
    pub data: Array2<f64>,
}

/// Inference method. `R3` is the full procedure; the two `Rs*` variants drop
/// one ingredient each; `Standard` is the single-fit difference-of-proportions
/// baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    R3,
    Standard,
    RsRe,
    RsRp,
}

impl Method {
    /// (use_resampling, use_random_penalty, use_random_effects)
    pub fn flags(&self) -> (bool, bool, bool) {
        match self {
            Method::R3 => (true, true, true),
            Method::Standard => (false, false, false),
            Method::RsRe => (true, false, true),
            Method::RsRp => (true, true, false),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "r3" => Ok(Method::R3),
            "standard" => Ok(Method::Standard),
            "rs-re" | "rs_re" => Ok(Method::RsRe),
            "rs-rp" | "rs_rp" => Ok(Method::RsRp),
            other => Err(Error::InvalidInput(format!(
                "unknown method {other:?} (expected r3, standard, rs-re or rs-rp)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::R3 => "r3",
            Method::Standard => "standard",
            Method::RsRe => "rs-re",
            Method::RsRp => "rs-rp",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
