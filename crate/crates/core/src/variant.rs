use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The five detectors compared by the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Logistic regression on the saliency map alone.
    SrLogi,
    /// Logistic regression on saliency and raw series.
    MultiSrLogi,
    /// Reservoir driven by the raw series.
    Rc,
    /// Reservoir driven by the saliency map.
    SrRc,
    /// Reservoir driven by both saliency and raw series.
    MultiSrRc,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 5] = [
        ModelVariant::SrLogi,
        ModelVariant::MultiSrLogi,
        ModelVariant::Rc,
        ModelVariant::SrRc,
        ModelVariant::MultiSrRc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::SrLogi => "sr-logi",
            ModelVariant::MultiSrLogi => "multi-sr-logi",
            ModelVariant::Rc => "rc",
            ModelVariant::SrRc => "sr-rc",
            ModelVariant::MultiSrRc => "multi-sr-rc",
        }
    }

    pub fn uses_saliency(self) -> bool {
        !matches!(self, ModelVariant::Rc)
    }

    pub fn uses_series(self) -> bool {
        matches!(
            self,
            ModelVariant::MultiSrLogi | ModelVariant::Rc | ModelVariant::MultiSrRc
        )
    }

    pub fn uses_reservoir(self) -> bool {
        matches!(
            self,
            ModelVariant::Rc | ModelVariant::SrRc | ModelVariant::MultiSrRc
        )
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown variant '{s}' (expected one of sr-logi, multi-sr-logi, rc, sr-rc, multi-sr-rc)")
            })
    }
}
