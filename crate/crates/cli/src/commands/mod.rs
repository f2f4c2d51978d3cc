pub mod estimate;
pub mod generate;
pub mod predict;
pub mod simulate;

use serde::{Deserialize, Serialize};
use ssvd::simulate::{NoiseFamily, WeightSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseArg {
    #[default]
    Gaussian,
    CenteredExponential,
    Rademacher,
}

impl From<NoiseArg> for NoiseFamily {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Gaussian => NoiseFamily::Gaussian,
            NoiseArg::CenteredExponential => NoiseFamily::CenteredExponential,
            NoiseArg::Rademacher => NoiseFamily::Rademacher,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsArg {
    #[default]
    Oracle,
    Estimated,
}

impl From<WeightsArg> for WeightSource {
    fn from(w: WeightsArg) -> Self {
        match w {
            WeightsArg::Oracle => WeightSource::Oracle,
            WeightsArg::Estimated => WeightSource::Estimated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}
