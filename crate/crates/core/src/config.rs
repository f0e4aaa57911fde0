//! Run configuration: physical constants and training hyperparameters. Every field
//! has a default, so an empty file is a valid configuration.

use serde::{Deserialize, Serialize};

use crate::domain::SystemParams;
use crate::error::Result;
use crate::forecast::ForecastConfig;
use crate::imitation::ImitationConfig;
use crate::maddpg::MaddpgConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub system: SystemParams,
    pub forecast: ForecastConfig,
    pub imitation: ImitationConfig,
    pub maddpg: MaddpgConfig,
    /// Months held out for testing at the end of the data.
    pub test_months: u32,
    /// Months of synthetic data to generate.
    pub months: u32,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            system: SystemParams::default(),
            forecast: ForecastConfig::default(),
            imitation: ImitationConfig::default(),
            maddpg: MaddpgConfig::default(),
            test_months: 1,
            months: 12,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()
    }
}
