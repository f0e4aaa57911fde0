//! Hour-ahead demand response for a home with battery storage and rooftop PV.

pub mod config;
pub mod data;
pub mod domain;
pub mod error;
pub mod forecast;
pub mod forecast_milp;
pub mod imitation;
pub mod maddpg;
pub mod milp;
pub mod nn;
pub mod report;
pub mod sim;

pub use domain::{
    ess_level_update, res_energy, slot_cost, slot_cost_signed, DayProfile, EssMode, EssState, SignedEssAction,
    SlotDispatch, SystemParams, FEAS_TOL,
};
pub use error::{Error, Result};
pub use milp::{build_day_model, brute_force_oracle, solve_milp, MilpModel, OptimalDispatch};
