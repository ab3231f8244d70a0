//! Configuration, orchestration and artifact output for the `rodeo` binary.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_config_with, Mode, Overrides, RunConfig, SchemaError};
pub use run::{run, RunOutcome};

use rodeo::NumericPolicy;

/// Environment variable selecting the tolerance profile.
pub const POLICY_ENV: &str = "RODEO_NUMERIC_POLICY";

/// Resolves the tolerance profile from `RODEO_NUMERIC_POLICY`; unset means default.
pub fn policy_from_env() -> Result<NumericPolicy, SchemaError> {
    match std::env::var(POLICY_ENV) {
        Ok(name) => NumericPolicy::from_profile(&name).ok_or_else(|| SchemaError {
            path: POLICY_ENV.into(),
            message: format!("unknown profile '{name}' (known: default, strict)"),
        }),
        Err(_) => Ok(NumericPolicy::default()),
    }
}
