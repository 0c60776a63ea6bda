//! Command-line front end for the twin-pair effect estimators.
//!
//! The `pairfx` binary exposes four subcommands: `estimate` analyses a CSV
//! dataset, `simulate` runs a Monte Carlo study from a generator
//! configuration, `verify` replays the oracle identities on the shipped
//! fixture worlds, and `gen-data` writes synthetic datasets and
//! configurations. Every command is deterministic given its full flag set,
//! so repeated invocations produce byte-identical output.

pub mod estimate;
pub mod gen_data;
pub mod report;
pub mod simulate;
pub mod verify;

/// Resolves a seed: an explicit flag wins, then `PAIRFX_SEED`, then nothing.
pub fn resolve_seed(flag: Option<u64>) -> anyhow::Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("PAIRFX_SEED") {
        Ok(raw) => raw
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| anyhow::anyhow!("PAIRFX_SEED must be an unsigned integer, got `{raw}`")),
        Err(_) => Ok(None),
    }
}
