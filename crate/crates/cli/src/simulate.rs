use ndtomo::chain::simulate_gaussian_chain;
use ndtomo::osc_forward::evolve_and_record;
use ndtomo::record::{MeasurementRecord, SystemSpec};
use ndtomo::semicontinuous::{box_forward, periodic_forward};

use crate::config::LoadedConfig;
use crate::error::{CliResult, Context};

/// Records the configured true state at the configured times. The record
/// header carries the config hash.
pub fn simulate(loaded: &LoadedConfig) -> CliResult<MeasurementRecord> {
    let cfg = &loaded.config;
    let times = cfg.times()?;
    let grids = cfg.grids()?;
    let mut record = match &cfg.system {
        SystemSpec::Oscillator(sys) => {
            let rho = cfg.build_state()?;
            evolve_and_record(&rho, sys, &times, &grids, cfg.shots, cfg.seed)
                .context("simulating the oscillator record")?
        }
        SystemSpec::Chain(sys) => {
            let (mean, cov, cutoff) = cfg.chain_gaussian()?;
            let shots = cfg.shots.expect("validated");
            simulate_gaussian_chain(sys, &mean, &cov, cutoff, &times, &grids, shots, cfg.seed)
                .context("simulating the chain record")?
        }
        SystemSpec::Periodic(sys) => {
            let rho = cfg.build_state()?;
            periodic_forward(&rho, sys, &times, &grids, cfg.shots, cfg.seed)
                .context("simulating the ring record")?
        }
        SystemSpec::Box(sys) => {
            let rho = cfg.build_state()?;
            box_forward(&rho, sys, &times, &grids, cfg.shots, cfg.seed)
                .context("simulating the box record")?
        }
    };
    let prov = &mut record.header.provenance;
    prov.insert("config_sha256".into(), loaded.hash.clone());
    prov.insert(
        "generator".into(),
        format!("ndtomo-cli {}", env!("CARGO_PKG_VERSION")),
    );
    prov.insert("seed".into(), cfg.seed.to_string());
    Ok(record)
}
