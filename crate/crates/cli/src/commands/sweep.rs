//! Spectral gap of the quantum Metropolis-Hastings channel over a
//! (detuning, time) grid.

use std::io::Write;

use rayon::prelude::*;

use rydgen::mcmc::{channel_matrix, spectral_gap, stationary_distribution, Channel, Sampler};
use rydgen::quench::Quench;

use super::Context;
use crate::config::RunConfig;
use crate::error::CliError;

/// Gap of the depth-1 quantum channel at detuning `delta` and time `t`.
pub fn gap_at(cfg: &RunConfig, delta: f64, t: f64) -> Result<f64, CliError> {
    let mut params = cfg.params()?;
    params.delta = delta;
    let spec = cfg.quench_spec(&params, t)?;
    let sampler = Sampler::quantum(Quench::with_tolerance(spec, cfg.quench.tol)?)?;
    let channel = Channel::new(sampler, cfg.sweep.tau, std::sync::Arc::new(params.quadratic_energy()), 1)?;
    let mu = stationary_distribution(&channel)?;
    Ok(spectral_gap(&channel_matrix(&channel)?, Some(&mu.probs))?)
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    // surface configuration problems once rather than at every point
    cfg.params()?;
    let points: Vec<(f64, f64)> =
        cfg.sweep.deltas().into_iter().flat_map(|d| cfg.sweep.times().into_iter().map(move |t| (d, t))).collect();
    let gaps: Vec<Result<f64, CliError>> = points.par_iter().map(|&(d, t)| gap_at(cfg, d, t)).collect();
    let mut failed = 0;
    ctx.write("phase_sweep.csv", |w| {
        writeln!(w, "delta,t,gap")?;
        for ((d, t), g) in points.iter().zip(&gaps) {
            match g {
                Ok(g) => writeln!(w, "{d:?},{t:?},{g:?}")?,
                Err(e) => {
                    failed += 1;
                    eprintln!("warning: delta={d:?} t={t:?}: {e}");
                    writeln!(w, "{d:?},{t:?},nan")?
                }
            }
        }
        Ok(())
    })?;
    eprintln!("phase sweep: {} points, {failed} failed, wrote {}", points.len(), ctx.path("phase_sweep.csv").display());
    Ok(())
}
