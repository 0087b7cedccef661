use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use rydgen::designspace::{benchmark_from_costs, latent_costs, BenchmarkConfig, BenchmarkReport, BenchmarkSource};
use rydgen::mcmc::Channel;

use super::{load_model, start_latents, Context};
use crate::error::CliError;

pub const DIVERGENCE_HEADER: &str = "tau,depth,sampler,alpha,renyi_nats,kl_nats,tv";
/// Largest divergence the exact-draw self-test accepts.
pub const EXACT_TOLERANCE: f64 = 0.01;

pub fn run(ctx: &Context, model: &Path, data: Option<&Path>, exact: bool) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let b = &cfg.benchmark;
    let model = load_model(model)?;
    let (h, w) = model.shape();
    let objective = cfg.objective(h, w)?;
    let costs = latent_costs(&model, &objective)?;

    // (tau, sampler, depth) runs, every one on the run seed
    let mut channels: Vec<Channel> = Vec::new();
    let starts = if exact {
        Vec::new()
    } else {
        if data.is_none() {
            eprintln!("note: no --data given, chains start from the all-zeros latent");
        }
        let energy = cfg.energy()?;
        let samplers = if b.samplers.is_empty() { vec![cfg.channel.sampler] } else { b.samplers.clone() };
        let depths = if b.depths.is_empty() { vec![cfg.channel.depth] } else { b.depths.clone() };
        for kind in samplers {
            let sampler = cfg.sampler(kind)?;
            for &depth in &depths {
                channels.push(Channel::new(sampler.clone(), cfg.channel.tau, energy.clone(), depth)?);
            }
        }
        if let Some(ch) = channels.first() {
            if ch.n() != model.latent_n() {
                return Err(CliError::Usage(format!(
                    "model latent has {} bits but the lattice has {} atoms",
                    model.latent_n(),
                    ch.n()
                )));
            }
        }
        start_latents(&model, data)?
    };
    let jobs: Vec<(f64, Option<&Channel>)> = b
        .taus
        .iter()
        .flat_map(|&tau| {
            let per: Vec<Option<&Channel>> = if exact { vec![None] } else { channels.iter().map(Some).collect() };
            per.into_iter().map(move |c| (tau, c))
        })
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(tau, channel)| {
            let bc = BenchmarkConfig { tau, alpha: b.alpha, samples: b.samples, bins: b.bins, seed: cfg.seed };
            let source = match channel {
                Some(c) => BenchmarkSource::Channel(c),
                None => BenchmarkSource::Exact,
            };
            benchmark_from_costs(&costs, source, &starts, &bc)
        })
        .collect::<rydgen::Result<Vec<BenchmarkReport>>>()?;

    ctx.write("divergence.csv", |w| {
        writeln!(w, "{DIVERGENCE_HEADER}")?;
        for r in &reports {
            writeln!(w, "{:?},{},{},{:?},{:?},{:?},{:?}", r.tau, r.depth, r.sampler, r.alpha, r.renyi, r.kl, r.tv)?;
        }
        Ok(())
    })?;
    for r in &reports {
        ctx.write(&format!("bins_tau{:?}_{}_d{}.csv", r.tau, r.sampler, r.depth), |w| r.write_csv(w))?;
    }
    eprintln!("wrote {} benchmark runs to {}", reports.len(), ctx.out.display());
    if exact {
        let worst = reports.iter().map(|r| r.renyi).fold(0.0, f64::max);
        eprintln!("exact-draw self-test: max divergence {worst:.2e} (tolerance {EXACT_TOLERANCE})");
        if worst > EXACT_TOLERANCE {
            return Err(CliError::CheckFailed("benchmark --exact".into()));
        }
    }
    Ok(())
}
