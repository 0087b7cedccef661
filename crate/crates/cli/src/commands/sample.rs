use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use rydgen::autoenc::decode_design;
use rydgen::mcmc::run_chain_indexed;

use super::{load_model, start_latents, Context};
use crate::error::CliError;

pub const SAMPLES_HEADER: &str = "sample,start,latent,energy,design";

/// One chain of `depth` channel steps per sample, started from
/// `starts[k % len]` on stream `seed ^ k`.
pub fn run(ctx: &Context, model: &Path, count: usize, data: Option<&Path>) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let model = load_model(model)?;
    let channel = cfg.channel()?;
    if channel.n() != model.latent_n() {
        return Err(CliError::Usage(format!(
            "model latent has {} bits but the lattice has {} atoms",
            model.latent_n(),
            channel.n()
        )));
    }
    let starts = start_latents(&model, data)?;
    let chains = (0..count)
        .into_par_iter()
        .map(|k| run_chain_indexed(&channel, &starts[k % starts.len()], channel.depth(), cfg.seed, k as u64))
        .collect::<rydgen::Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(count);
    for (k, chain) in chains.iter().enumerate() {
        let last = chain.steps.last().expect("chains have at least one step");
        let design = decode_design(&model, &last.state)?;
        let pgm = format!("sample_{k:04}.pgm");
        ctx.write(&pgm, |w| design.write_pgm(w))?;
        ctx.write(&format!("chain_{k:04}.csv"), |w| chain.write_csv(w))?;
        rows.push(format!("{k},{},{},{:?},{pgm}", chain.start, last.state, last.energy));
    }
    ctx.write("samples.csv", |w| {
        writeln!(w, "{SAMPLES_HEADER}")?;
        rows.iter().try_for_each(|r| writeln!(w, "{r}"))
    })?;
    eprintln!("wrote {count} samples to {}", ctx.out.display());
    Ok(())
}
