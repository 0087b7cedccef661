use std::io::Write;

use rydgen::mcmc::{channel_matrix, proposal_matrix, write_kernel_csv};

use super::Context;
use crate::error::CliError;

/// Writes the `[channel]` sampler's proposal kernel and the one-step channel
/// kernel as `row,col,probability` CSVs.
pub fn run(ctx: &Context) -> Result<(), CliError> {
    let channel = ctx.cfg.channel()?;
    let proposal = proposal_matrix(channel.sampler(), channel.n())?;
    let step = channel_matrix(&channel)?;
    for (name, p) in [("proposal_kernel.csv", &proposal), ("channel_kernel.csv", &step)] {
        let mut buf = Vec::new();
        write_kernel_csv(p, &mut buf)?;
        ctx.write(name, |w| w.write_all(&buf))?;
    }
    eprintln!("wrote {}x{} kernels to {}", step.nrows(), step.ncols(), ctx.out.display());
    Ok(())
}
