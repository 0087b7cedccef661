use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rydgen::autoenc::decode_design;
use rydgen::metrics::quadratic_hamming;
use rydgen::quench::diffuse;
use rydgen::BitString;

use super::{load_model, Context};
use crate::error::CliError;

pub const DIFFUSE_HEADER: &str = "z,count,hamming,quadratic_hamming,d_x";

/// Outcome counts in ascending latent index. `d_x` is left empty without a
/// model and `quadratic_hamming` for a single atom.
pub fn run(ctx: &Context, model: Option<&Path>) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let params = cfg.params()?;
    let target: BitString = cfg
        .diffuse
        .target
        .as_deref()
        .ok_or_else(|| CliError::Usage("diffuse needs a target (--target or [diffuse] target)".into()))?
        .parse()?;
    let model = model.map(load_model).transpose()?;
    if let Some(m) = &model {
        if m.latent_n() != target.len() {
            return Err(CliError::Usage(format!("model latent has {} bits, target {}", m.latent_n(), target.len())));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t = cfg.diffuse_time(params.omega);
    let result = diffuse(&params, &target, cfg.mask_detuning(params.omega), t, cfg.diffuse.shots, &mut rng)?;
    if result.preparation.independence_warning {
        eprintln!("warning: target {target} excites atoms within one blockade radius; preparation is not expected to be faithful");
    }
    eprintln!("preparation fidelity {:.6}", result.preparation.fidelity);

    let mut counts = vec![0usize; 1 << target.len()];
    for z in &result.shots {
        counts[z.index()] += 1;
    }
    let reference = model.as_ref().map(|m| decode_design(m, &target)).transpose()?;
    let mut rows = Vec::new();
    for (i, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let z = BitString::from_index(target.len(), i);
        let d_x = match (&model, &reference) {
            (Some(m), Some(x0)) => format!("{:?}", decode_design(m, &z)?.distance(x0)?),
            _ => String::new(),
        };
        // the lattice metric is defined from two sites up
        let qh = if target.len() >= 2 { format!("{:?}", quadratic_hamming(&params.atoms, &z, &target)?) } else { String::new() };
        rows.push(format!("{z},{count},{},{qh},{d_x}", z.hamming(&target)?));
    }
    ctx.write("diffuse.csv", |w| {
        writeln!(w, "{DIFFUSE_HEADER}")?;
        rows.iter().try_for_each(|r| writeln!(w, "{r}"))
    })?;
    eprintln!("{} shots over {} outcomes, t = {t:?} μs", cfg.diffuse.shots, rows.len());
    Ok(())
}
