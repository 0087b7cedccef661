use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rydgen::autoenc::{init_model, Trainer};
use rydgen::designspace::load_dataset;
use rydgen::lattice::{blockade_radius, unit_disk_graph};
use rydgen::mcmc::Channel;

use super::Context;
use crate::error::CliError;

pub const LOSS_HEADER: &str = "epoch,rec,energy,is,dist,total";

/// Model initialisation uses `train.seed`; batch order and channel noise
/// use the run seed.
pub fn run(ctx: &Context, data: &Path) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let designs = load_dataset(data)?;
    let first = designs.first().ok_or_else(|| CliError::Usage(format!("{}: no .pgm or .csv designs", data.display())))?;
    let (h, w) = (first.height(), first.width());
    if let Some(d) = designs.iter().find(|d| (d.height(), d.width()) != (h, w)) {
        return Err(CliError::Usage(format!("dataset mixes {h}x{w} and {}x{} designs", d.height(), d.width())));
    }
    let params = cfg.params()?;
    let tc = &cfg.train;
    let channel = Channel::new(cfg.sampler(cfg.channel.sampler)?, tc.tau, cfg.energy()?, tc.depth)?;
    let objective = cfg.objective(h, w)?;
    let graph = if tc.w_is > 0.0 {
        Some(unit_disk_graph(&params.atoms, blockade_radius(params.c6, params.omega)?)?)
    } else {
        None
    };
    let model = init_model(h, w, &tc.hidden, params.n(), tc.seed)?;
    let mut trainer = Trainer::new(model, tc.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::with_capacity(tc.epochs);
    for _ in 0..tc.epochs {
        rows.push(trainer.train_epoch(&designs, &channel, &objective, graph.as_ref(), &mut rng)?);
    }
    ctx.write("loss.csv", |w| {
        writeln!(w, "{LOSS_HEADER}")?;
        for (e, l) in rows.iter().enumerate() {
            writeln!(
                w,
                "{},{:?},{:?},{:?},{:?},{:?}",
                e + 1,
                l.reconstruction,
                l.energy_match,
                l.is_penalty,
                l.distance_match,
                l.total
            )?;
        }
        Ok(())
    })?;
    let path = ctx.path("model.json");
    trainer.model().save(&path)?;
    if let (Some(a), Some(b)) = (rows.first(), rows.last()) {
        eprintln!("trained {} epochs: reconstruction {:.4} -> {:.4}, wrote {}", rows.len(), a.reconstruction, b.reconstruction, path.display());
    }
    Ok(())
}
