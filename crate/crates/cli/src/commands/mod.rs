pub mod benchmark;
pub mod check;
pub mod diffuse;
pub mod kernel;
pub mod sample;
pub mod sweep;
pub mod train;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rydgen::autoenc::{encode_latent, AutoencoderModel};
use rydgen::designspace::{load_dataset, synthetic_dataset};
use rydgen::BitString;

use crate::config::RunConfig;
use crate::error::{io_err, CliError};

pub const DEFAULT_OUT: &str = "rydgen-out";

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Context {
    /// Creates the output directory and records the resolved config in it.
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        fs::create_dir_all(&out).map_err(io_err(&out))?;
        let ctx = Context { cfg, out };
        let text = ctx.cfg.to_toml();
        ctx.write("run.toml", |w| w.write_all(text.as_bytes()))?;
        Ok(ctx)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn write(&self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
        write_file(&self.path(name), body)
    }
}

pub fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Chain starts: encoded designs from `data`, or the all-zeros latent.
pub fn start_latents(model: &AutoencoderModel, data: Option<&Path>) -> Result<Vec<BitString>, CliError> {
    match data {
        Some(dir) => {
            let designs = load_dataset(dir)?;
            if designs.is_empty() {
                return Err(CliError::Usage(format!("{}: no .pgm or .csv designs", dir.display())));
            }
            Ok(designs.iter().map(|d| encode_latent(model, d)).collect::<rydgen::Result<_>>()?)
        }
        None => Ok(vec![BitString::zeros(model.latent_n())]),
    }
}

pub fn load_model(path: &Path) -> Result<AutoencoderModel, CliError> {
    Ok(AutoencoderModel::load(path)?)
}

pub fn make_dataset(ctx: &Context, count: usize, height: usize, width: usize) -> Result<(), CliError> {
    let designs = synthetic_dataset(count, height, width, ctx.cfg.seed)?;
    for (k, d) in designs.iter().enumerate() {
        ctx.write(&format!("design_{k:04}.pgm"), |w| d.write_pgm(w))?;
    }
    eprintln!("wrote {count} designs to {}", ctx.out.display());
    Ok(())
}
