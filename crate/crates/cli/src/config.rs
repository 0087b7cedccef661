//! The run configuration file. Every section is optional; commands that
//! need a section report its absence as a usage error.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use rydgen::autoenc::TrainConfig;
use rydgen::designspace::{Objective, SyntheticFilter, DEFAULT_ALPHA, DEFAULT_ANGLES, DEFAULT_SAMPLES, DEFAULT_THRESHOLD};
use rydgen::lattice::{build_king_subgraph, parse_defect_mask, AtomArray, Defects};
use rydgen::mcmc::{Channel, Sampler};
use rydgen::metrics::DEFAULT_BINS;
use rydgen::quench::{Quench, QuenchSpec, DEFAULT_TOL};
use rydgen::rydberg::{DetuningSign, RydbergParams};
use rydgen::{BitString, Energy};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rydberg: Option<RydbergConfig>,
    #[serde(default)]
    pub quench: QuenchConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
    #[serde(default)]
    pub diffuse: DiffuseConfig,
}

/// Either a King's grid (`rows`, `cols`, `spacing`, optional defects) or an
/// explicit list of `positions`. Lengths in μm.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(default)]
    pub rows: usize,
    #[serde(default)]
    pub cols: usize,
    #[serde(default = "one")]
    pub spacing: f64,
    /// Row-major `'0'/'1'` string, `'1'` = removed site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defects: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect_density: Option<f64>,
    #[serde(default)]
    pub defect_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
}

/// Drive and interaction. Frequencies in rad/μs, `c6` in rad/μs·μm⁶.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RydbergConfig {
    pub omega: f64,
    pub delta: f64,
    pub c6: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_local: Option<Vec<f64>>,
    #[serde(default)]
    pub detuning_sign: DetuningSign,
}

/// Quench duration `t` in μs, laser phase in rad, mask detunings in rad/μs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuenchConfig {
    pub t: f64,
    pub phase: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<f64>>,
    pub tol: f64,
}

impl Default for QuenchConfig {
    fn default() -> Self {
        QuenchConfig { t: 1.0, phase: 0.0, mask: None, tol: DEFAULT_TOL }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    #[default]
    Quantum,
    Bitflip,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub sampler: SamplerKind,
    pub tau: f64,
    pub depth: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { sampler: SamplerKind::Quantum, tau: 1.0, depth: 3 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    #[default]
    Synthetic,
    Table,
}

/// The synthetic filter takes its shape from the data or model; `table`
/// reads `hex-hash,cost` lines from `path`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub seed: u64,
    pub angles: usize,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig { kind: ObjectiveKind::Synthetic, seed: 0, angles: DEFAULT_ANGLES, threshold: DEFAULT_THRESHOLD, path: None }
    }
}

/// Half-open grids `[min, max)` with `count` points each. Detuning in
/// rad/μs, time in μs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_count: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub t_count: usize,
    pub tau: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { delta_min: 0.0, delta_max: 7.8, delta_count: 39, t_min: 0.0, t_max: 3.8, t_count: 38, tau: 0.1 }
    }
}

impl SweepConfig {
    pub fn deltas(&self) -> Vec<f64> {
        grid(self.delta_min, self.delta_max, self.delta_count)
    }

    pub fn times(&self) -> Vec<f64> {
        grid(self.t_min, self.t_max, self.t_count)
    }
}

fn grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| lo + (hi - lo) * k as f64 / count as f64).collect()
}

/// Empty `samplers` / `depths` fall back to the `[channel]` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub taus: Vec<f64>,
    pub samplers: Vec<SamplerKind>,
    pub depths: Vec<usize>,
    pub alpha: f64,
    pub samples: usize,
    pub bins: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection {
            taus: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
            samplers: Vec::new(),
            depths: Vec::new(),
            alpha: DEFAULT_ALPHA,
            samples: DEFAULT_SAMPLES,
            bins: DEFAULT_BINS,
        }
    }
}

/// `mask_detuning` defaults to `100 Ω` and `t` to the quarter period
/// `π / (2Ω)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffuseConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_detuning: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub shots: usize,
}

impl Default for DiffuseConfig {
    fn default() -> Self {
        DiffuseConfig { target: None, mask_detuning: None, t: None, shots: 10_000 }
    }
}

fn one() -> f64 {
    1.0
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Checks every section that is present against the library invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: rydgen::Error| CliError::Usage(e.to_string());
        if self.threads == Some(0) {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        if self.lattice.is_some() {
            let atoms = self.atoms()?;
            if self.rydberg.is_some() {
                let params = self.params()?;
                self.quench_spec(&params, self.quench.t)?;
                if let Some(t) = &self.diffuse.target {
                    let z: BitString = t.parse().map_err(usage)?;
                    if z.len() != atoms.len() {
                        return Err(CliError::Usage(format!("diffuse target has {} bits for {} atoms", z.len(), atoms.len())));
                    }
                }
            }
        } else if self.rydberg.is_some() {
            return Err(CliError::Usage("[rydberg] needs a [lattice] section".into()));
        }
        if !(self.quench.tol > 0.0) {
            return Err(CliError::Usage("quench tol must be positive".into()));
        }
        if !(self.channel.tau > 0.0) || self.channel.depth == 0 {
            return Err(CliError::Usage("channel needs tau > 0 and depth >= 1".into()));
        }
        self.train.validate().map_err(usage)?;
        if self.objective.kind == ObjectiveKind::Table && self.objective.path.is_none() {
            return Err(CliError::Usage("objective kind = \"table\" needs a path".into()));
        }
        let s = &self.sweep;
        if !(s.tau > 0.0) || !(s.delta_max >= s.delta_min) || !(s.t_max >= s.t_min) || !(s.t_min >= 0.0) {
            return Err(CliError::Usage("sweep needs tau > 0, ordered ranges and t >= 0".into()));
        }
        let b = &self.benchmark;
        if b.taus.is_empty() || b.taus.iter().any(|t| !(*t > 0.0)) {
            return Err(CliError::Usage("benchmark taus must be a non-empty list of positive values".into()));
        }
        if b.alpha == 1.0 || !(b.alpha > 0.0) || b.samples < 100 || b.bins == 0 || b.depths.contains(&0) {
            return Err(CliError::Usage("benchmark needs alpha > 0, alpha != 1, samples >= 100, bins >= 1, depths >= 1".into()));
        }
        if self.diffuse.mask_detuning.is_some_and(|m| !(m > 0.0)) || self.diffuse.t.is_some_and(|t| !(t >= 0.0)) {
            return Err(CliError::Usage("diffuse needs mask_detuning > 0 and t >= 0".into()));
        }
        Ok(())
    }

    pub fn atoms(&self) -> Result<AtomArray, CliError> {
        let l = self.lattice.as_ref().ok_or_else(|| CliError::Usage("config needs a [lattice] section".into()))?;
        let usage = |e: rydgen::Error| CliError::Usage(format!("lattice: {e}"));
        if let Some(p) = &l.positions {
            if l.rows != 0 || l.cols != 0 || l.defects.is_some() || l.defect_density.is_some() {
                return Err(CliError::Usage("lattice: give either positions or a grid, not both".into()));
            }
            return AtomArray::from_positions(p.clone()).map_err(usage);
        }
        let defects = match (&l.defects, l.defect_density) {
            (Some(_), Some(_)) => return Err(CliError::Usage("lattice: defects and defect_density are exclusive".into())),
            (Some(mask), None) => Defects::Mask(parse_defect_mask(mask, l.rows * l.cols).map_err(usage)?),
            (None, Some(density)) => Defects::Random { seed: l.defect_seed, density },
            (None, None) => Defects::None,
        };
        build_king_subgraph(l.rows, l.cols, l.spacing, defects).map_err(usage)
    }

    pub fn params(&self) -> Result<RydbergParams, CliError> {
        let r = self
            .rydberg
            .as_ref()
            .ok_or_else(|| CliError::Usage("config needs a [rydberg] section with omega, delta and c6".into()))?;
        let usage = |e: rydgen::Error| CliError::Usage(format!("rydberg: {e}"));
        let mut p = RydbergParams::new(self.atoms()?, r.omega, r.delta, r.c6).map_err(usage)?.with_detuning_sign(r.detuning_sign);
        if let Some(local) = &r.delta_local {
            p = p.with_local_detuning(local.clone()).map_err(usage)?;
        }
        Ok(p)
    }

    pub fn quench_spec(&self, params: &RydbergParams, t: f64) -> Result<QuenchSpec, CliError> {
        let usage = |e: rydgen::Error| CliError::Usage(format!("quench: {e}"));
        let mut spec = QuenchSpec::new(params.clone(), t).map_err(usage)?.with_phase(self.quench.phase);
        if let Some(mask) = &self.quench.mask {
            spec = spec.with_mask(mask.clone()).map_err(usage)?;
        }
        Ok(spec)
    }

    pub fn energy(&self) -> Result<Arc<dyn Energy>, CliError> {
        Ok(Arc::new(self.params()?.quadratic_energy()))
    }

    pub fn sampler(&self, kind: SamplerKind) -> Result<Sampler, CliError> {
        Ok(match kind {
            SamplerKind::Bitflip => Sampler::BitFlip,
            SamplerKind::Uniform => Sampler::Uniform,
            SamplerKind::Quantum => {
                let params = self.params()?;
                let spec = self.quench_spec(&params, self.quench.t)?;
                Sampler::quantum(Quench::with_tolerance(spec, self.quench.tol)?)?
            }
        })
    }

    /// The `[channel]` channel on the configured native energy.
    pub fn channel(&self) -> Result<Channel, CliError> {
        let c = &self.channel;
        Ok(Channel::new(self.sampler(c.sampler)?, c.tau, self.energy()?, c.depth)?)
    }

    pub fn objective(&self, height: usize, width: usize) -> Result<Objective, CliError> {
        let o = &self.objective;
        Ok(match o.kind {
            ObjectiveKind::Synthetic => {
                Objective::SyntheticFilter(SyntheticFilter::new(height, width, o.angles, o.threshold, o.seed)?)
            }
            ObjectiveKind::Table => Objective::load_table(o.path.as_deref().expect("validated"))?,
        })
    }

    pub fn diffuse_time(&self, omega: f64) -> f64 {
        self.diffuse.t.unwrap_or(PI / (2.0 * omega))
    }

    pub fn mask_detuning(&self, omega: f64) -> f64 {
        self.diffuse.mask_detuning.unwrap_or(100.0 * omega)
    }
}
