//! Binary-pixel designs, the design objective `C_χ`, and the Renyi benchmark
//! of decoded samplers against a Boltzmann target over the decoder's image.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::hash::Hasher;
use std::io::{BufRead, Write};
use std::path::Path;

use fnv::FnvHasher;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoenc::{decode, AutoencoderModel};
use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::mcmc::{acceptance_probability, mh_accept, Channel};
use crate::metrics::{self, BinnedDistribution, DEFAULT_BINS};

/// Default angle count of the synthetic filter.
pub const DEFAULT_ANGLES: usize = 16;
/// Default threshold angle θ* of the ideal low-pass filter.
pub const DEFAULT_THRESHOLD: f64 = 0.14 * std::f64::consts::PI;
/// Default Renyi order.
pub const DEFAULT_ALPHA: f64 = 0.999;
/// Default benchmark sample count.
pub const DEFAULT_SAMPLES: usize = 5000;
/// Default benchmark channel depth.
pub const DEFAULT_DEPTH: usize = 3;
/// Latent enumeration cap for the Boltzmann target.
pub const TARGET_CAP: usize = 16;

/// Filter weights are uniform on `[-A√P, A√P]` so `w·χ/P` stays O(1) for
/// every grid size.
const WEIGHT_AMPLITUDE: f64 = 4.0;

/// A binary unit cell, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Design {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl Design {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::arg("design needs at least one pixel"));
        }
        if pixels.len() != height * width {
            return Err(Error::arg(format!("{} pixels for a {height}x{width} design", pixels.len())));
        }
        if let Some(p) = pixels.iter().find(|&&p| p > 1) {
            return Err(Error::arg(format!("pixel value {p} is not binary")));
        }
        Ok(Design { height, width, pixels })
    }

    /// Threshold probabilities at 0.5 (ties go to 1).
    pub fn from_probabilities(height: usize, width: usize, probs: &[f64]) -> Result<Self> {
        Design::new(height, width, probs.iter().map(|&p| u8::from(p >= 0.5)).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    /// 64-bit FNV-1a of the row-major pixel bytes.
    pub fn hash64(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write(&self.pixels);
        h.finish()
    }

    /// Mean absolute pixel difference.
    pub fn distance(&self, other: &Design) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::arg("designs differ in size"));
        }
        let diff = self.pixels.iter().zip(&other.pixels).filter(|(a, b)| a != b).count();
        Ok(diff as f64 / self.len() as f64)
    }

    /// Binary PGM (P5) with pixels written as 0 / 255.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().map(|&p| p * 255).collect();
        w.write_all(&bytes)
    }

    /// Comma-separated 0/1 grid, one row per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.pixels.chunks(self.width) {
            for &p in row {
                f.write_str(if p == 1 { "#" } else { "." })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Seeded axis-aligned filled rectangles, a small structured dataset for
/// smoke runs and tests.
pub fn synthetic_dataset(count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<Design>> {
    if height == 0 || width == 0 {
        return Err(Error::arg("design needs at least one pixel"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = |n: usize| ((n / 4).max(1), (n / 2).max(1));
    let ((hlo, hhi), (wlo, whi)) = (span(height), span(width));
    (0..count)
        .map(|_| {
            let r0 = rng.random_range(0..=height - height / 2 - usize::from(height == 1));
            let c0 = rng.random_range(0..=width - width / 2 - usize::from(width == 1));
            let h = rng.random_range(hlo..=hhi);
            let w = rng.random_range(wlo..=whi);
            let mut px = vec![0u8; height * width];
            for r in r0..(r0 + h).min(height) {
                for c in c0..(c0 + w).min(width) {
                    px[r * width + c] = 1;
                }
            }
            Design::new(height, width, px)
        })
        .collect()
}

fn data_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Data { path: path.display().to_string(), message: message.into() }
}

/// Parse a binary PGM; bytes `>= 128` are set.
pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<Design, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(format!("expected magic P5, found {}", fields[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PGM header field {s:?}"));
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(format!("raster holds {} of {need} bytes", bytes.len().saturating_sub(pos)));
    }
    let pixels = bytes[pos..pos + need].iter().map(|&b| u8::from(b >= 128)).collect();
    Design::new(height, width, pixels).map_err(|e| e.to_string())
}

/// Parse a comma-separated 0/1 grid.
pub fn parse_csv_design(text: &str) -> std::result::Result<Design, String> {
    let mut pixels = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| match t.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(format!("line {}: non-binary entry {other:?}", ln + 1)),
            })
            .collect::<std::result::Result<Vec<u8>, String>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(format!("line {}: {} columns, expected {w}", ln + 1, row.len()))
            }
            _ => {}
        }
        pixels.extend(row);
        height += 1;
    }
    let width = width.ok_or("empty grid")?;
    Design::new(height, width, pixels).map_err(|e| e.to_string())
}

/// Read one design file by extension (`.pgm` or `.csv`).
pub fn load_design(path: &Path) -> Result<Design> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let bytes = fs::read(path).map_err(|e| data_err(path, e.to_string()))?;
    match ext.as_deref() {
        Some("pgm") => parse_pgm(&bytes),
        Some("csv") => {
            let text = String::from_utf8(bytes).map_err(|_| data_err(path, "not UTF-8 text"))?;
            parse_csv_design(&text)
        }
        _ => Err("unknown design file extension".into()),
    }
    .map_err(|m| data_err(path, m))
}

/// All `.pgm` and `.csv` designs in a directory, by file name. Other files
/// are ignored.
pub fn load_dataset(dir: &Path) -> Result<Vec<Design>> {
    let entries = fs::read_dir(dir).map_err(|e| data_err(dir, e.to_string()))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| data_err(dir, e.to_string()))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("pgm") | Some("csv")) {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    let mut out: Vec<Design> = Vec::with_capacity(paths.len());
    for path in &paths {
        let d = load_design(path)?;
        if let Some(first) = out.first() {
            if (d.height, d.width) != (first.height, first.width) {
                return Err(data_err(
                    path,
                    format!("{}x{} design, expected {}x{}", d.height, d.width, first.height, first.width),
                ));
            }
        }
        out.push(d);
    }
    Ok(out)
}

/// Seeded low-pass filter standing in for a transmissivity simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFilter {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    /// Angle-grid midpoints on `[0, π/2]`.
    pub angles: Vec<f64>,
    /// Ideal transmissivity `T_i` per angle.
    pub ideal: Vec<f64>,
    /// One weight row of length `H·W` per angle.
    pub weights: Vec<Vec<f64>>,
}

impl SyntheticFilter {
    pub fn new(height: usize, width: usize, angles: usize, threshold: f64, seed: u64) -> Result<Self> {
        if height == 0 || width == 0 || angles == 0 {
            return Err(Error::arg("synthetic filter needs pixels and angles"));
        }
        let p = height * width;
        let step = std::f64::consts::FRAC_PI_2 / angles as f64;
        let grid: Vec<f64> = (0..angles).map(|k| (k as f64 + 0.5) * step).collect();
        let ideal = grid.iter().map(|&t| if t < threshold { 1.0 } else { 0.0 }).collect();
        let amp = WEIGHT_AMPLITUDE * (p as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..angles).map(|_| (0..p).map(|_| rng.random_range(-amp..=amp)).collect()).collect();
        Ok(SyntheticFilter { height, width, seed, angles: grid, ideal, weights })
    }

    /// Cost and gradient at relaxed pixel values.
    fn relaxed(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let p = x.len() as f64;
        let k = self.angles.len() as f64;
        let mut cost = 1.0;
        let mut grad = vec![0.0; x.len()];
        for (w, t_i) in self.weights.iter().zip(&self.ideal) {
            let a: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / p;
            let t_u = logistic(a);
            cost -= (t_i - t_u) / k;
            let g = t_u * (1.0 - t_u) / (k * p);
            for (gj, wj) in grad.iter_mut().zip(w) {
                *gj += g * wj;
            }
        }
        (cost, grad)
    }
}

fn logistic(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// The design objective `C_χ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Objective {
    SyntheticFilter(SyntheticFilter),
    /// Precomputed costs keyed by design hash.
    ExternalTable { table: HashMap<u64, f64> },
}

impl Objective {
    /// Synthetic filter with the default angle grid and threshold.
    pub fn synthetic(height: usize, width: usize, seed: u64) -> Result<Self> {
        Ok(Objective::SyntheticFilter(SyntheticFilter::new(height, width, DEFAULT_ANGLES, DEFAULT_THRESHOLD, seed)?))
    }

    /// Read `hex-hash,cost` lines. Blank lines and `#` comments are skipped.
    pub fn from_table<R: BufRead>(reader: R) -> Result<Self> {
        let mut table = HashMap::new();
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::arg(format!("cost table line {}: expected hex-hash,cost", ln + 1));
            let (h, c) = line.split_once(',').ok_or_else(bad)?;
            let h = h.trim();
            let h = h.strip_prefix("0x").unwrap_or(h);
            let hash = u64::from_str_radix(h, 16).map_err(|_| bad())?;
            let cost: f64 = c.trim().parse().map_err(|_| bad())?;
            if !cost.is_finite() {
                return Err(bad());
            }
            table.insert(hash, cost);
        }
        Ok(Objective::ExternalTable { table })
    }

    pub fn load_table(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| data_err(path, e.to_string()))?;
        Objective::from_table(std::io::BufReader::new(f)).map_err(|e| data_err(path, e.to_string()))
    }

    fn check_shape(&self, pixels: usize) -> Result<()> {
        if let Objective::SyntheticFilter(f) = self {
            if pixels != f.height * f.width {
                return Err(Error::arg(format!(
                    "design has {pixels} pixels, objective expects {}x{}",
                    f.height, f.width
                )));
            }
        }
        Ok(())
    }

    /// `C_χ = 1 - sum_k (T_i(θ_k) - T_u(θ_k, χ)) Δθ` with `Δθ = 1/K`.
    pub fn evaluate(&self, design: &Design) -> Result<f64> {
        self.check_shape(design.len())?;
        match self {
            Objective::SyntheticFilter(f) => Ok(f.relaxed(&design.to_f64()).0),
            Objective::ExternalTable { table } => table
                .get(&design.hash64())
                .copied()
                .ok_or_else(|| Error::arg(format!("design {:016x} missing from the cost table", design.hash64()))),
        }
    }

    /// Cost and pixel gradient at relaxed pixels, where the objective has a
    /// smooth extension.
    pub fn evaluate_relaxed(&self, x: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        self.check_shape(x.len())?;
        Ok(match self {
            Objective::SyntheticFilter(f) => Some(f.relaxed(x)),
            Objective::ExternalTable { .. } => None,
        })
    }
}

/// Design-space Metropolis rule on objective values.
pub fn validation_accept<R: RngCore + ?Sized>(c_current: f64, c_proposed: f64, tau: f64, rng: &mut R) -> bool {
    mh_accept(c_proposed - c_current, tau, rng)
}

/// Cost of the thresholded decoding of every latent, in index order.
pub fn latent_costs(model: &AutoencoderModel, objective: &Objective) -> Result<Vec<f64>> {
    let n = model.latent_n();
    if n > TARGET_CAP {
        return Err(Error::Capacity { what: "latent enumeration", size: n, cap: TARGET_CAP });
    }
    let (h, w) = model.shape();
    let cost = |z: BitString| -> Result<f64> {
        let x = decode(model, &z)?;
        objective.evaluate(&Design::from_probabilities(h, w, &x)?)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..1usize << n).into_par_iter().map(|i| cost(BitString::from_index(n, i))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        BitString::all(n).map(cost).collect()
    }
}

/// Boltzmann weights `exp(-C/τ)` over per-latent costs, binned.
pub fn boltzmann_target_from_costs(costs: &[f64], tau: f64, bins: usize) -> Result<BinnedDistribution> {
    if !(tau > 0.0) {
        return Err(Error::arg(format!("temperature must be positive, got {tau}")));
    }
    let c_min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = costs.iter().map(|c| (-(c - c_min) / tau).exp()).collect();
    metrics::bin_costs(costs, &weights, bins)
}

/// Binned Boltzmann distribution over the decoded images of all `2^n`
/// latents.
pub fn decoder_boltzmann_target(
    model: &AutoencoderModel,
    objective: &Objective,
    tau: f64,
    bins: usize,
) -> Result<BinnedDistribution> {
    boltzmann_target_from_costs(&latent_costs(model, objective)?, tau, bins)
}

/// What drives the benchmark samples.
#[derive(Clone, Copy, Debug)]
pub enum BenchmarkSource<'a> {
    /// Proposals from the channel's sampler, `depth` validation steps.
    Channel(&'a Channel),
    /// Exact draws from the target, for calibrating finite-sample bias.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub tau: f64,
    pub alpha: f64,
    pub samples: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig { tau: 1.0, alpha: DEFAULT_ALPHA, samples: DEFAULT_SAMPLES, bins: DEFAULT_BINS, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub tau: f64,
    pub depth: usize,
    pub sampler: String,
    pub alpha: f64,
    pub renyi: f64,
    pub kl: f64,
    pub tv: f64,
    pub empirical: BinnedDistribution,
    pub target: BinnedDistribution,
}

impl BenchmarkReport {
    /// Per-bin `bin_lo,bin_hi,p_hat,mu_hat` rows and a trailing summary.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,p_hat,mu_hat")?;
        for (i, (p, q)) in self.empirical.probs.iter().zip(&self.target.probs).enumerate() {
            writeln!(w, "{:?},{:?},{:?},{:?}", self.target.edges[i], self.target.edges[i + 1], p, q)?;
        }
        writeln!(
            w,
            "# summary tau={:?} depth={} sampler={} alpha={:?} renyi_nats={:?} kl_nats={:?} tv={:?}",
            self.tau, self.depth, self.sampler, self.alpha, self.renyi, self.kl, self.tv
        )
    }
}

/// Renyi divergence of decoded samples from the decoder Boltzmann target.
///
/// Each sample starts from `starts[s % starts.len()]` and takes `depth`
/// steps: a sampler proposal accepted by [`validation_accept`] on design
/// costs. Costs are tabulated once per latent.
pub fn renyi_benchmark(
    model: &AutoencoderModel,
    source: BenchmarkSource<'_>,
    objective: &Objective,
    starts: &[BitString],
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    let costs = latent_costs(model, objective)?;
    benchmark_from_costs(&costs, source, starts, cfg)
}

/// [`renyi_benchmark`] on a precomputed per-latent cost table.
pub fn benchmark_from_costs(
    costs: &[f64],
    source: BenchmarkSource<'_>,
    starts: &[BitString],
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    if cfg.samples < 100 {
        return Err(Error::arg(format!("benchmark needs at least 100 samples, got {}", cfg.samples)));
    }
    if cfg.alpha == 1.0 {
        return Err(Error::arg("Renyi order must differ from 1"));
    }
    if !costs.len().is_power_of_two() {
        return Err(Error::arg("cost table length must be 2^n"));
    }
    let n = costs.len().trailing_zeros() as usize;
    let target = boltzmann_target_from_costs(costs, cfg.tau, cfg.bins)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut drawn = Vec::with_capacity(cfg.samples);
    let (depth, sampler) = match source {
        BenchmarkSource::Channel(ch) => {
            if ch.n() != n {
                return Err(Error::arg(format!("channel has {} bits, latents {n}", ch.n())));
            }
            if starts.is_empty() {
                return Err(Error::arg("benchmark needs at least one start latent"));
            }
            if let Some(z) = starts.iter().find(|z| z.len() != n) {
                return Err(Error::arg(format!("start {z} has the wrong length")));
            }
            for s in 0..cfg.samples {
                let mut z = starts[s % starts.len()];
                for _ in 0..ch.depth() {
                    let prop = ch.sampler().propose(&z, &mut rng)?;
                    if validation_accept(costs[z.index()], costs[prop.index()], cfg.tau, &mut rng) {
                        z = prop;
                    }
                }
                drawn.push(costs[z.index()]);
            }
            (ch.depth(), ch.sampler().name().to_string())
        }
        BenchmarkSource::Exact => {
            let c_min = costs.iter().copied().fold(f64::INFINITY, f64::min);
            let mut cdf = Vec::with_capacity(costs.len());
            let mut acc = 0.0;
            for c in costs {
                acc += (-(c - c_min) / cfg.tau).exp();
                cdf.push(acc);
            }
            for _ in 0..cfg.samples {
                let u = rng.random::<f64>() * acc;
                let i = cdf.partition_point(|&c| c <= u).min(costs.len() - 1);
                drawn.push(costs[i]);
            }
            (0, "exact".to_string())
        }
    };
    let empirical = target.rebin(&drawn, &vec![1.0; drawn.len()])?;
    for (i, (p, q)) in empirical.probs.iter().zip(&target.probs).enumerate() {
        if *p > 0.0 && *q <= 0.0 {
            return Err(Error::Divergence(format!(
                "bin {i} [{}, {}] has empirical mass {p} but no target mass",
                target.edges[i],
                target.edges[i + 1]
            )));
        }
    }
    Ok(BenchmarkReport {
        tau: cfg.tau,
        depth,
        sampler,
        alpha: cfg.alpha,
        renyi: metrics::renyi_divergence(&empirical, &target, cfg.alpha)?,
        kl: metrics::kl_divergence(&empirical, &target)?,
        tv: metrics::total_variation(&empirical, &target)?,
        empirical,
        target,
    })
}

/// Acceptance probability of the validation rule, for reporting.
pub fn validation_probability(c_current: f64, c_proposed: f64, tau: f64) -> f64 {
    acceptance_probability(c_proposed - c_current, tau)
}
