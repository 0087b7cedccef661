//! Property-check suites. Each suite prints a JSON report and writes it to
//! `check_<suite>.json`; any failing check turns into exit status 3.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rydgen::autoenc::{batch_loss, distance_match_loss, init_model, LossTerms, PixelDistance, SampleNoise};
use rydgen::designspace::{synthetic_dataset, Design, Objective};
use rydgen::energy::QuadraticEnergy;
use rydgen::lattice::{build_king_subgraph, unit_disk_graph, AtomArray, Defects};
use rydgen::mcmc::{channel_matrix, detailed_balance_residual, stationary_distribution, Channel, Sampler};
use rydgen::metrics::{check_metric_axioms, default_distance_scale, expected_isometry_gap, quadratic_hamming, IsometryPair};
use rydgen::quench::{Quench, QuenchSpec};
use rydgen::rydberg::RydbergParams;
use rydgen::{BitString, Energy};

use super::Context;
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Metric,
    Balance,
    Isometry,
    Gradient,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Metric => "metric",
            Suite::Balance => "balance",
            Suite::Isometry => "isometry",
            Suite::Gradient => "gradient",
        }
    }
}

/// Largest lattice the metric suite enumerates exhaustively.
pub const METRIC_CAP: usize = 7;
/// Largest register the balance suite builds exact kernels for.
pub const BALANCE_CAP: usize = 6;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub witness: Vec<String>,
    pub detail: String,
}

impl CheckResult {
    fn bound(name: &str, value: f64, tolerance: f64, witness: Vec<String>, detail: String) -> Self {
        CheckResult { name: name.into(), passed: value <= tolerance, value, tolerance, witness, detail }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub suite: Suite,
    pub passed: bool,
    pub fault_injected: bool,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

pub fn run(ctx: &Context, suite: Suite, inject_fault: bool) -> Result<(), CliError> {
    let checks = match suite {
        Suite::Metric => metric_suite(ctx, inject_fault)?,
        Suite::Balance => balance_suite(ctx, inject_fault)?,
        Suite::Isometry => isometry_suite(ctx.cfg.seed, inject_fault)?,
        Suite::Gradient => gradient_suite(ctx.cfg.seed, inject_fault)?,
    };
    let report = Report {
        suite,
        passed: checks.iter().all(|c| c.passed),
        fault_injected: inject_fault,
        seed: ctx.cfg.seed,
        checks,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    ctx.write(&format!("check_{}.json", suite.name()), |w| writeln!(w, "{json}"))?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed(suite.name().into()))
    }
}

fn metric_suite(ctx: &Context, inject_fault: bool) -> Result<Vec<CheckResult>, CliError> {
    let atoms = match ctx.cfg.lattice {
        Some(_) => ctx.cfg.atoms()?,
        None => build_king_subgraph(2, 3, 1.0, Defects::None)?,
    };
    let n = atoms.len();
    if n > METRIC_CAP {
        return Err(rydgen::Error::Capacity { what: "metric suite lattice", size: n, cap: METRIC_CAP }.into());
    }
    let points: Vec<BitString> = BitString::all(n).collect();
    // an asymmetric bump on ordered pairs breaks symmetry
    let fault = |a: &BitString, b: &BitString| if inject_fault && a.index() < b.index() { 0.5 } else { 0.0 };
    let hamming = |a: &BitString, b: &BitString| a.hamming(b).expect("equal lengths") as f64 + fault(a, b);
    let quadratic = |a: &BitString, b: &BitString| quadratic_hamming(&atoms, a, b).expect("equal lengths") + fault(a, b);
    let mut out = Vec::new();
    for (name, report) in [
        ("hamming", check_metric_axioms(hamming, &points, 1e-9)),
        ("quadratic_hamming", check_metric_axioms(quadratic, &points, 1e-9)),
    ] {
        let first = report.violations.first();
        out.push(CheckResult {
            name: name.into(),
            passed: report.passed(),
            value: report.violations.len() as f64,
            tolerance: 0.0,
            witness: first.map(|v| v.witness.iter().map(|z| z.to_string()).collect()).unwrap_or_default(),
            detail: match first {
                Some(v) => format!("{:?}: {}", v.axiom, v.detail),
                None => format!("{} points, {} triples", report.points, report.checked_triples),
            },
        });
    }
    Ok(out)
}

/// Exact kernels for all three samplers on the configured energy, or on a
/// seeded random 3-bit energy with a default 3-atom quench.
fn balance_suite(ctx: &Context, inject_fault: bool) -> Result<Vec<CheckResult>, CliError> {
    let cfg = &ctx.cfg;
    let (energy, quantum, tau): (Arc<dyn Energy>, Sampler, f64) = if cfg.rydberg.is_some() {
        (cfg.energy()?, cfg.sampler(crate::config::SamplerKind::Quantum)?, cfg.channel.tau)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let linear = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pairs = vec![(0, 1, rng.random_range(0.0..2.0)), (1, 2, rng.random_range(0.0..2.0)), (0, 2, rng.random_range(0.0..2.0))];
        let atoms = AtomArray::from_positions(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])?;
        let spec = QuenchSpec::new(RydbergParams::new(atoms, 1.0, 0.5, 1.0)?, 1.0)?;
        (Arc::new(QuadraticEnergy::new(linear, pairs)?), Sampler::quantum(Quench::new(spec)?)?, 1.0)
    };
    if energy.n() > BALANCE_CAP {
        return Err(rydgen::Error::Capacity { what: "balance suite register", size: energy.n(), cap: BALANCE_CAP }.into());
    }
    let n = energy.n();
    let mut out = Vec::new();
    for sampler in [quantum, Sampler::BitFlip, Sampler::Uniform] {
        let name = sampler.name();
        let channel = Channel::new(sampler, tau, energy.clone(), 1)?;
        let mu = stationary_distribution(&channel)?.probs;
        let mut p = channel_matrix(&channel)?;
        if inject_fault {
            corrupt(&mut p);
        }
        let residual = detailed_balance_residual(&p, &mu)?;
        let (r, c) = worst_pair(&p, &mu);
        out.push(CheckResult::bound(
            name,
            residual,
            1e-12,
            vec![BitString::from_index(n, r).to_string(), BitString::from_index(n, c).to_string()],
            format!("max |P(z|z')mu(z') - P(z'|z)mu(z)| over {} states at tau {tau:?}", 1usize << n),
        ));
    }
    Ok(out)
}

/// Inflates the largest off-diagonal entry of column 0 and renormalises.
fn corrupt(p: &mut DMatrix<f64>) {
    let r = (1..p.nrows()).max_by(|&a, &b| p[(a, 0)].total_cmp(&p[(b, 0)])).unwrap_or(0);
    p[(r, 0)] = p[(r, 0)] * 1.5 + 0.01;
    let s: f64 = p.column(0).sum();
    p.column_mut(0).iter_mut().for_each(|v| *v /= s);
}

fn worst_pair(p: &DMatrix<f64>, mu: &[f64]) -> (usize, usize) {
    let mut best = (0, 0, -1.0);
    for c in 0..p.ncols() {
        for r in 0..p.nrows() {
            let v = (p[(r, c)] * mu[c] - p[(c, r)] * mu[r]).abs();
            if v > best.2 {
                best = (r, c, v);
            }
        }
    }
    (best.0, best.1)
}

fn isometry_suite(seed: u64, inject_fault: bool) -> Result<Vec<CheckResult>, CliError> {
    let n = 4;
    let latents: Vec<BitString> = BitString::all(n).collect();
    let designs: Vec<Vec<f64>> = latents.iter().map(|z| z.to_f64()).collect();
    let hamming = |a: &BitString, b: &BitString| a.hamming(b).expect("equal lengths") as f64;
    let mean_abs = |a: &Vec<f64>, b: &Vec<f64>| PixelDistance::MeanAbsolute.distance(a, b);

    // designs that copy their latent bits: d_Z = n d_X exactly
    let mut pairs = Vec::new();
    let (mut dz, mut dx) = (Vec::new(), Vec::new());
    for i in 0..latents.len() {
        for j in i + 1..latents.len() {
            dz.push(hamming(&latents[i], &latents[j]));
            dx.push(mean_abs(&designs[i], &designs[j]));
            pairs.push(IsometryPair {
                left: latents[i],
                right: latents[j],
                left_samples: vec![designs[i].clone()],
                right_samples: vec![designs[j].clone()],
            });
        }
    }
    let mut scale = default_distance_scale(&dz, &dx)?;
    if inject_fault {
        scale *= 1.5;
    }
    let gap = expected_isometry_gap(&pairs, hamming, mean_abs, scale)?;
    let loss = distance_match_loss(&latents, &designs, hamming, PixelDistance::MeanAbsolute, scale)?.loss;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = Vec::new();
    for _ in 0..20 {
        let mut draw = |k: usize| -> Vec<Vec<f64>> { (0..k).map(|_| (0..6).map(|_| rng.random_range(0.0..1.0)).collect()).collect() };
        let (a, b) = (draw(2), draw(3));
        let (l, r) = (BitString::from_index(n, rng.random_range(0..16)), BitString::from_index(n, rng.random_range(0..16)));
        noisy.push(IsometryPair { left: l, right: r, left_samples: a, right_samples: b });
    }
    let swapped: Vec<_> = noisy
        .iter()
        .map(|p| IsometryPair {
            left: p.right,
            right: p.left,
            left_samples: p.right_samples.clone(),
            right_samples: p.left_samples.clone(),
        })
        .collect();
    let forward = expected_isometry_gap(&noisy, hamming, mean_abs, 3.0)?;
    let backward = expected_isometry_gap(&swapped, hamming, mean_abs, 3.0)?;
    Ok(vec![
        CheckResult::bound("exact_isometry_gap", gap, 1e-12, Vec::new(), format!("bit-copy decoder, scale {scale:?}")),
        CheckResult::bound("distance_loss_at_isometry", loss, 1e-12, Vec::new(), "all unordered latent pairs".into()),
        CheckResult::bound(
            "pair_swap_invariance",
            (forward - backward).abs(),
            1e-12,
            Vec::new(),
            format!("20 random pairs, gap {forward:?}"),
        ),
    ])
}

/// Finite differences against the straight-through gradient of the full
/// loss and the distance-loss subgradient, 20 probes each.
fn gradient_suite(seed: u64, inject_fault: bool) -> Result<Vec<CheckResult>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = init_model(2, 4, &[4], 3, seed)?;
    let data = synthetic_dataset(5, 2, 4, seed)?;
    let batch: Vec<&Design> = data.iter().collect();
    let atoms = build_king_subgraph(1, 3, 1.0, Defects::None)?;
    let graph = unit_disk_graph(&atoms, 1.0)?;
    let energy = QuadraticEnergy::new(vec![-0.6, 0.3, -0.9], vec![(0, 1, 1.4), (1, 2, 0.8), (0, 2, 0.2)])?;
    let objective = Objective::synthetic(2, 4, seed)?;
    let mut noise: Vec<SampleNoise> = (0..batch.len())
        .map(|_| SampleNoise { flips: vec![BitString::from_index(3, rng.random_range(0..8))], ..Default::default() })
        .collect();
    let terms = LossTerms {
        energy: &energy,
        objective: &objective,
        graph: Some(&graph),
        weights: [1.0, 0.5, 0.4, 0.8],
        lambda: Some(1.3),
        lambda_d: Some(3.0),
    };
    let base = batch_loss(&model, &batch, &mut noise, &terms)?;
    let bias = if inject_fault { 1.01 } else { 1.0 };
    let params = model.params();
    let rel = |fd: f64, g: f64| (fd - g).abs() / fd.abs().max(g.abs()).max(1e-8);

    let mut worst_st = (0.0f64, 0usize);
    for _ in 0..20 {
        let i = rng.random_range(0..params.len());
        let h = 1e-6;
        let eval = |delta: f64| -> rydgen::Result<f64> {
            let mut m = model.clone();
            let mut p = params.clone();
            p[i] += delta;
            m.set_params(&p)?;
            Ok(batch_loss(&m, &batch, &mut noise.clone(), &terms)?.loss.total)
        };
        let e = rel((eval(h)? - eval(-h)?) / (2.0 * h), base.grad[i] * bias);
        if e > worst_st.0 {
            worst_st = (e, i);
        }
    }

    let z: Vec<BitString> = (0..4).map(|_| BitString::from_index(3, rng.random_range(0..8))).collect();
    let x: Vec<Vec<f64>> = (0..4).map(|_| (0..8).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let hamming = |a: &BitString, b: &BitString| a.hamming(b).expect("equal lengths") as f64;
    let dm = distance_match_loss(&z, &x, hamming, PixelDistance::MeanAbsolute, 5.0)?;
    let mut worst_dist = (0.0f64, 0usize, 0usize);
    for _ in 0..20 {
        let (i, p) = (rng.random_range(0..4), rng.random_range(0..8));
        let h = 1e-7;
        let eval = |delta: f64| -> rydgen::Result<f64> {
            let mut xs = x.clone();
            xs[i][p] += delta;
            Ok(distance_match_loss(&z, &xs, hamming, PixelDistance::MeanAbsolute, 5.0)?.loss)
        };
        let e = rel((eval(h)? - eval(-h)?) / (2.0 * h), dm.grad[i][p] * bias);
        if e > worst_dist.0 {
            worst_dist = (e, i, p);
        }
    }
    Ok(vec![
        CheckResult::bound(
            "straight_through",
            worst_st.0,
            1e-4,
            vec![format!("param {}", worst_st.1)],
            "max relative error, 8-pixel model with hidden [4] and latent 3".into(),
        ),
        CheckResult::bound(
            "distance_subgradient",
            worst_dist.0,
            1e-4,
            vec![format!("design {} pixel {}", worst_dist.1, worst_dist.2)],
            "max relative error, 4 designs of 8 pixels".into(),
        ),
    ])
}
