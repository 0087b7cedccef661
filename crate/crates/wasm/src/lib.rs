//! Browser bindings: quench proposal rows, a spectral-gap phase grid and a
//! channel chain against its Boltzmann distribution, all on a King's grid.

use std::sync::Arc;

use wasm_bindgen::prelude::*;

use rydgen::lattice::{build_king_subgraph, Defects};
use rydgen::mcmc::{channel_matrix, run_chain, spectral_gap, stationary_distribution, total_variation, Channel, Sampler};
use rydgen::quench::{Quench, QuenchSpec};
use rydgen::rydberg::RydbergParams;
use rydgen::BitString;

/// Largest grid the page accepts; kernels grow as `4^n`.
pub const MAX_ATOMS: usize = 8;

fn js(e: rydgen::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn params(rows: usize, cols: usize, spacing: f64, omega: f64, delta: f64, c6: f64) -> Result<RydbergParams, JsError> {
    if rows * cols > MAX_ATOMS {
        return Err(JsError::new(&format!("at most {MAX_ATOMS} atoms in the browser, got {}", rows * cols)));
    }
    let atoms = build_king_subgraph(rows, cols, spacing, Defects::None).map_err(js)?;
    RydbergParams::new(atoms, omega, delta, c6).map_err(js)
}

fn quantum(p: &RydbergParams, t: f64) -> Result<Sampler, JsError> {
    Sampler::quantum(Quench::new(QuenchSpec::new(p.clone(), t).map_err(js)?).map_err(js)?).map_err(js)
}

/// Measurement probabilities `r_q(z | from)` after a quench of duration `t`
/// (μs), indexed by little-endian bitstring value. `from` is a `'0'/'1'`
/// literal, character i = atom i.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn proposal_row(
    rows: usize,
    cols: usize,
    spacing: f64,
    omega: f64,
    delta: f64,
    c6: f64,
    t: f64,
    from: &str,
) -> Result<Vec<f64>, JsError> {
    let p = params(rows, cols, spacing, omega, delta, c6)?;
    let z: BitString = from.parse().map_err(js)?;
    if z.len() != p.n() {
        return Err(JsError::new(&format!("start has {} bits for {} atoms", z.len(), p.n())));
    }
    Quench::new(QuenchSpec::new(p, t).map_err(js)?).map_err(js)?.proposal_row(&z).map_err(js)
}

/// Spectral gaps of the depth-1 quantum channel on the half-open grid
/// `Δ ∈ [0, delta_max)`, `t ∈ [0, t_max)`, row-major in `Δ`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn gap_grid(
    rows: usize,
    cols: usize,
    spacing: f64,
    omega: f64,
    c6: f64,
    tau: f64,
    delta_max: f64,
    t_max: f64,
    delta_count: usize,
    t_count: usize,
) -> Result<Vec<f64>, JsError> {
    let mut out = Vec::with_capacity(delta_count * t_count);
    for i in 0..delta_count {
        let delta = delta_max * i as f64 / delta_count as f64;
        let p = params(rows, cols, spacing, omega, delta, c6)?;
        let energy = Arc::new(p.quadratic_energy());
        for j in 0..t_count {
            let t = t_max * j as f64 / t_count as f64;
            let channel = Channel::new(quantum(&p, t)?, tau, energy.clone(), 1).map_err(js)?;
            let mu = stationary_distribution(&channel).map_err(js)?;
            out.push(spectral_gap(&channel_matrix(&channel).map_err(js)?, Some(&mu.probs)).map_err(js)?);
        }
    }
    Ok(out)
}

/// Visit frequencies of a `steps`-step chain from all-zeros, followed by the
/// exact Boltzmann distribution and finally their total-variation distance:
/// `2·2^n + 1` numbers. `sampler` is `quantum`, `bitflip` or `uniform`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn chain_vs_boltzmann(
    rows: usize,
    cols: usize,
    spacing: f64,
    omega: f64,
    delta: f64,
    c6: f64,
    t: f64,
    tau: f64,
    sampler: &str,
    steps: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let p = params(rows, cols, spacing, omega, delta, c6)?;
    let sampler = match sampler {
        "quantum" => quantum(&p, t)?,
        "bitflip" => Sampler::BitFlip,
        "uniform" => Sampler::Uniform,
        other => return Err(JsError::new(&format!("unknown sampler {other:?}"))),
    };
    let n = p.n();
    let channel = Channel::new(sampler, tau, Arc::new(p.quadratic_energy()), 1).map_err(js)?;
    let chain = run_chain(&channel, &BitString::zeros(n), steps, seed).map_err(js)?;
    let empirical = chain.empirical_distribution(0);
    let target = stationary_distribution(&channel).map_err(js)?.probs;
    let tv = total_variation(&empirical, &target);
    let mut out = empirical;
    out.extend_from_slice(&target);
    out.push(tv);
    Ok(out)
}
