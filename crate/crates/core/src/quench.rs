//! Exact quench dynamics of small Rydberg arrays.
//!
//! The Hamiltonian
//!
//! ```text
//! H = sum_i (Ω/2)(e^{iφ}|1><0| + h.c.)_i - sum_i (Δ + Δ_local,i + mask_i) n_i + sum_{i<j} V_ij n_i n_j
//! ```
//!
//! is applied matrix-free on the `2^n` computational basis (index = little
//! endian bitstring). Time evolution uses a Chebyshev expansion of
//! `exp(-iHt)` whose coefficients are Bessel functions; the expansion is cut
//! once every remaining coefficient is below the requested tolerance.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bessel::truncated_coefficients;
use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::lattice::{blockade_radius, unit_disk_graph};
use crate::rydberg::RydbergParams;

/// Default per-step truncation tolerance for [`propagate`].
pub const DEFAULT_TOL: f64 = 1e-10;
/// Largest atom count for single-state propagation.
pub const STATE_CAP: usize = 14;
/// Largest atom count for full transition kernels.
pub const KERNEL_CAP: usize = 12;
/// Largest Chebyshev argument `a·dt` per propagation step.
const MAX_STEP_ARG: f64 = 50.0;
/// Total Chebyshev terms allowed in one call to [`propagate`].
const MAX_TERMS: usize = 20_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    n: usize,
    amplitudes: Vec<C64>,
}

impl QuantumState {
    pub fn basis(z: &BitString) -> Self {
        let n = z.len();
        assert!(n <= STATE_CAP, "state of {n} qubits above the cap of {STATE_CAP}");
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n];
        amplitudes[z.index()] = C64::new(1.0, 0.0);
        QuantumState { n, amplitudes }
    }

    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::arg(format!("state dimension {len} is not a power of two >= 2")));
        }
        let state = QuantumState { n: len.trailing_zeros() as usize, amplitudes };
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("state norm {norm} is not 1")));
        }
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Measurement probabilities `|<z|ψ>|²` in index order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn fidelity(&self, z: &BitString) -> f64 {
        self.amplitudes[z.index()].norm_sqr()
    }
}

/// A time-independent quench: Hamiltonian parameters, duration (μs), laser
/// phase (rad) and an optional extra per-atom detuning mask (rad/μs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchSpec {
    pub params: RydbergParams,
    pub t: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub mask: Option<Vec<f64>>,
}

impl QuenchSpec {
    pub fn new(params: RydbergParams, t: f64) -> Result<Self> {
        let spec = QuenchSpec { params, t, phase: 0.0, mask: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_mask(mut self, mask: Vec<f64>) -> Result<Self> {
        self.mask = Some(mask);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return Err(Error::arg(format!("evolution time must be finite and >= 0, got {}", self.t)));
        }
        if !self.phase.is_finite() {
            return Err(Error::arg("laser phase must be finite"));
        }
        if let Some(m) = &self.mask {
            if m.len() != self.params.n() {
                return Err(Error::arg(format!("mask has {} entries for {} atoms", m.len(), self.params.n())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("mask detunings must be finite"));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }
}

/// Matrix-free Rydberg Hamiltonian: a diagonal plus uniform single-flip
/// couplings.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    n: usize,
    diag: Vec<f64>,
    /// `<..1_i..|H|..0_i..>`, i.e. `(Ω/2) e^{iφ}`.
    coupling: C64,
}

impl Hamiltonian {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn coupling(&self) -> C64 {
        self.coupling
    }

    /// Off-diagonal nonzeros, `n·2^n` when driven, 0 otherwise.
    pub fn offdiag_nnz(&self) -> usize {
        if self.coupling == C64::new(0.0, 0.0) {
            0
        } else {
            self.n * self.dim()
        }
    }

    /// `out = H psi`.
    pub fn apply(&self, psi: &[C64], out: &mut [C64]) {
        let up = self.coupling;
        let down = self.coupling.conj();
        for (z, o) in out.iter_mut().enumerate() {
            let mut acc = psi[z] * self.diag[z];
            for i in 0..self.n {
                let src = z ^ (1 << i);
                acc += if z >> i & 1 == 1 { up * psi[src] } else { down * psi[src] };
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut m = DMatrix::from_element(d, d, C64::new(0.0, 0.0));
        for z in 0..d {
            m[(z, z)] = C64::new(self.diag[z], 0.0);
            if self.offdiag_nnz() > 0 {
                for i in 0..self.n {
                    let src = z ^ (1 << i);
                    m[(z, src)] = if z >> i & 1 == 1 { self.coupling } else { self.coupling.conj() };
                }
            }
        }
        m
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let r = self.n as f64 * self.coupling.norm();
        let lo = self.diag.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo - r, hi + r)
    }
}

pub fn build_hamiltonian(spec: &QuenchSpec) -> Result<Hamiltonian> {
    build_hamiltonian_capped(spec, STATE_CAP)
}

pub fn build_hamiltonian_capped(spec: &QuenchSpec, cap: usize) -> Result<Hamiltonian> {
    spec.validate()?;
    let n = spec.n();
    if n > cap {
        return Err(Error::Capacity { what: "quench Hamiltonian", size: n, cap });
    }
    let p = &spec.params;
    let field: Vec<f64> = (0..n)
        .map(|i| p.delta + p.delta_local[i] + spec.mask.as_ref().map_or(0.0, |m| m[i]))
        .collect();
    let mut v = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            v.push((i, j, p.interaction(i, j)?));
        }
    }
    let diag = (0..1usize << n)
        .map(|z| {
            let occ = |i: usize| z >> i & 1 == 1;
            let lin: f64 = (0..n).filter(|&i| occ(i)).map(|i| field[i]).sum();
            let quad: f64 = v.iter().filter(|&&(i, j, _)| occ(i) && occ(j)).map(|&(_, _, w)| w).sum();
            quad - lin
        })
        .collect();
    let coupling = C64::from_polar(p.omega / 2.0, spec.phase);
    Ok(Hamiltonian { n, diag, coupling })
}

/// `exp(-iHt) psi0`, with per-step Chebyshev truncation below `tol`.
pub fn propagate(h: &Hamiltonian, psi0: &QuantumState, t: f64, tol: f64) -> Result<QuantumState> {
    if !(tol > 0.0) {
        return Err(Error::arg(format!("propagation tolerance must be positive, got {tol}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::arg(format!("evolution time must be finite and >= 0, got {t}")));
    }
    if psi0.n != h.n {
        return Err(Error::arg(format!("state has {} qubits, Hamiltonian {}", psi0.n, h.n)));
    }
    if t == 0.0 {
        return Ok(psi0.clone());
    }
    if h.offdiag_nnz() == 0 {
        let amplitudes = psi0
            .amplitudes
            .iter()
            .zip(&h.diag)
            .map(|(a, e)| a * C64::from_polar(1.0, -e * t))
            .collect();
        return Ok(QuantumState { n: h.n, amplitudes });
    }

    let (lo, hi) = h.spectral_bounds();
    let half_width = (hi - lo) / 2.0;
    let center = (hi + lo) / 2.0;
    let steps = (half_width * t / MAX_STEP_ARG).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let coeffs = truncated_coefficients(half_width * dt, tol * 1e-2);
    if coeffs.len().saturating_mul(steps) > MAX_TERMS {
        return Err(Error::Numerical {
            message: format!("Chebyshev expansion needs {} terms x {steps} steps", coeffs.len()),
            residual: coeffs.last().map_or(0.0, |c| c.abs()),
        });
    }
    let phase = C64::from_polar(1.0, -center * dt);
    let dim = h.dim();
    let mut psi = psi0.amplitudes.clone();
    let mut prev = vec![C64::new(0.0, 0.0); dim];
    let mut cur = vec![C64::new(0.0, 0.0); dim];
    let mut next = vec![C64::new(0.0, 0.0); dim];
    let scaled = |src: &[C64], dst: &mut [C64]| {
        h.apply(src, dst);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (*d - s * center) / half_width;
        }
    };
    // (-i)^k
    let powers = [C64::new(1.0, 0.0), C64::new(0.0, -1.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0)];
    for _ in 0..steps {
        prev.copy_from_slice(&psi);
        let mut acc: Vec<C64> = prev.iter().map(|v| v * coeffs[0]).collect();
        if coeffs.len() > 1 {
            scaled(&prev, &mut cur);
            let c = powers[1] * (2.0 * coeffs[1]);
            for (a, v) in acc.iter_mut().zip(&cur) {
                *a += c * v;
            }
        }
        for (k, &jk) in coeffs.iter().enumerate().skip(2) {
            scaled(&cur, &mut next);
            let c = powers[k % 4] * (2.0 * jk);
            for ((nx, p), a) in next.iter_mut().zip(&prev).zip(acc.iter_mut()) {
                *nx = *nx * 2.0 - p;
                *a += c * *nx;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        for (p, a) in psi.iter_mut().zip(acc) {
            *p = a * phase;
        }
    }

    let out = QuantumState { n: h.n, amplitudes: psi };
    let residual = (out.norm() - psi0.norm()).abs();
    if residual > 1e-9_f64.max(steps as f64 * tol) {
        return Err(Error::Numerical { message: "propagation lost unitarity".into(), residual });
    }
    Ok(out)
}

/// A quench with its Hamiltonian assembled once, for repeated proposals.
#[derive(Clone, Debug)]
pub struct Quench {
    spec: QuenchSpec,
    hamiltonian: Hamiltonian,
    tol: f64,
}

impl Quench {
    pub fn new(spec: QuenchSpec) -> Result<Self> {
        Self::with_tolerance(spec, DEFAULT_TOL)
    }

    pub fn with_tolerance(spec: QuenchSpec, tol: f64) -> Result<Self> {
        let hamiltonian = build_hamiltonian(&spec)?;
        Ok(Quench { spec, hamiltonian, tol })
    }

    pub fn spec(&self) -> &QuenchSpec {
        &self.spec
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// `r_q(z | z') = |<z|U|z'>|²` for every `z`.
    pub fn proposal_row(&self, from: &BitString) -> Result<Vec<f64>> {
        if from.len() != self.n() {
            return Err(Error::arg(format!("bitstring length {} != atom count {}", from.len(), self.n())));
        }
        let psi = propagate(&self.hamiltonian, &QuantumState::basis(from), self.spec.t, self.tol)?;
        Ok(psi.probabilities())
    }

    /// Column-stochastic kernel `K[(z, z')] = r_q(z | z')`.
    pub fn transition_kernel(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        if n > KERNEL_CAP {
            return Err(Error::Capacity { what: "full quench kernel", size: n, cap: KERNEL_CAP });
        }
        let dim = 1usize << n;
        let column = |c: usize| self.proposal_row(&BitString::from_index(n, c));
        #[cfg(feature = "parallel")]
        let cols: Vec<Vec<f64>> = (0..dim).into_par_iter().map(column).collect::<Result<_>>()?;
        #[cfg(not(feature = "parallel"))]
        let cols: Vec<Vec<f64>> = (0..dim).map(column).collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(dim, dim, |r, c| cols[c][r]))
    }
}

pub fn proposal_row(spec: &QuenchSpec, from: &BitString) -> Result<Vec<f64>> {
    Quench::new(spec.clone())?.proposal_row(from)
}

pub fn transition_kernel(spec: &QuenchSpec) -> Result<DMatrix<f64>> {
    if spec.n() > KERNEL_CAP {
        return Err(Error::Capacity { what: "full quench kernel", size: spec.n(), cap: KERNEL_CAP });
    }
    Quench::new(spec.clone())?.transition_kernel()
}

/// Result of the masked π-pulse preparation.
#[derive(Clone, Debug)]
pub struct MaskedPreparation {
    pub state: QuantumState,
    pub fidelity: f64,
    /// The target excites two atoms within one blockade radius.
    pub independence_warning: bool,
}

/// Prepares `|target>` from `|0...0>`: atoms whose target bit is 0 get an
/// extra detuning `mask_detuning` and a resonant drive is applied for
/// `Ωt = π`.
pub fn prepare_masked_state(params: &RydbergParams, target: &BitString, mask_detuning: f64) -> Result<MaskedPreparation> {
    if !(mask_detuning > 0.0) {
        return Err(Error::arg(format!("mask detuning must be positive, got {mask_detuning}")));
    }
    if !(params.omega > 0.0) {
        return Err(Error::arg("masked preparation needs a nonzero Rabi frequency"));
    }
    let n = params.n();
    if target.len() != n {
        return Err(Error::arg(format!("target length {} != atom count {n}", target.len())));
    }
    let graph = unit_disk_graph(&params.atoms, blockade_radius(params.c6, params.omega)?)?;
    let independence_warning = graph.violation_count(target)? > 0;

    let mut resonant = params.clone();
    resonant.delta = 0.0;
    resonant.delta_local = vec![0.0; n];
    let mask = (0..n).map(|i| if target.get(i) { 0.0 } else { mask_detuning }).collect();
    let spec = QuenchSpec::new(resonant, std::f64::consts::PI / params.omega)?.with_mask(mask)?;
    let h = build_hamiltonian(&spec)?;
    let state = propagate(&h, &QuantumState::basis(&BitString::zeros(n)), spec.t, DEFAULT_TOL)?;
    let fidelity = state.fidelity(target);
    Ok(MaskedPreparation { state, fidelity, independence_warning })
}

/// Masked preparation followed by a drive with the mask removed and
/// projective measurements.
#[derive(Clone, Debug)]
pub struct Diffusion {
    pub preparation: MaskedPreparation,
    /// Outcome probabilities after the drive.
    pub probabilities: Vec<f64>,
    pub shots: Vec<BitString>,
}

/// Prepares `target`, evolves under `params` (no mask) for time `t`, and
/// samples `shots` measurements. `t = π/(2Ω)` is the quarter-period drive.
pub fn diffuse<R: Rng + ?Sized>(
    params: &RydbergParams,
    target: &BitString,
    mask_detuning: f64,
    t: f64,
    shots: usize,
    rng: &mut R,
) -> Result<Diffusion> {
    let preparation = prepare_masked_state(params, target, mask_detuning)?;
    let spec = QuenchSpec::new(params.clone(), t)?;
    let h = build_hamiltonian(&spec)?;
    let state = propagate(&h, &preparation.state, t, DEFAULT_TOL)?;
    let probabilities = state.probabilities();
    let dist = WeightedIndex::new(&probabilities)
        .map_err(|e| Error::Numerical { message: format!("outcome distribution: {e}"), residual: state.norm() - 1.0 })?;
    let n = params.n();
    let shots = (0..shots).map(|_| BitString::from_index(n, dist.sample(rng))).collect();
    Ok(Diffusion { preparation, probabilities, shots })
}
