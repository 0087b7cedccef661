//! Proposal samplers, Metropolis-Hastings channels and their spectral
//! analysis.
//!
//! A [`Channel`] bundles a symmetric proposal sampler, a temperature, a
//! native energy and a depth `f`. One atomic step proposes `z` from the
//! current `z'` and accepts with probability `min(1, exp(-(C(z) - C(z'))/τ))`;
//! the channel `Γ_f` is `f` atomic steps in sequence.
//!
//! Transition matrices are column-stochastic: entry `(z, z')` is the
//! probability of moving to `z` from `z'`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::BitString;
use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::quench::{Quench, KERNEL_CAP};
use crate::rydberg::DiscreteDistribution;

/// Largest `n` for a classical [`channel_matrix`].
pub const CLASSICAL_MATRIX_CAP: usize = 16;
/// Chains memoise energies up to this many bits.
const MEMO_CAP: usize = 20;

/// Per-chain random stream: seed XOR chain index.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ chain)
}

/// Quench proposals with lazily cached rows `r_q(· | z')`.
pub struct QuantumProposal {
    quench: Quench,
    rows: Vec<OnceLock<Vec<f64>>>,
}

impl QuantumProposal {
    pub fn new(quench: Quench) -> Result<Self> {
        let n = quench.n();
        if n > KERNEL_CAP {
            return Err(Error::Capacity { what: "quantum proposal sampler", size: n, cap: KERNEL_CAP });
        }
        let rows = (0..1usize << n).map(|_| OnceLock::new()).collect();
        Ok(QuantumProposal { quench, rows })
    }

    pub fn quench(&self) -> &Quench {
        &self.quench
    }

    pub fn n(&self) -> usize {
        self.quench.n()
    }

    pub fn row(&self, from: &BitString) -> Result<&[f64]> {
        let cell = &self.rows[from.index()];
        if let Some(r) = cell.get() {
            return Ok(r);
        }
        let row = self.quench.proposal_row(from)?;
        let _ = cell.set(row);
        Ok(cell.get().expect("row was just set"))
    }
}

impl fmt::Debug for QuantumProposal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantumProposal").field("spec", self.quench.spec()).finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum Sampler {
    Quantum(Arc<QuantumProposal>),
    /// Flip one uniformly chosen bit.
    BitFlip,
    /// Uniform over all `2^n` strings.
    Uniform,
}

impl Sampler {
    pub fn quantum(quench: Quench) -> Result<Self> {
        Ok(Sampler::Quantum(Arc::new(QuantumProposal::new(quench)?)))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Quantum(_) => "quantum",
            Sampler::BitFlip => "bitflip",
            Sampler::Uniform => "uniform",
        }
    }

    /// Draws a proposal `z ~ r(· | from)`.
    pub fn propose<R: RngCore + ?Sized>(&self, from: &BitString, rng: &mut R) -> Result<BitString> {
        let n = from.len();
        match self {
            Sampler::BitFlip => Ok(from.flip(rng.random_range(0..n))),
            Sampler::Uniform => Ok(BitString::from_index(n, rng.next_u64() as usize)),
            Sampler::Quantum(q) => {
                if q.n() != n {
                    return Err(Error::arg(format!("quantum sampler has {} atoms, state {n} bits", q.n())));
                }
                let row = q.row(from)?;
                let total: f64 = row.iter().sum();
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                for (i, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(BitString::from_index(n, i));
                    }
                }
                // rounding at the top of the cumulative sum
                let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(from.index());
                Ok(BitString::from_index(n, last))
            }
        }
    }

    /// `r(to | from)`.
    pub fn probability(&self, to: &BitString, from: &BitString) -> Result<f64> {
        let n = from.len();
        Ok(match self {
            Sampler::BitFlip => {
                if to.hamming(from)? == 1 {
                    1.0 / n as f64
                } else {
                    0.0
                }
            }
            Sampler::Uniform => {
                to.hamming(from)?;
                0.5f64.powi(n as i32)
            }
            Sampler::Quantum(q) => q.row(from)?[to.index()],
        })
    }
}

/// Free-function form of [`Sampler::propose`].
pub fn propose<R: RngCore + ?Sized>(sampler: &Sampler, from: &BitString, rng: &mut R) -> Result<BitString> {
    sampler.propose(from, rng)
}

/// Column-stochastic proposal matrix `R[(z, z')] = r(z | z')`.
pub fn proposal_matrix(sampler: &Sampler, n: usize) -> Result<DMatrix<f64>> {
    check_matrix_cap(sampler, n)?;
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        let from = BitString::from_index(n, c);
        for r in 0..dim {
            m[(r, c)] = sampler.probability(&BitString::from_index(n, r), &from)?;
        }
    }
    Ok(m)
}

fn check_matrix_cap(sampler: &Sampler, n: usize) -> Result<()> {
    let cap = match sampler {
        Sampler::Quantum(_) => KERNEL_CAP,
        _ => CLASSICAL_MATRIX_CAP,
    };
    if n > cap {
        return Err(Error::Capacity { what: "transition matrix", size: n, cap });
    }
    Ok(())
}

/// `min(1, exp(-ΔC/τ))`.
pub fn acceptance_probability(delta_c: f64, tau: f64) -> f64 {
    if delta_c <= 0.0 {
        1.0
    } else {
        (-delta_c / tau).exp()
    }
}

/// Metropolis-Hastings test for an energy change `ΔC = C(z) - C(z')`.
/// Downhill and flat moves are accepted without consuming randomness.
pub fn mh_accept<R: RngCore + ?Sized>(delta_c: f64, tau: f64, rng: &mut R) -> bool {
    delta_c <= 0.0 || rng.random::<f64>() < acceptance_probability(delta_c, tau)
}

/// A Metropolis-Hastings channel `Γ_f`.
#[derive(Clone)]
pub struct Channel {
    sampler: Sampler,
    tau: f64,
    energy: Arc<dyn Energy>,
    depth: usize,
}

impl fmt::Debug for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Channel")
            .field("sampler", &self.sampler.name())
            .field("tau", &self.tau)
            .field("n", &self.energy.n())
            .field("depth", &self.depth)
            .finish()
    }
}

impl Channel {
    pub fn new(sampler: Sampler, tau: f64, energy: Arc<dyn Energy>, depth: usize) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::arg(format!("temperature must be positive, got {tau}")));
        }
        if depth == 0 {
            return Err(Error::arg("channel depth must be at least 1"));
        }
        if let Sampler::Quantum(q) = &sampler {
            if q.n() != energy.n() {
                return Err(Error::arg(format!("quantum sampler has {} atoms, energy {} bits", q.n(), energy.n())));
            }
        }
        Ok(Channel { sampler, tau, energy, depth })
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn energy(&self) -> &Arc<dyn Energy> {
        &self.energy
    }

    pub fn n(&self) -> usize {
        self.energy.n()
    }

    #[must_use]
    pub fn with_depth(&self, depth: usize) -> Self {
        assert!(depth >= 1);
        Channel { depth, ..self.clone() }
    }

    #[must_use]
    pub fn with_tau(&self, tau: f64) -> Self {
        assert!(tau > 0.0);
        Channel { tau, ..self.clone() }
    }

    fn check(&self, z: &BitString) -> Result<()> {
        if z.len() != self.n() {
            return Err(Error::arg(format!("state has {} bits, channel {}", z.len(), self.n())));
        }
        Ok(())
    }

    /// One atomic Γ step. Rejected proposals return `from`.
    pub fn step<R: RngCore + ?Sized>(&self, from: &BitString, rng: &mut R) -> Result<BitString> {
        self.check(from)?;
        let e_from = self.energy.energy(from);
        let (_, next, _) = self.step_inner(from, e_from, &mut |z| self.energy.energy(z), rng)?;
        Ok(next.0)
    }

    fn step_inner<R: RngCore + ?Sized>(
        &self,
        from: &BitString,
        e_from: f64,
        energy: &mut dyn FnMut(&BitString) -> f64,
        rng: &mut R,
    ) -> Result<(BitString, (BitString, f64), bool)> {
        let proposal = self.sampler.propose(from, rng)?;
        if proposal == *from {
            return Ok((proposal, (*from, e_from), true));
        }
        let e_prop = energy(&proposal);
        if mh_accept(e_prop - e_from, self.tau, rng) {
            Ok((proposal, (proposal, e_prop), true))
        } else {
            Ok((proposal, (*from, e_from), false))
        }
    }

    /// `Γ_f`: `depth` atomic steps.
    pub fn apply<R: RngCore + ?Sized>(&self, z0: &BitString, rng: &mut R) -> Result<BitString> {
        let mut z = *z0;
        for _ in 0..self.depth {
            z = self.step(&z, rng)?;
        }
        Ok(z)
    }
}

pub fn channel_step<R: RngCore + ?Sized>(channel: &Channel, from: &BitString, rng: &mut R) -> Result<BitString> {
    channel.step(from, rng)
}

pub fn apply_channel<R: RngCore + ?Sized>(channel: &Channel, z0: &BitString, rng: &mut R) -> Result<BitString> {
    channel.apply(z0, rng)
}

/// Noise `ε = z' ⊕ z` carried by a channel update.
pub fn xor_noise(from: &BitString, to: &BitString) -> Result<BitString> {
    from.xor(to)
}

/// Exact single-step kernel of the channel, rejection mass on the diagonal.
pub fn channel_matrix(channel: &Channel) -> Result<DMatrix<f64>> {
    let n = channel.n();
    check_matrix_cap(channel.sampler(), n)?;
    let dim = 1usize << n;
    let energies: Vec<f64> = BitString::all(n).map(|z| channel.energy.energy(&z)).collect();
    let column = |c: usize| -> Result<Vec<f64>> {
        let from = BitString::from_index(n, c);
        let mut col = vec![0.0; dim];
        let mut moved = 0.0;
        for (r, slot) in col.iter_mut().enumerate() {
            if r == c {
                continue;
            }
            let to = BitString::from_index(n, r);
            let p = channel.sampler.probability(&to, &from)?;
            if p > 0.0 {
                *slot = p * acceptance_probability(energies[r] - energies[c], channel.tau);
                moved += *slot;
            }
        }
        col[c] = 1.0 - moved;
        Ok(col)
    };
    #[cfg(feature = "parallel")]
    let cols: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..dim).into_par_iter().map(column).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let cols: Vec<Vec<f64>> = (0..dim).map(column).collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(dim, dim, |r, c| cols[c][r]))
}

fn check_stochastic(p: &DMatrix<f64>) -> Result<()> {
    if !p.is_square() || p.nrows() == 0 {
        return Err(Error::arg(format!("transition matrix must be square, got {}x{}", p.nrows(), p.ncols())));
    }
    if let Some(v) = p.iter().find(|v| !(**v >= -1e-12)) {
        return Err(Error::arg(format!("transition matrix has entry {v}")));
    }
    for (c, col) in p.column_iter().enumerate() {
        let s = col.sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("column {c} sums to {s}, not 1")));
        }
    }
    Ok(())
}

/// `P^f` by repeated composition `Γ_{k+1} = Γ Γ_k`.
pub fn telescope(p: &DMatrix<f64>, f: usize) -> Result<DMatrix<f64>> {
    check_stochastic(p)?;
    if f == 0 {
        return Err(Error::arg("telescoping depth must be at least 1"));
    }
    let mut out = p.clone();
    for _ in 1..f {
        out = p * out;
    }
    Ok(out)
}

/// Eigenvalue moduli in descending order. When `mu` is supplied and
/// strictly positive, the similarity transform `D^{-1/2} P D^{1/2}` (with
/// `D = diag(mu)`) is symmetric under detailed balance and a symmetric
/// eigensolver is used; otherwise a real Schur decomposition.
pub fn eigenvalue_moduli(p: &DMatrix<f64>, mu: Option<&[f64]>) -> Result<Vec<f64>> {
    check_stochastic(p)?;
    let dim = p.nrows();
    let mut moduli = None;
    if let Some(mu) = mu {
        if mu.len() != dim {
            return Err(Error::arg(format!("distribution has {} entries for a {dim}-state kernel", mu.len())));
        }
        if mu.iter().all(|&m| m > 1e-200) {
            let sq: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
            let s = DMatrix::from_fn(dim, dim, |i, j| p[(i, j)] * sq[j] / sq[i]);
            let asym = (&s - s.transpose()).amax();
            if asym <= 1e-9 * s.amax().max(1.0) {
                let sym = (&s + s.transpose()) * 0.5;
                let eig = SymmetricEigen::new(sym);
                moduli = Some(eig.eigenvalues.iter().map(|l| l.abs()).collect::<Vec<_>>());
            }
        }
    }
    let mut moduli = match moduli {
        Some(m) => m,
        None => {
            let schur = Schur::try_new(p.clone(), 1e-14, 100_000).ok_or_else(|| Error::Numerical {
                message: "Schur decomposition did not converge".into(),
                residual: f64::NAN,
            })?;
            schur.complex_eigenvalues().iter().map(|l| l.norm()).collect()
        }
    };
    moduli.sort_by(|a, b| b.total_cmp(a));
    Ok(moduli)
}

/// `δ = 1 - max_{λ≠1} |λ|`, excluding exactly one copy of the leading
/// eigenvalue; clamped to `[0, 1]`.
pub fn spectral_gap(p: &DMatrix<f64>, mu: Option<&[f64]>) -> Result<f64> {
    let moduli = eigenvalue_moduli(p, mu)?;
    Ok(match moduli.get(1) {
        Some(second) => (1.0 - second).clamp(0.0, 1.0),
        None => 1.0,
    })
}

/// `max_{z,z'} |P(z|z') μ(z') - P(z'|z) μ(z)|`.
pub fn detailed_balance_residual(p: &DMatrix<f64>, mu: &[f64]) -> Result<f64> {
    let dim = p.nrows();
    if !p.is_square() || mu.len() != dim {
        return Err(Error::arg("kernel and distribution dimensions disagree"));
    }
    let mut worst = 0.0f64;
    for c in 0..dim {
        for r in 0..dim {
            worst = worst.max((p[(r, c)] * mu[c] - p[(c, r)] * mu[r]).abs());
        }
    }
    Ok(worst)
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainStep {
    pub step: usize,
    pub state: BitString,
    pub energy: f64,
    pub proposal: BitString,
    pub accepted: bool,
}

/// Trajectory of atomic channel steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainRecord {
    pub seed: u64,
    pub start: BitString,
    pub start_energy: f64,
    pub steps: Vec<ChainStep>,
}

impl ChainRecord {
    pub fn states(&self) -> impl Iterator<Item = &BitString> {
        self.steps.iter().map(|s| &s.state)
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.steps.iter().filter(|s| s.accepted).count() as f64 / self.steps.len().max(1) as f64
    }

    /// Visit frequencies over `{0,1}^n` after discarding `burn_in` steps.
    pub fn empirical_distribution(&self, burn_in: usize) -> Vec<f64> {
        let n = self.start.len();
        let mut counts = vec![0.0; 1 << n];
        let kept = &self.steps[burn_in.min(self.steps.len())..];
        for s in kept {
            counts[s.state.index()] += 1.0;
        }
        let total = kept.len().max(1) as f64;
        counts.iter_mut().for_each(|c| *c /= total);
        counts
    }

    pub const CSV_HEADER: &'static str = "step,state,energy,proposal,accepted";

    /// CSV with little-endian bitstring literals and round-trip floats.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for s in &self.steps {
            writeln!(w, "{},{},{:?},{},{}", s.step, s.state, s.energy, s.proposal, s.accepted as u8)?;
        }
        Ok(())
    }
}

/// Kernel as `row,col,probability` lines, labels as little-endian bitstring
/// literals. Zero entries are skipped.
pub fn write_kernel_csv<W: Write>(p: &DMatrix<f64>, mut w: W) -> Result<()> {
    let dim = p.nrows();
    if !dim.is_power_of_two() || p.ncols() != dim {
        return Err(Error::arg(format!("kernel of size {}x{} is not 2^n square", p.nrows(), p.ncols())));
    }
    let n = dim.trailing_zeros() as usize;
    writeln!(w, "row,col,probability")?;
    for c in 0..dim {
        for r in 0..dim {
            let v = p[(r, c)];
            if v != 0.0 {
                writeln!(w, "{},{},{:?}", BitString::from_index(n, r), BitString::from_index(n, c), v)?;
            }
        }
    }
    Ok(())
}

/// Runs `steps` atomic Metropolis-Hastings steps from `z0`.
pub fn run_chain(channel: &Channel, z0: &BitString, steps: usize, seed: u64) -> Result<ChainRecord> {
    run_chain_indexed(channel, z0, steps, seed, 0)
}

/// As [`run_chain`] on stream `seed ^ chain`.
pub fn run_chain_indexed(channel: &Channel, z0: &BitString, steps: usize, seed: u64, chain: u64) -> Result<ChainRecord> {
    channel.check(z0)?;
    if steps == 0 {
        return Err(Error::arg("a chain needs at least one step"));
    }
    let mut rng = chain_rng(seed, chain);
    let memoize = channel.n() <= MEMO_CAP;
    let mut memo: HashMap<u64, f64> = HashMap::new();
    let energy_fn = channel.energy.clone();
    let mut energy = |z: &BitString| -> f64 {
        if memoize {
            *memo.entry(z.raw()).or_insert_with(|| energy_fn.energy(z))
        } else {
            energy_fn.energy(z)
        }
    };
    let start_energy = energy(z0);
    let mut cur = (*z0, start_energy);
    let mut record = Vec::with_capacity(steps);
    for step in 1..=steps {
        let (proposal, next, accepted) = channel.step_inner(&cur.0, cur.1, &mut energy, &mut rng)?;
        cur = next;
        record.push(ChainStep { step, state: cur.0, energy: cur.1, proposal, accepted });
    }
    Ok(ChainRecord { seed, start: *z0, start_energy, steps: record })
}

/// Boltzmann distribution of a channel's own energy at its temperature.
pub fn stationary_distribution(channel: &Channel) -> Result<DiscreteDistribution> {
    crate::rydberg::boltzmann_of(channel.energy.as_ref(), channel.tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyTable;
    use crate::lattice::AtomArray;
    use crate::quench::QuenchSpec;
    use crate::rydberg::RydbergParams;

    fn flat(n: usize) -> Arc<dyn Energy> {
        Arc::new(EnergyTable::flat(n, 0.0))
    }

    fn random_table(n: usize, seed: u64) -> Arc<dyn Energy> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Arc::new(EnergyTable::new(n, (0..1 << n).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap())
    }

    fn quantum(n: usize, t: f64) -> Sampler {
        let atoms = AtomArray::from_positions((0..n).map(|i| [i as f64 * 1.2, (i % 2) as f64 * 0.5]).collect()).unwrap();
        let p = RydbergParams::new(atoms, 2.0, 0.7, 3.0).unwrap();
        Sampler::quantum(Quench::new(QuenchSpec::new(p, t).unwrap()).unwrap()).unwrap()
    }

    fn three_sigma(p: f64, trials: usize) -> f64 {
        3.0 * (p * (1.0 - p) / trials as f64).sqrt()
    }

    #[test]
    fn bitflip_moves_one_bit() {
        let mut rng = chain_rng(1, 0);
        let z = BitString::zeros(3);
        for _ in 0..1000 {
            assert_eq!(Sampler::BitFlip.propose(&z, &mut rng).unwrap().hamming(&z).unwrap(), 1);
        }
    }

    #[test]
    fn uniform_frequencies() {
        let mut rng = chain_rng(2, 0);
        let trials = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..trials {
            counts[Sampler::Uniform.propose(&BitString::zeros(2), &mut rng).unwrap().index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / trials as f64 - 0.25).abs() <= three_sigma(0.25, trials));
        }
    }

    #[test]
    fn quantum_zero_time_stays_put() {
        let s = quantum(3, 0.0);
        let mut rng = chain_rng(3, 0);
        for z in BitString::all(3) {
            for _ in 0..20 {
                assert_eq!(s.propose(&z, &mut rng).unwrap(), z);
            }
        }
    }

    #[test]
    fn samplers_are_symmetric() {
        for n in 1..=3 {
            for s in [Sampler::BitFlip, Sampler::Uniform, quantum(n, 0.8)] {
                let r = proposal_matrix(&s, n).unwrap();
                let tol = if matches!(s, Sampler::Quantum(_)) { 1e-8 } else { 0.0 };
                assert!((&r - r.transpose()).amax() <= tol);
            }
        }
    }

    #[test]
    fn acceptance_examples() {
        let mut rng = chain_rng(4, 0);
        assert!(mh_accept(0.0, 1.0, &mut rng));
        assert!(mh_accept(-3.0, 1.0, &mut rng));
        let tau = 0.3;
        let trials = 100_000;
        let hits = (0..trials).filter(|_| mh_accept(tau * 2f64.ln(), tau, &mut rng)).count();
        assert!((hits as f64 / trials as f64 - 0.5).abs() <= three_sigma(0.5, trials));
    }

    #[test]
    fn flat_energy_step_follows_proposal() {
        let ch = Channel::new(Sampler::BitFlip, 1.0, flat(2), 1).unwrap();
        let p = channel_matrix(&ch).unwrap();
        let r = proposal_matrix(&Sampler::BitFlip, 2).unwrap();
        assert!((p - r).amax() < 1e-15);
    }

    #[test]
    fn frozen_temperature_rejects_uphill() {
        let e: Arc<dyn Energy> = Arc::new(EnergyTable::new(1, vec![0.0, 1.0]).unwrap());
        let ch = Channel::new(Sampler::BitFlip, 1e-12, e, 1).unwrap();
        let mut rng = chain_rng(5, 0);
        for _ in 0..100 {
            assert_eq!(ch.step(&BitString::zeros(1), &mut rng).unwrap(), BitString::zeros(1));
        }
    }

    #[test]
    fn empirical_step_matches_channel_matrix() {
        let e: Arc<dyn Energy> = Arc::new(EnergyTable::new(2, vec![0.0, 1.0, 1.0, 2.0]).unwrap());
        let ch = Channel::new(Sampler::BitFlip, 1.0, e, 1).unwrap();
        let p = channel_matrix(&ch).unwrap();
        let trials = 100_000;
        let mut rng = chain_rng(6, 0);
        for from in BitString::all(2) {
            let mut counts = [0usize; 4];
            for _ in 0..trials {
                counts[ch.step(&from, &mut rng).unwrap().index()] += 1;
            }
            for to in 0..4 {
                let want = p[(to, from.index())];
                let got = counts[to] as f64 / trials as f64;
                assert!((got - want).abs() <= three_sigma(want, trials).max(1e-12), "{from}->{to}");
            }
        }
    }

    #[test]
    fn xor_noise_examples() {
        let a: BitString = "101".parse().unwrap();
        assert_eq!(xor_noise(&a, &a).unwrap(), BitString::zeros(3));
        assert_eq!(xor_noise(&a, &"001".parse().unwrap()).unwrap().to_string(), "100");
        assert!(xor_noise(&a, &BitString::zeros(2)).is_err());
    }

    #[test]
    fn depth_one_equals_step() {
        let ch = Channel::new(Sampler::BitFlip, 0.5, random_table(3, 1), 1).unwrap();
        let z = BitString::from_index(3, 5);
        let (mut a, mut b) = (chain_rng(9, 0), chain_rng(9, 0));
        for _ in 0..50 {
            assert_eq!(ch.apply(&z, &mut a).unwrap(), ch.step(&z, &mut b).unwrap());
        }
    }

    #[test]
    fn uniform_stays_uniform_through_depth() {
        let ch = Channel::new(Sampler::Uniform, 1.0, flat(3), 3).unwrap();
        let p = telescope(&channel_matrix(&ch).unwrap(), 3).unwrap();
        assert!(p.iter().all(|v| (v - 0.125).abs() < 1e-14));
    }

    #[test]
    fn channel_matrix_examples() {
        let u = channel_matrix(&Channel::new(Sampler::Uniform, 1.0, flat(3), 1).unwrap()).unwrap();
        assert!(u.iter().all(|v| (v - 0.125).abs() < 1e-15));
        let b = channel_matrix(&Channel::new(Sampler::BitFlip, 1.0, flat(1), 1).unwrap()).unwrap();
        assert_eq!(b, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn detailed_balance_all_samplers() {
        for seed in 0..4 {
            let e = random_table(3, seed);
            for s in [Sampler::BitFlip, Sampler::Uniform, quantum(3, 0.9)] {
                let ch = Channel::new(s, 0.7, e.clone(), 1).unwrap();
                let p = channel_matrix(&ch).unwrap();
                for c in p.column_iter() {
                    assert!((c.sum() - 1.0).abs() < 1e-12);
                }
                let mu = stationary_distribution(&ch).unwrap();
                assert!(detailed_balance_residual(&p, &mu.probs).unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn residual_examples() {
        assert_eq!(detailed_balance_residual(&DMatrix::identity(3, 3), &[0.2, 0.3, 0.5]).unwrap(), 0.0);
        // columns are the "from" state: P(0|0)=1, P(1|0)=0, P(0|1)=0.5, P(1|1)=0.5
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.5]);
        assert!((detailed_balance_residual(&p, &[0.5, 0.5]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn telescope_examples() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(telescope(&b, 1).unwrap(), b);
        assert_eq!(telescope(&b, 2).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(telescope(&DMatrix::identity(4, 4), 7).unwrap(), DMatrix::identity(4, 4));
        assert!(telescope(&DMatrix::from_element(2, 2, 0.7), 2).is_err());
        assert!(telescope(&b, 0).is_err());
    }

    #[test]
    fn spectral_gap_examples() {
        let u = channel_matrix(&Channel::new(Sampler::Uniform, 1.0, flat(3), 1).unwrap()).unwrap();
        assert!((spectral_gap(&u, None).unwrap() - 1.0).abs() < 1e-10);
        let uniform_mu = vec![0.125; 8];
        assert!((spectral_gap(&u, Some(&uniform_mu)).unwrap() - 1.0).abs() < 1e-10);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(spectral_gap(&b, None).unwrap().abs() < 1e-10);
        assert_eq!(spectral_gap(&DMatrix::identity(4, 4), None).unwrap(), 0.0);
        assert_eq!(spectral_gap(&DMatrix::identity(1, 1), None).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_and_general_solvers_agree() {
        let ch = Channel::new(Sampler::BitFlip, 0.8, random_table(4, 7), 1).unwrap();
        let p = channel_matrix(&ch).unwrap();
        let mu = stationary_distribution(&ch).unwrap();
        let a = eigenvalue_moduli(&p, Some(&mu.probs)).unwrap();
        let b = eigenvalue_moduli(&p, None).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn chains_are_reproducible() {
        let ch = Channel::new(Sampler::BitFlip, 1.0, random_table(4, 2), 1).unwrap();
        let a = run_chain(&ch, &BitString::zeros(4), 500, 77).unwrap();
        let b = run_chain(&ch, &BitString::zeros(4), 500, 77).unwrap();
        assert_eq!(a, b);
        let c = run_chain_indexed(&ch, &BitString::zeros(4), 500, 77, 1).unwrap();
        assert_ne!(a, c);
        let mut prev = a.start;
        for s in &a.steps {
            if !s.accepted {
                assert_eq!(s.state, prev);
            }
            assert!((s.energy - ch.energy().energy(&s.state)).abs() < 1e-12);
            prev = s.state;
        }
        assert!(run_chain(&ch, &BitString::zeros(4), 0, 1).is_err());
    }

    #[test]
    fn uniform_chain_is_uniform() {
        let ch = Channel::new(Sampler::Uniform, 1.0, flat(3), 1).unwrap();
        let rec = run_chain(&ch, &BitString::zeros(3), 100_000, 3).unwrap();
        let emp = rec.empirical_distribution(0);
        assert!(total_variation(&emp, &[0.125; 8]) <= 0.02);
    }

    #[test]
    fn chain_csv_layout() {
        let ch = Channel::new(Sampler::BitFlip, 1.0, flat(2), 1).unwrap();
        let rec = run_chain(&ch, &BitString::zeros(2), 2, 1).unwrap();
        let mut out = Vec::new();
        rec.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,state,energy,proposal,accepted");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,"));
        assert!(lines[1].ends_with(",1"));
    }

    #[test]
    fn kernel_csv_labels() {
        let p = DMatrix::from_row_slice(2, 2, &[0.25, 1.0, 0.75, 0.0]);
        let mut out = Vec::new();
        write_kernel_csv(&p, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "row,col,probability\n0,0,0.25\n1,0,0.75\n0,1,1.0\n");
        assert!(write_kernel_csv(&DMatrix::zeros(3, 3), Vec::new()).is_err());
    }
}
