//! Classical Rydberg energy model, exact Boltzmann distributions and the
//! binary/spin change of basis.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::energy::{Energy, QuadraticEnergy};
use crate::error::{Error, Result};
use crate::lattice::AtomArray;

/// Largest `n` for which [`boltzmann`] enumerates `2^n` states.
pub const BOLTZMANN_CAP: usize = 24;

/// Sign of the detuning term in the classical energy. `Plus` evaluates
/// `+Δ z_i`; `Minus` follows the Hamiltonian's `-Δ n_i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetuningSign {
    #[default]
    Plus,
    Minus,
}

impl DetuningSign {
    pub fn factor(self) -> f64 {
        match self {
            DetuningSign::Plus => 1.0,
            DetuningSign::Minus => -1.0,
        }
    }
}

/// Atom positions plus drive and interaction parameters. Frequencies in
/// rad/μs, lengths in μm, `c6` in rad/μs·μm⁶.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RydbergParams {
    pub atoms: AtomArray,
    pub omega: f64,
    pub delta: f64,
    pub delta_local: Vec<f64>,
    pub c6: f64,
    #[serde(default)]
    pub detuning_sign: DetuningSign,
}

impl RydbergParams {
    pub fn new(atoms: AtomArray, omega: f64, delta: f64, c6: f64) -> Result<Self> {
        let n = atoms.len();
        let p = RydbergParams { atoms, omega, delta, delta_local: vec![0.0; n], c6, detuning_sign: DetuningSign::Plus };
        p.validate()?;
        Ok(p)
    }

    pub fn with_local_detuning(mut self, delta_local: Vec<f64>) -> Result<Self> {
        self.delta_local = delta_local;
        self.validate()?;
        Ok(self)
    }

    pub fn with_detuning_sign(mut self, sign: DetuningSign) -> Self {
        self.detuning_sign = sign;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(Error::arg(format!("Rabi frequency must be finite and >= 0, got {}", self.omega)));
        }
        if !(self.c6 > 0.0) || !self.c6.is_finite() {
            return Err(Error::arg(format!("C6 must be finite and > 0, got {}", self.c6)));
        }
        if !self.delta.is_finite() || self.delta_local.iter().any(|d| !d.is_finite()) {
            return Err(Error::arg("detunings must be finite"));
        }
        if self.delta_local.len() != self.atoms.len() {
            return Err(Error::arg(format!(
                "delta_local has {} entries for {} atoms",
                self.delta_local.len(),
                self.atoms.len()
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.atoms.len()
    }

    /// Van der Waals interaction `C6 / |r_i - r_j|^6`.
    pub fn interaction(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.n();
        if i == j || i >= n || j >= n {
            return Err(Error::arg(format!("interaction needs distinct atom indices below {n}, got ({i}, {j})")));
        }
        Ok(self.c6 / self.atoms.distance(i, j).powi(6))
    }

    /// Classical energy as an explicit quadratic form over unordered pairs.
    pub fn quadratic_energy(&self) -> QuadraticEnergy {
        let n = self.n();
        let s = self.detuning_sign.factor();
        let linear = (0..n).map(|i| s * (self.delta + self.delta_local[i])).collect();
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j, self.c6 / self.atoms.distance(i, j).powi(6)));
            }
        }
        QuadraticEnergy { constant: 0.0, linear, pairs }
    }

    /// `E(z) = sum_i (Δ + Δ_local,i) z_i + sum_{i<j} V_ij z_i z_j`.
    pub fn classical_energy(&self, z: &BitString) -> Result<f64> {
        if z.len() != self.n() {
            return Err(Error::arg(format!("bitstring length {} != atom count {}", z.len(), self.n())));
        }
        Ok(self.quadratic_energy().energy(z))
    }
}

/// Probabilities over `{0,1}^n` (or over bins) with the log normaliser that
/// produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    pub probs: Vec<f64>,
    pub log_partition: f64,
}

impl DiscreteDistribution {
    pub fn uniform(len: usize) -> Self {
        DiscreteDistribution { probs: vec![1.0 / len as f64; len], log_partition: (len as f64).ln() }
    }

    /// Normalises non-negative weights given on a log scale.
    pub fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::arg("log weights must contain a finite maximum"));
        }
        let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = w.iter().sum();
        Ok(DiscreteDistribution { probs: w.iter().map(|x| x / sum).collect(), log_partition: max + sum.ln() })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Exact Boltzmann distribution `exp(-E(z)/τ)/Z` over all `2^n` strings.
pub fn boltzmann<F>(energy: F, n: usize, tau: f64) -> Result<DiscreteDistribution>
where
    F: Fn(&BitString) -> f64,
{
    if n == 0 || n > BOLTZMANN_CAP {
        return Err(Error::Capacity { what: "Boltzmann enumeration", size: n, cap: BOLTZMANN_CAP });
    }
    if !(tau > 0.0) {
        return Err(Error::arg(format!("temperature must be positive, got {tau}")));
    }
    let log_w: Vec<f64> = BitString::all(n).map(|z| -energy(&z) / tau).collect();
    DiscreteDistribution::from_log_weights(&log_w)
}

/// Shorthand for [`boltzmann`] over an [`Energy`].
pub fn boltzmann_of(energy: &dyn Energy, tau: f64) -> Result<DiscreteDistribution> {
    boltzmann(|z| energy.energy(z), energy.n(), tau)
}

/// Spin-basis (Ising) form of a binary quadratic energy: with
/// `z_i = (s_i + 1)/2`, `E = offset + sum_i h_i s_i + sum_{i<j} J_ij s_i s_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingForm {
    pub h: Vec<f64>,
    pub j: Vec<(usize, usize, f64)>,
    pub offset: f64,
}

impl IsingForm {
    pub fn energy(&self, spins: &[f64]) -> f64 {
        self.offset
            + self.h.iter().zip(spins).map(|(h, s)| h * s).sum::<f64>()
            + self.j.iter().map(|&(a, b, w)| w * spins[a] * spins[b]).sum::<f64>()
    }
}

pub fn ising_coefficients(linear: &[f64], quadratic: &[(usize, usize, f64)]) -> IsingForm {
    let mut h: Vec<f64> = linear.iter().map(|a| a / 2.0).collect();
    let mut offset: f64 = linear.iter().sum::<f64>() / 2.0;
    let mut j = Vec::with_capacity(quadratic.len());
    for &(a, b, w) in quadratic {
        let q = w / 4.0;
        j.push((a, b, q));
        h[a] += q;
        h[b] += q;
        offset += q;
    }
    IsingForm { h, j, offset }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_king_subgraph, Defects};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(d: f64, delta: f64, c6: f64) -> RydbergParams {
        let atoms = AtomArray::from_positions(vec![[0.0, 0.0], [d, 0.0]]).unwrap();
        RydbergParams::new(atoms, 1.0, delta, c6).unwrap()
    }

    #[test]
    fn interaction_examples() {
        assert!((pair(1.0, 0.0, 1.0).interaction(0, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((pair(2.0, 0.0, 1.0).interaction(0, 1).unwrap() - 0.015625).abs() < 1e-15);
        assert!(pair(1.0, 0.0, 1.0).interaction(1, 1).is_err());
    }

    #[test]
    fn interaction_is_symmetric() {
        let atoms = build_king_subgraph(3, 3, 5.4, Defects::Random { seed: 1, density: 0.2 }).unwrap();
        let p = RydbergParams::new(atoms, 15.8, 1.0, 5.42e6).unwrap();
        for i in 0..p.n() {
            for j in 0..p.n() {
                if i != j {
                    assert_eq!(p.interaction(i, j).unwrap(), p.interaction(j, i).unwrap());
                }
            }
        }
    }

    #[test]
    fn classical_energy_examples() {
        let p = pair(1.0, 1.0, 1.0);
        assert_eq!(p.classical_energy(&BitString::zeros(2)).unwrap(), 0.0);
        assert!((p.classical_energy(&"11".parse().unwrap()).unwrap() - 3.0).abs() < 1e-15);
        let single = RydbergParams::new(AtomArray::from_positions(vec![[0.0, 0.0]]).unwrap(), 1.0, 2.5, 1.0).unwrap();
        assert_eq!(single.classical_energy(&"1".parse().unwrap()).unwrap(), 2.5);
        assert!(p.classical_energy(&BitString::zeros(3)).is_err());
        let minus = pair(1.0, 1.0, 1.0).with_detuning_sign(DetuningSign::Minus);
        assert!((minus.classical_energy(&"11".parse().unwrap()).unwrap() - (-2.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        let atoms = AtomArray::from_positions(vec![[0.0, 0.0]]).unwrap();
        assert!(RydbergParams::new(atoms.clone(), -1.0, 0.0, 1.0).is_err());
        assert!(RydbergParams::new(atoms.clone(), 1.0, 0.0, 0.0).is_err());
        let p = RydbergParams::new(atoms, 1.0, 0.0, 1.0).unwrap();
        assert!(p.with_local_detuning(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn boltzmann_examples() {
        for (c, tau) in [(0.0, 1.0), (5.0, 0.1), (-3.0, 7.0)] {
            let d = boltzmann(|_| c, 3, tau).unwrap();
            assert!(d.probs.iter().all(|p| (p - 0.125).abs() < 1e-15));
        }
        let tau = 0.7;
        let d = boltzmann(|z| if z.get(0) { tau * 2f64.ln() } else { 0.0 }, 1, tau).unwrap();
        assert!((d.probs[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.probs[1] - 1.0 / 3.0).abs() < 1e-15);
        let hot = boltzmann(|z| z.count_ones() as f64, 4, 1e9).unwrap();
        assert!(hot.probs.iter().all(|p| (p - 1.0 / 16.0).abs() < 1e-6));
        assert!(matches!(boltzmann(|_| 0.0, 25, 1.0), Err(Error::Capacity { .. })));
        assert!(boltzmann(|_| 0.0, 2, 0.0).is_err());
    }

    #[test]
    fn boltzmann_log_partition() {
        let d = boltzmann(|z| z.count_ones() as f64, 2, 1.0).unwrap();
        let z: f64 = 1.0 + 2.0 * (-1f64).exp() + (-2f64).exp();
        assert!((d.log_partition - z.ln()).abs() < 1e-14);
    }

    #[test]
    fn ising_examples() {
        let f = ising_coefficients(&[3.0], &[]);
        assert_eq!((f.h[0], f.offset), (1.5, 1.5));
        let f = ising_coefficients(&[0.0, 0.0], &[(0, 1, 2.0)]);
        assert_eq!(f.j, vec![(0, 1, 0.5)]);
        assert_eq!((f.h[0], f.h[1], f.offset), (0.5, 0.5, 0.5));
    }

    #[test]
    fn ising_round_trip_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=6 {
            let lin: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut quad = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    quad.push((i, j, rng.random_range(-2.0..2.0)));
                }
            }
            let e = QuadraticEnergy::new(lin.clone(), quad.clone()).unwrap();
            let f = ising_coefficients(&lin, &quad);
            for z in BitString::all(n) {
                assert!((f.energy(&z.to_spins()) - e.energy(&z)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn energy_is_monotone_with_nonnegative_terms() {
        let atoms = build_king_subgraph(2, 3, 1.0, Defects::None).unwrap();
        let p = RydbergParams::new(atoms, 1.0, 0.4, 2.0).unwrap().with_local_detuning(vec![0.1; 6]).unwrap();
        for z in BitString::all(6) {
            for i in 0..6 {
                if !z.get(i) {
                    assert!(p.classical_energy(&z.flip(i)).unwrap() >= p.classical_energy(&z).unwrap());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn boltzmann_is_shift_invariant(seed in any::<u64>(), shift in -50.0f64..50.0, tau in 0.05f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e: Vec<f64> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = boltzmann(|z| e[z.index()], 4, tau).unwrap();
            let b = boltzmann(|z| e[z.index()] + shift, 4, tau).unwrap();
            for (x, y) in a.probs.iter().zip(&b.probs) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
