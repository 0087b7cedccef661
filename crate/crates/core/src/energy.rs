//! Native energy functions `C_z` over bitstrings.

use std::fmt;
use std::sync::Arc;

use crate::bits::BitString;
use crate::error::{Error, Result};

/// A total energy function on `{0,1}^n`.
pub trait Energy: Send + Sync {
    fn n(&self) -> usize;

    fn energy(&self, z: &BitString) -> f64;

    /// Value and gradient at a relaxed (real-valued) occupation vector, when
    /// the energy has a smooth extension. Used by the straight-through path
    /// in training; energies without one are treated as constants there.
    fn relaxed(&self, _z: &[f64]) -> Option<(f64, Vec<f64>)> {
        None
    }
}

/// `E(z) = c + sum_i a_i z_i + sum_{i<j} b_ij z_i z_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticEnergy {
    pub constant: f64,
    pub linear: Vec<f64>,
    /// Unordered pairs `(i, j, b_ij)` with `i < j`.
    pub pairs: Vec<(usize, usize, f64)>,
}

impl QuadraticEnergy {
    pub fn new(linear: Vec<f64>, pairs: Vec<(usize, usize, f64)>) -> Result<Self> {
        let n = linear.len();
        for &(i, j, _) in &pairs {
            if i == j || i >= n || j >= n {
                return Err(Error::arg(format!("invalid pair ({i}, {j}) for {n} variables")));
            }
        }
        Ok(QuadraticEnergy { constant: 0.0, linear, pairs })
    }
}

impl Energy for QuadraticEnergy {
    fn n(&self) -> usize {
        self.linear.len()
    }

    fn energy(&self, z: &BitString) -> f64 {
        let mut e = self.constant;
        for (i, a) in self.linear.iter().enumerate() {
            if z.get(i) {
                e += a;
            }
        }
        for &(i, j, b) in &self.pairs {
            if z.get(i) && z.get(j) {
                e += b;
            }
        }
        e
    }

    fn relaxed(&self, z: &[f64]) -> Option<(f64, Vec<f64>)> {
        let mut grad = self.linear.clone();
        let mut e = self.constant + self.linear.iter().zip(z).map(|(a, x)| a * x).sum::<f64>();
        for &(i, j, b) in &self.pairs {
            e += b * z[i] * z[j];
            grad[i] += b * z[j];
            grad[j] += b * z[i];
        }
        Some((e, grad))
    }
}

/// Energies listed for every bitstring in index order.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyTable {
    n: usize,
    values: Vec<f64>,
}

impl EnergyTable {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || n >= 32 || values.len() != 1 << n {
            return Err(Error::arg(format!("energy table for n={n} needs 2^n entries, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("energy table contains a non-finite value"));
        }
        Ok(EnergyTable { n, values })
    }

    /// Tabulates another energy exhaustively.
    pub fn tabulate(energy: &dyn Energy) -> Result<Self> {
        let n = energy.n();
        Self::new(n, BitString::all(n).map(|z| energy.energy(&z)).collect())
    }

    /// Constant energy `c` everywhere.
    pub fn flat(n: usize, c: f64) -> Self {
        EnergyTable { n, values: vec![c; 1 << n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Energy for EnergyTable {
    fn n(&self) -> usize {
        self.n
    }

    fn energy(&self, z: &BitString) -> f64 {
        self.values[z.index()]
    }
}

/// Wraps a closure as an [`Energy`].
#[derive(Clone)]
pub struct FnEnergy {
    n: usize,
    f: Arc<dyn Fn(&BitString) -> f64 + Send + Sync>,
}

impl FnEnergy {
    pub fn new(n: usize, f: impl Fn(&BitString) -> f64 + Send + Sync + 'static) -> Self {
        FnEnergy { n, f: Arc::new(f) }
    }
}

impl fmt::Debug for FnEnergy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnEnergy").field("n", &self.n).finish_non_exhaustive()
    }
}

impl Energy for FnEnergy {
    fn n(&self) -> usize {
        self.n
    }

    fn energy(&self, z: &BitString) -> f64 {
        (self.f)(z)
    }
}
