//! Divergences, cost binning and distances between bitstrings.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::lattice::{AtomArray, DISTANCE_TOL};

/// Default bin count for cost histograms.
pub const DEFAULT_BINS: usize = 20;

/// Histogram masses over equal-width cost bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedDistribution {
    pub edges: Vec<f64>,
    pub probs: Vec<f64>,
}

impl BinnedDistribution {
    pub fn new(edges: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || edges.len() != probs.len() + 1 {
            return Err(Error::arg(format!("{} edges for {} bins", edges.len(), probs.len())));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg("bin edges must be strictly increasing"));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::arg("bin masses must be non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::arg(format!("bin masses sum to {sum}")));
        }
        Ok(BinnedDistribution { edges, probs })
    }

    pub fn bins(&self) -> usize {
        self.probs.len()
    }

    /// Bin holding `value`; the last bin is closed on the right. Values
    /// outside the edges return `None`.
    pub fn bin_of(&self, value: f64) -> Option<usize> {
        locate(&self.edges, value)
    }

    /// Histogram of weighted values on these bin edges.
    pub fn rebin(&self, values: &[f64], weights: &[f64]) -> Result<BinnedDistribution> {
        histogram(&self.edges, values, weights)
    }
}

fn locate(edges: &[f64], value: f64) -> Option<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let span = hi - lo;
    let slack = 1e-12 * span.abs().max(1.0);
    if !(value >= lo - slack && value <= hi + slack) {
        return None;
    }
    // equal-width edges: direct index, then correct for rounding
    let mut i = (((value - lo) / span) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
    while i > 0 && value < edges[i] {
        i -= 1;
    }
    while i + 1 < bins && value >= edges[i + 1] {
        i += 1;
    }
    Some(i)
}

fn histogram(edges: &[f64], values: &[f64], weights: &[f64]) -> Result<BinnedDistribution> {
    if values.len() != weights.len() {
        return Err(Error::arg("values and weights differ in length"));
    }
    let mut probs = vec![0.0; edges.len() - 1];
    let mut total = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        if !(w >= 0.0) {
            return Err(Error::arg(format!("negative weight {w}")));
        }
        let b = locate(edges, v).ok_or_else(|| Error::arg(format!("value {v} outside the bin range")))?;
        probs[b] += w;
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::arg("histogram needs at least one positive weight"));
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(BinnedDistribution { edges: edges.to_vec(), probs })
}

/// Equal-width histogram spanning `[min, max]` of `values`. All-equal values
/// collapse to a single unit-width bin holding all the mass.
pub fn bin_costs(values: &[f64], weights: &[f64], bins: usize) -> Result<BinnedDistribution> {
    if bins == 0 {
        return Err(Error::arg("need at least one bin"));
    }
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::arg("values and weights must be non-empty and equally long"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("non-finite cost value"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = if hi > lo {
        let w = (hi - lo) / bins as f64;
        let mut e: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * w).collect();
        e[bins] = hi;
        e
    } else {
        vec![lo - 0.5, lo + 0.5]
    };
    histogram(&edges, values, weights)
}

fn check_pair(p: &BinnedDistribution, q: &BinnedDistribution) -> Result<()> {
    if p.edges != q.edges {
        return Err(Error::arg("distributions use different bin edges"));
    }
    Ok(())
}

/// `D_α(p || q) = ln(sum_i p_i^α q_i^(1-α)) / (α - 1)` in nats, over plain
/// probability vectors.
pub fn renyi(p: &[f64], q: &[f64], alpha: f64) -> Result<f64> {
    if alpha == 1.0 || !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::arg(format!("Renyi order must be positive and != 1, got {alpha}")));
    }
    if p.len() != q.len() {
        return Err(Error::arg("probability vectors differ in length"));
    }
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 && qi <= 0.0 {
            return Err(Error::Divergence(format!("bin {i} has p = {pi} but q = 0")));
        }
        if pi > 0.0 {
            sum += (alpha * pi.ln() + (1.0 - alpha) * qi.ln()).exp();
        }
    }
    Ok(sum.ln() / (alpha - 1.0))
}

/// `sum_i p_i ln(p_i / q_i)` with `0 ln 0 = 0`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::arg("probability vectors differ in length"));
    }
    let mut d = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::Divergence(format!("bin {i} has p = {pi} but q = 0")));
            }
            d += pi * (pi / qi).ln();
        }
    }
    Ok(d)
}

pub fn renyi_divergence(p: &BinnedDistribution, q: &BinnedDistribution, alpha: f64) -> Result<f64> {
    check_pair(p, q)?;
    renyi(&p.probs, &q.probs, alpha)
}

pub fn kl_divergence(p: &BinnedDistribution, q: &BinnedDistribution) -> Result<f64> {
    check_pair(p, q)?;
    kl(&p.probs, &q.probs)
}

pub fn total_variation(p: &BinnedDistribution, q: &BinnedDistribution) -> Result<f64> {
    check_pair(p, q)?;
    Ok(crate::mcmc::total_variation(&p.probs, &q.probs))
}

pub fn hamming(a: &BitString, b: &BitString) -> Result<usize> {
    a.hamming(b)
}

/// Quadratic Hamming lattice distance: the sum over ordered site pairs
/// `i != j` of `(a_i a_j - b_i b_j)² / |r_i - r_j|` plus the plain Hamming
/// distance.
pub fn quadratic_hamming(atoms: &AtomArray, a: &BitString, b: &BitString) -> Result<f64> {
    let n = atoms.len();
    if a.len() != n || b.len() != n {
        return Err(Error::arg(format!("bitstrings of length {}/{} for {n} sites", a.len(), b.len())));
    }
    if n < 2 {
        return Err(Error::arg("quadratic Hamming distance needs at least two sites"));
    }
    let mut pair = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = (a.bit(i) * a.bit(j)) as f64 - (b.bit(i) * b.bit(j)) as f64;
            if d != 0.0 {
                let r = atoms.distance(i, j);
                if r <= DISTANCE_TOL {
                    return Err(Error::arg(format!("sites {i} and {j} coincide")));
                }
                pair += d * d / r;
            }
        }
    }
    Ok(pair + a.hamming(b)? as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axiom {
    Identity,
    Positivity,
    Symmetry,
    TriangleInequality,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AxiomViolation<T> {
    pub axiom: Axiom,
    pub witness: Vec<T>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport<T> {
    pub points: usize,
    pub checked_triples: usize,
    pub violations: Vec<AxiomViolation<T>>,
}

impl<T> MetricReport<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks identity, positivity, symmetry and the triangle inequality over
/// every pair and ordered triple of `points`. Distances are evaluated once
/// per ordered pair; `tol` absorbs rounding in the triangle check.
pub fn check_metric_axioms<T, F>(dist: F, points: &[T], tol: f64) -> MetricReport<T>
where
    T: Clone + Debug,
    F: Fn(&T, &T) -> f64,
{
    let m = points.len();
    let d: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| dist(a, b)).collect()).collect();
    let mut violations = Vec::new();
    for i in 0..m {
        if d[i][i].abs() > tol {
            violations.push(AxiomViolation {
                axiom: Axiom::Identity,
                witness: vec![points[i].clone()],
                detail: format!("d(x, x) = {}", d[i][i]),
            });
        }
        for j in 0..m {
            if i == j {
                continue;
            }
            if !(d[i][j] > 0.0) {
                violations.push(AxiomViolation {
                    axiom: Axiom::Positivity,
                    witness: vec![points[i].clone(), points[j].clone()],
                    detail: format!("d = {}", d[i][j]),
                });
            }
            if j > i && (d[i][j] - d[j][i]).abs() > tol {
                violations.push(AxiomViolation {
                    axiom: Axiom::Symmetry,
                    witness: vec![points[i].clone(), points[j].clone()],
                    detail: format!("d(a, b) = {}, d(b, a) = {}", d[i][j], d[j][i]),
                });
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                if d[i][k] > d[i][j] + d[j][k] + tol {
                    violations.push(AxiomViolation {
                        axiom: Axiom::TriangleInequality,
                        witness: vec![points[i].clone(), points[j].clone(), points[k].clone()],
                        detail: format!("{} > {} + {}", d[i][k], d[i][j], d[j][k]),
                    });
                }
            }
        }
    }
    MetricReport { points: m, checked_triples: m * m * m, violations }
}

/// One latent pair with the designs decoded from each side.
#[derive(Clone, Debug)]
pub struct IsometryPair<Z, X> {
    pub left: Z,
    pub right: Z,
    pub left_samples: Vec<X>,
    pub right_samples: Vec<X>,
}

/// Mean over pairs of `|d_Z(z_i, z_j) - λ_d E[d_X(x_μ, x_ν)]|`, the inner
/// expectation over all sample combinations.
pub fn expected_isometry_gap<Z, X>(
    pairs: &[IsometryPair<Z, X>],
    d_z: impl Fn(&Z, &Z) -> f64,
    d_x: impl Fn(&X, &X) -> f64,
    scale: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::arg("isometry gap needs at least one pair"));
    }
    if !(scale > 0.0) {
        return Err(Error::arg(format!("distance scale must be positive, got {scale}")));
    }
    let mut total = 0.0;
    for (k, p) in pairs.iter().enumerate() {
        if p.left_samples.is_empty() || p.right_samples.is_empty() {
            return Err(Error::arg(format!("pair {k} has no decoded samples on one side")));
        }
        let mut mean = 0.0;
        for a in &p.left_samples {
            for b in &p.right_samples {
                mean += d_x(a, b);
            }
        }
        mean /= (p.left_samples.len() * p.right_samples.len()) as f64;
        total += (d_z(&p.left, &p.right) - scale * mean).abs();
    }
    Ok(total / pairs.len() as f64)
}

/// Default `λ_d`: mean latent distance over mean design distance.
pub fn default_distance_scale(latent_distances: &[f64], design_distances: &[f64]) -> Result<f64> {
    let mz = latent_distances.iter().sum::<f64>() / latent_distances.len().max(1) as f64;
    let mx = design_distances.iter().sum::<f64>() / design_distances.len().max(1) as f64;
    if !(mz > 0.0) || !(mx > 0.0) {
        return Err(Error::arg("distance scale undefined when all distances vanish"));
    }
    Ok(mz / mx)
}
