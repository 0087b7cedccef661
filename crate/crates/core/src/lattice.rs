//! Atom geometries, unit-disk interaction graphs and graph matrices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Absolute tolerance (μm) used for every distance comparison.
pub const DISTANCE_TOL: f64 = 1e-9;

/// Atoms retained on a rectangular grid; a defective King's subgraph when
/// combined with [`unit_disk_graph`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomArray {
    positions: Vec<[f64; 2]>,
    spacing: f64,
    rows: usize,
    cols: usize,
    defect_mask: Vec<bool>,
}

/// How defects are chosen when building a grid.
#[derive(Clone, Debug)]
pub enum Defects {
    None,
    /// One flag per site in row-major order, `true` = atom removed.
    Mask(Vec<bool>),
    /// Each site removed independently with probability `density`.
    Random { seed: u64, density: f64 },
}

impl AtomArray {
    /// Arbitrary positions, e.g. for hand-built geometries. Rows and cols are
    /// recorded as a `1 × n` strip.
    pub fn from_positions(positions: Vec<[f64; 2]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyArray);
        }
        for (i, a) in positions.iter().enumerate() {
            if !a[0].is_finite() || !a[1].is_finite() {
                return Err(Error::arg(format!("atom {i} has a non-finite coordinate")));
            }
            for b in &positions[..i] {
                if dist(a, b) <= DISTANCE_TOL {
                    return Err(Error::arg(format!("atom {i} coincides with another atom")));
                }
            }
        }
        let n = positions.len();
        Ok(AtomArray { positions, spacing: 0.0, rows: 1, cols: n, defect_mask: vec![false; n] })
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn defect_mask(&self) -> &[bool] {
        &self.defect_mask
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(&self.positions[i], &self.positions[j])
    }

    /// Copy with every position shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            p[0] += dx;
            p[1] += dy;
        }
        out
    }
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Parses a row-major `'0'/'1'` defect string (`'1'` = removed site).
pub fn parse_defect_mask(s: &str, sites: usize) -> Result<Vec<bool>> {
    let s = s.trim();
    if s.chars().count() != sites {
        return Err(Error::arg(format!("defect mask has {} characters, expected {sites}", s.chars().count())));
    }
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            c => Err(Error::arg(format!("invalid defect mask character {c:?}"))),
        })
        .collect()
}

/// Builds a `rows × cols` square grid of atoms with lattice constant
/// `spacing` (μm); site `(r, c)` sits at `(c·spacing, r·spacing)`.
pub fn build_king_subgraph(rows: usize, cols: usize, spacing: f64, defects: Defects) -> Result<AtomArray> {
    let sites = rows * cols;
    if sites == 0 {
        return Err(Error::arg("grid must have at least one site"));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::arg(format!("lattice spacing must be positive, got {spacing}")));
    }
    let defect_mask = match defects {
        Defects::None => vec![false; sites],
        Defects::Mask(m) => {
            if m.len() != sites {
                return Err(Error::arg(format!("defect mask length {} != rows·cols = {sites}", m.len())));
            }
            m
        }
        Defects::Random { seed, density } => {
            if !(0.0..=1.0).contains(&density) {
                return Err(Error::arg(format!("defect density {density} outside [0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..sites).map(|_| rng.random::<f64>() < density).collect()
        }
    };
    let positions: Vec<[f64; 2]> = (0..sites)
        .filter(|&s| !defect_mask[s])
        .map(|s| [(s % cols) as f64 * spacing, (s / cols) as f64 * spacing])
        .collect();
    if positions.is_empty() {
        return Err(Error::EmptyArray);
    }
    Ok(AtomArray { positions, spacing, rows, cols, defect_mask })
}

/// Rydberg blockade radius `(C6/Ω)^(1/6)` in μm.
pub fn blockade_radius(c6: f64, omega: f64) -> Result<f64> {
    if !(c6 > 0.0) || !(omega > 0.0) {
        return Err(Error::arg(format!("blockade radius needs C6 > 0 and Ω > 0 (got {c6}, {omega})")));
    }
    Ok((c6 / omega).powf(1.0 / 6.0))
}

/// Undirected simple graph; edges are stored once as `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    radius: f64,
    #[serde(skip)]
    neighbors: Vec<Vec<usize>>,
}

impl InteractionGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::arg(format!("self-loop at vertex {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::arg(format!("edge ({a}, {b}) out of range for {n} vertices")));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        list.dedup();
        Ok(Self::assemble(n, list, f64::NAN))
    }

    fn assemble(n: usize, edges: Vec<(usize, usize)>, radius: f64) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        InteractionGraph { n, edges, radius, neighbors }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Unit-disk threshold, NaN for graphs built from explicit edges.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    pub fn adjacency(&self) -> DMatrix<i64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1;
            a[(j, i)] = 1;
        }
        a
    }

    /// Number of edges with both endpoints excited, each counted once.
    pub fn violation_count(&self, z: &BitString) -> Result<usize> {
        self.check_len(z.len())?;
        Ok(self.edges.iter().filter(|&&(i, j)| z.get(i) && z.get(j)).count())
    }

    /// `sum_{(i,j) in E} z_i z_j` for relaxed (real-valued) occupations and
    /// its gradient `d/dz_i = sum_{j ~ i} z_j`.
    pub fn relaxed_violation(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_len(z.len())?;
        let value = self.edges.iter().map(|&(i, j)| z[i] * z[j]).sum();
        let grad = (0..self.n).map(|i| self.neighbors[i].iter().map(|&j| z[j]).sum()).collect();
        Ok((value, grad))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::arg(format!("bitstring length {len} != graph size {}", self.n)));
        }
        Ok(())
    }
}

/// Connects every pair of atoms at distance `<= radius` (within
/// [`DISTANCE_TOL`]).
pub fn unit_disk_graph(atoms: &AtomArray, radius: f64) -> Result<InteractionGraph> {
    if !(radius > 0.0) {
        return Err(Error::arg(format!("unit-disk radius must be positive, got {radius}")));
    }
    let n = atoms.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if atoms.distance(i, j) <= radius + DISTANCE_TOL {
                edges.push((i, j));
            }
        }
    }
    Ok(InteractionGraph::assemble(n, edges, radius))
}

/// Graph Laplacian `L = D - A`.
pub fn laplacian(graph: &InteractionGraph) -> DMatrix<i64> {
    let mut l = -graph.adjacency();
    for i in 0..graph.n() {
        l[(i, i)] = graph.degree(i) as i64;
    }
    l
}
