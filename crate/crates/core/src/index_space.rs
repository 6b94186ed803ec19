//! Index sets equipped with an economic distance.
//!
//! Every downstream computation (neighbourhoods, m-profiles, sparsity counts)
//! talks to the index set through [`IndexSpace`]. Four concrete
//! representations are supported:
//!
//! - an explicit symmetric distance matrix (with `∞` allowed),
//! - points on the integer lattice `Z^d` under the sup-norm,
//! - an unweighted undirected graph with hop-count distance,
//! - a two-way clustering where nodes are at distance 1 when their cells
//!   share a row or a column and `∞` otherwise.
//!
//! Node ids are dense integers `0..n`. Distinct nodes are always at distance
//! at least 1; constructors reject inputs that violate this.

use std::collections::VecDeque;
use std::fmt;
use std::ops::Add;
use std::sync::OnceLock;

use crate::error::{invalid, Result};

/// Graphs up to this many nodes get a lazily built all-pairs hop table.
pub const GRAPH_CACHE_LIMIT: usize = 2000;

/// Explicit matrices up to this size are checked for the triangle inequality
/// at construction (the check is cubic).
pub const TRIANGLE_CHECK_LIMIT: usize = 400;

/// Extended non-negative distance. `Unreachable` is `+∞`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum Distance {
    Finite(f64),
    Unreachable,
}

impl Distance {
    pub const ZERO: Distance = Distance::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Finite(_))
    }

    /// `self <= m`.
    #[inline]
    pub fn within(self, m: f64) -> bool {
        match self {
            Distance::Finite(d) => d <= m,
            Distance::Unreachable => false,
        }
    }

    /// `f64` view with `∞` mapped to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            Distance::Finite(d) => d,
            Distance::Unreachable => f64::INFINITY,
        }
    }

    pub fn min(self, other: Distance) -> Distance {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Add for Distance {
    type Output = Distance;

    fn add(self, rhs: Distance) -> Distance {
        match (self, rhs) {
            (Distance::Finite(a), Distance::Finite(b)) => Distance::Finite(a + b),
            _ => Distance::Unreachable,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Unreachable => f.write_str("inf"),
        }
    }
}

/// Concrete storage of the distance.
#[derive(Debug)]
pub enum Representation {
    /// Row-major `n × n` matrix.
    ExplicitMatrix(Vec<Distance>),
    /// `coords[i]` has length `dim`; distance is `max_k |i_k - j_k|`.
    Lattice { dim: usize, coords: Vec<Vec<i64>> },
    /// Adjacency lists; distance is the shortest-path hop count.
    Graph {
        adjacency: Vec<Vec<usize>>,
        cache: OnceLock<Vec<u32>>,
    },
    /// `cells[i] = (row_cluster, col_cluster)`, both zero based.
    TwoWayClustering {
        rows: usize,
        cols: usize,
        cells: Vec<(usize, usize)>,
    },
}

/// The index set `𝓘ₙ` together with its distance. Immutable once built.
#[derive(Debug)]
pub struct IndexSpace {
    n: usize,
    repr: Representation,
}

const UNREACHABLE_HOPS: u32 = u32::MAX;

impl IndexSpace {
    /// Builds a space from a full distance matrix. Checks the diagonal,
    /// symmetry, the `d(i, j) >= 1` normalisation and, for matrices up to
    /// [`TRIANGLE_CHECK_LIMIT`] nodes, the triangle inequality.
    pub fn from_matrix(rows: Vec<Vec<Distance>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(invalid("distance matrix is empty"));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!(
                    "distance matrix row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        for i in 0..n {
            for j in 0..n {
                let d = flat[i * n + j];
                if let Distance::Finite(v) = d {
                    if !v.is_finite() || v < 0.0 {
                        return Err(invalid(format!("d({i},{j}) = {v} is not a valid distance")));
                    }
                }
                if i == j {
                    if d != Distance::ZERO {
                        return Err(invalid(format!("d({i},{i}) = {d}, expected 0")));
                    }
                } else {
                    if d != flat[j * n + i] {
                        return Err(invalid(format!(
                            "distance matrix is not symmetric at ({i},{j})"
                        )));
                    }
                    if d < Distance::Finite(1.0) {
                        return Err(invalid(format!(
                            "d({i},{j}) = {d} < 1 violates the minimum-separation normalisation"
                        )));
                    }
                }
            }
        }
        if n <= TRIANGLE_CHECK_LIMIT {
            for i in 0..n {
                for j in 0..n {
                    let dij = flat[i * n + j];
                    for k in 0..n {
                        let via = flat[i * n + k] + flat[k * n + j];
                        if let (Distance::Finite(a), Distance::Finite(b)) = (dij, via) {
                            if a > b * (1.0 + 1e-12) {
                                return Err(invalid(format!(
                                    "triangle inequality fails on ({i},{k},{j})"
                                )));
                            }
                        } else if dij == Distance::Unreachable && via.is_finite() {
                            return Err(invalid(format!(
                                "triangle inequality fails on ({i},{k},{j})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self {
            n,
            repr: Representation::ExplicitMatrix(flat),
        })
    }

    /// Lattice points under the sup-norm. Points must be distinct.
    pub fn lattice(coords: Vec<Vec<i64>>) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(invalid("lattice has no points"));
        }
        let dim = coords[0].len();
        if dim == 0 {
            return Err(invalid("lattice dimension must be at least 1"));
        }
        if let Some(i) = coords.iter().position(|c| c.len() != dim) {
            return Err(invalid(format!(
                "lattice point {i} has the wrong dimension"
            )));
        }
        let mut sorted: Vec<&Vec<i64>> = coords.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("lattice points must be distinct"));
        }
        Ok(Self {
            n,
            repr: Representation::Lattice { dim, coords },
        })
    }

    /// One-dimensional lattice `{first, first+1, …, last}`.
    pub fn line(first: i64, last: i64) -> Result<Self> {
        if last < first {
            return Err(invalid("empty lattice range"));
        }
        Self::lattice((first..=last).map(|c| vec![c]).collect())
    }

    /// Undirected graph on `n` nodes. Self loops are ignored and duplicate
    /// edges collapse.
    pub fn graph(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(invalid("graph has no nodes"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid(format!(
                    "edge ({u},{v}) references a node outside 0..{n}"
                )));
            }
            if u != v {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            n,
            repr: Representation::Graph {
                adjacency,
                cache: OnceLock::new(),
            },
        })
    }

    /// Two-way clustering with `rows × cols` cells; `cells[i]` is the zero
    /// based cell of node `i`.
    pub fn two_way_clustering(
        rows: usize,
        cols: usize,
        cells: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(invalid("clustering has no nodes"));
        }
        if let Some(i) = cells.iter().position(|&(r, c)| r >= rows || c >= cols) {
            return Err(invalid(format!(
                "node {i} lies outside the {rows}x{cols} cell grid"
            )));
        }
        Ok(Self {
            n: cells.len(),
            repr: Representation::TwoWayClustering { rows, cols, cells },
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.n {
            Err(invalid(format!("node {i} is out of range 0..{}", self.n)))
        } else {
            Ok(())
        }
    }

    /// `𝐝(i, j)`.
    pub fn distance(&self, i: usize, j: usize) -> Result<Distance> {
        self.check_node(i)?;
        self.check_node(j)?;
        Ok(self.distance_unchecked(i, j))
    }

    pub(crate) fn distance_unchecked(&self, i: usize, j: usize) -> Distance {
        if i == j {
            return Distance::ZERO;
        }
        match &self.repr {
            Representation::ExplicitMatrix(flat) => flat[i * self.n + j],
            Representation::Lattice { coords, .. } => {
                let d = coords[i]
                    .iter()
                    .zip(&coords[j])
                    .map(|(a, b)| (a - b).unsigned_abs())
                    .max()
                    .unwrap_or(0);
                Distance::Finite(d as f64)
            }
            Representation::Graph { adjacency, cache } => {
                let hops = if self.n <= GRAPH_CACHE_LIMIT {
                    cache.get_or_init(|| all_pairs_hops(adjacency))[i * self.n + j]
                } else {
                    bfs_hops(adjacency, i, None)[j]
                };
                hops_to_distance(hops)
            }
            Representation::TwoWayClustering { cells, .. } => {
                let (a, b) = (cells[i], cells[j]);
                if a.0 == b.0 || a.1 == b.1 {
                    Distance::Finite(1.0)
                } else {
                    Distance::Unreachable
                }
            }
        }
    }

    /// The `m`-neighbourhood `{j : 𝐝(i, j) <= m}`, sorted ascending.
    pub fn neighborhood(&self, i: usize, m: f64) -> Result<Vec<usize>> {
        self.check_node(i)?;
        if !(m >= 0.0) {
            return Err(invalid(format!("radius m = {m} must be non-negative")));
        }
        Ok(self.neighborhood_unchecked(i, m))
    }

    fn neighborhood_unchecked(&self, i: usize, m: f64) -> Vec<usize> {
        match &self.repr {
            Representation::Graph { adjacency, cache } if cache.get().is_none() => {
                let depth = if m.is_infinite() {
                    None
                } else {
                    Some(m.floor() as u32)
                };
                let hops = bfs_hops(adjacency, i, depth);
                (0..self.n)
                    .filter(|&j| hops[j] != UNREACHABLE_HOPS && hops_to_distance(hops[j]).within(m))
                    .collect()
            }
            _ => (0..self.n)
                .filter(|&j| self.distance_unchecked(i, j).within(m))
                .collect(),
        }
    }

    /// `η_m = max_i |𝓝ᵢ^m|`.
    pub fn eta_max(&self, m: f64) -> Result<usize> {
        if !(m >= 0.0) {
            return Err(invalid(format!("radius m = {m} must be non-negative")));
        }
        Ok((0..self.n)
            .map(|i| self.neighborhood_unchecked(i, m).len())
            .max()
            .unwrap_or(1))
    }

    /// `𝐝(𝓘₁, 𝓘₂) = min` over pairs.
    pub fn group_distance(&self, first: &[usize], second: &[usize]) -> Result<Distance> {
        if first.is_empty() || second.is_empty() {
            return Err(invalid("group distance needs two non-empty node sets"));
        }
        for &i in first.iter().chain(second) {
            self.check_node(i)?;
        }
        let mut best = Distance::Unreachable;
        for &i in first {
            for &j in second {
                best = best.min(self.distance_unchecked(i, j));
            }
        }
        Ok(best)
    }

    /// Boolean `n × n` table of `𝐝(i, j) <= m`, row-major.
    pub(crate) fn within_table(&self, m: f64) -> Vec<bool> {
        let n = self.n;
        let mut table = vec![false; n * n];
        for i in 0..n {
            for j in self.neighborhood_unchecked(i, m) {
                table[i * n + j] = true;
            }
        }
        table
    }
}

fn hops_to_distance(h: u32) -> Distance {
    if h == UNREACHABLE_HOPS {
        Distance::Unreachable
    } else {
        Distance::Finite(h as f64)
    }
}

fn bfs_hops(adjacency: &[Vec<usize>], source: usize, max_depth: Option<u32>) -> Vec<u32> {
    let mut hops = vec![UNREACHABLE_HOPS; adjacency.len()];
    let mut queue = VecDeque::new();
    hops[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let next = hops[u] + 1;
        if max_depth.is_some_and(|d| next > d) {
            continue;
        }
        for &v in &adjacency[u] {
            if hops[v] == UNREACHABLE_HOPS {
                hops[v] = next;
                queue.push_back(v);
            }
        }
    }
    hops
}

fn all_pairs_hops(adjacency: &[Vec<usize>]) -> Vec<u32> {
    let mut table = Vec::with_capacity(adjacency.len() * adjacency.len());
    for source in 0..adjacency.len() {
        table.extend(bfs_hops(adjacency, source, None));
    }
    table
}
