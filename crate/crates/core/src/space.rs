//! Finite metric grids standing in for `X = Spec B`, scalar fields on them,
//! discrete continuity measures, partitions of unity and the `C_B` cone.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default smallness threshold at infinity nodes.
pub const INFINITY_CUTOFF: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Path,
    Circle,
    Graph,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub len: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridJson {
    kind: GridKind,
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
    #[serde(default)]
    infinity: Vec<usize>,
}

/// Connected weighted graph with optional designated infinity nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridJson", into = "GridJson")]
pub struct Grid {
    kind: GridKind,
    nodes: usize,
    edges: Vec<Edge>,
    infinity: Vec<usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl TryFrom<GridJson> for Grid {
    type Error = Error;

    fn try_from(json: GridJson) -> Result<Self> {
        Grid::new(json.kind, json.nodes, json.edges, json.infinity)
    }
}

impl From<Grid> for GridJson {
    fn from(grid: Grid) -> Self {
        GridJson {
            kind: grid.kind,
            nodes: grid.nodes,
            edges: grid.edges.iter().map(|e| (e.a, e.b, e.len)).collect(),
            infinity: grid.infinity,
        }
    }
}

impl Grid {
    pub fn new(
        kind: GridKind,
        nodes: usize,
        edges: Vec<(usize, usize, f64)>,
        infinity: Vec<usize>,
    ) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::Grid("grid needs at least one node".into()));
        }
        let mut adjacency = vec![Vec::new(); nodes];
        let mut list = Vec::with_capacity(edges.len());
        for &(a, b, len) in &edges {
            if a >= nodes || b >= nodes {
                return Err(Error::Grid(format!("edge ({a}, {b}) references a missing node")));
            }
            if a == b {
                return Err(Error::Grid(format!("self-loop at node {a}")));
            }
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::Grid(format!("edge ({a}, {b}) has length {len}")));
            }
            if adjacency[a].iter().any(|&(n, _)| n == b) {
                return Err(Error::Grid(format!("duplicate edge ({a}, {b})")));
            }
            adjacency[a].push((b, len));
            adjacency[b].push((a, len));
            list.push(Edge { a, b, len });
        }
        let mut inf = infinity;
        inf.sort_unstable();
        inf.dedup();
        if let Some(&bad) = inf.iter().find(|&&i| i >= nodes) {
            return Err(Error::Grid(format!("infinity node {bad} out of range")));
        }
        let grid = Grid {
            kind,
            nodes,
            edges: list,
            infinity: inf,
            adjacency,
        };
        if grid.hops_from(0).iter().any(|h| h.is_none()) {
            return Err(Error::Grid("grid is not connected".into()));
        }
        match kind {
            GridKind::Path => {
                if grid.edges.len() + 1 != nodes || !grid.edges.iter().all(|e| e.a.abs_diff(e.b) == 1) {
                    return Err(Error::Grid("path edges must join consecutive nodes".into()));
                }
            }
            GridKind::Circle => {
                let ring = |e: &Edge| {
                    e.a.abs_diff(e.b) == 1 || (e.a.min(e.b) == 0 && e.a.max(e.b) == nodes - 1)
                };
                if nodes < 3 || grid.edges.len() != nodes || !grid.edges.iter().all(ring) {
                    return Err(Error::Grid(
                        "circle needs n >= 3 nodes joined cyclically in index order".into(),
                    ));
                }
            }
            GridKind::Graph => {}
        }
        Ok(grid)
    }

    /// Uniform path with `nodes` nodes and the given edge length.
    pub fn path(nodes: usize, len: f64) -> Result<Self> {
        let edges = (1..nodes).map(|i| (i - 1, i, len)).collect();
        Grid::new(GridKind::Path, nodes, edges, vec![])
    }

    /// Uniform path covering `[0, 1]`.
    pub fn unit_interval(nodes: usize) -> Result<Self> {
        let len = if nodes > 1 { 1.0 / (nodes - 1) as f64 } else { 1.0 };
        Grid::path(nodes, len)
    }

    pub fn circle(nodes: usize, len: f64) -> Result<Self> {
        let mut edges: Vec<_> = (1..nodes).map(|i| (i - 1, i, len)).collect();
        edges.push((nodes.saturating_sub(1), 0, len));
        Grid::new(GridKind::Circle, nodes, edges, vec![])
    }

    pub fn graph(nodes: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        Grid::new(GridKind::Graph, nodes, edges, vec![])
    }

    pub fn with_infinity(mut self, infinity: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = infinity.iter().find(|&&i| i >= self.nodes) {
            return Err(Error::Grid(format!("infinity node {bad} out of range")));
        }
        self.infinity = infinity;
        self.infinity.sort_unstable();
        self.infinity.dedup();
        Ok(self)
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn infinity(&self) -> &[usize] {
        &self.infinity
    }

    pub fn neighbors(&self, t: usize) -> &[(usize, f64)] {
        &self.adjacency[t]
    }

    /// Arc length from node 0 along the path or ring; shortest-path
    /// distance from node 0 for general graphs.
    pub fn coordinates(&self) -> Vec<f64> {
        match self.kind {
            GridKind::Path | GridKind::Circle => {
                let mut out = vec![0.0; self.nodes];
                for i in 1..self.nodes {
                    let len = self.adjacency[i]
                        .iter()
                        .find(|&&(n, _)| n == i - 1)
                        .map(|&(_, l)| l)
                        .unwrap_or(0.0);
                    out[i] = out[i - 1] + len;
                }
                out
            }
            GridKind::Graph => self.distances_from(&[0]),
        }
    }

    /// Coordinates rescaled to `[0, 1]`; on a circle the full turn is 1.
    pub fn unit_coordinates(&self) -> Vec<f64> {
        let coords = self.coordinates();
        let total = match self.kind {
            GridKind::Circle => self.edges.iter().map(|e| e.len).sum(),
            _ => coords.iter().copied().fold(0.0, f64::max),
        };
        if total > 0.0 {
            coords.iter().map(|c| c / total).collect()
        } else {
            coords
        }
    }

    fn hops_from(&self, t0: usize) -> Vec<Option<usize>> {
        let mut hops = vec![None; self.nodes];
        hops[t0] = Some(0);
        let mut queue = VecDeque::from([t0]);
        while let Some(t) = queue.pop_front() {
            let h = hops[t].unwrap_or(0);
            for &(s, _) in &self.adjacency[t] {
                if hops[s].is_none() {
                    hops[s] = Some(h + 1);
                    queue.push_back(s);
                }
            }
        }
        hops
    }

    /// Nodes at most `radius` edges away from `t0`, ascending.
    pub fn hop_ball(&self, t0: usize, radius: usize) -> Vec<usize> {
        self.hops_from(t0)
            .iter()
            .enumerate()
            .filter(|(_, h)| h.is_some_and(|h| h <= radius))
            .map(|(i, _)| i)
            .collect()
    }

    /// Multi-source shortest-path distances.
    pub fn distances_from(&self, sources: &[usize]) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
            }
        }

        let mut dist = vec![f64::INFINITY; self.nodes];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(Item(0.0, s));
        }
        while let Some(Item(d, t)) = heap.pop() {
            if d > dist[t] {
                continue;
            }
            for &(s, len) in &self.adjacency[t] {
                let nd = d + len;
                if nd < dist[s] {
                    dist[s] = nd;
                    heap.push(Item(nd, s));
                }
            }
        }
        dist
    }

    /// Split every edge in half.
    pub fn refine(&self) -> Refinement {
        let n = self.nodes;
        match self.kind {
            GridKind::Path | GridKind::Circle => {
                let closed = self.kind == GridKind::Circle;
                let m = if closed { 2 * n } else { 2 * n - 1 };
                let mut origin = Vec::with_capacity(m);
                let mut edges = Vec::with_capacity(m);
                for i in 0..n {
                    origin.push(Origin::Node(i));
                    let j = if i + 1 < n {
                        i + 1
                    } else if closed {
                        0
                    } else {
                        break;
                    };
                    origin.push(Origin::Midpoint(i, j));
                    let len = self.edge_length(i, j).unwrap_or(1.0) / 2.0;
                    edges.push((2 * i, 2 * i + 1, len));
                    edges.push((2 * i + 1, (2 * i + 2) % m, len));
                }
                let infinity = self.infinity.iter().map(|&i| 2 * i).collect();
                let grid = Grid::new(self.kind, m, edges, infinity)
                    .expect("refinement of a valid grid is valid");
                Refinement { grid, origin }
            }
            GridKind::Graph => {
                let mut origin: Vec<Origin> = (0..n).map(Origin::Node).collect();
                let mut edges = Vec::with_capacity(2 * self.edges.len());
                for (k, e) in self.edges.iter().enumerate() {
                    let mid = n + k;
                    origin.push(Origin::Midpoint(e.a, e.b));
                    edges.push((e.a, mid, e.len / 2.0));
                    edges.push((mid, e.b, e.len / 2.0));
                }
                let grid = Grid::new(GridKind::Graph, origin.len(), edges, self.infinity.clone())
                    .expect("refinement of a valid grid is valid");
                Refinement { grid, origin }
            }
        }
    }

    pub fn edge_length(&self, a: usize, b: usize) -> Option<f64> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, l)| l)
    }
}

/// Where a node of a refined grid came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Node(usize),
    Midpoint(usize, usize),
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub grid: Grid,
    pub origin: Vec<Origin>,
}

impl Refinement {
    /// Linear interpolation of nodal values onto the refined grid.
    pub fn transfer(&self, values: &[f64]) -> Vec<f64> {
        self.origin
            .iter()
            .map(|o| match *o {
                Origin::Node(i) => values[i],
                Origin::Midpoint(i, j) => 0.5 * (values[i] + values[j]),
            })
            .collect()
    }

    pub fn transfer_field(&self, g: &ScalarField) -> ScalarField {
        ScalarField(self.transfer(&g.0))
    }
}

/// One real value per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        ScalarField(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        ScalarField(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// `C_B` membership: finite, nonnegative, and at most `cutoff` at infinity nodes.
    pub fn cone_check(&self, grid: &Grid, cutoff: f64) -> ConeCheck {
        let nonnegative = self.0.iter().all(|&v| v.is_finite() && v >= 0.0);
        let worst_at_infinity = grid
            .infinity()
            .iter()
            .map(|&i| self.0[i].abs())
            .fold(0.0f64, f64::max);
        ConeCheck {
            nonnegative,
            worst_at_infinity,
            member: nonnegative && worst_at_infinity <= cutoff,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeCheck {
    pub nonnegative: bool,
    pub worst_at_infinity: f64,
    pub member: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Modulus {
    /// `max |g(u) − g(v)| / len(u, v)` over edges.
    pub lipschitz: f64,
    /// `max |g(u) − g(v)|` over edges.
    pub max_jump: f64,
}

pub fn modulus_of_continuity(g: &[f64], grid: &Grid) -> Modulus {
    let mut lipschitz = 0.0f64;
    let mut max_jump = 0.0f64;
    for e in grid.edges() {
        let jump = (g[e.a] - g[e.b]).abs();
        max_jump = max_jump.max(jump);
        lipschitz = lipschitz.max(jump / e.len);
    }
    Modulus { lipschitz, max_jump }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upper,
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemicontinuityReport {
    pub defects: Vec<f64>,
    pub max_defect: f64,
}

/// Upper: `max_s (g(s) − g(t))⁺`; lower: `max_s (g(t) − g(s))⁺`, over neighbours `s`.
pub fn epsilon_semicontinuity_report(g: &[f64], grid: &Grid, direction: Direction) -> SemicontinuityReport {
    let sign = match direction {
        Direction::Upper => 1.0,
        Direction::Lower => -1.0,
    };
    let defects: Vec<f64> = (0..grid.len())
        .map(|t| {
            grid.neighbors(t)
                .iter()
                .map(|&(s, _)| sign * (g[s] - g[t]))
                .fold(0.0f64, f64::max)
        })
        .collect();
    let max_defect = defects.iter().copied().fold(0.0, f64::max);
    SemicontinuityReport { defects, max_defect }
}

/// Normalized distance-to-complement bumps subordinate to `cover`.
pub fn partition_of_unity(grid: &Grid, cover: &[Vec<usize>]) -> Result<Vec<ScalarField>> {
    let n = grid.len();
    let mut members = vec![vec![false; n]; cover.len()];
    for (j, set) in cover.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::Grid(format!("cover set {j} is empty")));
        }
        for &t in set {
            if t >= n {
                return Err(Error::Grid(format!("cover set {j} references missing node {t}")));
            }
            members[j][t] = true;
        }
        if !set_is_connected(grid, &members[j], set[0]) {
            return Err(Error::Grid(format!("cover set {j} is not connected")));
        }
    }
    if let Some(node) = (0..n).find(|&t| !members.iter().any(|m| m[t])) {
        return Err(Error::CoverIncomplete { node });
    }
    let bumps: Vec<Vec<f64>> = members
        .iter()
        .map(|member| {
            let complement: Vec<usize> = (0..n).filter(|&t| !member[t]).collect();
            if complement.is_empty() {
                return vec![1.0; n];
            }
            let d = grid.distances_from(&complement);
            (0..n).map(|t| if member[t] { d[t] } else { 0.0 }).collect()
        })
        .collect();
    let total: Vec<f64> = (0..n).map(|t| bumps.iter().map(|b| b[t]).sum()).collect();
    Ok(bumps
        .into_iter()
        .map(|b| ScalarField(b.iter().zip(&total).map(|(v, s)| v / s).collect()))
        .collect())
}

fn set_is_connected(grid: &Grid, member: &[bool], start: usize) -> bool {
    let mut seen = vec![false; grid.len()];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(t) = stack.pop() {
        for &(s, _) in grid.neighbors(t) {
            if member[s] && !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    member.iter().zip(&seen).all(|(&m, &s)| !m || s)
}
