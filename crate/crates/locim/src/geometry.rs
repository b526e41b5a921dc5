//! Metric environments, distances, and proximity-based partitions over agents.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::LocimError;

/// A position in a metric space. `Cell` indexes a node of the space.
/// `Chain` is an off-grid ray anchored at a space node: an agent that has
/// permanently left the arena marches along its chain at unit speed, so its
/// distance to everything else grows without bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    Cell(u16),
    /// (anchor node, steps taken along the ray)
    Chain(u16, u16),
}

impl Pos {
    pub fn cell(self) -> Option<u16> {
        match self {
            Pos::Cell(c) => Some(c),
            Pos::Chain(..) => None,
        }
    }
}

/// Shape of the underlying metric space.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum SpaceKind {
    /// Cells 0..len on a line, unit steps between neighbours.
    Line { len: u16 },
    /// w*h grid, node id = y*w + x.
    Grid {
        w: u16,
        h: u16,
        #[serde(default)]
        chebyshev: bool,
        #[serde(default)]
        blocked: Vec<u16>,
    },
    /// Explicit graph; distance is shortest-path hop count.
    Graph { nodes: u16, edges: Vec<(u16, u16)> },
}

/// A metric space with precomputed distances where needed.
#[derive(Clone, Debug)]
pub struct MetricSpace {
    pub kind: SpaceKind,
    /// All-pairs distances for the graph variant (row-major, u16::MAX = unreachable).
    graph_dist: Vec<u16>,
    n_nodes: u16,
}

pub const INF_DIST: f64 = 1e18;

impl MetricSpace {
    pub fn new(kind: SpaceKind) -> Result<Self, LocimError> {
        let n_nodes = match &kind {
            SpaceKind::Line { len } => *len,
            SpaceKind::Grid { w, h, .. } => w * h,
            SpaceKind::Graph { nodes, .. } => *nodes,
        };
        let graph_dist = match &kind {
            SpaceKind::Graph { nodes, edges } => {
                let n = *nodes as usize;
                for &(a, b) in edges {
                    if a >= *nodes || b >= *nodes {
                        return Err(LocimError::InvalidInput(format!(
                            "edge ({a},{b}) out of range for {nodes} nodes"
                        )));
                    }
                }
                let mut adj = vec![Vec::new(); n];
                for &(a, b) in edges {
                    adj[a as usize].push(b as usize);
                    adj[b as usize].push(a as usize);
                }
                let mut dist = vec![u16::MAX; n * n];
                let mut queue = std::collections::VecDeque::new();
                for src in 0..n {
                    queue.clear();
                    dist[src * n + src] = 0;
                    queue.push_back(src);
                    while let Some(u) = queue.pop_front() {
                        let du = dist[src * n + u];
                        for &v in &adj[u] {
                            if dist[src * n + v] == u16::MAX {
                                dist[src * n + v] = du + 1;
                                queue.push_back(v);
                            }
                        }
                    }
                }
                dist
            }
            _ => Vec::new(),
        };
        Ok(Self { kind, graph_dist, n_nodes })
    }

    pub fn n_nodes(&self) -> u16 {
        self.n_nodes
    }

    pub fn is_blocked(&self, node: u16) -> bool {
        match &self.kind {
            SpaceKind::Grid { blocked, .. } => blocked.contains(&node),
            _ => false,
        }
    }

    pub fn valid(&self, p: Pos) -> bool {
        match p {
            Pos::Cell(c) => c < self.n_nodes && !self.is_blocked(c),
            Pos::Chain(anchor, _) => anchor < self.n_nodes,
        }
    }

    fn cell_dist(&self, a: u16, b: u16) -> f64 {
        match &self.kind {
            SpaceKind::Line { .. } => (a as i32 - b as i32).abs() as f64,
            SpaceKind::Grid { w, chebyshev, .. } => {
                let (ax, ay) = (a % w, a / w);
                let (bx, by) = (b % w, b / w);
                let dx = (ax as i32 - bx as i32).abs();
                let dy = (ay as i32 - by as i32).abs();
                if *chebyshev {
                    dx.max(dy) as f64
                } else {
                    (dx + dy) as f64
                }
            }
            SpaceKind::Graph { nodes, .. } => {
                let d = self.graph_dist[a as usize * *nodes as usize + b as usize];
                if d == u16::MAX {
                    INF_DIST
                } else {
                    d as f64
                }
            }
        }
    }

    /// Metric distance between two positions. Chains extend the space: the
    /// distance from `Chain(e, k)` to a cell is `k + d(e, cell)`; two agents
    /// on distinct chains are separated through both anchors.
    pub fn distance(&self, p1: Pos, p2: Pos) -> f64 {
        match (p1, p2) {
            (Pos::Cell(a), Pos::Cell(b)) => self.cell_dist(a, b),
            (Pos::Cell(a), Pos::Chain(e, k)) | (Pos::Chain(e, k), Pos::Cell(a)) => {
                k as f64 + self.cell_dist(e, a)
            }
            (Pos::Chain(e1, k1), Pos::Chain(e2, k2)) => {
                if e1 == e2 {
                    (k1 as i32 - k2 as i32).abs() as f64
                } else {
                    k1 as f64 + k2 as f64 + self.cell_dist(e1, e2)
                }
            }
        }
    }

    /// Neighbouring cells reachable in one unit step (not including staying).
    pub fn neighbors(&self, node: u16) -> Vec<u16> {
        match &self.kind {
            SpaceKind::Line { len } => {
                let mut v = Vec::new();
                if node > 0 {
                    v.push(node - 1);
                }
                if node + 1 < *len {
                    v.push(node + 1);
                }
                v
            }
            SpaceKind::Grid { w, h, chebyshev, .. } => {
                let (x, y) = ((node % w) as i32, (node / w) as i32);
                let mut v = Vec::new();
                let deltas: &[(i32, i32)] = if *chebyshev {
                    &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
                } else {
                    &[(0, -1), (-1, 0), (1, 0), (0, 1)]
                };
                for (dx, dy) in deltas {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && nx < *w as i32 && ny >= 0 && ny < *h as i32 {
                        let id = ny as u16 * w + nx as u16;
                        if !self.is_blocked(id) {
                            v.push(id);
                        }
                    }
                }
                v
            }
            SpaceKind::Graph { nodes, .. } => {
                let n = *nodes as usize;
                (0..*nodes)
                    .filter(|&v| v != node && self.graph_dist[node as usize * n + v as usize] == 1)
                    .collect()
            }
        }
    }

    /// Largest finite distance between any two cells.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for a in 0..self.n_nodes {
            if self.is_blocked(a) {
                continue;
            }
            for b in (a + 1)..self.n_nodes {
                if self.is_blocked(b) {
                    continue;
                }
                let d = self.cell_dist(a, b);
                if d < INF_DIST / 2.0 && d > best {
                    best = d;
                }
            }
        }
        best
    }
}

/// Disjoint grouping of agent indices. Blocks hold ascending indices and are
/// ordered by their first element, so equal partitions compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    pub blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self, LocimError> {
        let mut seen = std::collections::HashSet::new();
        for b in &mut blocks {
            if b.is_empty() {
                return Err(LocimError::InvalidInput("empty partition block".into()));
            }
            b.sort_unstable();
            for &i in b.iter() {
                if !seen.insert(i) {
                    return Err(LocimError::InvalidInput(format!(
                        "agent {i} appears in two blocks"
                    )));
                }
            }
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    pub fn singletons(n: usize) -> Self {
        Self { blocks: (0..n).map(|i| vec![i]).collect() }
    }

    pub fn one_block(agents: &[usize]) -> Self {
        let mut b: Vec<usize> = agents.to_vec();
        b.sort_unstable();
        Self { blocks: vec![b] }
    }

    pub fn agent_set(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.blocks.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn block_of(&self, agent: usize) -> Option<&[usize]> {
        self.blocks.iter().find(|b| b.contains(&agent)).map(|b| b.as_slice())
    }

    /// `{p1 ∩ p2} \ {∅}`. `other` may cover a superset of this partition's
    /// agents; the result is over the common agents.
    pub fn intersect(&self, other: &Partition) -> Result<Partition, LocimError> {
        let mine = self.agent_set();
        let theirs = other.agent_set();
        if !mine.iter().all(|a| theirs.binary_search(a).is_ok()) {
            return Err(LocimError::InvalidInput(
                "partition_intersection: agent sets do not match".into(),
            ));
        }
        let mut blocks = Vec::new();
        for b1 in &self.blocks {
            for b2 in &other.blocks {
                let inter: Vec<usize> =
                    b1.iter().filter(|a| b2.binary_search(a).is_ok()).copied().collect();
                if !inter.is_empty() {
                    blocks.push(inter);
                }
            }
        }
        Partition::new(blocks)
    }

    /// True iff every block of `self` is contained in some block of `other`.
    pub fn is_finer(&self, other: &Partition) -> Result<bool, LocimError> {
        if self.agent_set() != other.agent_set() {
            return Err(LocimError::InvalidInput("is_finer: agent sets do not match".into()));
        }
        Ok(self.blocks.iter().all(|b| {
            other
                .blocks
                .iter()
                .any(|ob| b.iter().all(|a| ob.binary_search(a).is_ok()))
        }))
    }

    /// Restrict to a subset of agents, dropping blocks that become empty.
    pub fn restrict(&self, agents: &[usize]) -> Partition {
        let mut blocks = Vec::new();
        for b in &self.blocks {
            let kept: Vec<usize> = b.iter().filter(|a| agents.contains(a)).copied().collect();
            if !kept.is_empty() {
                blocks.push(kept);
            }
        }
        blocks.sort_by_key(|b| b[0]);
        Partition { blocks }
    }
}

/// Union-find over agent indices, path compression plus union by size.
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self { parent: (0..len).collect(), size: vec![1; len] }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    pub fn partition(&mut self, agents: &[usize]) -> Partition {
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for &a in agents {
            groups.entry(self.find(a)).or_default().push(a);
        }
        let mut blocks: Vec<Vec<usize>> = groups.into_values().collect();
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_by_key(|b| b[0]);
        Partition { blocks }
    }
}

/// Transitive closure of "within distance K" over the given agents.
/// `positions[i]` is the position of `agents[i]`.
pub fn proximity_partition_of(
    space: &MetricSpace,
    agents: &[usize],
    positions: &[Pos],
    k: f64,
) -> Result<Partition, LocimError> {
    if k < 0.0 {
        return Err(LocimError::InvalidInput("proximity radius must be >= 0".into()));
    }
    for &p in positions {
        if !space.valid(p) {
            return Err(LocimError::InvalidInput(format!("invalid position {p:?}")));
        }
    }
    let n = agents.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if space.distance(positions[i], positions[j]) <= k {
                uf.union(i, j);
            }
        }
    }
    // partition over local indices, then map back
    let local = uf.partition(&(0..n).collect::<Vec<_>>());
    let blocks = local
        .blocks
        .into_iter()
        .map(|b| b.into_iter().map(|i| agents[i]).collect())
        .collect();
    Partition::new(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(len: u16) -> MetricSpace {
        MetricSpace::new(SpaceKind::Line { len }).unwrap()
    }

    #[test]
    fn grid_manhattan_distance() {
        let g = MetricSpace::new(SpaceKind::Grid { w: 4, h: 5, chebyshev: false, blocked: vec![] })
            .unwrap();
        // (0,0) to (2,3)
        assert_eq!(g.distance(Pos::Cell(0), Pos::Cell(3 * 4 + 2)), 5.0);
    }

    #[test]
    fn grid_chebyshev_distance() {
        let g = MetricSpace::new(SpaceKind::Grid { w: 4, h: 5, chebyshev: true, blocked: vec![] })
            .unwrap();
        assert_eq!(g.distance(Pos::Cell(0), Pos::Cell(3 * 4 + 2)), 3.0);
    }

    #[test]
    fn graph_teleport_edge() {
        // long path 0-1-2-3-4 plus teleport 0-4
        let g = MetricSpace::new(SpaceKind::Graph {
            nodes: 5,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)],
        })
        .unwrap();
        assert_eq!(g.distance(Pos::Cell(0), Pos::Cell(4)), 1.0);
        assert_eq!(g.distance(Pos::Cell(1), Pos::Cell(4)), 2.0);
    }

    #[test]
    fn proximity_single_agent() {
        let s = line(10);
        let p = proximity_partition_of(&s, &[0], &[Pos::Cell(3)], 5.0).unwrap();
        assert_eq!(p, Partition::new(vec![vec![0]]).unwrap());
    }

    #[test]
    fn proximity_pairwise() {
        let s = line(10);
        let p = proximity_partition_of(
            &s,
            &[0, 1, 2],
            &[Pos::Cell(0), Pos::Cell(3), Pos::Cell(7)],
            3.0,
        )
        .unwrap();
        assert_eq!(p, Partition::new(vec![vec![0, 1], vec![2]]).unwrap());
    }

    #[test]
    fn proximity_transitive_chain() {
        let s = line(10);
        let p = proximity_partition_of(
            &s,
            &[0, 1, 2],
            &[Pos::Cell(0), Pos::Cell(3), Pos::Cell(6)],
            3.0,
        )
        .unwrap();
        assert_eq!(p, Partition::new(vec![vec![0, 1, 2]]).unwrap());
    }

    #[test]
    fn intersection_examples() {
        let p = Partition::new(vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(p.intersect(&p).unwrap(), p);

        let p1 = Partition::new(vec![vec![0, 1, 2]]).unwrap();
        let p2 = Partition::new(vec![vec![0], vec![1, 2]]).unwrap();
        assert_eq!(p1.intersect(&p2).unwrap(), p2);

        // {{0,1},{2,3}} ∩ {{0},{1,2,3}} -> {{0},{1},{2,3}}
        let a = Partition::new(vec![vec![0, 1], vec![2, 3]]).unwrap();
        let b = Partition::new(vec![vec![0], vec![1, 2, 3]]).unwrap();
        let expect = Partition::new(vec![vec![0], vec![1], vec![2, 3]]).unwrap();
        assert_eq!(a.intersect(&b).unwrap(), expect);
    }

    #[test]
    fn finer_examples() {
        let single = Partition::singletons(3);
        let p = Partition::new(vec![vec![0, 1], vec![2]]).unwrap();
        let q = Partition::new(vec![vec![0], vec![1, 2]]).unwrap();
        assert!(single.is_finer(&p).unwrap());
        assert!(p.is_finer(&p).unwrap());
        assert!(!p.is_finer(&q).unwrap());
    }

    #[test]
    fn mismatched_agent_sets_rejected() {
        let p = Partition::new(vec![vec![0, 1]]).unwrap();
        let q = Partition::new(vec![vec![0, 2]]).unwrap();
        assert!(p.is_finer(&q).is_err());
    }

    #[test]
    fn chain_distances() {
        let s = line(10);
        // chain anchored at cell 0
        assert_eq!(s.distance(Pos::Chain(0, 3), Pos::Cell(2)), 5.0);
        assert_eq!(s.distance(Pos::Chain(0, 3), Pos::Chain(0, 1)), 2.0);
        assert_eq!(s.distance(Pos::Chain(0, 1), Pos::Chain(9, 1)), 11.0);
    }
}
