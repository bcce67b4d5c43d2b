use std::collections::{BTreeSet, VecDeque};

use super::attrs::{StaticAttrs, NUM_STATIC};
use super::primal::{LinkId, PrimalGraph, Travel};
use crate::error::{Error, Result};

/// One travel direction of one road segment.
#[derive(Debug, Clone, PartialEq)]
pub struct DualNode {
    pub segment: LinkId,
    pub travel: Travel,
    pub attrs: StaticAttrs,
    pub sensor: bool,
}

/// Oriented dual road graph: nodes are directed segments, an edge `u -> v`
/// means traffic on `u` may turn onto `v`. Edges carry no attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGraph {
    nodes: Vec<DualNode>,
    edges: Vec<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl DualGraph {
    /// Builds from explicit parts. Edges are sorted and deduplicated;
    /// self-edges are rejected.
    pub fn from_parts(nodes: Vec<DualNode>, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = nodes.len();
        edges.sort_unstable();
        edges.dedup();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!(
                    "dual edge ({u}, {v}) references a missing node"
                )));
            }
            if u == v {
                return Err(Error::InvalidInput(format!("dual self-edge on node {u}")));
            }
            out_adj[u].push(v);
            in_adj[v].push(u);
        }
        Ok(DualGraph {
            nodes,
            edges,
            out_adj,
            in_adj,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[DualNode] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &DualNode {
        &self.nodes[v]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Upstream neighbours (segments feeding into `v`).
    pub fn predecessors(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    /// Downstream neighbours.
    pub fn successors(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    pub fn set_sensor(&mut self, v: usize, sensor: bool) {
        self.nodes[v].sensor = sensor;
    }

    pub fn labeled(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&v| self.nodes[v].sensor)
            .collect()
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&v| !self.nodes[v].sensor)
            .collect()
    }

    /// Static descriptor matrix, one row per node.
    pub fn features(&self) -> Vec<[f64; NUM_STATIC]> {
        self.nodes.iter().map(|n| n.attrs.to_features()).collect()
    }

    pub fn find(&self, segment: LinkId, travel: Travel) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.segment == segment && n.travel == travel)
    }

    /// Nodes within `k` hops of `v`, ignoring edge direction, with `v` first
    /// and the rest in breadth-first order (ties by node index).
    pub fn khop_nodes(&self, v: usize, k: usize) -> Result<Vec<usize>> {
        if v >= self.nodes.len() {
            return Err(Error::NotFound(format!("dual node {v}")));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut order = vec![v];
        seen[v] = true;
        let mut queue = VecDeque::from([(v, 0usize)]);
        while let Some((u, d)) = queue.pop_front() {
            if d == k {
                continue;
            }
            let nbrs: BTreeSet<usize> = self.out_adj[u]
                .iter()
                .chain(&self.in_adj[u])
                .copied()
                .collect();
            for w in nbrs {
                if !seen[w] {
                    seen[w] = true;
                    order.push(w);
                    queue.push_back((w, d + 1));
                }
            }
        }
        Ok(order)
    }

    /// Induced subgraph on the `k`-hop neighbourhood of `v`.
    pub fn khop_subgraph(&self, v: usize, k: usize) -> Result<Subgraph> {
        let nodes = self.khop_nodes(v, k)?;
        let mut local = vec![usize::MAX; self.nodes.len()];
        for (i, &g) in nodes.iter().enumerate() {
            local[g] = i;
        }
        let mut edges = Vec::new();
        for (i, &g) in nodes.iter().enumerate() {
            for &w in &self.out_adj[g] {
                if local[w] != usize::MAX {
                    edges.push((i, local[w]));
                }
            }
        }
        edges.sort_unstable();
        Ok(Subgraph {
            nodes,
            edges,
            target: 0,
        })
    }
}

/// Induced neighbourhood subgraph around a target node.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    /// Local index -> dual node index.
    pub nodes: Vec<usize>,
    /// Directed edges in local indices.
    pub edges: Vec<(usize, usize)>,
    /// Local index of the target node.
    pub target: usize,
}

impl Subgraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Builds the oriented dual graph: one node per allowed travel direction of
/// every link, and an edge for every permitted turn between two of them.
pub fn build_dual(primal: &PrimalGraph) -> Result<DualGraph> {
    let mut nodes = Vec::new();
    let mut index = std::collections::HashMap::new();
    for l in primal.links() {
        l.attrs
            .validate()
            .map_err(|e| Error::InvalidInput(format!("link {}: {e}", l.id)))?;
        for &t in l.travels() {
            index.insert((l.id, t), nodes.len());
            nodes.push(DualNode {
                segment: l.id,
                travel: t,
                attrs: l.attrs,
                sensor: false,
            });
        }
    }
    for m in primal.maneuvers() {
        for d in [m.from, m.to] {
            if !index.contains_key(&(d.link, d.travel)) {
                return Err(Error::InvalidInput(format!(
                    "maneuver references missing directed link {} ({:?})",
                    d.link, d.travel
                )));
            }
        }
    }
    let mut edges = Vec::new();
    for (_, (incoming, outgoing)) in primal.incidence() {
        for &a in &incoming {
            for &b in &outgoing {
                if a == b || !primal.permits(a, b) {
                    continue;
                }
                edges.push((index[&(a.link, a.travel)], index[&(b.link, b.travel)]));
            }
        }
    }
    DualGraph::from_parts(nodes, edges)
}
