//! The dependency graph induced by a chain's relationships.
//!
//! Nodes are the chain's premises, derived premises, relationships, and
//! conclusions. Every relationship contributes one edge from each operand
//! to itself, plus one edge from itself to its target when present, so
//! support flows source → relationship → target. Node identity is the
//! [`RefLabel`]; the node order (`P < R < C`, then ascending index) makes
//! every traversal and report deterministic.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::chain::ReasoningChain;
use crate::label::RefLabel;

/// Why a dependency graph could not be built.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    /// The relationships form a reference cycle. The sequence lists the
    /// nodes around the cycle once, starting from its smallest label;
    /// the last node points back to the first.
    #[error("reference cycle: {}", .0.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" -> "))]
    CycleDetected(Vec<RefLabel>),
    /// A relationship references a label that names no node of the chain.
    #[error("relationship {relationship} references unknown node {reference}")]
    UnresolvedRef {
        relationship: RefLabel,
        reference: RefLabel,
    },
}

/// A node label that is not part of the graph.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown node {0}")]
pub struct UnknownNode(pub RefLabel);

/// An acyclic dependency graph over one reasoning chain.
#[derive(Debug, Clone)]
pub struct ChainDag {
    nodes: Vec<RefLabel>,
    index: BTreeMap<RefLabel, usize>,
    edges: Vec<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    depth: Vec<usize>,
    topo: Vec<usize>,
    /// reach[a] contains b iff a path a → … → b exists (b strictly below a).
    reach: Vec<Vec<bool>>,
}

/// Build the dependency graph of a chain. Fails on unresolved references
/// or cycles; run the structural validator first for a full diagnosis.
pub fn build_dag(chain: &ReasoningChain) -> Result<ChainDag, DagError> {
    ChainDag::build(chain)
}

/// Longest-path depth of a node: 0 for nodes with no incoming edges, and
/// one more than the deepest predecessor otherwise.
pub fn node_depth(dag: &ChainDag, node: RefLabel) -> Result<usize, UnknownNode> {
    dag.depth(node)
}

impl ChainDag {
    pub fn build(chain: &ReasoningChain) -> Result<ChainDag, DagError> {
        // Collect the node set; duplicate ids collapse onto one node here
        // (they are a structural-validation finding, not a graph concern).
        let mut index: BTreeMap<RefLabel, usize> = BTreeMap::new();
        let labels = chain
            .premises
            .iter()
            .map(|p| p.id)
            .chain(chain.derived_premises.iter().map(|d| d.id))
            .chain(chain.relationships.iter().map(|r| r.id))
            .chain(chain.conclusions.iter().map(|c| c.id));
        for label in labels {
            let next = index.len();
            index.entry(label).or_insert(next);
        }
        // Re-number so node ids follow the canonical order.
        let nodes: Vec<RefLabel> = index.keys().copied().collect();
        for (i, label) in nodes.iter().enumerate() {
            index.insert(*label, i);
        }

        let mut edges = Vec::new();
        for rel in &chain.relationships {
            let rel_ix = index[&rel.id];
            for operand in &rel.operands {
                let from = *index.get(operand).ok_or(DagError::UnresolvedRef {
                    relationship: rel.id,
                    reference: *operand,
                })?;
                edges.push((from, rel_ix));
            }
            if let Some(target) = rel.target {
                let to = *index.get(&target).ok_or(DagError::UnresolvedRef {
                    relationship: rel.id,
                    reference: target,
                })?;
                edges.push((rel_ix, to));
            }
        }

        let n = nodes.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for &(from, to) in &edges {
            out_adj[from].push(to);
            in_adj[to].push(from);
        }

        let topo = toposort(&nodes, &out_adj, &in_adj)?;

        let mut depth = vec![0usize; n];
        for &v in &topo {
            depth[v] = in_adj[v]
                .iter()
                .map(|&u| depth[u] + 1)
                .max()
                .unwrap_or(0);
        }

        // Transitive closure, accumulated in reverse topological order.
        let mut reach = vec![vec![false; n]; n];
        for &v in topo.iter().rev() {
            for i in 0..out_adj[v].len() {
                let w = out_adj[v][i];
                if !reach[v][w] {
                    reach[v][w] = true;
                }
                for b in 0..n {
                    if reach[w][b] {
                        reach[v][b] = true;
                    }
                }
            }
        }

        Ok(ChainDag {
            nodes,
            index,
            edges,
            out_adj,
            in_adj,
            depth,
            topo,
            reach,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Nodes in canonical label order.
    pub fn nodes(&self) -> &[RefLabel] {
        &self.nodes
    }

    /// Nodes in a topological order (deterministic: among ready nodes the
    /// smallest label is emitted first).
    pub fn topo_order(&self) -> Vec<RefLabel> {
        self.topo.iter().map(|&i| self.nodes[i]).collect()
    }

    pub fn contains(&self, node: RefLabel) -> bool {
        self.index.contains_key(&node)
    }

    fn ix(&self, node: RefLabel) -> Result<usize, UnknownNode> {
        self.index.get(&node).copied().ok_or(UnknownNode(node))
    }

    /// Longest-path depth from any source (in-degree-0) node.
    pub fn depth(&self, node: RefLabel) -> Result<usize, UnknownNode> {
        Ok(self.depth[self.ix(node)?])
    }

    pub fn in_degree(&self, node: RefLabel) -> Result<usize, UnknownNode> {
        Ok(self.in_adj[self.ix(node)?].len())
    }

    pub fn out_degree(&self, node: RefLabel) -> Result<usize, UnknownNode> {
        Ok(self.out_adj[self.ix(node)?].len())
    }

    /// True if `desc` lies strictly downstream of `anc` (a path
    /// `anc → … → desc` exists and the two differ).
    pub fn is_strict_descendant(&self, desc: RefLabel, anc: RefLabel) -> Result<bool, UnknownNode> {
        let d = self.ix(desc)?;
        let a = self.ix(anc)?;
        Ok(self.reach[a][d])
    }

    /// All strict ancestors of `node` (everything with a path into it).
    pub fn ancestors(&self, node: RefLabel) -> Result<Vec<RefLabel>, UnknownNode> {
        let target = self.ix(node)?;
        Ok((0..self.nodes.len())
            .filter(|&a| self.reach[a][target])
            .map(|a| self.nodes[a])
            .collect())
    }

    pub fn predecessors(&self, node: RefLabel) -> Result<Vec<RefLabel>, UnknownNode> {
        let ix = self.ix(node)?;
        let mut preds: Vec<RefLabel> = self.in_adj[ix].iter().map(|&u| self.nodes[u]).collect();
        preds.sort();
        preds.dedup();
        Ok(preds)
    }
}

fn toposort(
    nodes: &[RefLabel],
    out_adj: &[Vec<usize>],
    in_adj: &[Vec<usize>],
) -> Result<Vec<usize>, DagError> {
    let n = nodes.len();
    let mut remaining: Vec<usize> = in_adj.iter().map(|v| v.len()).collect();
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&v| remaining[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for &w in &out_adj[v] {
            remaining[w] -= 1;
            if remaining[w] == 0 {
                ready.insert(w);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Cycle: walk forward through still-blocked nodes until one repeats.
    let in_cycle_region: Vec<bool> = (0..n).map(|v| remaining[v] > 0).collect();
    let start = (0..n).find(|&v| in_cycle_region[v]).expect("blocked node");
    let mut seen_at: BTreeMap<usize, usize> = BTreeMap::new();
    let mut path = Vec::new();
    let mut v = start;
    loop {
        if let Some(&pos) = seen_at.get(&v) {
            let mut cycle: Vec<usize> = path[pos..].to_vec();
            // Rotate so the smallest label leads; keeps the report stable.
            let min_pos = cycle
                .iter()
                .enumerate()
                .min_by_key(|(_, &ix)| nodes[ix])
                .map(|(i, _)| i)
                .unwrap_or(0);
            cycle.rotate_left(min_pos);
            return Err(DagError::CycleDetected(
                cycle.into_iter().map(|ix| nodes[ix]).collect(),
            ));
        }
        seen_at.insert(v, path.len());
        path.push(v);
        v = *out_adj[v]
            .iter()
            .filter(|&&w| in_cycle_region[w])
            .min_by_key(|&&w| nodes[w])
            .expect("blocked node has a blocked successor");
    }
}
