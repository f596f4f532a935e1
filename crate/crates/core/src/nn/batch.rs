//! Block-diagonal batching of graphs and the adjacency views each layer
//! type consumes.

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeRelation, SkeletonGraph};

use super::Matrix;

/// Several graphs merged into one disconnected graph.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub features: Matrix,
    pub edges: Vec<Edge>,
    /// Row of each graph's superbody node, in input order.
    pub readout: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&SkeletonGraph]) -> Result<Self> {
        let parts: Vec<&Matrix> = graphs.iter().map(|g| &g.features).collect();
        let features = Matrix::vstack(&parts)?;
        let mut edges = Vec::with_capacity(graphs.iter().map(|g| g.edges.len()).sum());
        let mut readout = Vec::with_capacity(graphs.len());
        let mut base = 0;
        for g in graphs {
            edges.extend(g.edges.iter().map(|e| Edge {
                src: e.src + base,
                dst: e.dst + base,
                relation: e.relation,
            }));
            readout.push(base + g.superbody);
            base += g.num_nodes();
        }
        Ok(GraphBatch {
            features,
            edges,
            readout,
        })
    }

    pub fn single(graph: &SkeletonGraph) -> Self {
        GraphBatch {
            features: graph.features.clone(),
            edges: graph.edges.clone(),
            readout: vec![graph.superbody],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(self.num_nodes(), &self.edges)
    }
}

/// Weighted edge `src -> dst` with its normalization coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Edges of one relation. Destinations are compacted: `edge.dst` indexes
/// into `rows`, the distinct destination nodes in order of first use.
#[derive(Debug, Clone, Default)]
pub struct RelationBlock {
    pub rows: Vec<usize>,
    pub edges: Vec<WeightedEdge>,
}

/// Precomputed adjacency structures for one (batched) graph.
#[derive(Debug, Clone)]
pub struct Topology {
    pub num_nodes: usize,
    /// All edges with weight `1 / sqrt(|IN(dst)| |IN(src)|)`.
    pub gcn: Vec<WeightedEdge>,
    /// Per non-self relation, the edges with weight `1 / |N_dst^r|`.
    pub relations: Vec<RelationBlock>,
    /// Incoming neighbours grouped by destination (CSR), self-loops included.
    pub in_offsets: Vec<usize>,
    pub in_sources: Vec<usize>,
}

impl Topology {
    pub fn new(num_nodes: usize, edges: &[Edge]) -> Result<Self> {
        if let Some(e) = edges.iter().find(|e| e.src >= num_nodes || e.dst >= num_nodes) {
            return Err(Error::Graph(format!(
                "edge {}->{} outside {num_nodes} nodes",
                e.src, e.dst
            )));
        }
        let mut in_degree = vec![0usize; num_nodes];
        for e in edges {
            in_degree[e.dst] += 1;
        }
        let gcn = edges
            .iter()
            .map(|e| WeightedEdge {
                src: e.src,
                dst: e.dst,
                weight: 1.0 / ((in_degree[e.dst] * in_degree[e.src]) as f64).sqrt(),
            })
            .collect();

        let nrel = EdgeRelation::NUM_NEIGHBOR_RELATIONS;
        let mut rel_count = vec![0usize; num_nodes * nrel];
        for e in edges.iter().filter(|e| e.relation != EdgeRelation::SelfLoop) {
            rel_count[e.dst * nrel + e.relation.index()] += 1;
        }
        let mut relations: Vec<RelationBlock> = (0..nrel).map(|_| RelationBlock::default()).collect();
        for (r, block) in relations.iter_mut().enumerate() {
            let mut local = vec![usize::MAX; num_nodes];
            for e in edges.iter().filter(|e| e.relation.index() == r && e.relation != EdgeRelation::SelfLoop) {
                if local[e.dst] == usize::MAX {
                    local[e.dst] = block.rows.len();
                    block.rows.push(e.dst);
                }
                block.edges.push(WeightedEdge {
                    src: e.src,
                    dst: local[e.dst],
                    weight: 1.0 / rel_count[e.dst * nrel + r] as f64,
                });
            }
        }

        let mut in_offsets = vec![0usize; num_nodes + 1];
        for (i, d) in in_degree.iter().enumerate() {
            in_offsets[i + 1] = in_offsets[i] + d;
        }
        let mut fill = in_offsets.clone();
        let mut in_sources = vec![0usize; edges.len()];
        for e in edges {
            in_sources[fill[e.dst]] = e.src;
            fill[e.dst] += 1;
        }
        Ok(Topology {
            num_nodes,
            gcn,
            relations,
            in_offsets,
            in_sources,
        })
    }

    pub fn in_neighbors(&self, node: usize) -> &[usize] {
        &self.in_sources[self.in_offsets[node]..self.in_offsets[node + 1]]
    }
}
