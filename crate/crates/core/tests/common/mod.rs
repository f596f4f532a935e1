#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;

use rand::Rng;
use torso_pose::graph::{Edge, EdgeRelation};
use torso_pose::nn::{Matrix, Topology};

/// Random graph with a self-loop on every node and `extra` distinct
/// non-self edges carrying random relations.
pub fn random_edges(n: usize, extra: usize, rng: &mut impl Rng) -> Vec<Edge> {
    let mut edges: Vec<Edge> = (0..n)
        .map(|i| Edge {
            src: i,
            dst: i,
            relation: EdgeRelation::SelfLoop,
        })
        .collect();
    let mut used = std::collections::HashSet::new();
    let mut tries = 0;
    while used.len() < extra && tries < extra * 20 {
        tries += 1;
        let (s, d) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if s == d || !used.insert((s, d)) {
            continue;
        }
        let relation = EdgeRelation::ALL[rng.gen_range(0..EdgeRelation::NUM_NEIGHBOR_RELATIONS)];
        edges.push(Edge { src: s, dst: d, relation });
    }
    edges
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn topology(n: usize, edges: &[Edge]) -> Topology {
    Topology::new(n, edges).expect("valid edges")
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
