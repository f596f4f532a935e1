use torso_pose::graph::{Edge, EdgeRelation};
use torso_pose::nn::{Activation, HeadMerge, Matrix};

pub fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Relu => x.max(0.0),
        Activation::Tanh => x.tanh(),
        Activation::Identity => x,
    }
}

/// `h_j W` for one row, by explicit loops.
pub fn row_times(h: &Matrix, j: usize, w: &Matrix) -> Vec<f64> {
    (0..w.cols())
        .map(|k| (0..w.rows()).map(|m| h.get(j, m) * w.get(m, k)).sum())
        .collect()
}

pub fn gcn_oracle(h: &Matrix, edges: &[Edge], w: &Matrix, b: &Matrix, a: Activation) -> Matrix {
    let n = h.rows();
    let indeg = |i: usize| edges.iter().filter(|e| e.dst == i).count() as f64;
    Matrix::from_fn(n, w.cols(), |i, k| {
        let mut s = b.get(0, k);
        for e in edges.iter().filter(|e| e.dst == i) {
            let c = (indeg(i) * indeg(e.src)).sqrt();
            s += row_times(h, e.src, w)[k] / c;
        }
        act(a, s)
    })
}

pub fn rgcn_oracle(h: &Matrix, edges: &[Edge], params: &[Matrix], relations: usize, bases: usize, a: Activation) -> Matrix {
    let n = h.rows();
    let (w0, coeff) = (&params[0], &params[1]);
    let bias = &params[2 + bases];
    let w_r: Vec<Matrix> = (0..relations)
        .map(|r| {
            Matrix::from_fn(w0.rows(), w0.cols(), |i, j| {
                (0..bases).map(|b| coeff.get(r, b) * params[2 + b].get(i, j)).sum()
            })
        })
        .collect();
    Matrix::from_fn(n, w0.cols(), |i, k| {
        let mut s = bias.get(0, k) + row_times(h, i, w0)[k];
        for (r, w) in w_r.iter().enumerate() {
            let nbrs: Vec<&Edge> = edges
                .iter()
                .filter(|e| e.dst == i && e.relation != EdgeRelation::SelfLoop && e.relation.index() == r)
                .collect();
            for e in &nbrs {
                s += row_times(h, e.src, w)[k] / nbrs.len() as f64;
            }
        }
        act(a, s)
    })
}

pub fn gat_oracle(h: &Matrix, edges: &[Edge], params: &[Matrix], heads: usize, merge: HeadMerge, out: usize, a: Activation) -> Matrix {
    let n = h.rows();
    let (w, attn, bias) = (&params[0], &params[1], &params[2]);
    let hw = w.cols() / heads;
    let z: Vec<Vec<f64>> = (0..n).map(|j| row_times(h, j, w)).collect();
    let leaky = |x: f64| if x > 0.0 { x } else { 0.2 * x };
    let mut result = Matrix::zeros(n, out);
    for i in 0..n {
        let nbrs: Vec<usize> = edges.iter().filter(|e| e.dst == i).map(|e| e.src).collect();
        for k in 0..heads {
            let score = |j: usize| {
                let mut s = 0.0;
                for m in 0..hw {
                    s += attn.get(k, m) * z[i][k * hw + m] + attn.get(k, hw + m) * z[j][k * hw + m];
                }
                leaky(s)
            };
            let denom: f64 = nbrs.iter().map(|&j| score(j).exp()).sum();
            for &j in &nbrs {
                let alpha = score(j).exp() / denom;
                for m in 0..hw {
                    let v = alpha * z[j][k * hw + m];
                    match merge {
                        HeadMerge::Concat => result.set(i, k * hw + m, result.get(i, k * hw + m) + v),
                        HeadMerge::Mean => result.set(i, m, result.get(i, m) + v / heads as f64),
                    }
                }
            }
        }
    }
    Matrix::from_fn(n, out, |i, k| act(a, result.get(i, k) + bias.get(0, k)))
}
