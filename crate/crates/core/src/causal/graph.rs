use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::matrix::CausalityResult;
use crate::error::{Error, Result};
use crate::mat::Matrix;

/// Binary source×target graph: an edge wherever the aggregate causality
/// strictly exceeds the median of all its entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub n_source: usize,
    pub n_target: usize,
    /// Row-major `n_source × n_target`.
    pub adjacency: Vec<bool>,
    pub threshold: f64,
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn threshold_graph(res: &CausalityResult) -> Result<CausalGraph> {
    graph_from_aggregate(&res.aggregate)
}

pub fn graph_from_aggregate(aggregate: &Matrix) -> Result<CausalGraph> {
    let (ns, nt) = aggregate.shape();
    let threshold =
        median(aggregate.values()).ok_or_else(|| Error::dim("empty causality matrix"))?;
    let adjacency: Vec<bool> = aggregate.values().iter().map(|v| *v > threshold).collect();
    let mut in_degree = vec![0; nt];
    let mut out_degree = vec![0; ns];
    for i in 0..ns {
        for j in 0..nt {
            if adjacency[i * nt + j] {
                in_degree[j] += 1;
                out_degree[i] += 1;
            }
        }
    }
    Ok(CausalGraph {
        n_source: ns,
        n_target: nt,
        adjacency,
        threshold,
        in_degree,
        out_degree,
    })
}

impl CausalGraph {
    pub fn has_edge(&self, src: usize, tgt: usize) -> bool {
        self.adjacency[src * self.n_target + tgt]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|e| **e).count()
    }

    /// `src,dst,weight` rows for every edge, weight taken from `aggregate`.
    pub fn edges_csv(&self, aggregate: &Matrix) -> String {
        let mut s = String::from("src,dst,weight\n");
        for i in 0..self.n_source {
            for j in 0..self.n_target {
                if self.has_edge(i, j) {
                    let _ = writeln!(s, "{i},{j},{}", aggregate.get(i, j));
                }
            }
        }
        s
    }

    pub fn degree_summary(&self) -> DegreeSummary {
        DegreeSummary {
            n_source: self.n_source,
            n_target: self.n_target,
            threshold: self.threshold,
            edge_count: self.edge_count(),
            in_degree: self.in_degree.clone(),
            out_degree: self.out_degree.clone(),
        }
    }
}

/// JSON degree summary written next to the edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub n_source: usize,
    pub n_target: usize,
    pub threshold: f64,
    pub edge_count: usize,
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_two_by_two() {
        let agg = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let g = graph_from_aggregate(&agg).unwrap();
        assert_eq!(g.threshold, 2.5);
        assert!(!g.has_edge(0, 0) && !g.has_edge(0, 1));
        assert!(g.has_edge(1, 0) && g.has_edge(1, 1));
        assert_eq!(g.in_degree, vec![1, 1]);
        assert_eq!(g.out_degree, vec![0, 2]);
        assert_eq!(g.edges_csv(&agg), "src,dst,weight\n1,0,3\n1,1,4\n");
    }

    #[test]
    fn all_equal_has_no_edges() {
        let agg = Matrix::from_fn(3, 4, |_, _| 0.7).unwrap();
        assert_eq!(graph_from_aggregate(&agg).unwrap().edge_count(), 0);
    }

    #[test]
    fn odd_count_median() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn random_matches_sort_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
        let agg = Matrix::from_fn(20, 20, |_, _| rng.random::<f64>()).unwrap();
        let mut sorted = agg.values().to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = (sorted[199] + sorted[200]) / 2.0;
        let expect = agg.values().iter().filter(|v| **v > mid).count();
        let g = graph_from_aggregate(&agg).unwrap();
        assert_eq!(g.edge_count(), expect);
        assert_eq!(g.in_degree.iter().sum::<usize>(), expect);
        assert_eq!(g.out_degree.iter().sum::<usize>(), expect);
    }
}
