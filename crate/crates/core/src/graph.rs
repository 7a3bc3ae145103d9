//! Per-dialogue discourse graphs and their edge statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge ({src}, {tgt}) out of range for {n} utterances")]
    OutOfRange { src: usize, tgt: usize, n: usize },
    #[error("edge src must precede tgt (got {src} -> {tgt})")]
    NotForward { src: usize, tgt: usize },
}

/// Binary adjacency over utterances with edges pointing earlier → later.
/// `adjacency[src][tgt] == true` marks a discourse relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscourseGraph {
    n: usize,
    adjacency: Vec<Vec<bool>>,
    predecessors: Vec<Vec<usize>>,
}

impl DiscourseGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, src: usize, tgt: usize) -> bool {
        self.adjacency[src][tgt]
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    /// Sorted sources of edges into `i`.
    pub fn predecessors(&self, i: usize) -> &[usize] {
        &self.predecessors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.predecessors.iter().map(Vec::len).sum()
    }

    /// Same node count with every edge removed.
    pub fn without_edges(&self) -> Self {
        Self::empty(self.n)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![vec![false; n]; n],
            predecessors: vec![Vec::new(); n],
        }
    }
}

/// Build the graph for `n` utterances. Repeated pairs collapse.
pub fn build_graph(n: usize, edges: &[(usize, usize)]) -> Result<DiscourseGraph, GraphError> {
    let mut g = DiscourseGraph::empty(n);
    for &(src, tgt) in edges {
        if src >= n || tgt >= n {
            return Err(GraphError::OutOfRange { src, tgt, n });
        }
        if src >= tgt {
            return Err(GraphError::NotForward { src, tgt });
        }
        g.adjacency[src][tgt] = true;
    }
    for (tgt, preds) in g.predecessors.iter_mut().enumerate() {
        preds.extend((0..tgt).filter(|&src| g.adjacency[src][tgt]));
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n: usize,
    pub edges: usize,
    pub complete_edges: usize,
    /// `edges / complete_edges`, 0 for a single utterance.
    pub density: f64,
}

pub fn edge_stats(g: &DiscourseGraph) -> GraphStats {
    let edges = g.edge_count();
    let complete_edges = g.n * g.n.saturating_sub(1) / 2;
    let density = if complete_edges == 0 {
        0.0
    } else {
        edges as f64 / complete_edges as f64
    };
    GraphStats {
        n: g.n,
        edges,
        complete_edges,
        density,
    }
}

/// Means over a set of graphs, each graph weighted equally.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub graphs: usize,
    pub total_edges: usize,
    pub mean_n: f64,
    pub mean_edges: f64,
    pub mean_density: f64,
}

pub fn aggregate_stats(rows: &[GraphStats]) -> AggregateStats {
    let k = rows.len().max(1) as f64;
    AggregateStats {
        graphs: rows.len(),
        total_edges: rows.iter().map(|s| s.edges).sum(),
        mean_n: rows.iter().map(|s| s.n as f64).sum::<f64>() / k,
        mean_edges: rows.iter().map(|s| s.edges as f64).sum::<f64>() / k,
        mean_density: rows.iter().map(|s| s.density).sum::<f64>() / k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chain() {
        let g = build_graph(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(g.predecessors(0).is_empty());
        assert_eq!(g.predecessors(1), &[0]);
        assert_eq!(g.predecessors(2), &[1]);
    }

    #[test]
    fn fan_in() {
        let g = build_graph(4, &[(0, 2), (1, 2), (0, 3)]).unwrap();
        assert_eq!(g.predecessors(2), &[0, 1]);
        assert_eq!(g.predecessors(3), &[0]);
        assert!(g.has_edge(1, 2) && !g.has_edge(2, 1));
    }

    #[test]
    fn single_node() {
        let g = build_graph(1, &[]).unwrap();
        assert!(g.predecessors(0).is_empty());
        assert_eq!(edge_stats(&g).density, 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(build_graph(3, &[(0, 3)]), Err(GraphError::OutOfRange { src: 0, tgt: 3, n: 3 }));
        assert_eq!(build_graph(3, &[(2, 1)]), Err(GraphError::NotForward { src: 2, tgt: 1 }));
        assert_eq!(build_graph(3, &[(1, 1)]), Err(GraphError::NotForward { src: 1, tgt: 1 }));
    }

    #[test]
    fn stats_examples() {
        let s = edge_stats(&build_graph(4, &[(0, 1), (1, 2), (2, 3)]).unwrap());
        assert_eq!((s.complete_edges, s.density), (6, 0.5));
        assert_eq!(edge_stats(&build_graph(2, &[(0, 1)]).unwrap()).density, 1.0);
        let tree: Vec<_> = (1..10).map(|i| ((i - 1) / 2, i)).collect();
        let s = edge_stats(&build_graph(10, &tree).unwrap());
        assert_eq!((s.edges, s.complete_edges), (9, 45));
        assert!((s.density - 0.2).abs() < 1e-15);
    }

    #[test]
    fn aggregate_is_mean_of_rows() {
        let rows = [
            edge_stats(&build_graph(4, &[(0, 1), (1, 2), (2, 3)]).unwrap()),
            edge_stats(&build_graph(3, &[]).unwrap()),
        ];
        let a = aggregate_stats(&rows);
        assert_eq!(a.total_edges, 3);
        assert_eq!(a.mean_density, 0.25);
        assert_eq!(a.mean_n, 3.5);
        assert_eq!(aggregate_stats(&[]).mean_density, 0.0);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let g = build_graph(3, &[(0, 2), (0, 2)]).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    /// Density by direct enumeration of all unordered pairs.
    fn brute_density(n: usize, edges: &[(usize, usize)]) -> f64 {
        let mut pairs = 0;
        let mut hits = 0;
        for a in 0..n {
            for b in a + 1..n {
                pairs += 1;
                if edges.contains(&(a, b)) {
                    hits += 1;
                }
            }
        }
        if pairs == 0 {
            0.0
        } else {
            hits as f64 / pairs as f64
        }
    }

    #[test]
    fn density_matches_enumeration_for_all_small_graphs() {
        for n in 1..=5usize {
            let pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
            for mask in 0u32..(1 << pairs.len()) {
                let edges: Vec<_> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask >> k & 1 == 1)
                    .map(|(_, &p)| p)
                    .collect();
                let s = edge_stats(&build_graph(n, &edges).unwrap());
                assert_eq!(s.density, brute_density(n, &edges), "n={n} mask={mask:b}");
                assert!((0.0..=1.0).contains(&s.density));
            }
        }
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1usize..12).prop_flat_map(|n| {
            let edges = prop::collection::vec((0..n, 0..n), 0..20).prop_map(|raw| {
                raw.into_iter()
                    .filter(|&(a, b)| a != b)
                    .map(|(a, b)| (a.min(b), a.max(b)))
                    .collect::<Vec<_>>()
            });
            (Just(n), edges)
        })
    }

    proptest! {
        #[test]
        fn edge_order_does_not_matter((n, edges) in arb_graph(), seed in any::<u64>()) {
            let mut shuffled = edges.clone();
            let len = shuffled.len();
            if len > 1 {
                shuffled.rotate_left((seed as usize) % len);
                shuffled.reverse();
            }
            prop_assert_eq!(build_graph(n, &edges).unwrap(), build_graph(n, &shuffled).unwrap());
        }

        #[test]
        fn predecessors_are_earlier((n, edges) in arb_graph()) {
            let g = build_graph(n, &edges).unwrap();
            prop_assert!(g.predecessors(0).is_empty());
            for i in 0..n {
                for &j in g.predecessors(i) {
                    prop_assert!(j < i);
                    prop_assert!(g.has_edge(j, i));
                }
                let from_adj = (0..n).filter(|&j| g.has_edge(j, i)).count();
                prop_assert_eq!(from_adj, g.predecessors(i).len());
            }
        }
    }
}
