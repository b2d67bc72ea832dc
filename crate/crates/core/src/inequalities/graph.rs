use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::overlap::OverlapMatrix;

/// Graph on components with an edge between `i != j` iff `δ_ij >= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapGraph {
    pub threshold: f64,
    pub adjacency: Vec<Vec<usize>>,
    /// Connected components, each sorted, ordered by smallest member.
    pub components: Vec<Vec<usize>>,
    /// Diameter (longest shortest path, in edges) of each component.
    pub diameters: Vec<usize>,
}

impl OverlapGraph {
    pub fn k(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_connected(&self) -> bool {
        self.components.len() == 1
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    pub fn component_of(&self, i: usize) -> usize {
        self.components.iter().position(|c| c.binary_search(&i).is_ok()).expect("every node has a component")
    }

    pub fn max_diameter(&self) -> usize {
        self.diameters.iter().cloned().max().unwrap_or(0)
    }
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut q = VecDeque::from([start]);
    while let Some(u) = q.pop_front() {
        let du = dist[u].unwrap();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

pub fn build_graph(overlaps: &OverlapMatrix, threshold: f64) -> Result<OverlapGraph> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("graph threshold {threshold} outside (0, 1]")));
    }
    Ok(build_graph_log(overlaps, threshold.ln(), threshold))
}

/// Graph with edges where `ln δ_ij >= ln_threshold`, for thresholds too small
/// to represent directly.
pub(crate) fn build_graph_log(overlaps: &OverlapMatrix, ln_threshold: f64, threshold: f64) -> OverlapGraph {
    let k = overlaps.k();
    let adjacency: Vec<Vec<usize>> = (0..k)
        .map(|i| (0..k).filter(|&j| j != i && overlaps.get(i, j).ln() >= ln_threshold).collect())
        .collect();
    let mut seen = vec![false; k];
    let mut components = Vec::new();
    let mut diameters = Vec::new();
    for s in 0..k {
        if seen[s] {
            continue;
        }
        let dist = bfs(&adjacency, s);
        let members: Vec<usize> = (0..k).filter(|&v| dist[v].is_some()).collect();
        for &v in &members {
            seen[v] = true;
        }
        let diameter = members
            .iter()
            .map(|&v| bfs(&adjacency, v).into_iter().flatten().max().unwrap_or(0))
            .max()
            .unwrap_or(0);
        components.push(members);
        diameters.push(diameter);
    }
    OverlapGraph { threshold, adjacency, components, diameters }
}
