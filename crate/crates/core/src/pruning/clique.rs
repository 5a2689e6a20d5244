//! Exact maximum clique search.
//!
//! Pipeline: core decomposition → greedy lower bound → drop vertices whose
//! core number cannot beat the bound → branch and bound with greedy-coloring
//! upper bounds over bitsets. The search is sequential and deterministic.

use std::time::{Duration, Instant};

use super::bitset::BitSet;
use super::graph::Graph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueResult {
    /// Clique vertices in ascending order.
    pub vertices: Vec<usize>,
    /// True when the search finished within the time budget.
    pub exact: bool,
    /// Size of the greedy clique that seeded the search.
    pub heuristic_size: usize,
}

impl CliqueResult {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Core numbers and the degeneracy order (vertices in removal order).
pub fn core_decomposition(g: &Graph) -> (Vec<usize>, Vec<usize>) {
    let n = g.len();
    let mut degree: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let max_deg = degree.iter().copied().max().unwrap_or(0);
    // bucket sort by degree
    let mut bins = vec![0usize; max_deg + 1];
    for &d in &degree {
        bins[d] += 1;
    }
    let mut start = 0;
    for b in bins.iter_mut() {
        let c = *b;
        *b = start;
        start += c;
    }
    let mut pos = vec![0usize; n];
    let mut order = vec![0usize; n];
    for v in 0..n {
        pos[v] = bins[degree[v]];
        order[pos[v]] = v;
        bins[degree[v]] += 1;
    }
    for d in (1..=max_deg).rev() {
        bins[d] = bins[d - 1];
    }
    bins[0] = 0;
    for i in 0..n {
        let v = order[i];
        for u in g.neighbors(v).iter() {
            if degree[u] > degree[v] {
                let du = degree[u];
                let pu = pos[u];
                let pw = bins[du];
                let w = order[pw];
                if u != w {
                    order.swap(pu, pw);
                    pos[u] = pw;
                    pos[w] = pu;
                }
                bins[du] += 1;
                degree[u] -= 1;
            }
        }
    }
    (degree, order)
}

/// Greedy clique seeded from each vertex, highest core first.
fn greedy_clique(g: &Graph, core: &[usize], order: &[usize]) -> Vec<usize> {
    let mut best: Vec<usize> = Vec::new();
    for &v in order.iter().rev() {
        if core[v] < best.len() {
            continue;
        }
        let mut clique = vec![v];
        let mut cand = g.neighbors(v).clone();
        loop {
            let pick = cand
                .iter()
                .filter(|&u| core[u] >= best.len())
                .max_by(|&a, &b| core[a].cmp(&core[b]).then(b.cmp(&a)));
            let Some(u) = pick else { break };
            clique.push(u);
            cand.intersect_with(g.neighbors(u));
        }
        if clique.len() > best.len() {
            best = clique;
        }
    }
    best
}

struct Search<'a> {
    g: &'a Graph,
    best: Option<Vec<usize>>,
    bound: usize,
    deadline: Instant,
    nodes: u64,
    timed_out: bool,
}

impl Search<'_> {
    /// Greedy sequential coloring of `p` in ascending vertex order. Returns
    /// vertices with their color (1-based), sorted by color.
    fn color(&self, p: &BitSet) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(p.count());
        let mut uncolored = p.clone();
        let mut k = 0;
        while !uncolored.is_empty() {
            k += 1;
            let mut q = uncolored.clone();
            while let Some(v) = q.first() {
                q.remove(v);
                q.difference_with(self.g.neighbors(v));
                uncolored.remove(v);
                out.push((v, k));
            }
        }
        out
    }

    fn expand(&mut self, clique: &mut Vec<usize>, mut p: BitSet) {
        self.nodes += 1;
        if self.nodes.is_multiple_of(1024) && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        if self.timed_out {
            return;
        }
        let colored = self.color(&p);
        for &(v, k) in colored.iter().rev() {
            if clique.len() + k <= self.bound || self.timed_out {
                return;
            }
            clique.push(v);
            let next = p.intersection(self.g.neighbors(v));
            if next.is_empty() {
                if clique.len() > self.bound {
                    self.bound = clique.len();
                    self.best = Some(clique.clone());
                }
            } else {
                self.expand(clique, next);
            }
            clique.pop();
            p.remove(v);
        }
    }
}

/// Maximum clique with a wall-clock budget. When the budget runs out the
/// best clique found so far is returned with `exact == false`.
pub fn max_clique(g: &Graph, time_budget: Duration) -> CliqueResult {
    let n = g.len();
    if n == 0 {
        return CliqueResult {
            vertices: Vec::new(),
            exact: true,
            heuristic_size: 0,
        };
    }
    let (core, order) = core_decomposition(g);
    let seed = greedy_clique(g, &core, &order);
    let heuristic_size = seed.len();

    // Relabel survivors so that ascending index = reverse degeneracy order;
    // low indices (high cores) are colored first.
    let survivors: Vec<usize> = order.iter().rev().copied().filter(|&v| core[v] >= seed.len()).collect();
    let mut index_of = vec![usize::MAX; n];
    for (i, &v) in survivors.iter().enumerate() {
        index_of[v] = i;
    }
    let m = survivors.len();
    let mut sub = Graph::new(m);
    for (i, &v) in survivors.iter().enumerate() {
        for u in g.neighbors(v).iter() {
            let j = index_of[u];
            if j != usize::MAX && j > i {
                sub.add_edge(i, j);
            }
        }
    }

    let mut search = Search {
        g: &sub,
        best: None,
        bound: seed.len(),
        deadline: Instant::now() + time_budget,
        nodes: 0,
        timed_out: false,
    };
    search.expand(&mut Vec::with_capacity(m), BitSet::full(m));

    let mut vertices: Vec<usize> = match search.best {
        Some(best) => best.iter().map(|&i| survivors[i]).collect(),
        None => seed,
    };
    vertices.sort_unstable();
    assert!(g.is_clique(&vertices), "max_clique produced a non-clique");
    CliqueResult {
        vertices,
        exact: !search.timed_out,
        heuristic_size,
    }
}

/// Exhaustive maximum clique for graphs with at most 25 vertices. Among
/// maximum cliques, the one with the smallest bitmask is returned.
pub fn brute_force_max_clique(g: &Graph) -> Result<Vec<usize>> {
    let n = g.len();
    if n > 25 {
        return Err(Error::GraphTooLarge(n));
    }
    let adj: Vec<u32> = (0..n)
        .map(|v| g.neighbors(v).iter().fold(0u32, |m, u| m | (1 << u)))
        .collect();
    // is_clique[mask] built from mask with its lowest bit cleared
    let mut is_clique = vec![false; 1usize << n];
    is_clique[0] = true;
    let mut best = 0u32;
    for mask in 1u32..(1u32 << n) {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        let ok = is_clique[rest as usize] && rest & !adj[low] == 0;
        is_clique[mask as usize] = ok;
        if ok && mask.count_ones() > best.count_ones() {
            best = mask;
        }
    }
    Ok((0..n).filter(|&v| best >> v & 1 == 1).collect())
}
