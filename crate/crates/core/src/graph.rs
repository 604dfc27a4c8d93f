//! Fixed networks, interference sets, and the dependency graph used by the
//! robust variance estimator.
//!
//! Everything here is immutable after construction and safe to share across
//! parallel estimation workers. Adjacency is stored as sorted neighbor lists
//! so that large sparse networks with bounded degree stay cheap.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Undirected simple network over units 0..n.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n: usize,
    adj: Vec<Vec<u32>>,
}

impl Network {
    /// Builds a network from an undirected edge list. Edges are symmetrized
    /// and deduplicated; self loops and out-of-range indices are rejected.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in edges {
            let (i, j) = (i as usize, j as usize);
            if i >= n || j >= n {
                return Err(Error::InvalidNetwork(format!(
                    "edge ({i}, {j}) references a unit outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidNetwork(format!("self loop at unit {i}")));
            }
            adj[i].push(j as u32);
            adj[j].push(i as u32);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Network { n, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as (i, j) pairs with i < j, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            for &j in &self.adj[i] {
                if (i as u32) < j {
                    out.push((i as u32, j));
                }
            }
        }
        out
    }

    /// Local clustering coefficient of unit i; `None` when degree < 2.
    pub fn local_clustering(&self, i: usize) -> Option<f64> {
        let nbrs = &self.adj[i];
        let d = nbrs.len();
        if d < 2 {
            return None;
        }
        let mut closed = 0usize;
        for (a, &u) in nbrs.iter().enumerate() {
            for &v in &nbrs[a + 1..] {
                if self.adj[u as usize].binary_search(&v).is_ok() {
                    closed += 1;
                }
            }
        }
        Some(closed as f64 / (d * (d - 1) / 2) as f64)
    }

    /// Mean of local clustering coefficients over units with degree ≥ 2.
    pub fn average_local_clustering(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.n {
            if let Some(c) = self.local_clustering(i) {
                sum += c;
                count += 1;
            }
        }
        if count == 0 { 0.0 } else { sum / count as f64 }
    }

    /// Global clustering coefficient (transitivity): closed triplets over all
    /// connected triplets.
    pub fn global_clustering(&self) -> f64 {
        let mut closed = 0usize; // 2 * triangles per center
        let mut triplets = 0usize;
        for i in 0..self.n {
            let d = self.degree(i);
            if d < 2 {
                continue;
            }
            triplets += d * (d - 1) / 2;
            let nbrs = &self.adj[i];
            for (a, &u) in nbrs.iter().enumerate() {
                for &v in &nbrs[a + 1..] {
                    if self.adj[u as usize].binary_search(&v).is_ok() {
                        closed += 1;
                    }
                }
            }
        }
        if triplets == 0 { 0.0 } else { closed as f64 / triplets as f64 }
    }
}

/// Per-unit interference sets S_i (ordered neighbor indices, i excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceSets {
    sets: Vec<Vec<u32>>,
}

impl InterferenceSets {
    pub fn new(sets: Vec<Vec<u32>>) -> Result<Self> {
        let n = sets.len();
        for (i, s) in sets.iter().enumerate() {
            for &j in s {
                if j as usize >= n {
                    return Err(Error::InvalidNetwork(format!(
                        "interference set of unit {i} references unit {j} outside 0..{n}"
                    )));
                }
                if j as usize == i {
                    return Err(Error::InvalidNetwork(format!(
                        "interference set of unit {i} contains itself"
                    )));
                }
            }
        }
        Ok(InterferenceSets { sets })
    }

    pub fn n(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, i: usize) -> &[u32] {
        &self.sets[i]
    }

    pub fn size(&self, i: usize) -> usize {
        self.sets[i].len()
    }

    pub fn is_isolated(&self, i: usize) -> bool {
        self.sets[i].is_empty()
    }

    pub fn isolated_count(&self) -> usize {
        self.sets.iter().filter(|s| s.is_empty()).count()
    }

    /// Histogram of |S_i| values, as (size, count) sorted by size.
    pub fn size_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist: HashMap<usize, usize> = HashMap::new();
        for s in &self.sets {
            *hist.entry(s.len()).or_insert(0) += 1;
        }
        let mut out: Vec<_> = hist.into_iter().collect();
        out.sort_unstable();
        out
    }
}

/// S_i = network neighborhood of i.
pub fn interference_from_network(net: &Network) -> InterferenceSets {
    InterferenceSets {
        sets: (0..net.n()).map(|i| net.neighbors(i).to_vec()).collect(),
    }
}

/// S_i = units sharing i's cluster label and every stratum key, excluding i.
/// `strata` holds zero or more per-unit key columns of length n.
pub fn interference_from_clusters<K: Eq + Hash + Clone>(
    labels: &[K],
    strata: &[Vec<K>],
) -> Result<InterferenceSets> {
    let n = labels.len();
    for col in strata {
        if col.len() != n {
            return Err(Error::InvalidConfig(format!(
                "stratum column has {} entries, expected {n}",
                col.len()
            )));
        }
    }
    let mut groups: HashMap<Vec<K>, Vec<u32>> = HashMap::new();
    for i in 0..n {
        let mut key = Vec::with_capacity(1 + strata.len());
        key.push(labels[i].clone());
        for col in strata {
            key.push(col[i].clone());
        }
        groups.entry(key).or_default().push(i as u32);
    }
    let mut sets = vec![Vec::new(); n];
    for members in groups.values() {
        for &i in members {
            sets[i as usize] = members.iter().copied().filter(|&j| j != i).collect();
        }
    }
    Ok(InterferenceSets { sets })
}

/// How to derive the dependency graph W from the data-generating structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    /// W_ij = 1 iff ({i} ∪ S_i) ∩ ({j} ∪ S_j) ≠ ∅. The default: with
    /// neighborhood interference and iid primitives, dependence reaches two
    /// links apart.
    Overlap,
    /// W_ij = 1 iff network distance ≤ k.
    KHop(usize),
    /// W_ij = 1 iff same cluster label.
    ClusterBlock,
    /// W = I (iid assumption).
    Identity,
}

/// Symmetric binary dependency graph with unit diagonal, stored as sorted
/// closed neighbor lists (each list contains the unit itself).
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyGraph {
    nbrs: Vec<Vec<u32>>,
}

/// Diagnostics for the local-dependence assumption; all three should stay
/// bounded as n grows for the variance estimator to be trustworthy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeDiagnostics {
    pub mean_degree: f64,
    /// n⁻¹ Σ_i |N_i|³
    pub third_moment: f64,
    /// n⁻¹ Σ_i Σ_{j≠i} (W³)_ij
    pub mean_walks3: f64,
}

impl DependencyGraph {
    pub fn identity(n: usize) -> Self {
        DependencyGraph {
            nbrs: (0..n as u32).map(|i| vec![i]).collect(),
        }
    }

    /// Overlap mode: i and j are dependent when their closed interference
    /// sets intersect.
    pub fn overlap(sets: &InterferenceSets) -> Self {
        let n = sets.n();
        // influencers[k] = units whose closed set contains k
        let mut influencers = vec![Vec::new(); n];
        for i in 0..n {
            influencers[i].push(i as u32);
            for &j in sets.set(i) {
                influencers[j as usize].push(i as u32);
            }
        }
        let mut nbrs = vec![Vec::new(); n];
        for list in &influencers {
            for &i in list {
                for &j in list {
                    nbrs[i as usize].push(j);
                }
            }
        }
        for list in &mut nbrs {
            list.sort_unstable();
            list.dedup();
        }
        DependencyGraph { nbrs }
    }

    /// k-hop mode over the raw network (k ≥ 1); always includes self.
    pub fn k_hop(net: &Network, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("k_hop requires k >= 1".into()));
        }
        let n = net.n();
        let mut nbrs = Vec::with_capacity(n);
        let mut dist = vec![usize::MAX; n];
        for start in 0..n {
            let mut reached = vec![start as u32];
            let mut frontier = vec![start as u32];
            dist[start] = 0;
            for d in 1..=k {
                let mut next = Vec::new();
                for &u in &frontier {
                    for &v in net.neighbors(u as usize) {
                        if dist[v as usize] == usize::MAX {
                            dist[v as usize] = d;
                            next.push(v);
                            reached.push(v);
                        }
                    }
                }
                frontier = next;
                if frontier.is_empty() {
                    break;
                }
            }
            for &u in &reached {
                dist[u as usize] = usize::MAX;
            }
            reached.sort_unstable();
            nbrs.push(reached);
        }
        Ok(DependencyGraph { nbrs })
    }

    /// Cluster-block mode: dependence within clusters only.
    pub fn cluster_block(labels: &[u32]) -> Self {
        let mut groups: HashMap<u32, Vec<u32>> = HashMap::new();
        for (i, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(i as u32);
        }
        let mut nbrs = vec![Vec::new(); labels.len()];
        for members in groups.values() {
            let mut sorted = members.clone();
            sorted.sort_unstable();
            for &i in members {
                nbrs[i as usize] = sorted.clone();
            }
        }
        DependencyGraph { nbrs }
    }

    pub fn n(&self) -> usize {
        self.nbrs.len()
    }

    /// Closed dependency neighborhood of i (sorted, includes i).
    pub fn neighborhood(&self, i: usize) -> &[u32] {
        &self.nbrs[i]
    }

    /// |N_i|, counting i itself.
    pub fn degree(&self, i: usize) -> usize {
        self.nbrs[i].len()
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        self.nbrs[i].binary_search(&(j as u32)).is_ok()
    }

    /// Adds the symmetric pair (i, j) to W. Used by tests probing variance
    /// monotonicity under nesting.
    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i == j || self.contains_edge(i, j) {
            return;
        }
        let pi = self.nbrs[i].binary_search(&(j as u32)).unwrap_err();
        self.nbrs[i].insert(pi, j as u32);
        let pj = self.nbrs[j].binary_search(&(i as u32)).unwrap_err();
        self.nbrs[j].insert(pj, i as u32);
    }

    pub fn degree_diagnostics(&self) -> DegreeDiagnostics {
        let n = self.n();
        if n == 0 {
            return DegreeDiagnostics { mean_degree: 0.0, third_moment: 0.0, mean_walks3: 0.0 };
        }
        let mut deg_sum = 0.0;
        let mut deg_cubed = 0.0;
        for list in &self.nbrs {
            let d = list.len() as f64;
            deg_sum += d;
            deg_cubed += d * d * d;
        }
        // Total walks of length 3: 1ᵀW³1 = Σ_{(k,l): W_kl=1} deg_k · deg_l,
        // and trace(W³) = Σ_{(k,l): W_kl=1} |N_k ∩ N_l| (both sums include
        // the diagonal since W_kk = 1).
        let mut total = 0.0;
        let mut trace = 0.0;
        for k in 0..n {
            let dk = self.nbrs[k].len() as f64;
            for &l in &self.nbrs[k] {
                total += dk * self.nbrs[l as usize].len() as f64;
                trace += sorted_intersection_size(&self.nbrs[k], &self.nbrs[l as usize]) as f64;
            }
        }
        DegreeDiagnostics {
            mean_degree: deg_sum / n as f64,
            third_moment: deg_cubed / n as f64,
            mean_walks3: (total - trace) / n as f64,
        }
    }
}

fn sorted_intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut ia, mut ib, mut count) = (0, 0, 0);
    while ia < a.len() && ib < b.len() {
        match a[ia].cmp(&b[ib]) {
            std::cmp::Ordering::Less => ia += 1,
            std::cmp::Ordering::Greater => ib += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                ia += 1;
                ib += 1;
            }
        }
    }
    count
}
