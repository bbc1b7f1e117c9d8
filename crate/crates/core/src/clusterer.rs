//! HDBSCAN over dense point sets.
//!
//! Pipeline: core distances, mutual reachability, Prim MST, single-linkage
//! merges, condensed tree, excess-of-mass selection. Everything is exact
//! O(n²) and tie-broken by `(weight, vertex id)` so labelings are
//! reproducible.

use std::io::Write;

use crate::error::{Error, Result};
use crate::reducer::euclidean;

pub const DEFAULT_MIN_PTS: usize = 10;
pub const DEFAULT_MIN_CLUSTER_SIZE: usize = 10;

/// Distance from each point to its `min_pts`-th nearest other point.
pub fn core_distances(points: &[Vec<f64>], min_pts: usize) -> Result<Vec<f64>> {
    let n = points.len();
    if min_pts == 0 || min_pts >= n {
        return Err(Error::InvalidInput(format!(
            "min_pts = {min_pts} must be in 1..{n}"
        )));
    }
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| euclidean(p, q))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(min_pts - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutualReachabilityGraph {
    pub n: usize,
    pub min_pts: usize,
    pub core_dist: Vec<f64>,
    dist: Vec<f64>,
}

impl MutualReachabilityGraph {
    pub fn dist(&self, p: usize, q: usize) -> f64 {
        self.dist[p * self.n + q]
    }
}

/// `max(core(p), core(q), d(p, q))` for every pair, zero on the diagonal.
pub fn mutual_reachability(
    points: &[Vec<f64>],
    core: &[f64],
    min_pts: usize,
) -> MutualReachabilityGraph {
    let n = points.len();
    let mut dist = vec![0.0; n * n];
    for p in 0..n {
        for q in p + 1..n {
            let d = euclidean(&points[p], &points[q]).max(core[p]).max(core[q]);
            dist[p * n + q] = d;
            dist[q * n + p] = d;
        }
    }
    MutualReachabilityGraph {
        n,
        min_pts,
        core_dist: core.to_vec(),
        dist,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Prim's algorithm on the dense graph, started at vertex 0.
pub fn minimum_spanning_tree(g: &MutualReachabilityGraph) -> Vec<MstEdge> {
    let n = g.n;
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = g.dist(current, v);
            if w < best[v] || (w == best[v] && current < from[v]) {
                best[v] = w;
                from[v] = current;
            }
            if next == usize::MAX || best[v] < next_w {
                next = v;
                next_w = best[v];
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            u: from[next].min(next),
            v: from[next].max(next),
            weight: next_w,
        });
        current = next;
    }
    edges
}

/// One single-linkage merge. Ids below `n` are points, `n + i` is the
/// cluster created by merge `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub weight: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    label: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            label: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

pub fn build_hierarchy(mst: &[MstEdge], n: usize) -> Dendrogram {
    let mut edges = mst.to_vec();
    edges.sort_by(|a, b| {
        a.weight
            .total_cmp(&b.weight)
            .then(a.u.min(a.v).cmp(&b.u.min(b.v)))
            .then(a.u.max(a.v).cmp(&b.u.max(b.v)))
    });
    let mut uf = UnionFind::new(n);
    let mut merges = Vec::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        let (ra, rb) = (uf.find(e.u), uf.find(e.v));
        let (la, lb) = (uf.label[ra], uf.label[rb]);
        let size = uf.size[ra] + uf.size[rb];
        let (big, small) = if uf.size[ra] >= uf.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        uf.parent[small] = big;
        uf.size[big] = size;
        uf.label[big] = n + i;
        merges.push(Merge {
            left: la.min(lb),
            right: la.max(lb),
            weight: e.weight,
            size,
        });
    }
    Dendrogram { n, merges }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub lambda_birth: f64,
    pub lambda_death: f64,
    pub size: usize,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointExit {
    pub point: usize,
    /// Condensed cluster the point leaves.
    pub cluster: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondensedTree {
    pub n_points: usize,
    /// Cluster nodes; the root is node 0 and parents precede children.
    pub nodes: Vec<ClusterNode>,
    pub exits: Vec<PointExit>,
    pub stability: Vec<f64>,
    pub min_cluster_size: usize,
}

fn lambda_of(weight: f64) -> f64 {
    if weight > 0.0 {
        1.0 / weight
    } else {
        f64::INFINITY
    }
}

fn persistence(lambda: f64, birth: f64) -> f64 {
    if lambda == birth {
        0.0
    } else {
        lambda - birth
    }
}

impl CondensedTree {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "id",
            "parent",
            "lambda_birth",
            "lambda_death",
            "size",
            "stability",
        ])?;
        for (node, stab) in self.nodes.iter().zip(&self.stability) {
            wtr.write_record([
                node.id.to_string(),
                node.parent.map(|p| p.to_string()).unwrap_or_default(),
                format!("{:?}", node.lambda_birth),
                format!("{:?}", node.lambda_death),
                node.size.to_string(),
                format!("{stab:?}"),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<tree writer>", e))?;
        Ok(())
    }
}

pub fn condense(dendrogram: &Dendrogram, min_cluster_size: usize) -> Result<CondensedTree> {
    let n = dendrogram.n;
    if min_cluster_size < 2 {
        return Err(Error::InvalidInput(
            "min_cluster_size must be at least 2".into(),
        ));
    }
    if min_cluster_size > n {
        return Err(Error::InvalidInput(format!(
            "min_cluster_size {min_cluster_size} exceeds {n} points"
        )));
    }
    let merges = &dendrogram.merges;
    let size_of = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let leaves_of = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let m = &merges[x - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    };

    let mut nodes = vec![ClusterNode {
        id: 0,
        parent: None,
        lambda_birth: 0.0,
        lambda_death: 0.0,
        size: n,
        children: Vec::new(),
    }];
    let mut exits = Vec::with_capacity(n);
    if n == 1 {
        exits.push(PointExit {
            point: 0,
            cluster: 0,
            lambda: 0.0,
        });
    }

    // (dendrogram node, condensed cluster it belongs to)
    let mut stack: Vec<(usize, usize)> = Vec::new();
    if !merges.is_empty() {
        stack.push((n + merges.len() - 1, 0));
    }
    while let Some((node, cluster)) = stack.pop() {
        let m = merges[node - n];
        let lambda = lambda_of(m.weight);
        let (ls, rs) = (size_of(m.left), size_of(m.right));
        let l_big = ls >= min_cluster_size;
        let r_big = rs >= min_cluster_size;
        nodes[cluster].lambda_death = nodes[cluster].lambda_death.max(lambda);
        if l_big && r_big {
            for (child, size) in [(m.left, ls), (m.right, rs)] {
                let id = nodes.len();
                nodes.push(ClusterNode {
                    id,
                    parent: Some(cluster),
                    lambda_birth: lambda,
                    lambda_death: lambda,
                    size,
                    children: Vec::new(),
                });
                nodes[cluster].children.push(id);
                if child < n {
                    exits.push(PointExit {
                        point: child,
                        cluster: id,
                        lambda,
                    });
                } else {
                    stack.push((child, id));
                }
            }
        } else {
            for (child, big) in [(m.left, l_big), (m.right, r_big)] {
                if big {
                    stack.push((child, cluster));
                } else {
                    for p in leaves_of(child) {
                        exits.push(PointExit {
                            point: p,
                            cluster,
                            lambda,
                        });
                    }
                }
            }
        }
    }
    // a cluster's id always exceeds its parent's
    let stability = compute_stability(&nodes, &exits);
    exits.sort_by_key(|e| e.point);
    Ok(CondensedTree {
        n_points: n,
        nodes,
        exits,
        stability,
        min_cluster_size,
    })
}

fn compute_stability(nodes: &[ClusterNode], exits: &[PointExit]) -> Vec<f64> {
    let mut stability = vec![0.0; nodes.len()];
    for e in exits {
        stability[e.cluster] += persistence(e.lambda, nodes[e.cluster].lambda_birth);
    }
    for node in nodes {
        if let Some(p) = node.parent {
            stability[p] +=
                node.size as f64 * persistence(node.lambda_birth, nodes[p].lambda_birth);
        }
    }
    stability
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabels {
    /// Per point; `-1` marks an outlier.
    pub labels: Vec<i64>,
    pub n_clusters: usize,
}

impl ClusterLabels {
    pub fn members(&self, label: i64) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_outliers(&self) -> usize {
        self.labels.iter().filter(|l| **l < 0).count()
    }

    pub fn write_csv<W: Write>(&self, ids: &[String], writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["doc_id", "label"])?;
        for (id, l) in ids.iter().zip(&self.labels) {
            wtr.write_record([id.clone(), l.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<labels writer>", e))?;
        Ok(())
    }
}

/// Excess-of-mass selection. The root is only eligible when it never splits.
pub fn extract_clusters(tree: &CondensedTree) -> ClusterLabels {
    let k = tree.nodes.len();
    let mut selected = vec![false; k];
    let mut subtree = vec![0.0; k];
    for id in (0..k).rev() {
        let node = &tree.nodes[id];
        if node.children.is_empty() {
            selected[id] = true;
            subtree[id] = tree.stability[id];
            continue;
        }
        let children_sum: f64 = node.children.iter().map(|c| subtree[*c]).sum();
        if node.parent.is_some() && tree.stability[id] > children_sum {
            selected[id] = true;
            subtree[id] = tree.stability[id];
            let mut stack = node.children.clone();
            while let Some(c) = stack.pop() {
                selected[c] = false;
                stack.extend(tree.nodes[c].children.iter().copied());
            }
        } else {
            subtree[id] = children_sum;
        }
    }

    let mut label_of = vec![-1i64; k];
    let mut next = 0;
    for id in 0..k {
        if selected[id] {
            label_of[id] = next;
            next += 1;
        }
    }
    let mut labels = vec![-1i64; tree.n_points];
    for e in &tree.exits {
        let mut c = Some(e.cluster);
        while let Some(id) = c {
            if selected[id] {
                labels[e.point] = label_of[id];
                break;
            }
            c = tree.nodes[id].parent;
        }
    }
    ClusterLabels {
        labels,
        n_clusters: next as usize,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdbscanParams {
    pub min_pts: usize,
    pub min_cluster_size: usize,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            min_pts: DEFAULT_MIN_PTS,
            min_cluster_size: DEFAULT_MIN_CLUSTER_SIZE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Clustering {
    pub labels: ClusterLabels,
    pub tree: CondensedTree,
}

pub fn hdbscan(points: &[Vec<f64>], params: &HdbscanParams) -> Result<Clustering> {
    let core = core_distances(points, params.min_pts)?;
    let g = mutual_reachability(points, &core, params.min_pts);
    let mst = minimum_spanning_tree(&g);
    let dendrogram = build_hierarchy(&mst, points.len());
    let tree = condense(&dendrogram, params.min_cluster_size)?;
    let labels = extract_clusters(&tree);
    Ok(Clustering { labels, tree })
}
