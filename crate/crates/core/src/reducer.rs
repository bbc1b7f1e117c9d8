//! UMAP-style reduction: exact k-NN graph, fuzzy edge weights and a
//! negative-sampling SGD layout that minimizes the fuzzy-set cross-entropy
//!
//! ```text
//! CE = sum_e w_h(e) log(w_h(e) / w_l(e)) + (1 - w_h(e)) log((1 - w_h(e)) / (1 - w_l(e)))
//! ```
//!
//! with `w_l = 1 / (1 + a * d^(2b))`.

use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

const SIGMA_TOLERANCE: f64 = 1e-5;
const SIGMA_MAX_ITER: usize = 64;
const WL_CLAMP: f64 = 1e-4;
const DIVERGENCE_LIMIT: f64 = 1e6;
const GRAD_CLIP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    /// Neighbor indices per vertex, nearest first.
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
    pub k: usize,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Brute-force Euclidean k-NN; ties go to the lower index.
pub fn knn_graph(points: &[Vec<f64>], k: usize) -> Result<Knn> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidInput(format!(
            "k = {k} out of range for {n} points"
        )));
    }
    let mut indices = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for (i, p) in points.iter().enumerate() {
        let mut cand: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, q)| (euclidean(p, q), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
        distances.push(cand.iter().map(|c| c.0).collect());
        indices.push(cand.iter().map(|c| c.1).collect());
    }
    Ok(Knn {
        indices,
        distances,
        k,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    /// Undirected edges `(i, j, w)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize, f64)>,
    pub n: usize,
    pub k: usize,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// `a + b - a*b`
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

fn smooth_knn_sigma(dists: &[f64], rho: f64, target: f64, vertex: usize) -> Result<f64> {
    let psum = |sigma: f64| -> f64 {
        dists
            .iter()
            .map(|&d| (-(d - rho).max(0.0) / sigma).exp())
            .sum()
    };
    // Neighbours sitting exactly at rho contribute 1 no matter what sigma is;
    // when they alone meet the target there is nothing to solve.
    let floor = dists.iter().filter(|&&d| d - rho <= 0.0).count() as f64;
    if floor >= target - SIGMA_TOLERANCE {
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        return Ok((1e-3 * mean).max(1e-12));
    }
    let (mut lo, mut hi, mut mid) = (0.0, f64::INFINITY, 1.0);
    for _ in 0..SIGMA_MAX_ITER {
        let s = psum(mid);
        if (s - target).abs() < SIGMA_TOLERANCE {
            return Ok(mid);
        }
        if s > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() {
                mid * 2.0
            } else {
                (lo + hi) / 2.0
            };
        }
    }
    Err(Error::Calibration { vertex })
}

pub fn fuzzy_weights(knn: &Knn) -> Result<FuzzyGraph> {
    let n = knn.indices.len();
    let target = (knn.k as f64).log2();
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut directed = vec![std::collections::BTreeMap::<usize, f64>::new(); n];
    for i in 0..n {
        let d = &knn.distances[i];
        let r = d.iter().copied().find(|&x| x > 0.0).unwrap_or(0.0);
        let s = smooth_knn_sigma(d, r, target, i)?;
        for (&j, &dij) in knn.indices[i].iter().zip(d) {
            directed[i].insert(j, (-(dij - r).max(0.0) / s).exp());
        }
        rho.push(r);
        sigma.push(s);
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for (&j, &a) in &directed[i] {
            if i < j {
                let b = directed[j].get(&i).copied().unwrap_or(0.0);
                edges.push((i, j, fuzzy_union(a, b)));
            } else if !directed[j].contains_key(&i) {
                edges.push((j, i, a));
            }
        }
    }
    edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    Ok(FuzzyGraph {
        edges,
        n,
        k: knn.k,
        rho,
        sigma,
    })
}

/// Fits `1 / (1 + a d^(2b))` to the min-dist target curve by Levenberg-Marquardt.
pub fn curve_params(min_dist: f64) -> Result<(f64, f64)> {
    if !(min_dist > 0.0 && min_dist < 2.0) {
        return Err(Error::InvalidInput(format!(
            "min_dist {min_dist} outside (0, 2)"
        )));
    }
    let xs: Vec<f64> = (1..=300).map(|i| 3.0 * i as f64 / 300.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&d| {
            if d <= min_dist {
                1.0
            } else {
                (-(d - min_dist)).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum()
    };
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut err = sse(a, b);
    for _ in 0..500 {
        // normal equations J^T J and J^T r
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let r = f - y;
            let da = -p / (denom * denom);
            let db = -a * p * 2.0 * x.ln() / (denom * denom);
            jtj[0][0] += da * da;
            jtj[0][1] += da * db;
            jtj[1][1] += db * db;
            jtr[0] += da * r;
            jtr[1] += db * r;
        }
        jtj[1][0] = jtj[0][1];
        let m00 = jtj[0][0] * (1.0 + lambda);
        let m11 = jtj[1][1] * (1.0 + lambda);
        let det = m00 * m11 - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let step_b = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
        let (na, nb) = (a + step_a, b + step_b);
        let nerr = if na > 0.0 && nb > 0.0 {
            sse(na, nb)
        } else {
            f64::INFINITY
        };
        if nerr < err {
            let converged = (err - nerr) < 1e-14;
            a = na;
            b = nb;
            err = nerr;
            lambda *= 0.3;
            if converged {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        log::warn!("curve fit failed for min_dist {min_dist}; using a = b = 1");
        return Ok((1.0, 1.0));
    }
    Ok((a, b))
}

/// Low-dimensional membership strength.
pub fn low_dim_weight(dist: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * dist.powf(2.0 * b))
}

/// One cross-entropy term with `w_l` clamped into `[1e-4, 1 - 1e-4]`.
pub fn ce_term(w_h: f64, w_l: f64) -> f64 {
    let wl = w_l.clamp(WL_CLAMP, 1.0 - WL_CLAMP);
    let mut ce = 0.0;
    if w_h > 0.0 {
        ce += w_h * (w_h / wl).ln();
    }
    if w_h < 1.0 {
        ce += (1.0 - w_h) * ((1.0 - w_h) / (1.0 - wl)).ln();
    }
    ce
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutParams {
    pub out_dim: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub neg_samples: usize,
    pub a: f64,
    pub b: f64,
}

impl LayoutParams {
    pub fn new(out_dim: usize, epochs: usize, seed: u64, min_dist: f64) -> Result<Self> {
        let (a, b) = curve_params(min_dist)?;
        Ok(LayoutParams {
            out_dim,
            epochs,
            seed,
            learning_rate: 1.0,
            neg_samples: 5,
            a,
            b,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub y: Vec<Vec<f64>>,
    pub out_dim: usize,
    pub epoch_ce: Vec<f64>,
}

impl Layout {
    pub fn write_csv<W: Write>(&self, ids: &[String], writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["doc_id".to_string()];
        header.extend((1..=self.out_dim).map(|i| format!("y{i}")));
        wtr.write_record(&header)?;
        for (id, row) in ids.iter().zip(&self.y) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<layout writer>", e))?;
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cross-entropy over the positive edges plus the given `w_h = 0` pairs.
pub fn layout_cross_entropy(
    y: &[Vec<f64>],
    edges: &[(usize, usize, f64)],
    negatives: &[(usize, usize)],
    a: f64,
    b: f64,
) -> f64 {
    let pos: f64 = edges
        .iter()
        .map(|&(i, j, w)| ce_term(w, low_dim_weight(sq_dist(&y[i], &y[j]).sqrt(), a, b)))
        .sum();
    let neg: f64 = negatives
        .iter()
        .map(|&(i, j)| ce_term(0.0, low_dim_weight(sq_dist(&y[i], &y[j]).sqrt(), a, b)))
        .sum();
    pos + neg
}

pub fn optimize_layout(graph: &FuzzyGraph, params: &LayoutParams) -> Result<Layout> {
    if params.out_dim < 2 {
        return Err(Error::InvalidInput("out_dim must be at least 2".into()));
    }
    if params.epochs == 0 {
        return Err(Error::InvalidInput("epochs must be at least 1".into()));
    }
    let n = graph.n;
    let (a, b) = (params.a, params.b);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut y: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..params.out_dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    1e-2 * z
                })
                .collect::<Vec<f64>>()
        })
        .collect();

    let max_w = graph.edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let edges: Vec<(usize, usize, f64)> = graph
        .edges
        .iter()
        .copied()
        .filter(|e| e.2 >= max_w / params.epochs as f64)
        .collect();

    // fixed negative pairs for evaluating the objective
    let adjacency: HashSet<(usize, usize)> = edges.iter().map(|e| (e.0, e.1)).collect();
    let mut eval_negatives = Vec::new();
    if n > 2 {
        for &(i, _, _) in &edges {
            let mut drawn = 0;
            let mut tries = 0;
            while drawn < params.neg_samples && tries < 50 * params.neg_samples.max(1) {
                tries += 1;
                let j = rng.gen_range(0..n);
                if j == i || adjacency.contains(&(i.min(j), i.max(j))) {
                    continue;
                }
                eval_negatives.push((i, j));
                drawn += 1;
            }
        }
    }

    // both orientations of each undirected edge, sampled in proportion to weight
    let directed: Vec<(usize, usize)> = edges
        .iter()
        .flat_map(|&(i, j, _)| [(i, j), (j, i)])
        .collect();
    let epochs_per_sample: Vec<f64> = edges
        .iter()
        .flat_map(|&(_, _, w)| {
            let e = max_w / w;
            [e, e]
        })
        .collect();
    let neg_rate = params.neg_samples as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample
        .iter()
        .map(|e| {
            if neg_rate > 0.0 {
                e / neg_rate
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let mut epoch_ce = Vec::with_capacity(params.epochs);
    let two_a_b = 2.0 * a * b;
    let mut grad = vec![0.0; params.out_dim];
    for epoch in 0..params.epochs {
        let lr = params.learning_rate * (1.0 - epoch as f64 / params.epochs as f64);
        let ep = epoch as f64 + 1.0;
        for (e, &(i, j)) in directed.iter().enumerate() {
            if next_sample[e] > ep {
                continue;
            }
            let d2 = sq_dist(&y[i], &y[j]);
            if d2 > 0.0 {
                let coeff = -two_a_b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0);
                for d in 0..params.out_dim {
                    grad[d] = (coeff * (y[i][d] - y[j][d])).clamp(-GRAD_CLIP, GRAD_CLIP);
                }
                for d in 0..params.out_dim {
                    y[i][d] += grad[d] * lr;
                    y[j][d] -= grad[d] * lr;
                }
            }
            next_sample[e] += epochs_per_sample[e];

            let n_neg = ((ep - next_negative[e]) / epochs_per_negative[e]).max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.gen_range(0..n);
                if k == i {
                    continue;
                }
                let d2 = sq_dist(&y[i], &y[k]);
                if d2 > 0.0 {
                    let coeff = 2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                    for d in 0..params.out_dim {
                        let g = (coeff * (y[i][d] - y[k][d])).clamp(-GRAD_CLIP, GRAD_CLIP);
                        y[i][d] += g * lr;
                    }
                }
            }
            next_negative[e] += n_neg as f64 * epochs_per_negative[e];
        }
        for (v, row) in y.iter().enumerate() {
            if let Some(m) = row
                .iter()
                .map(|x| x.abs())
                .find(|m| !(*m <= DIVERGENCE_LIMIT))
            {
                return Err(Error::Divergence {
                    epoch,
                    vertex: v,
                    magnitude: m,
                });
            }
        }
        epoch_ce.push(layout_cross_entropy(&y, &edges, &eval_negatives, a, b));
    }
    Ok(Layout {
        y,
        out_dim: params.out_dim,
        epoch_ce,
    })
}

/// Fraction of each point's `k_high` nearest neighbours in `high` that are
/// among its `k_low` nearest neighbours in `low`, averaged over points.
pub fn neighbor_preservation(
    high: &[Vec<f64>],
    low: &[Vec<f64>],
    k_high: usize,
    k_low: usize,
) -> Result<f64> {
    let h = knn_graph(high, k_high)?;
    let l = knn_graph(low, k_low)?;
    let n = high.len();
    let total: f64 = (0..n)
        .map(|i| {
            let low_set: HashSet<usize> = l.indices[i].iter().copied().collect();
            h.indices[i].iter().filter(|j| low_set.contains(j)).count() as f64 / k_high as f64
        })
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn collinear_neighbors() {
        let knn = knn_graph(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        assert_eq!(knn.indices, vec![vec![1], vec![0], vec![1]]);
        assert!(knn_graph(&line(&[0.0, 1.0, 3.0]), 3).is_err());
        assert!(knn_graph(&line(&[0.0, 1.0, 3.0]), 0).is_err());
    }

    #[test]
    fn duplicate_points_first() {
        let knn = knn_graph(&line(&[5.0, 0.0, 5.0, 4.0]), 2).unwrap();
        assert_eq!(knn.indices[0], vec![2, 3]);
        assert_eq!(knn.distances[0][0], 0.0);
    }

    #[test]
    fn union_examples() {
        assert_eq!(fuzzy_union(1.0, 0.0), 1.0);
        assert_eq!(fuzzy_union(0.5, 0.5), 0.75);
    }

    #[test]
    fn sigma_calibration_hits_target() {
        let pts = line(&[0.0, 0.3, 1.1, 1.5, 2.8, 3.0, 4.4, 6.0]);
        let knn = knn_graph(&pts, 4).unwrap();
        let g = fuzzy_weights(&knn).unwrap();
        for i in 0..pts.len() {
            let s: f64 = knn.distances[i]
                .iter()
                .map(|&d| (-(d - g.rho[i]).max(0.0) / g.sigma[i]).exp())
                .sum();
            assert_abs_diff_eq!(s, 2.0, epsilon = 1e-5);
            assert_eq!(g.rho[i], knn.distances[i][0]);
        }
        assert!(g
            .edges
            .iter()
            .all(|&(i, j, w)| i < j && w > 0.0 && w <= 1.0));
    }

    #[test]
    fn nearest_neighbor_edge_has_unit_weight() {
        let pts = line(&[0.0, 1.0, 3.0, 7.0]);
        let g = fuzzy_weights(&knn_graph(&pts, 2).unwrap()).unwrap();
        let w01 = g.edges.iter().find(|e| e.0 == 0 && e.1 == 1).unwrap().2;
        assert_eq!(w01, 1.0);
    }

    #[test]
    fn ce_of_matching_weights_is_zero() {
        for w in [0.2, 0.5, 0.9] {
            assert_abs_diff_eq!(ce_term(w, w), 0.0, epsilon = 1e-15);
        }
        assert!(ce_term(0.0, 0.99999).is_finite());
        assert!(ce_term(1.0, 0.0).is_finite());
    }

    #[test]
    fn curve_fit() {
        let (a, b) = curve_params(0.1).unwrap();
        assert!(a > 0.0 && b > 0.0);
        assert!((low_dim_weight(0.1, a, b) - 1.0).abs() < 0.05);
        let mut prev = 1.0;
        for i in 1..100 {
            let w = low_dim_weight(i as f64 * 0.05, a, b);
            assert!(w < prev);
            prev = w;
        }
        // closed form with a = b = 1
        assert_abs_diff_eq!(low_dim_weight(2.0, 1.0, 1.0), 0.2, epsilon = 1e-15);
        assert!(curve_params(0.0).is_err());
        assert!(curve_params(2.0).is_err());
    }

    #[test]
    fn two_points_pull_together() {
        let g = FuzzyGraph {
            edges: vec![(0, 1, 1.0)],
            n: 2,
            k: 1,
            rho: vec![0.0; 2],
            sigma: vec![1.0; 2],
        };
        let mut p = LayoutParams::new(2, 60, 3, 0.1).unwrap();
        p.neg_samples = 0;
        // a gentle step on the a = b = 1 curve contracts the pair without overshoot
        p.a = 1.0;
        p.b = 1.0;
        p.learning_rate = 0.1;
        let layout = optimize_layout(&g, &p).unwrap();
        assert_eq!(layout.epoch_ce.len(), 60);
        for w in layout.epoch_ce.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{w:?}");
        }
    }

    #[test]
    fn rejects_bad_params() {
        let g = FuzzyGraph {
            edges: vec![(0, 1, 1.0)],
            n: 2,
            k: 1,
            rho: vec![0.0; 2],
            sigma: vec![1.0; 2],
        };
        let mut p = LayoutParams::new(2, 10, 3, 0.1).unwrap();
        p.out_dim = 1;
        assert!(optimize_layout(&g, &p).is_err());
        p.out_dim = 2;
        p.epochs = 0;
        assert!(optimize_layout(&g, &p).is_err());
    }
}
