//! Ground truth independent of the field: discrete shortest paths on a grid
//! graph, finite-difference derivatives, and small statistics helpers used
//! by tests and the acceptance suite.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{AtlasError, Result};
use crate::geodesics::{curve_length, DiscreteCurve};
use crate::geometry::{ChartPoint, ImmersedManifold};

/// 8-connected grid graph over a 2-D chart domain with Riemannian edge
/// weights.
///
/// Edge weights are the two-point segment lengths from [`curve_length`]
/// (midpoint metric), so graph distances and the length functional agree by
/// construction. Grid shortest paths systematically overestimate geodesic
/// distance because only eight edge directions exist (metrication error,
/// about 8% worst case on an isotropic grid).
pub struct GridGraph {
    pub nx: usize,
    pub ny: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl GridGraph {
    /// `resolution` nodes per dimension, inclusive of the domain bounds.
    pub fn new(m: &ImmersedManifold, resolution: usize) -> Result<Self> {
        Self::with_resolutions(m, resolution, resolution)
    }

    pub fn with_resolutions(m: &ImmersedManifold, nx: usize, ny: usize) -> Result<Self> {
        if m.intrinsic_dim() != 2 {
            return Err(AtlasError::Dimension(format!(
                "grid graph supports 2-D charts (got {}-D)",
                m.intrinsic_dim()
            )));
        }
        if nx < 8 || ny < 8 {
            return Err(AtlasError::Format(format!(
                "grid resolution must be >= 8 per dimension (got {nx} x {ny})"
            )));
        }
        let (x_lo, x_hi) = m.domain()[0];
        let (y_lo, y_hi) = m.domain()[1];
        let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
                .collect()
        };
        Ok(Self {
            nx,
            ny,
            xs: lin(x_lo, x_hi, nx),
            ys: lin(y_lo, y_hi, ny),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn node_point(&self, idx: usize) -> ChartPoint {
        let (ix, iy) = (idx % self.nx, idx / self.nx);
        ChartPoint {
            coords: vec![self.xs[ix], self.ys[iy]],
        }
    }

    /// Index of the grid node nearest to `q` (Euclidean in chart coords).
    pub fn nearest_node(&self, q: &ChartPoint) -> usize {
        let pick = |vals: &[f64], c: f64| -> usize {
            vals.iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| (*a - c).abs().total_cmp(&(*b - c).abs()))
                .unwrap()
                .0
        };
        self.node_index(pick(&self.xs, q.coords[0]), pick(&self.ys, q.coords[1]))
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, node index as a deterministic tie-break
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distance table over all grid nodes: Dijkstra from the node nearest `p`.
pub fn grid_distance(
    m: &ImmersedManifold,
    p: &ChartPoint,
    resolution: usize,
) -> Result<(GridGraph, Vec<f64>)> {
    let graph = GridGraph::new(m, resolution)?;
    let dist = dijkstra(m, &graph, graph.nearest_node(p))?;
    Ok((graph, dist))
}

pub fn dijkstra(m: &ImmersedManifold, graph: &GridGraph, source: usize) -> Result<Vec<f64>> {
    let n = graph.n_nodes();
    let (nx, ny) = (graph.nx, graph.ny);

    let edge = |a: usize, b: usize| -> Result<f64> {
        let c = DiscreteCurve::new(
            vec![graph.node_point(a), graph.node_point(b)],
            vec![0.0, 1.0],
        )?;
        curve_length(m, &c)
    };

    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        let (ix, iy) = (node % nx, node / nx);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                    continue;
                }
                let next = graph.node_index(jx as usize, jy as usize);
                if done[next] {
                    continue;
                }
                let nd = d + edge(node, next)?;
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(HeapEntry {
                        dist: nd,
                        node: next,
                    });
                }
            }
        }
    }
    let unreachable = dist.iter().filter(|d| !d.is_finite()).count();
    if unreachable > 0 {
        return Err(AtlasError::Disconnected { unreachable });
    }
    Ok(dist)
}

/// Central-difference gradient of a scalar function.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut out = Vec::with_capacity(x.len());
    let mut work = x.to_vec();
    for i in 0..x.len() {
        work[i] = x[i] + h;
        let fp = f(&work);
        work[i] = x[i] - h;
        let fm = f(&work);
        work[i] = x[i];
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    pearson(&ra, &rb)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Kolmogorov-Smirnov statistic of `samples` against an analytic CDF.
pub fn ks_statistic<F>(samples: &[f64], cdf: F) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, x) in sorted.iter().enumerate() {
        let c = cdf(*x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((c - lo).abs()).max((hi - c).abs());
    }
    d
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::plane;

    #[test]
    fn finite_diff_on_polynomial() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0, 1.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
        assert!(g[1].abs() < 1e-8);
    }

    #[test]
    fn finite_diff_on_constant() {
        let g = finite_diff_grad(|_| 4.2, &[0.3, -0.4, 1.0], 1e-5);
        assert!(g.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn plane_grid_distance_bounds() {
        let m = plane();
        let p = ChartPoint::of(&[0.0, 0.0]);
        let (graph, dist) = grid_distance(&m, &p, 33).unwrap();
        let src = graph.nearest_node(&p);
        let sp = graph.node_point(src);
        for idx in 0..graph.n_nodes() {
            let q = graph.node_point(idx);
            let euclid = ((q.coords[0] - sp.coords[0]).powi(2)
                + (q.coords[1] - sp.coords[1]).powi(2))
            .sqrt();
            assert!(dist[idx] >= euclid - 1e-9, "grid distance below Euclidean");
            if euclid > 0.0 {
                let over = dist[idx] / euclid;
                assert!(over <= 1.09, "metrication overshoot {over} at {:?}", q.coords);
            }
        }
    }

    #[test]
    fn spearman_perfect_and_reversed() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let up = [10.0, 20.0, 25.0, 40.0];
        let down = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&a, &up) - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &down) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_statistic_of_exact_quantiles() {
        // midpoints of n equal-probability bins of the uniform CDF
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&samples, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn std_normal_cdf_reference_values() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf(1.96) - 0.975).abs() < 1e-3);
        assert!((std_normal_cdf(-1.96) - 0.025).abs() < 1e-3);
    }
}
