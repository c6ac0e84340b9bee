//! Differential-geometric quantities of immersed submanifolds: induced
//! metric, Christoffel symbols, and scalar curvature.
//!
//! The ambient metric is Euclidean throughout, so the induced metric is
//! g = J^T J with J the immersion Jacobian. First and second derivatives of
//! the immersion come from dual numbers (exact); the Christoffel derivatives
//! needed for the curvature tensor use central finite differences of the
//! exact Christoffel symbols, avoiding third-order propagation.

use std::sync::Arc;

use ndarray::{Array2, Array3};

use crate::dual::{Dual, Dual2, MAX_DIM};
use crate::error::{AtlasError, Result};
use crate::linalg;
use crate::manifolds::Immersion;

/// Tolerance on the rectangular domain bounds.
pub const DOMAIN_TOL: f64 = 1e-12;
/// Step for the finite-difference Christoffel derivatives in `ricci_scalar`.
pub const RICCI_FD_STEP: f64 = 1e-4;
/// Determinant threshold below which the metric is declared singular.
pub const SINGULAR_DET_TOL: f64 = 1e-14;
/// Full-rank check: smallest singular value of the Jacobian must exceed this.
pub const RANK_TOL: f64 = 1e-10;

/// Intrinsic coordinates of a point in the chart domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn try_new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(AtlasError::Dimension(format!(
                "chart point dimension {} outside 1..={MAX_DIM}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(AtlasError::NonFinite {
                context: "chart point coordinates".into(),
            });
        }
        Ok(Self { coords })
    }

    /// Construct from a slice of known-finite coordinates.
    ///
    /// Panics on non-finite input; use [`ChartPoint::try_new`] for data from
    /// untrusted sources.
    pub fn of(coords: &[f64]) -> Self {
        Self::try_new(coords.to_vec()).expect("valid chart point")
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Contravariant tangent vector at a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: ChartPoint, components: Vec<f64>) -> Result<Self> {
        if base.dim() != components.len() {
            return Err(AtlasError::Dimension(format!(
                "tangent vector has {} components at a {}-dimensional base point",
                components.len(),
                base.dim()
            )));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(AtlasError::NonFinite {
                context: "tangent vector components".into(),
            });
        }
        Ok(Self { base, components })
    }
}

/// Metric tensor and derived quantities at one point.
///
/// `metric` fills `g` and `g_inv`; `christoffel` additionally fills the
/// connection coefficients, indexed as `christoffel[[k, i, j]]` = Gamma^k_ij.
#[derive(Clone, Debug)]
pub struct MetricData {
    pub g: Array2<f64>,
    pub g_inv: Array2<f64>,
    pub christoffel: Option<Array3<f64>>,
}

/// g_ij v^i w^j. The two vectors must share base point and dimension.
pub fn inner_product(m: &MetricData, v: &TangentVector, w: &TangentVector) -> Result<f64> {
    let d = m.g.nrows();
    if v.components.len() != d || w.components.len() != d {
        return Err(AtlasError::Dimension(format!(
            "inner product of {}- and {}-vectors against a {d}x{d} metric",
            v.components.len(),
            w.components.len()
        )));
    }
    if v.base != w.base {
        return Err(AtlasError::Dimension(
            "tangent vectors have different base points".into(),
        ));
    }
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += m.g[[i, j]] * v.components[i] * w.components[j];
        }
    }
    Ok(acc)
}

/// An immersed submanifold of Euclidean space: an immersion map plus the
/// rectangular chart domain it is defined on. Immutable after construction.
#[derive(Clone)]
pub struct ImmersedManifold {
    name: String,
    immersion: Arc<dyn Immersion>,
    domain: Vec<(f64, f64)>,
    /// Immersion family parameter recorded for checkpoint identification
    /// (the height scale for graph surfaces; 1.0 otherwise).
    scale: f64,
}

impl ImmersedManifold {
    /// Validates dimensions, bounds, and full rank of the immersion Jacobian
    /// on a coarse probe grid over the domain.
    pub fn new(
        name: impl Into<String>,
        immersion: Arc<dyn Immersion>,
        domain: Vec<(f64, f64)>,
    ) -> Result<Self> {
        Self::with_scale(name, immersion, domain, 1.0)
    }

    pub fn with_scale(
        name: impl Into<String>,
        immersion: Arc<dyn Immersion>,
        domain: Vec<(f64, f64)>,
        scale: f64,
    ) -> Result<Self> {
        let d = immersion.intrinsic_dim();
        let n = immersion.ambient_dim();
        if d < 1 || d > MAX_DIM || n < d {
            return Err(AtlasError::Dimension(format!(
                "immersion dims N={n}, D={d} violate N >= D >= 1, D <= {MAX_DIM}"
            )));
        }
        if domain.len() != d {
            return Err(AtlasError::Dimension(format!(
                "domain has {} bounds for a {d}-dimensional chart",
                domain.len()
            )));
        }
        for &(lo, hi) in &domain {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(AtlasError::Format(format!(
                    "invalid domain bounds [{lo}, {hi}]"
                )));
            }
        }
        let m = Self {
            name: name.into(),
            immersion,
            domain,
            scale,
        };
        // Probe the rank condition coarsely; per-point failures surface later
        // through SingularMetric errors.
        let per_dim = if d <= 3 { 5 } else { 3 };
        let mut idx = vec![0usize; d];
        loop {
            let q: Vec<f64> = (0..d)
                .map(|k| {
                    let (lo, hi) = m.domain[k];
                    lo + (hi - lo) * (idx[k] as f64 + 0.5) / per_dim as f64
                })
                .collect();
            let q = ChartPoint { coords: q };
            let g = m.induced_metric(&q)?;
            let eig = linalg::sym_eigenvalues(&g);
            if eig[0] <= RANK_TOL * RANK_TOL {
                return Err(AtlasError::SingularMetric {
                    point: q.coords,
                    detail: format!(
                        "Jacobian smallest singular value {:.3e} <= {RANK_TOL:.0e}",
                        eig[0].max(0.0).sqrt()
                    ),
                });
            }
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < per_dim {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        Ok(m)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.immersion.intrinsic_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.immersion.ambient_dim()
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn contains(&self, q: &ChartPoint) -> bool {
        q.dim() == self.intrinsic_dim()
            && q.coords
                .iter()
                .zip(&self.domain)
                .all(|(&c, &(lo, hi))| c >= lo - DOMAIN_TOL && c <= hi + DOMAIN_TOL)
    }

    pub(crate) fn check_point(&self, q: &ChartPoint) -> Result<()> {
        if q.dim() != self.intrinsic_dim() {
            return Err(AtlasError::Dimension(format!(
                "{}-dimensional point on a {}-dimensional chart",
                q.dim(),
                self.intrinsic_dim()
            )));
        }
        match q
            .coords
            .iter()
            .zip(&self.domain)
            .position(|(&c, &(lo, hi))| c < lo - DOMAIN_TOL || c > hi + DOMAIN_TOL)
        {
            None => Ok(()),
            Some(coord) => Err(AtlasError::Domain {
                point: q.coords.clone(),
                domain: self.domain.clone(),
                coord,
            }),
        }
    }

    pub(crate) fn immersion_eval_dual(&self, q: &[Dual], out: &mut [Dual]) {
        self.immersion.eval_dual(q, out);
    }

    /// Ambient coordinates of the immersed point.
    pub fn immerse(&self, q: &ChartPoint) -> Result<Vec<f64>> {
        self.check_point(q)?;
        let mut out = vec![0.0; self.ambient_dim()];
        self.immersion.eval_f64(&q.coords, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(AtlasError::NonFinite {
                context: format!("immersion at {:?}", q.coords),
            });
        }
        Ok(out)
    }

    /// N x D Jacobian of the immersion; column j is the ambient derivative
    /// along chart coordinate j, from first-order dual numbers.
    pub fn jacobian(&self, q: &ChartPoint) -> Result<Array2<f64>> {
        self.check_point(q)?;
        let seeds = Dual::seed_point(&q.coords);
        let mut out = vec![Dual::constant(0.0); self.ambient_dim()];
        self.immersion.eval_dual(&seeds, &mut out);
        let (n, d) = (self.ambient_dim(), self.intrinsic_dim());
        let mut j: Array2<f64> = Array2::zeros((n, d));
        for a in 0..n {
            if !out[a].val.is_finite() {
                return Err(AtlasError::NonFinite {
                    context: format!("immersion at {:?}", q.coords),
                });
            }
            for i in 0..d {
                j[[a, i]] = out[a].grad[i];
            }
        }
        Ok(j)
    }

    fn induced_metric(&self, q: &ChartPoint) -> Result<Array2<f64>> {
        let j = self.jacobian(q)?;
        Ok(j.t().dot(&j))
    }

    /// Induced metric g = J^T J and its inverse.
    pub fn metric(&self, q: &ChartPoint) -> Result<MetricData> {
        let g = self.induced_metric(q)?;
        let g_inv = self.invert_metric(&g, q)?;
        Ok(MetricData {
            g,
            g_inv,
            christoffel: None,
        })
    }

    fn invert_metric(&self, g: &Array2<f64>, q: &ChartPoint) -> Result<Array2<f64>> {
        let det = linalg::determinant(g);
        if det < SINGULAR_DET_TOL {
            return Err(AtlasError::SingularMetric {
                point: q.coords.clone(),
                detail: format!("det(g) = {det:.3e}"),
            });
        }
        linalg::invert(g, 1e-300).ok_or_else(|| AtlasError::SingularMetric {
            point: q.coords.clone(),
            detail: "inversion failed".into(),
        })
    }

    /// Metric, inverse, and Christoffel symbols of the second kind
    ///
    ///   Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij),
    ///
    /// with the metric derivatives assembled exactly from second-order dual
    /// numbers through the immersion. Symmetry in the lower indices is
    /// bit-exact: (i, j) and (j, i) share one computation.
    pub fn christoffel(&self, q: &ChartPoint) -> Result<MetricData> {
        self.check_point(q)?;
        let (n, d) = (self.ambient_dim(), self.intrinsic_dim());
        let seeds = Dual2::seed_point(&q.coords);
        let mut out = vec![Dual2::constant(0.0); n];
        self.immersion.eval_dual2(&seeds, &mut out);

        let mut g: Array2<f64> = Array2::zeros((d, d));
        let mut dg: Array3<f64> = Array3::zeros((d, d, d)); // dg[[l, i, j]] = d_l g_ij
        for a in 0..n {
            let ia = &out[a];
            if !ia.val.is_finite() {
                return Err(AtlasError::NonFinite {
                    context: format!("immersion at {:?}", q.coords),
                });
            }
            for i in 0..d {
                for j in 0..d {
                    g[[i, j]] += ia.grad[i] * ia.grad[j];
                    for l in 0..d {
                        dg[[l, i, j]] += ia.hess[l][i] * ia.grad[j] + ia.grad[i] * ia.hess[l][j];
                    }
                }
            }
        }
        let g_inv = self.invert_metric(&g, q)?;

        let mut gamma: Array3<f64> = Array3::zeros((d, d, d));
        for i in 0..d {
            for j in i..d {
                for k in 0..d {
                    let mut acc = 0.0;
                    for l in 0..d {
                        acc += g_inv[[k, l]]
                            * 0.5
                            * (dg[[i, j, l]] + dg[[j, i, l]] - dg[[l, i, j]]);
                    }
                    gamma[[k, i, j]] = acc;
                    gamma[[k, j, i]] = acc;
                }
            }
        }
        Ok(MetricData {
            g,
            g_inv,
            christoffel: Some(gamma),
        })
    }

    /// Scalar curvature R = g^{jk} R_jk, with the Ricci tensor contracted from
    ///
    ///   R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik
    ///           + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik
    ///
    /// and d Gamma from central differences (step [`RICCI_FD_STEP`]) of the
    /// exact Christoffel symbols. The difference stencil must stay inside the
    /// domain.
    pub fn ricci_scalar(&self, q: &ChartPoint) -> Result<f64> {
        self.check_point(q)?;
        let d = self.intrinsic_dim();
        let h = RICCI_FD_STEP;
        let base = self.christoffel(q)?;
        let gamma = base.christoffel.as_ref().unwrap();

        // dgamma[[a, k, i, j]] = d_a Gamma^k_ij
        let mut dgamma: ndarray::Array4<f64> = ndarray::Array4::zeros((d, d, d, d));
        for a in 0..d {
            let mut plus = q.clone();
            let mut minus = q.clone();
            plus.coords[a] += h;
            minus.coords[a] -= h;
            let gp = self.christoffel(&plus)?;
            let gm = self.christoffel(&minus)?;
            let (gp, gm) = (gp.christoffel.unwrap(), gm.christoffel.unwrap());
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        dgamma[[a, k, i, j]] = (gp[[k, i, j]] - gm[[k, i, j]]) / (2.0 * h);
                    }
                }
            }
        }

        let mut r_scalar = 0.0;
        for j in 0..d {
            for k in 0..d {
                // Ricci R_jk = R^i_ijk
                let mut ric = 0.0;
                for i in 0..d {
                    let mut riem = dgamma[[i, i, j, k]] - dgamma[[j, i, i, k]];
                    for m in 0..d {
                        riem += gamma[[i, i, m]] * gamma[[m, j, k]]
                            - gamma[[i, j, m]] * gamma[[m, i, k]];
                    }
                    ric += riem;
                }
                r_scalar += base.g_inv[[j, k]] * ric;
            }
        }
        Ok(r_scalar)
    }
}

impl std::fmt::Debug for ImmersedManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImmersedManifold")
            .field("name", &self.name)
            .field("intrinsic_dim", &self.intrinsic_dim())
            .field("ambient_dim", &self.ambient_dim())
            .field("domain", &self.domain)
            .finish()
    }
}
