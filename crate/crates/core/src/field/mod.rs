//! The neural distance field: constrained head, standardisation, evaluation,
//! and checkpoint persistence.
//!
//! The network never outputs a distance directly. Its raw scalar output is
//! pushed through the head
//!
//!   phi(q; p) = d_E(i(p), i(q)) * (1 + softplus(raw)),
//!
//! where d_E is the ambient (chordal) distance between the immersed points.
//! The head makes phi(p; p) = 0 hold identically and, because softplus is
//! strictly positive, forces phi(q; p) > d_E for every q != p — both
//! properties hold for any parameter values, not as an optimisation outcome.

pub mod checkpoint;
pub mod mlp;

use ndarray::{Array1, Array2};

use crate::dual::{Dual, Scalar};
use crate::error::{AtlasError, Result};
use crate::geometry::{ChartPoint, ImmersedManifold};

pub use checkpoint::{load_checkpoint, manifold_spec, save_checkpoint};
pub use mlp::{MlpArch, MlpParams, MlpVariant};

/// Checkpoint schema version understood by this build.
pub const FORMAT_VERSION: u32 = 1;
/// Name of the output head recorded in checkpoints.
pub const HEAD_NAME: &str = "chordal-softplus";

/// Numerically stable softplus ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic sigmoid (the derivative of softplus).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Affine map of each coordinate from its domain interval onto [-1, 1].
pub fn standardise(domain: &[(f64, f64)], q: &ChartPoint) -> Result<Vec<f64>> {
    if q.dim() != domain.len() {
        return Err(AtlasError::Dimension(format!(
            "{}-dimensional point against {} domain bounds",
            q.dim(),
            domain.len()
        )));
    }
    let mut out = Vec::with_capacity(q.dim());
    for (i, (&c, &(lo, hi))) in q.coords.iter().zip(domain).enumerate() {
        if c < lo - crate::geometry::DOMAIN_TOL || c > hi + crate::geometry::DOMAIN_TOL {
            return Err(AtlasError::Domain {
                point: q.coords.clone(),
                domain: domain.to_vec(),
                coord: i,
            });
        }
        out.push((2.0 * c - lo - hi) / (hi - lo));
    }
    Ok(out)
}

/// d(standardised)/d(chart) per coordinate.
pub fn standardise_scale(domain: &[(f64, f64)]) -> Vec<f64> {
    domain.iter().map(|&(lo, hi)| 2.0 / (hi - lo)).collect()
}

/// Ambient (chordal) Euclidean distance between two immersed points.
pub fn chordal_distance(m: &ImmersedManifold, p: &ChartPoint, q: &ChartPoint) -> Result<f64> {
    let a = m.immerse(p)?;
    let b = m.immerse(q)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// The output head: d_E(i(p), i(q)) * (1 + softplus(raw)).
pub fn distance_head(
    raw: f64,
    m: &ImmersedManifold,
    p: &ChartPoint,
    q: &ChartPoint,
) -> Result<f64> {
    if !raw.is_finite() {
        return Err(AtlasError::NonFinite {
            context: "raw network output".into(),
        });
    }
    Ok(chordal_distance(m, p, q)? * (1.0 + softplus(raw)))
}

/// All state of a trained (or fresh) field: backbone parameters, the fixed
/// origin, and the standardisation domain, plus identification metadata.
#[derive(Clone, Debug)]
pub struct FieldParams {
    pub format_version: u32,
    pub manifold_name: String,
    /// Height scale for graph manifolds; 1.0 otherwise.
    pub manifold_scale: f64,
    pub domain: Vec<(f64, f64)>,
    pub origin: ChartPoint,
    pub seed: u64,
    pub mlp: MlpParams,
}

impl FieldParams {
    /// Fresh Glorot-initialised parameters for `m` with origin `p`, using
    /// the default backbone (modified MLP, four hidden layers of 128).
    pub fn init(m: &ImmersedManifold, p: &ChartPoint, seed: u64) -> Result<Self> {
        Self::init_with_arch(m, p, MlpArch::modified(m.intrinsic_dim(), 128, 4), seed)
    }

    pub fn init_with_arch(
        m: &ImmersedManifold,
        p: &ChartPoint,
        arch: MlpArch,
        seed: u64,
    ) -> Result<Self> {
        m.check_point(p)?;
        Ok(Self {
            format_version: FORMAT_VERSION,
            manifold_name: m.name().to_string(),
            manifold_scale: m.scale(),
            domain: m.domain().to_vec(),
            origin: p.clone(),
            seed,
            mlp: MlpParams::init(arch, seed),
        })
    }
}

/// Value and chart/intrinsic gradients of the field at one point.
#[derive(Clone, Debug)]
pub struct FieldEval {
    pub phi: f64,
    /// d phi / d q^i (derivative along the chart coordinate vector fields).
    pub grad_chart: Vec<f64>,
    /// (grad phi)^i = g^{ij} phi_,j — the geodesic flow direction field.
    pub grad_intrinsic: Vec<f64>,
}

/// Anything that evaluates a distance function and its gradients on a chart.
///
/// The trained [`DistanceField`] is the main implementation; tests substitute
/// analytic fields (exact Euclidean or great-circle distances) through the
/// same interface.
pub trait DistanceFn: Sync {
    fn evaluate(&self, q: &ChartPoint) -> Result<FieldEval>;
}

/// A field bound to its manifold, ready for evaluation.
#[derive(Clone, Debug)]
pub struct DistanceField {
    pub params: FieldParams,
    pub manifold: ImmersedManifold,
    origin_ambient: Vec<f64>,
}

impl DistanceField {
    pub fn new(params: FieldParams, manifold: ImmersedManifold) -> Result<Self> {
        if params.mlp.arch.input_dim != manifold.intrinsic_dim() {
            return Err(AtlasError::Format(format!(
                "field input dimension {} does not match manifold intrinsic dimension {}",
                params.mlp.arch.input_dim,
                manifold.intrinsic_dim()
            )));
        }
        if params.domain != manifold.domain() {
            return Err(AtlasError::Format(format!(
                "field domain {:?} does not match manifold domain {:?}",
                params.domain,
                manifold.domain()
            )));
        }
        if params.manifold_scale != manifold.scale() {
            return Err(AtlasError::Format(format!(
                "field was built for manifold scale {} but got scale {}",
                params.manifold_scale,
                manifold.scale()
            )));
        }
        let origin_ambient = manifold.immerse(&params.origin)?;
        Ok(Self {
            params,
            manifold,
            origin_ambient,
        })
    }

    pub fn origin(&self) -> &ChartPoint {
        &self.params.origin
    }

    /// Forward pass over a batch of points; exposes everything the training
    /// reverse pass needs.
    pub(crate) fn forward_batch(&self, pts: &[ChartPoint]) -> Result<BatchForward> {
        forward_batch(&self.params.mlp, &self.manifold, &self.origin_ambient, pts)
    }
}

impl DistanceFn for DistanceField {
    /// phi and its gradients at `q`.
    ///
    /// The chart gradient is exact (first-order jets through the full
    /// composition, including the chordal factor of the head); the intrinsic
    /// gradient applies the inverse metric. At q = p the distance function is
    /// not differentiable and the gradient components come out non-finite.
    fn evaluate(&self, q: &ChartPoint) -> Result<FieldEval> {
        let fwd = self.forward_batch(std::slice::from_ref(q))?;
        let d = q.dim();
        let grad_chart: Vec<f64> = (0..d).map(|k| fwd.grad_chart[[k, 0]]).collect();
        let metric = self.manifold.metric(q)?;
        let mut grad_intrinsic = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                grad_intrinsic[i] += metric.g_inv[[i, j]] * grad_chart[j];
            }
        }
        Ok(FieldEval {
            phi: fwd.phi[0],
            grad_chart,
            grad_intrinsic,
        })
    }
}

/// Batched field forward pass: values, chart gradients, and the caches needed
/// to run the reverse pass of the residual loss.
pub(crate) struct BatchForward {
    pub phi: Vec<f64>,
    /// D x B chart gradient of phi.
    pub grad_chart: Array2<f64>,
    pub d_e: Vec<f64>,
    /// D x B chart gradient of the chordal factor.
    pub d_e_tang: Array2<f64>,
    pub raw_tang: Array2<f64>,
    pub sp: Vec<f64>,
    pub sig: Vec<f64>,
    pub mlp_cache: mlp::ForwardCache,
}

pub(crate) fn forward_batch(
    params: &MlpParams,
    m: &ImmersedManifold,
    origin_ambient: &[f64],
    pts: &[ChartPoint],
) -> Result<BatchForward> {
    if pts.is_empty() {
        return Err(AtlasError::EmptyBatch);
    }
    let d = m.intrinsic_dim();
    let n_amb = m.ambient_dim();
    let b = pts.len();
    let domain = m.domain();
    let scale = standardise_scale(domain);

    let mut x = mlp::JetBatch::zeros(d, d, b);
    let mut d_e = vec![0.0; b];
    let mut d_e_tang: Array2<f64> = Array2::zeros((d, b));
    let mut amb = vec![Dual::constant(0.0); n_amb];
    for (col, q) in pts.iter().enumerate() {
        let std = standardise(domain, q)?;
        for k in 0..d {
            x.channels[0][[k, col]] = std[k];
            x.channels[k + 1][[k, col]] = scale[k];
        }
        let seeds = Dual::seed_point(&q.coords);
        m.immersion_eval_dual(&seeds, &mut amb);
        let mut sq = Dual::constant(0.0);
        for a in 0..n_amb {
            let diff = amb[a].shift(-origin_ambient[a]);
            sq = sq + diff * diff;
        }
        let dist = sq.sqrt();
        if !dist.val.is_finite() {
            return Err(AtlasError::NonFinite {
                context: format!("chordal distance at {:?}", pts[col].coords),
            });
        }
        d_e[col] = dist.val;
        for k in 0..d {
            d_e_tang[[k, col]] = dist.grad[k];
        }
    }

    let (raw_val, raw_tang, mlp_cache) = mlp::forward_jets(params, x);

    let mut phi = vec![0.0; b];
    let mut grad_chart: Array2<f64> = Array2::zeros((d, b));
    let mut sp = vec![0.0; b];
    let mut sig = vec![0.0; b];
    for col in 0..b {
        if !raw_val[col].is_finite() {
            return Err(AtlasError::NonFinite {
                context: format!("network output at {:?}", pts[col].coords),
            });
        }
        sp[col] = softplus(raw_val[col]);
        sig[col] = sigmoid(raw_val[col]);
        phi[col] = d_e[col] * (1.0 + sp[col]);
        for k in 0..d {
            grad_chart[[k, col]] = d_e_tang[[k, col]] * (1.0 + sp[col])
                + d_e[col] * sig[col] * raw_tang[[k, col]];
        }
    }
    Ok(BatchForward {
        phi,
        grad_chart,
        d_e,
        d_e_tang,
        raw_tang,
        sp,
        sig,
        mlp_cache,
    })
}

/// Reverse pass of the head given adjoints of phi's chart gradient (the value
/// of phi itself carries no adjoint in the Eikonal loss): produces the raw
/// output adjoints for [`mlp::backward_jets`].
pub(crate) fn head_backward(
    fwd: &BatchForward,
    adj_grad_chart: &Array2<f64>,
) -> (Array1<f64>, Array2<f64>) {
    let (d, b) = adj_grad_chart.dim();
    let mut adj_raw_val = Array1::zeros(b);
    let mut adj_raw_tang = Array2::zeros((d, b));
    for col in 0..b {
        let (de, sig) = (fwd.d_e[col], fwd.sig[col]);
        let dsig = sig * (1.0 - sig); // softplus second derivative
        let mut val = 0.0;
        for k in 0..d {
            let a = adj_grad_chart[[k, col]];
            adj_raw_tang[[k, col]] = a * de * sig;
            val += a * (fwd.d_e_tang[[k, col]] * sig + de * dsig * fwd.raw_tang[[k, col]]);
        }
        adj_raw_val[col] = val;
    }
    (adj_raw_val, adj_raw_tang)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{peaks, plane, unit_sphere};

    #[test]
    fn standardise_maps_corners_and_centre() {
        let domain = [(-3.0, 3.0), (-3.0, 3.0)];
        assert_eq!(
            standardise(&domain, &ChartPoint::of(&[0.0, 0.0])).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            standardise(&domain, &ChartPoint::of(&[3.0, -3.0])).unwrap(),
            vec![1.0, -1.0]
        );
        assert_eq!(
            standardise(&domain, &ChartPoint::of(&[1.5, 0.0])).unwrap(),
            vec![0.5, 0.0]
        );
        assert!(standardise(&domain, &ChartPoint::of(&[3.2, 0.0])).is_err());
    }

    #[test]
    fn head_vanishes_at_origin_for_any_raw() {
        let m = peaks(1.0);
        let p = ChartPoint::of(&[0.3, -0.8]);
        for raw in [-40.0, -1.0, 0.0, 3.0, 55.0] {
            assert_eq!(distance_head(raw, &m, &p, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn head_strictly_dominates_chordal_distance() {
        let m = unit_sphere();
        let p = ChartPoint::of(&[0.0, 0.0]);
        let q = ChartPoint::of(&[1.2, -0.7]);
        let de = chordal_distance(&m, &p, &q).unwrap();
        for raw in [-30.0, -2.0, 0.0, 10.0] {
            assert!(distance_head(raw, &m, &p, &q).unwrap() > de);
        }
    }

    #[test]
    fn head_softplus_value() {
        // raw = 0, d_E = 2 gives 2 (1 + ln 2)
        let m = plane();
        let p = ChartPoint::of(&[0.0, 0.0]);
        let q = ChartPoint::of(&[2.0, 0.0]);
        let out = distance_head(0.0, &m, &p, &q).unwrap();
        assert!((out - 2.0 * (1.0 + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn evaluate_gradient_matches_finite_differences() {
        let m = peaks(0.5);
        let p = ChartPoint::of(&[0.5, -0.25]);
        let params = FieldParams::init(&m, &p, 11).unwrap();
        let field = DistanceField::new(params, m.clone()).unwrap();
        let h = 1e-5;
        for q in [
            ChartPoint::of(&[1.0, 1.0]),
            ChartPoint::of(&[-2.0, 0.4]),
            ChartPoint::of(&[0.1, -1.7]),
        ] {
            let eval = field.evaluate(&q).unwrap();
            for k in 0..2 {
                let mut plus = q.clone();
                let mut minus = q.clone();
                plus.coords[k] += h;
                minus.coords[k] -= h;
                let fd = (field.evaluate(&plus).unwrap().phi
                    - field.evaluate(&minus).unwrap().phi)
                    / (2.0 * h);
                let rel = (eval.grad_chart[k] - fd).abs() / fd.abs().max(1e-8);
                assert!(
                    rel < 1e-5,
                    "grad[{k}] at {:?}: ad={} fd={fd}",
                    q.coords,
                    eval.grad_chart[k]
                );
            }
        }
    }

    #[test]
    fn field_value_is_zero_at_origin() {
        let m = plane();
        let p = ChartPoint::of(&[0.7, -0.2]);
        let params = FieldParams::init(&m, &p, 3).unwrap();
        let field = DistanceField::new(params, m).unwrap();
        assert_eq!(field.evaluate(&p).unwrap().phi, 0.0);
    }

    #[test]
    fn deterministic_forward() {
        let m = plane();
        let p = ChartPoint::of(&[0.0, 0.0]);
        let q = ChartPoint::of(&[1.3, 0.4]);
        let f1 = DistanceField::new(FieldParams::init(&m, &p, 42).unwrap(), m.clone()).unwrap();
        let f2 = DistanceField::new(FieldParams::init(&m, &p, 42).unwrap(), m).unwrap();
        assert_eq!(
            f1.evaluate(&q).unwrap().phi.to_bits(),
            f2.evaluate(&q).unwrap().phi.to_bits()
        );
    }
}
