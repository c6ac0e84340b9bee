//! Geodesic integration, curve length, and tracing of the geodesic flow.

use crate::error::{AtlasError, Result};
use crate::field::DistanceFn;
use crate::geometry::{ChartPoint, ImmersedManifold, TangentVector};

/// Position/velocity pair along a geodesic.
#[derive(Clone, Debug)]
pub struct GeodesicState {
    pub position: ChartPoint,
    pub velocity: TangentVector,
    pub time: f64,
}

/// A polyline in chart coordinates with strictly increasing sample times.
#[derive(Clone, Debug)]
pub struct DiscreteCurve {
    pub points: Vec<ChartPoint>,
    pub times: Vec<f64>,
}

impl DiscreteCurve {
    pub fn new(points: Vec<ChartPoint>, times: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.len() != times.len() {
            return Err(AtlasError::Dimension(format!(
                "curve needs >= 2 points with matching times (got {} points, {} times)",
                points.len(),
                times.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AtlasError::Format(
                "curve times must be strictly increasing".into(),
            ));
        }
        Ok(Self { points, times })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        let t_end = *self.times.last().unwrap();
        let times = self.times.iter().rev().map(|&t| t_end - t).collect();
        Self { points, times }
    }
}

fn geodesic_rhs(
    m: &ImmersedManifold,
    q: &[f64],
    v: &[f64],
    dq: &mut [f64],
    dv: &mut [f64],
) -> Result<()> {
    let d = q.len();
    let point = ChartPoint {
        coords: q.to_vec(),
    };
    let data = m.christoffel(&point)?;
    let gamma = data.christoffel.as_ref().unwrap();
    for k in 0..d {
        dq[k] = v[k];
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += gamma[[k, i, j]] * v[i] * v[j];
            }
        }
        dv[k] = -acc;
    }
    Ok(())
}

/// Integrate the geodesic equation
///
///   dq/dt = v,   dv^k/dt = -Gamma^k_ij v^i v^j
///
/// with classical fixed-step RK4 from `(q0, v0)` to `t_end`, returning the
/// whole trajectory including both endpoints.
///
/// Leaving the chart domain yields [`AtlasError::DomainExit`] carrying the
/// in-domain prefix; non-finite states yield [`AtlasError::NonFinite`].
pub fn integrate_geodesic(
    m: &ImmersedManifold,
    q0: &ChartPoint,
    v0: &TangentVector,
    t_end: f64,
    n_steps: usize,
) -> Result<DiscreteCurve> {
    m.check_point(q0)?;
    if n_steps < 1 || t_end <= 0.0 {
        return Err(AtlasError::Format(format!(
            "need n_steps >= 1 and t_end > 0 (got {n_steps}, {t_end})"
        )));
    }
    let d = q0.dim();
    if v0.components.len() != d {
        return Err(AtlasError::Dimension(
            "velocity dimension does not match start point".into(),
        ));
    }
    let h = t_end / n_steps as f64;
    let mut q = q0.coords.clone();
    let mut v = v0.components.clone();
    let mut points = vec![q0.clone()];
    let mut times = vec![0.0];

    let mut k_q = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut k_v = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut tmp_q = vec![0.0; d];
    let mut tmp_v = vec![0.0; d];

    let exit = |points: Vec<ChartPoint>, times: Vec<f64>| {
        let curve = DiscreteCurve { points, times };
        AtlasError::DomainExit {
            curve: Box::new(curve),
        }
    };

    for step in 0..n_steps {
        let stage = |f: f64, kq: &[f64], kv: &[f64], tq: &mut [f64], tv: &mut [f64]| {
            for i in 0..d {
                tq[i] = q[i] + f * h * kq[i];
                tv[i] = v[i] + f * h * kv[i];
            }
        };
        let rhs_res = (|| -> Result<()> {
            let (kq0, rest) = k_q.split_at_mut(1);
            let (kv0, restv) = k_v.split_at_mut(1);
            geodesic_rhs(m, &q, &v, &mut kq0[0], &mut kv0[0])?;
            stage(0.5, &kq0[0], &kv0[0], &mut tmp_q, &mut tmp_v);
            geodesic_rhs(m, &tmp_q, &tmp_v, &mut rest[0], &mut restv[0])?;
            stage(0.5, &rest[0], &restv[0], &mut tmp_q, &mut tmp_v);
            geodesic_rhs(m, &tmp_q, &tmp_v, &mut rest[1], &mut restv[1])?;
            stage(1.0, &rest[1], &restv[1], &mut tmp_q, &mut tmp_v);
            geodesic_rhs(m, &tmp_q, &tmp_v, &mut rest[2], &mut restv[2])?;
            Ok(())
        })();
        match rhs_res {
            Ok(()) => {}
            Err(AtlasError::Domain { .. }) => return Err(exit(points, times)),
            Err(e) => return Err(e),
        }
        for i in 0..d {
            q[i] += h / 6.0 * (k_q[0][i] + 2.0 * k_q[1][i] + 2.0 * k_q[2][i] + k_q[3][i]);
            v[i] += h / 6.0 * (k_v[0][i] + 2.0 * k_v[1][i] + 2.0 * k_v[2][i] + k_v[3][i]);
        }
        if q.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(AtlasError::NonFinite {
                context: format!("geodesic state at step {step}"),
            });
        }
        let point = ChartPoint { coords: q.clone() };
        if !m.contains(&point) {
            return Err(exit(points, times));
        }
        points.push(point);
        times.push(h * (step + 1) as f64);
    }
    Ok(DiscreteCurve { points, times })
}

/// Riemannian length of a discrete curve: per segment, the metric is
/// evaluated at the segment midpoint and the segment contributes
/// sqrt(dq^i g_ij(mid) dq^j).
///
/// Segment contributions are summed in sorted order, which makes the total
/// independent of traversal direction and slightly more accurate than
/// left-to-right accumulation.
pub fn curve_length(m: &ImmersedManifold, c: &DiscreteCurve) -> Result<f64> {
    let d = m.intrinsic_dim();
    let mut seg_lengths = Vec::with_capacity(c.points.len().saturating_sub(1));
    for w in c.points.windows(2) {
        m.check_point(&w[0])?;
        m.check_point(&w[1])?;
        let mid = ChartPoint {
            coords: (0..d)
                .map(|i| 0.5 * (w[0].coords[i] + w[1].coords[i]))
                .collect(),
        };
        let g = m.metric(&mid)?.g;
        let mut quad = 0.0;
        for i in 0..d {
            let di = w[1].coords[i] - w[0].coords[i];
            for j in 0..d {
                let dj = w[1].coords[j] - w[0].coords[j];
                quad += di * g[[i, j]] * dj;
            }
        }
        seg_lengths.push(quad.max(0.0).sqrt());
    }
    seg_lengths.sort_by(f64::total_cmp);
    Ok(seg_lengths.iter().sum())
}

/// Number of consecutive near-zero decreases of phi before a trace is
/// declared stagnant.
const STAGNATION_WINDOW: usize = 10;
const STAGNATION_DECREASE: f64 = 1e-9;
/// Per-step halvings attempted when a full RK4 step fails to decrease phi.
const MAX_STEP_HALVINGS: usize = 8;

/// Trace the geodesic flow of a distance field from `q` toward its origin by
/// integrating dz/dt = -grad phi (the intrinsic gradient) with RK4.
///
/// Terminates once phi < `stop` (defaults to one step length) or after
/// `max_steps` accepted steps. Every accepted step strictly decreases phi; a
/// step that fails to decrease phi is retried with a halved step size, and
/// persistent failure (or [`STAGNATION_WINDOW`] consecutive decreases below
/// [`STAGNATION_DECREASE`], as happens on a cut locus) aborts with
/// [`AtlasError::Stagnation`] carrying the partial path.
pub fn trace_flow(
    field: &dyn DistanceFn,
    q: &ChartPoint,
    step: f64,
    max_steps: usize,
    stop: Option<f64>,
) -> Result<DiscreteCurve> {
    if step <= 0.0 {
        return Err(AtlasError::Format(format!("step must be > 0 (got {step})")));
    }
    let stop = stop.unwrap_or(step);
    let d = q.dim();
    let mut z = q.coords.clone();
    let mut phi = field.evaluate(&ChartPoint { coords: z.clone() })?.phi;
    let mut points = vec![q.clone()];
    let mut times = vec![0.0];
    let mut stagnant = 0usize;

    let rhs = |z: &[f64]| -> Result<Vec<f64>> {
        let eval = field.evaluate(&ChartPoint {
            coords: z.to_vec(),
        })?;
        Ok(eval.grad_intrinsic.iter().map(|g| -g).collect())
    };

    let mut t = 0.0;
    for _ in 0..max_steps {
        if phi < stop {
            break;
        }
        let mut h = step;
        let mut accepted = None;
        for _ in 0..=MAX_STEP_HALVINGS {
            let step_res = (|| -> Result<Vec<f64>> {
                let k1 = rhs(&z)?;
                let mid1: Vec<f64> = (0..d).map(|i| z[i] + 0.5 * h * k1[i]).collect();
                let k2 = rhs(&mid1)?;
                let mid2: Vec<f64> = (0..d).map(|i| z[i] + 0.5 * h * k2[i]).collect();
                let k3 = rhs(&mid2)?;
                let end: Vec<f64> = (0..d).map(|i| z[i] + h * k3[i]).collect();
                let k4 = rhs(&end)?;
                Ok((0..d)
                    .map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect())
            })();
            let z_new = match step_res {
                Ok(z_new) => z_new,
                Err(AtlasError::Domain { .. }) => {
                    return Err(AtlasError::DomainExit {
                        curve: Box::new(DiscreteCurve { points, times }),
                    })
                }
                Err(e) => return Err(e),
            };
            let phi_new = field
                .evaluate(&ChartPoint {
                    coords: z_new.clone(),
                })?
                .phi;
            if phi_new < phi {
                accepted = Some((z_new, phi_new, h));
                break;
            }
            h *= 0.5;
        }
        let Some((z_new, phi_new, h_used)) = accepted else {
            return Err(AtlasError::Stagnation {
                curve: Box::new(DiscreteCurve { points, times }),
                last_phi: phi,
            });
        };
        if phi - phi_new < STAGNATION_DECREASE {
            stagnant += 1;
            if stagnant >= STAGNATION_WINDOW {
                return Err(AtlasError::Stagnation {
                    curve: Box::new(DiscreteCurve { points, times }),
                    last_phi: phi_new,
                });
            }
        } else {
            stagnant = 0;
        }
        z = z_new;
        phi = phi_new;
        t += h_used;
        points.push(ChartPoint { coords: z.clone() });
        times.push(t);
    }
    DiscreteCurve::new(points, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{plane, unit_sphere};

    #[test]
    fn plane_geodesic_is_straight() {
        let m = plane();
        let q0 = ChartPoint::of(&[0.0, 0.0]);
        let v0 = TangentVector::new(q0.clone(), vec![1.0, 0.0]).unwrap();
        let c = integrate_geodesic(&m, &q0, &v0, 1.0, 100).unwrap();
        let end = c.points.last().unwrap();
        assert!((end.coords[0] - 1.0).abs() < 1e-12);
        assert!(end.coords[1].abs() < 1e-12);
        assert_eq!(c.len(), 101);
    }

    /// Sphere chart widened in longitude so a full great-circle period fits
    /// without hitting the chart seam; the immersion is 2 pi periodic, so
    /// closure is measured against the periodic image (u0 + 2 pi, v0).
    fn wide_sphere() -> crate::geometry::ImmersedManifold {
        crate::geometry::ImmersedManifold::new(
            "unit-sphere",
            std::sync::Arc::new(crate::manifolds::UnitSphereImmersion),
            vec![
                (-2.2 * std::f64::consts::PI, 2.2 * std::f64::consts::PI),
                (-1.3, 1.3),
            ],
        )
        .unwrap()
    }

    #[test]
    fn sphere_great_circle_closes() {
        let m = wide_sphere();
        let q0 = ChartPoint::of(&[0.0, 0.0]);
        // tilted launch so the orbit is a non-trivial great circle
        let alpha = 0.5_f64;
        let v0 = TangentVector::new(q0.clone(), vec![alpha.cos(), alpha.sin()]).unwrap();
        let c = integrate_geodesic(&m, &q0, &v0, 2.0 * std::f64::consts::PI, 4000).unwrap();
        let end = c.points.last().unwrap();
        let err = ((end.coords[0] - 2.0 * std::f64::consts::PI).powi(2)
            + (end.coords[1]).powi(2))
        .sqrt();
        assert!(err < 1e-6, "closure error {err}");
    }

    #[test]
    fn geodesic_speed_is_conserved() {
        let m = unit_sphere();
        let q0 = ChartPoint::of(&[0.4, 0.2]);
        let v0 = TangentVector::new(q0.clone(), vec![0.3, 0.8]).unwrap();
        let c = integrate_geodesic(&m, &q0, &v0, 1.0, 1000).unwrap();
        // reconstruct velocities by re-integration is overkill; check the
        // speed through first differences against segment midpoint metric
        let total = curve_length(&m, &c).unwrap();
        let g0 = m.metric(&q0).unwrap();
        let speed0 = crate::geometry::inner_product(&g0, &v0, &v0).unwrap().sqrt();
        assert!(
            (total - speed0).abs() / speed0 < 1e-5,
            "length {total} vs speed {speed0}"
        );
    }

    #[test]
    fn plane_curve_length_is_euclidean() {
        let m = plane();
        // coincident endpoints: zero length
        let stationary = DiscreteCurve::new(
            vec![ChartPoint::of(&[0.5, 0.5]), ChartPoint::of(&[0.5, 0.5])],
            vec![0.0, 1.0],
        )
        .unwrap();
        assert_eq!(curve_length(&m, &stationary).unwrap(), 0.0);

        // 3-4-5 triangle on a wider plane chart
        let wide = crate::geometry::ImmersedManifold::new(
            "plane",
            std::sync::Arc::new(crate::manifolds::PlaneImmersion),
            vec![(-5.0, 5.0), (-5.0, 5.0)],
        )
        .unwrap();
        let c = DiscreteCurve::new(
            vec![ChartPoint::of(&[0.0, 0.0]), ChartPoint::of(&[3.0, 4.0])],
            vec![0.0, 1.0],
        )
        .unwrap();
        assert!((curve_length(&wide, &c).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn curve_length_reversal_is_exact() {
        let m = unit_sphere();
        let pts: Vec<ChartPoint> = (0..50)
            .map(|k| {
                let t = k as f64 / 49.0;
                ChartPoint::of(&[2.0 * t - 1.0, 0.9 * (3.0 * t).sin()])
            })
            .collect();
        let times: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let c = DiscreteCurve::new(pts, times).unwrap();
        let l_fwd = curve_length(&m, &c).unwrap();
        let l_rev = curve_length(&m, &c.reversed()).unwrap();
        assert_eq!(l_fwd.to_bits(), l_rev.to_bits());
    }

    #[test]
    fn midpoint_refinement_on_straight_plane_segment() {
        let m = plane();
        let a = ChartPoint::of(&[-1.0, -2.0]);
        let b = ChartPoint::of(&[2.0, 2.0]);
        let mid = ChartPoint::of(&[0.5, 0.0]);
        let coarse = DiscreteCurve::new(vec![a.clone(), b.clone()], vec![0.0, 1.0]).unwrap();
        let fine = DiscreteCurve::new(vec![a, mid, b], vec![0.0, 0.5, 1.0]).unwrap();
        let lc = curve_length(&m, &coarse).unwrap();
        let lf = curve_length(&m, &fine).unwrap();
        assert!((lc - lf).abs() < 1e-12);
        assert!((lc - 5.0).abs() < 1e-12);
    }

    #[test]
    fn domain_exit_reports_prefix() {
        let m = plane();
        let q0 = ChartPoint::of(&[2.5, 0.0]);
        let v0 = TangentVector::new(q0.clone(), vec![1.0, 0.0]).unwrap();
        match integrate_geodesic(&m, &q0, &v0, 2.0, 100) {
            Err(AtlasError::DomainExit { curve }) => {
                assert!(!curve.points.is_empty());
                let last = curve.points.last().unwrap();
                assert!(m.contains(last));
            }
            other => panic!("expected DomainExit, got {other:?}"),
        }
    }

    #[test]
    fn rk4_order_on_sphere() {
        let m = wide_sphere();
        let q0 = ChartPoint::of(&[0.0, 0.0]);
        let alpha = 0.5_f64;
        let v0 = TangentVector::new(q0.clone(), vec![alpha.cos(), alpha.sin()]).unwrap();
        let t_end = 2.0 * std::f64::consts::PI;
        let endpoint_err = |n: usize| {
            let c = integrate_geodesic(&m, &q0, &v0, t_end, n).unwrap();
            let end = c.points.last().unwrap();
            ((end.coords[0] - t_end).powi(2) + (end.coords[1]).powi(2)).sqrt()
        };
        let e1 = endpoint_err(100);
        let e2 = endpoint_err(200);
        assert!(
            e1 / e2 >= 12.0,
            "step halving improved error only {}x (e1={e1:.3e}, e2={e2:.3e})",
            e1 / e2
        );
    }
}
