//! Built-in immersions: flat plane, unit sphere chart, and the peaks surface.

use std::sync::Arc;

use crate::dual::{Dual, Dual2, Scalar};
use crate::error::{AtlasError, Result};
use crate::geometry::ImmersedManifold;

/// A smooth map from intrinsic to ambient coordinates, evaluable on plain
/// floats and on dual numbers up to second order.
///
/// Implementations normally write the map once as a generic function over
/// [`Scalar`] and forward all three entry points to it; the three methods
/// exist only because a generic method would not be object-safe.
pub trait Immersion: Send + Sync {
    fn intrinsic_dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn eval_f64(&self, q: &[f64], out: &mut [f64]);
    fn eval_dual(&self, q: &[Dual], out: &mut [Dual]);
    fn eval_dual2(&self, q: &[Dual2], out: &mut [Dual2]);
}

macro_rules! immersion_evals {
    () => {
        fn eval_f64(&self, q: &[f64], out: &mut [f64]) {
            self.map(q, out)
        }
        fn eval_dual(&self, q: &[Dual], out: &mut [Dual]) {
            self.map(q, out)
        }
        fn eval_dual2(&self, q: &[Dual2], out: &mut [Dual2]) {
            self.map(q, out)
        }
    };
}

/// Flat plane embedded as z = 0.
pub struct PlaneImmersion;

impl PlaneImmersion {
    fn map<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        out[0] = q[0];
        out[1] = q[1];
        out[2] = S::from_f64(0.0);
    }
}

impl Immersion for PlaneImmersion {
    fn intrinsic_dim(&self) -> usize {
        2
    }
    fn ambient_dim(&self) -> usize {
        3
    }
    immersion_evals!();
}

/// Unit sphere chart (u, v) -> (cos u cos v, sin u cos v, sin v).
///
/// The chart is longitude/latitude; the domain must stay clear of the poles
/// at v = +-pi/2 where the chart degenerates.
pub struct UnitSphereImmersion;

impl UnitSphereImmersion {
    fn map<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        let (u, v) = (q[0], q[1]);
        out[0] = u.cos() * v.cos();
        out[1] = u.sin() * v.cos();
        out[2] = v.sin();
    }
}

impl Immersion for UnitSphereImmersion {
    fn intrinsic_dim(&self) -> usize {
        2
    }
    fn ambient_dim(&self) -> usize {
        3
    }
    immersion_evals!();
}

/// Graph surface z = scale * f(x, y) where f is the classic peaks function
///
///   f(x, y) = 3 (1 - x)^2 exp(-x^2 - (y+1)^2)
///           - 10 (x/5 - x^3 - y^5) exp(-x^2 - y^2)
///           - (1/3) exp(-(x+1)^2 - y^2)
///
/// Multi-modal with several sign changes in curvature; `scale` controls how
/// severe the bumps are.
pub struct PeaksImmersion {
    pub scale: f64,
}

pub fn peaks_height<S: Scalar>(x: S, y: S) -> S {
    let t1 = (x.scale(-1.0).shift(1.0)).powi(2).scale(3.0)
        * (-x.powi(2) - (y.shift(1.0)).powi(2)).exp();
    let t2 = (x.scale(0.2) - x.powi(3) - y.powi(5)).scale(-10.0)
        * (-x.powi(2) - y.powi(2)).exp();
    let t3 = (-(x.shift(1.0)).powi(2) - y.powi(2)).exp().scale(-1.0 / 3.0);
    t1 + t2 + t3
}

impl PeaksImmersion {
    fn map<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        out[0] = q[0];
        out[1] = q[1];
        out[2] = peaks_height(q[0], q[1]).scale(self.scale);
    }
}

impl Immersion for PeaksImmersion {
    fn intrinsic_dim(&self) -> usize {
        2
    }
    fn ambient_dim(&self) -> usize {
        3
    }
    immersion_evals!();
}

pub fn plane() -> ImmersedManifold {
    ImmersedManifold::new(
        "plane",
        Arc::new(PlaneImmersion),
        vec![(-3.0, 3.0), (-3.0, 3.0)],
    )
    .expect("built-in plane is valid")
}

/// Chart domain [-pi, pi] x [-1.3, 1.3], clear of the poles.
pub fn unit_sphere() -> ImmersedManifold {
    ImmersedManifold::new(
        "unit-sphere",
        Arc::new(UnitSphereImmersion),
        vec![
            (-std::f64::consts::PI, std::f64::consts::PI),
            (-1.3, 1.3),
        ],
    )
    .expect("built-in sphere is valid")
}

pub fn peaks(scale: f64) -> ImmersedManifold {
    ImmersedManifold::with_scale(
        "peaks",
        Arc::new(PeaksImmersion { scale }),
        vec![(-3.0, 3.0), (-3.0, 3.0)],
        scale,
    )
    .expect("built-in peaks is valid")
}

/// Look up a built-in manifold by CLI name. `scale` only affects `peaks`.
pub fn by_name(name: &str, scale: f64) -> Result<ImmersedManifold> {
    match name {
        "plane" => Ok(plane()),
        "unit-sphere" => Ok(unit_sphere()),
        "peaks" => Ok(peaks(scale)),
        other => Err(AtlasError::Format(format!(
            "unknown manifold '{other}' (expected plane, unit-sphere, or peaks)"
        ))),
    }
}
