//! Eikonal residual loss, its exact parameter gradient, and the two-stage
//! Adam / L-BFGS training loop.
//!
//! The loss is the Monte-Carlo mean of squared residuals
//!
//!   r(q) = phi^{,i} phi_{,i} - 1 = (grad phi)^T g^{-1} (grad phi) - 1,
//!
//! which contains the *input* gradient of the network. Its parameter
//! gradient is computed by running the reverse pass over the jet-augmented
//! forward computation (forward-over-reverse), so it is exact to rounding.
//!
//! Batches are split into fixed-size chunks that may be evaluated in
//! parallel; chunk results are reduced sequentially in chunk order, so the
//! loss, gradient, and therefore the whole training trajectory are
//! bit-reproducible for a given seed regardless of thread count.

pub mod adam;
pub mod lbfgs;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};
use crate::field::{self, mlp::MlpGrads, DistanceField, DistanceFn, FieldParams};
use crate::geometry::{ChartPoint, ImmersedManifold};
use crate::sampling::BatchSampler;

pub use adam::{adam_step, lr_schedule, AdamState};
pub use lbfgs::{lbfgs_minimize_step, LbfgsState};

/// Fixed evaluation chunk; part of the reduction shape, so changing it
/// changes reproducible trajectories.
const CHUNK: usize = 32;

/// Training configuration. `desk` fits on a laptop CPU; `paper` is the
/// full-scale schedule (1e5 Adam updates on batches of 2^13, then 1000
/// L-BFGS updates).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub adam_steps: usize,
    pub lbfgs_steps: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lbfgs_history: usize,
    /// Held-out audit grid resolution per dimension.
    pub heldout_grid: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk(0)
    }
}

impl TrainConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            adam_steps: 20_000,
            lbfgs_steps: 200,
            batch_size: 1 << 10,
            lr0: 1e-3,
            decay_factor: 0.9,
            decay_every: 2000,
            warmup_steps: 5000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lbfgs_history: 10,
            heldout_grid: 33,
            seed,
        }
    }

    pub fn paper(seed: u64) -> Self {
        Self {
            adam_steps: 100_000,
            lbfgs_steps: 1000,
            batch_size: 1 << 13,
            ..Self::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(AtlasError::Format(format!(
                "decay_factor must lie in (0, 1] (got {})",
                self.decay_factor
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(AtlasError::Format(format!(
                    "{name} must lie in (0, 1) (got {b})"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(AtlasError::Format("batch_size must be > 0".into()));
        }
        if self.heldout_grid < 2 {
            return Err(AtlasError::Format("heldout_grid must be >= 2".into()));
        }
        Ok(())
    }
}

/// Per-operation Eikonal residual r(q) = (grad phi)^T g^{-1} (grad phi) - 1,
/// written as the contraction of the chart gradient with the intrinsic one.
/// Works for any [`DistanceFn`], analytic fields included.
pub fn eikonal_residual(f: &dyn DistanceFn, q: &ChartPoint) -> Result<f64> {
    let eval = f.evaluate(q)?;
    let sq: f64 = eval
        .grad_chart
        .iter()
        .zip(&eval.grad_intrinsic)
        .map(|(a, b)| a * b)
        .sum();
    Ok(sq - 1.0)
}

struct ChunkOut {
    sq_sum: f64,
    residuals: Vec<f64>,
    grads: Option<MlpGrads>,
}

/// Residuals (and optionally parameter gradients of the summed squared
/// residual) for one chunk of points.
fn residual_chunk(field: &DistanceField, pts: &[ChartPoint], with_grad: bool) -> Result<ChunkOut> {
    let d = field.manifold.intrinsic_dim();
    let b = pts.len();
    let fwd = field.forward_batch(pts)?;

    let mut g_inv = Vec::with_capacity(b);
    for q in pts {
        g_inv.push(field.manifold.metric(q)?.g_inv);
    }

    let mut residuals = Vec::with_capacity(b);
    let mut sq_sum = 0.0;
    for col in 0..b {
        let mut quad = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += g_inv[col][[i, j]] * fwd.grad_chart[[i, col]] * fwd.grad_chart[[j, col]];
            }
        }
        let r = quad - 1.0;
        residuals.push(r);
        sq_sum += r * r;
    }

    let grads = if with_grad {
        // d(sum r^2)/d(grad_chart[k, col]) = 2 r * 2 sum_j ginv[k, j] gc[j, col]
        let mut adj_gc: Array2<f64> = Array2::zeros((d, b));
        for col in 0..b {
            for k in 0..d {
                let mut flow = 0.0;
                for j in 0..d {
                    flow += g_inv[col][[k, j]] * fwd.grad_chart[[j, col]];
                }
                adj_gc[[k, col]] = 4.0 * residuals[col] * flow;
            }
        }
        let (adj_val, adj_tang) = field::head_backward(&fwd, &adj_gc);
        Some(field::mlp::backward_jets(
            &field.params.mlp,
            &fwd.mlp_cache,
            &adj_val,
            &adj_tang,
        ))
    } else {
        None
    };
    Ok(ChunkOut {
        sq_sum,
        residuals,
        grads,
    })
}

fn batch_pass(
    field: &DistanceField,
    batch: &[ChartPoint],
    with_grad: bool,
) -> Result<(f64, Vec<f64>, Option<MlpGrads>)> {
    if batch.is_empty() {
        return Err(AtlasError::EmptyBatch);
    }
    let chunk_results: Vec<Result<ChunkOut>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| residual_chunk(field, chunk, with_grad))
        .collect();
    // ordered, fixed-shape reduction
    let mut sq_sum = 0.0;
    let mut residuals = Vec::with_capacity(batch.len());
    let mut grads: Option<MlpGrads> = None;
    for cr in chunk_results {
        let cr = cr?;
        sq_sum += cr.sq_sum;
        residuals.extend(cr.residuals);
        if let Some(g) = cr.grads {
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.add_assign(&g),
            }
        }
    }
    Ok((sq_sum / batch.len() as f64, residuals, grads))
}

/// Mean squared Eikonal residual over the batch.
pub fn loss(field: &DistanceField, batch: &[ChartPoint]) -> Result<f64> {
    batch_pass(field, batch, false).map(|(l, _, _)| l)
}

/// Loss and its exact gradient with respect to every network parameter,
/// flattened in [`crate::field::MlpParams::flatten`] order.
pub fn loss_grad(field: &DistanceField, batch: &[ChartPoint]) -> Result<(f64, Vec<f64>)> {
    let n = batch.len() as f64;
    let (l, _, grads) = batch_pass(field, batch, true)?;
    let mut flat = grads.expect("gradient requested").flatten();
    for g in &mut flat {
        *g /= n;
    }
    Ok((l, flat))
}

/// Residuals on a batch (no gradient); used by audits and tests.
pub fn residuals(field: &DistanceField, batch: &[ChartPoint]) -> Result<Vec<f64>> {
    batch_pass(field, batch, false).map(|(_, r, _)| r)
}

/// One stochastic L-BFGS step on the field against a fresh batch.
/// Returns the (pre, post) loss on that batch; the Armijo line search
/// guarantees post <= pre.
pub fn lbfgs_step(
    field: &mut DistanceField,
    batch: &[ChartPoint],
    state: &mut LbfgsState,
) -> Result<(f64, f64)> {
    let mut x = field.params.mlp.flatten();
    let objective = |flat: &[f64]| -> Result<(f64, Vec<f64>)> {
        let probe = DistanceField::new(
            FieldParams {
                mlp: field.params.mlp.from_flat(flat)?,
                ..field.params.clone()
            },
            field.manifold.clone(),
        )?;
        loss_grad(&probe, batch)
    };
    let out = lbfgs_minimize_step(&mut x, state, objective)?;
    field.params.mlp = field.params.mlp.from_flat(&x)?;
    Ok(out)
}

/// Learning-rate echo entry recorded in the report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LrEcho {
    pub step: usize,
    pub lr: f64,
}

/// Structured training record: config echo, loss traces, held-out residual
/// statistics, and a parameter hash for determinism checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub manifold: String,
    pub manifold_scale: f64,
    pub origin: Vec<f64>,
    pub n_params: usize,
    pub adam_loss: Vec<f64>,
    /// (pre, post) loss per L-BFGS step.
    pub lbfgs_loss: Vec<[f64; 2]>,
    /// Set when L-BFGS stopped early (line-search stall).
    pub lbfgs_note: Option<String>,
    pub lr_echo: Vec<LrEcho>,
    /// |residual| percentiles on the held-out grid (origin excluded).
    pub residual_abs_p50: f64,
    pub residual_abs_p90: f64,
    pub residual_abs_max: f64,
    pub heldout_points: usize,
    pub param_hash: String,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

/// FNV-1a over the parameter bit patterns; stable across runs and platforms.
pub fn param_hash(flat: &[f64]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in flat {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    format!("{h:016x}")
}

/// Uniform inclusive grid over the domain, the origin's immediate
/// neighbourhood excluded (phi is not differentiable at the origin).
pub fn heldout_grid(m: &ImmersedManifold, p: &ChartPoint, res: usize) -> Vec<ChartPoint> {
    let domain = m.domain();
    let mut pts = Vec::new();
    let lin = |k: usize, n: usize| -> f64 {
        let (lo, hi) = domain[k];
        lo + (hi - lo) * n as f64 / (res - 1) as f64
    };
    match m.intrinsic_dim() {
        2 => {
            for iy in 0..res {
                for ix in 0..res {
                    let q = ChartPoint {
                        coords: vec![lin(0, ix), lin(1, iy)],
                    };
                    let de: f64 = q
                        .coords
                        .iter()
                        .zip(&p.coords)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if de > 1e-9 {
                        pts.push(q);
                    }
                }
            }
        }
        d => {
            // generic product grid for other dimensions
            let mut idx = vec![0usize; d];
            loop {
                let q = ChartPoint {
                    coords: (0..d).map(|k| lin(k, idx[k])).collect(),
                };
                let de: f64 = q
                    .coords
                    .iter()
                    .zip(&p.coords)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if de > 1e-9 {
                    pts.push(q);
                }
                let mut k = 0;
                while k < d {
                    idx[k] += 1;
                    if idx[k] < res {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
        }
    }
    pts
}

fn percentile(sorted: &[f64], frac: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * frac).round() as usize;
    sorted[idx]
}

/// Two-stage training of a fresh field: `adam_steps` Adam updates on fresh
/// sampler batches, then `lbfgs_steps` stochastic L-BFGS updates, then a
/// residual audit on a held-out uniform grid.
///
/// A non-finite loss aborts immediately; when `nan_dump` is given, the last
/// finite parameter state is checkpointed there first.
pub fn train(
    m: &ImmersedManifold,
    p: &ChartPoint,
    cfg: &TrainConfig,
    sampler: &mut dyn BatchSampler,
    nan_dump: Option<&std::path::Path>,
) -> Result<(DistanceField, TrainReport)> {
    let params = FieldParams::init(m, p, cfg.seed)?;
    let field = DistanceField::new(params, m.clone())?;
    train_field(field, cfg, sampler, nan_dump)
}

/// As [`train`], starting from an existing (e.g. differently configured)
/// field.
pub fn train_field(
    mut field: DistanceField,
    cfg: &TrainConfig,
    sampler: &mut dyn BatchSampler,
    nan_dump: Option<&std::path::Path>,
) -> Result<(DistanceField, TrainReport)> {
    cfg.validate()?;
    let t0 = std::time::Instant::now();
    let mut x = field.params.mlp.flatten();
    let mut adam = AdamState::new(x.len());
    let mut adam_loss = Vec::with_capacity(cfg.adam_steps);
    let mut last_good = x.clone();

    for step in 0..cfg.adam_steps {
        let batch = sampler.sample_batch(cfg.batch_size);
        field.params.mlp.assign_flat(&x)?;
        let (l, g) = loss_grad(&field, &batch)?;
        if !l.is_finite() {
            if let Some(path) = nan_dump {
                field.params.mlp.assign_flat(&last_good)?;
                field::save_checkpoint(&field, path)?;
            }
            return Err(AtlasError::TrainingAborted {
                step,
                detail: format!(
                    "loss became non-finite during Adam; last finite loss {:?}",
                    adam_loss.last()
                ),
            });
        }
        adam_loss.push(l);
        last_good.copy_from_slice(&x);
        let lr = lr_schedule(cfg, step);
        adam_step(&mut x, &mut adam, &g, lr, cfg);
    }
    field.params.mlp.assign_flat(&x)?;

    let mut lbfgs = LbfgsState::new(cfg.lbfgs_history);
    let mut lbfgs_loss = Vec::with_capacity(cfg.lbfgs_steps);
    let mut lbfgs_note = None;
    for step in 0..cfg.lbfgs_steps {
        let batch = sampler.sample_batch(cfg.batch_size);
        match lbfgs_step(&mut field, &batch, &mut lbfgs) {
            Ok((pre, post)) => lbfgs_loss.push([pre, post]),
            Err(AtlasError::LineSearchFailure {
                backtracks,
                grad_norm,
            }) => {
                lbfgs_note = Some(format!(
                    "line search stalled at step {step} ({backtracks} backtracks, |g| = {grad_norm:.3e}); stopping fine-tune"
                ));
                break;
            }
            Err(e) => return Err(e),
        }
    }

    // held-out audit
    let grid = heldout_grid(&field.manifold, field.origin(), cfg.heldout_grid);
    let res = residuals(&field, &grid)?;
    let mut abs: Vec<f64> = res.iter().map(|r| r.abs()).collect();
    abs.sort_by(f64::total_cmp);

    let flat = field.params.mlp.flatten();
    let report = TrainReport {
        config: cfg.clone(),
        manifold: field.manifold.name().to_string(),
        manifold_scale: field.manifold.scale(),
        origin: field.origin().coords.clone(),
        n_params: flat.len(),
        adam_loss,
        lbfgs_loss,
        lbfgs_note,
        lr_echo: [0usize, 4999, 5000, 6999, 7000, 9000]
            .into_iter()
            .map(|step| LrEcho {
                step,
                lr: lr_schedule(cfg, step),
            })
            .collect(),
        residual_abs_p50: percentile(&abs, 0.5),
        residual_abs_p90: percentile(&abs, 0.9),
        residual_abs_max: abs.last().copied().unwrap_or(f64::NAN),
        heldout_points: grid.len(),
        param_hash: param_hash(&flat),
        wall_clock_secs: t0.elapsed().as_secs_f64(),
    };
    Ok((field, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldEval;
    use crate::manifolds::{plane, unit_sphere};

    /// Exact Euclidean distance field on the plane (optionally scaled).
    struct PlaneExact {
        p: Vec<f64>,
        factor: f64,
    }

    impl DistanceFn for PlaneExact {
        fn evaluate(&self, q: &ChartPoint) -> Result<FieldEval> {
            let dx = q.coords[0] - self.p[0];
            let dy = q.coords[1] - self.p[1];
            let d = (dx * dx + dy * dy).sqrt();
            let grad = vec![self.factor * dx / d, self.factor * dy / d];
            Ok(FieldEval {
                phi: self.factor * d,
                grad_chart: grad.clone(),
                grad_intrinsic: grad, // identity metric
            })
        }
    }

    #[test]
    fn exact_plane_field_has_zero_residual() {
        let f = PlaneExact {
            p: vec![0.2, -0.4],
            factor: 1.0,
        };
        for q in [[1.0, 1.0], [-2.0, 0.5], [0.3, 2.0]] {
            let r = eikonal_residual(&f, &ChartPoint::of(&q)).unwrap();
            assert!(r.abs() < 1e-10, "residual {r}");
        }
    }

    #[test]
    fn doubled_plane_field_has_residual_three() {
        let f = PlaneExact {
            p: vec![0.0, 0.0],
            factor: 2.0,
        };
        let r = eikonal_residual(&f, &ChartPoint::of(&[1.0, 0.7])).unwrap();
        assert!((r - 3.0).abs() < 1e-10);
    }

    /// Great-circle distance from p on the unit sphere, with analytic chart
    /// gradient: phi = arccos(i(p) . i(q)).
    struct SphereExact {
        m: ImmersedManifold,
        p_amb: Vec<f64>,
    }

    impl DistanceFn for SphereExact {
        fn evaluate(&self, q: &ChartPoint) -> Result<FieldEval> {
            let amb = self.m.immerse(q)?;
            let j = self.m.jacobian(q)?;
            let c: f64 = amb.iter().zip(&self.p_amb).map(|(a, b)| a * b).sum();
            let phi = c.clamp(-1.0, 1.0).acos();
            let s = (1.0 - c * c).sqrt();
            let mut grad_chart = vec![0.0; 2];
            for k in 0..2 {
                let dc: f64 = (0..3).map(|a| self.p_amb[a] * j[[a, k]]).sum();
                grad_chart[k] = -dc / s;
            }
            let g_inv = self.m.metric(q)?.g_inv;
            let mut grad_intrinsic = vec![0.0; 2];
            for i in 0..2 {
                for k in 0..2 {
                    grad_intrinsic[i] += g_inv[[i, k]] * grad_chart[k];
                }
            }
            Ok(FieldEval {
                phi,
                grad_chart,
                grad_intrinsic,
            })
        }
    }

    #[test]
    fn exact_sphere_field_has_zero_residual() {
        let m = unit_sphere();
        let p = ChartPoint::of(&[0.3, -0.2]);
        let f = SphereExact {
            p_amb: m.immerse(&p).unwrap(),
            m,
        };
        // points away from the cut locus (antipode of p)
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(21);
        let mut checked = 0;
        while checked < 20 {
            use rand::Rng;
            let q = ChartPoint::of(&[rng.random_range(-2.0..2.0), rng.random_range(-1.2..1.2)]);
            let phi = f.evaluate(&q).unwrap().phi;
            if phi < 0.2 || phi > 2.7 {
                continue; // too close to origin or cut locus
            }
            let r = eikonal_residual(&f, &q).unwrap();
            assert!(r.abs() < 1e-6, "residual {r} at {:?}", q.coords);
            checked += 1;
        }
    }

    #[test]
    fn loss_is_mean_of_squared_residuals() {
        let m = plane();
        let p = ChartPoint::of(&[0.0, 0.0]);
        let field = DistanceField::new(
            FieldParams::init(&m, &p, 17).unwrap(),
            m.clone(),
        )
        .unwrap();
        let batch = vec![
            ChartPoint::of(&[1.0, 0.3]),
            ChartPoint::of(&[-0.7, 1.9]),
            ChartPoint::of(&[2.2, -2.0]),
        ];
        let l = loss(&field, &batch).unwrap();
        let rs = residuals(&field, &batch).unwrap();
        let manual: f64 = rs.iter().map(|r| r * r).sum::<f64>() / 3.0;
        assert!((l - manual).abs() < 1e-15);
        // duplicated batch leaves the mean unchanged
        let doubled: Vec<ChartPoint> = batch.iter().chain(&batch).cloned().collect();
        let l2 = loss(&field, &doubled).unwrap();
        assert!((l - l2).abs() < 1e-15);
        assert!(loss(&field, &[]).is_err());
    }

    #[test]
    fn gradient_batch_additivity() {
        let m = plane();
        let p = ChartPoint::of(&[0.0, 0.0]);
        let field = DistanceField::new(
            FieldParams::init(&m, &p, 23).unwrap(),
            m.clone(),
        )
        .unwrap();
        let q1 = ChartPoint::of(&[1.4, -0.6]);
        let q2 = ChartPoint::of(&[-2.0, 2.0]);
        let (_, g_both) = loss_grad(&field, &[q1.clone(), q2.clone()]).unwrap();
        let (_, g1) = loss_grad(&field, &[q1]).unwrap();
        let (_, g2) = loss_grad(&field, &[q2]).unwrap();
        for i in 0..g_both.len() {
            let mean = 0.5 * (g1[i] + g2[i]);
            assert!(
                (g_both[i] - mean).abs() < 1e-12,
                "coordinate {i}: {} vs {mean}",
                g_both[i]
            );
        }
    }

    #[test]
    fn loss_grad_matches_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let m = crate::manifolds::peaks(0.4);
        let p = ChartPoint::of(&[0.1, 0.2]);
        // small network keeps the finite-difference loop cheap while using
        // the full pipeline (metric, head, jets)
        let arch = crate::field::MlpArch::modified(2, 16, 4);
        let params = FieldParams::init_with_arch(&m, &p, arch, 31).unwrap();
        let field = DistanceField::new(params, m.clone()).unwrap();
        let batch: Vec<ChartPoint> = vec![
            ChartPoint::of(&[1.2, 0.8]),
            ChartPoint::of(&[-1.5, -0.9]),
            ChartPoint::of(&[2.4, 1.7]),
            ChartPoint::of(&[-0.3, 2.1]),
        ];
        let (_, grad) = loss_grad(&field, &batch).unwrap();
        let flat = field.params.mlp.flatten();
        let h = 1e-6;
        let gmax = grad.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let i = rng.random_range(0..flat.len());
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[i] += h;
            minus[i] -= h;
            let fp = loss(
                &DistanceField::new(
                    FieldParams {
                        mlp: field.params.mlp.from_flat(&plus).unwrap(),
                        ..field.params.clone()
                    },
                    m.clone(),
                )
                .unwrap(),
                &batch,
            )
            .unwrap();
            let fm = loss(
                &DistanceField::new(
                    FieldParams {
                        mlp: field.params.mlp.from_flat(&minus).unwrap(),
                        ..field.params.clone()
                    },
                    m.clone(),
                )
                .unwrap(),
                &batch,
            )
            .unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let denom = fd.abs().max(1e-4 * gmax.max(1.0));
            assert!(
                (grad[i] - fd).abs() / denom < 1e-4,
                "param {i}: analytic {} vs fd {fd}",
                grad[i]
            );
        }
    }









    #[test]
    fn heldout_grid_excludes_origin() {
        let m = plane();
        let p = ChartPoint::of(&[0.0, 0.0]);
        let grid = heldout_grid(&m, &p, 33);
        // 33 is odd, so the exact origin lies on the grid and must be gone
        assert_eq!(grid.len(), 33 * 33 - 1);
        assert!(grid
            .iter()
            .all(|q| q.coords[0].abs() > 1e-12 || q.coords[1].abs() > 1e-12));
    }
}
