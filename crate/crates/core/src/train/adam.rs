//! Adam with bias correction, and the warmup/decay learning-rate schedule.

use super::TrainConfig;

/// First/second moment estimates and the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One Adam update in place. Standard bias-corrected form:
///
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   x <- x - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
pub fn adam_step(x: &mut [f64], state: &mut AdamState, grad: &[f64], lr: f64, cfg: &TrainConfig) {
    assert_eq!(x.len(), grad.len());
    assert_eq!(x.len(), state.m.len());
    state.t += 1;
    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.eps);
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..x.len() {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        x[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Constant `lr0` during warmup, then stepwise exponential decay:
/// lr0 * decay_factor^floor((step - warmup) / decay_every).
pub fn lr_schedule(cfg: &TrainConfig, step: usize) -> f64 {
    if step < cfg.warmup_steps || cfg.decay_every == 0 {
        cfg.lr0
    } else {
        let intervals = (step - cfg.warmup_steps) / cfg.decay_every;
        cfg.lr0 * cfg.decay_factor.powi(intervals as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig::desk(0)
    }

    #[test]
    fn schedule_reproduces_reference_table() {
        let cfg = cfg();
        let expect = [
            (0, 1e-3),
            (4999, 1e-3),
            (5000, 1e-3),
            (6999, 1e-3),
            (7000, 9e-4),
            (9000, 8.1e-4),
        ];
        for (step, lr) in expect {
            assert!(
                (lr_schedule(&cfg, step) - lr).abs() < 1e-18,
                "step {step}: {} != {lr}",
                lr_schedule(&cfg, step)
            );
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let cfg = cfg();
        let mut x = vec![0.5, -1.5, 2.0];
        let mut st = AdamState::new(3);
        adam_step(&mut x, &mut st, &[0.0, 0.0, 0.0], 1e-3, &cfg);
        assert_eq!(x, vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn first_step_is_signed_unit_step() {
        // with fresh moments, m_hat/sqrt(v_hat) = sign(g) up to eps
        let cfg = cfg();
        let mut x = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        adam_step(&mut x, &mut st, &[0.3, -8.0], 1e-3, &cfg);
        assert!((x[0] + 1e-3).abs() < 1e-7);
        assert!((x[1] - 1e-3).abs() < 1e-7);
    }

    #[test]
    fn deterministic_updates() {
        let cfg = cfg();
        let run = || {
            let mut x = vec![0.1, 0.2];
            let mut st = AdamState::new(2);
            for k in 0..10 {
                let g = [0.01 * k as f64, -0.02];
                adam_step(&mut x, &mut st, &g, 1e-3, &cfg);
            }
            x
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}
