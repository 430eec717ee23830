use crate::error::{Result, ZslError};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightDecay {
    /// L2 term `weight_decay * param` added to the gradient.
    #[default]
    Coupled,
    /// `param -= lr * weight_decay * param` applied outside the moment estimates.
    Decoupled,
}

impl WeightDecay {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightDecay::Coupled => "coupled",
            WeightDecay::Decoupled => "decoupled",
        }
    }
}

impl std::str::FromStr for WeightDecay {
    type Err = ZslError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coupled" => Ok(WeightDecay::Coupled),
            "decoupled" => Ok(WeightDecay::Decoupled),
            other => Err(ZslError::Config(format!("unknown weight decay mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub decay: WeightDecay,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            weight_decay,
            decay: WeightDecay::Coupled,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam descent step, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, opt: &Adam) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(ZslError::DimensionMismatch(format!(
            "adam: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(ZslError::NonFiniteGradient);
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let mut g = grads[k];
        if opt.decay == WeightDecay::Coupled {
            g += opt.weight_decay * *p;
        }
        state.m[k] = BETA1 * state.m[k] + (1.0 - BETA1) * g;
        state.v[k] = BETA2 * state.v[k] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        if opt.decay == WeightDecay::Decoupled {
            *p -= opt.lr * opt.weight_decay * *p;
        }
        *p -= opt.lr * m_hat / (v_hat.sqrt() + EPS);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(ZslError::NonFiniteGradient);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = [0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut st, &Adam::new(0.002, 0.0)).unwrap();
        assert!((p[0] + 0.002).abs() < 1e-9, "{}", p[0]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_grad_no_decay_is_fixed_point() {
        let mut p = [1.5, -2.0];
        let mut st = AdamState::new(2);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0, 0.0], &mut st, &Adam::new(0.1, 0.0)).unwrap();
        }
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn two_steps_match_scalar_recurrence() {
        let (lr, wd, g) = (0.01, 0.1, 0.3);
        let mut p = [0.5];
        let mut st = AdamState::new(1);
        let opt = Adam::new(lr, wd);
        adam_step(&mut p, &[g], &mut st, &opt).unwrap();
        adam_step(&mut p, &[g], &mut st, &opt).unwrap();

        // hand-rolled reference
        let (mut x, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            let gt = g + wd * x;
            m = 0.9 * m + 0.1 * gt;
            v = 0.999 * v + 0.001 * gt * gt;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p[0] - x).abs() < 1e-12);
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient() {
        let mut p = [1.0];
        let mut st = AdamState::new(1);
        let opt = Adam {
            lr: 0.1,
            weight_decay: 0.5,
            decay: WeightDecay::Decoupled,
        };
        adam_step(&mut p, &[0.0], &mut st, &opt).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = [0.0];
        let mut st = AdamState::new(1);
        let err = adam_step(&mut p, &[f64::NAN], &mut st, &Adam::new(0.1, 0.0));
        assert!(matches!(err, Err(ZslError::NonFiniteGradient)));
    }
}
