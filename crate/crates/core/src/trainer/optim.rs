use crate::autonet::{ParamStore, Real};
use crate::error::{shape_mismatch, Result};

use super::config::RmsPropConfig;

/// Running mean of squared gradients, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    pub cache: Vec<Vec<f64>>,
}

impl RmsPropState {
    pub fn new<T: Real>(params: &ParamStore<T>, config: RmsPropConfig) -> Self {
        RmsPropState {
            config,
            cache: params.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }
}

/// `cache = decay * cache + (1 - decay) * g^2`, then `p -= lr * g / (sqrt(cache) + eps)`.
pub fn rmsprop_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &[Vec<T>],
    state: &mut RmsPropState,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.cache.len() != params.len() {
        return Err(shape_mismatch(format!(
            "rmsprop: {} parameters, {} gradients, {} cache buffers",
            params.len(),
            grads.len(),
            state.cache.len()
        )));
    }
    for ((p, g), c) in params.iter().zip(grads).zip(&state.cache) {
        if p.len() != g.len() || p.len() != c.len() {
            return Err(shape_mismatch(format!(
                "rmsprop: parameter of {} values, gradient of {}, cache of {}",
                p.len(),
                g.len(),
                c.len()
            )));
        }
    }
    let RmsPropConfig { decay, epsilon } = state.config;
    for ((p, g), c) in params.iter_mut().zip(grads).zip(state.cache.iter_mut()) {
        for ((pv, &gv), cv) in p.data.iter_mut().zip(g).zip(c.iter_mut()) {
            let g = gv.to_f64();
            *cv = decay * *cv + (1.0 - decay) * g * g;
            let step = lr * g / (cv.sqrt() + epsilon);
            *pv = T::from_f64(pv.to_f64() - step);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autonet::Tensor;

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", Tensor::new(vec![1], vec![v]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = scalar_store(1.25);
        let mut st = RmsPropState::new(&s, RmsPropConfig::default());
        for _ in 0..5 {
            rmsprop_step(&mut s, &[vec![0.0]], &mut st, 2.5e-4).unwrap();
        }
        assert_eq!(s.iter().next().unwrap().data[0], 1.25);
    }

    #[test]
    fn two_steps_by_hand() {
        let lr = 2.5e-4;
        let mut s = scalar_store(0.0);
        let mut st = RmsPropState::new(&s, RmsPropConfig::default());
        rmsprop_step(&mut s, &[vec![1.0]], &mut st, lr).unwrap();
        // cache = 0.01, step = lr / (0.1 + 1e-8)
        let first = -lr / (0.1 + 1e-8);
        assert!((s.iter().next().unwrap().data[0] - first).abs() < 1e-15);
        assert!((first + 10.0 * lr).abs() < 1e-9);
        rmsprop_step(&mut s, &[vec![1.0]], &mut st, lr).unwrap();
        // cache = 0.99 * 0.01 + 0.01 = 0.0199
        let second = first - lr / (0.0199f64.sqrt() + 1e-8);
        assert!((s.iter().next().unwrap().data[0] - second).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut s = scalar_store(0.0);
        let mut st = RmsPropState::new(&s, RmsPropConfig::default());
        assert!(rmsprop_step(&mut s, &[vec![1.0, 2.0]], &mut st, 1e-3).is_err());
        assert!(rmsprop_step(&mut s, &[], &mut st, 1e-3).is_err());
    }

    proptest::proptest! {
        #[test]
        fn step_never_exceeds_lr_over_epsilon_bound(g in -1e3f64..1e3, warm in 0usize..5) {
            let lr = 2.5e-4;
            let mut s = scalar_store(0.0);
            let mut st = RmsPropState::new(&s, RmsPropConfig::default());
            for _ in 0..warm {
                rmsprop_step(&mut s, &[vec![g * 0.5]], &mut st, lr).unwrap();
            }
            let before = s.iter().next().unwrap().data[0];
            rmsprop_step(&mut s, &[vec![g]], &mut st, lr).unwrap();
            let delta = (s.iter().next().unwrap().data[0] - before).abs();
            proptest::prop_assert!(delta <= lr / 1e-8 * g.abs() + 1e-12);
            // The first-step magnitude never exceeds lr / sqrt(1 - decay).
            proptest::prop_assert!(delta <= lr * 10.0 * (1.0 + 1e-9));
        }
    }
}
