//! Adam with bias correction. After every step the mask is re-applied to the
//! weights so pruned positions stay exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{MaskSet, ParamSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    m: ParamSet,
    v: ParamSet,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: ParamSet::zeros_like(params),
            v: ParamSet::zeros_like(params),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, masks: &MaskSet, grads: &ParamSet) -> Result<()> {
        if !params.same_shape(grads) || !self.m.same_shape(params) {
            return Err(Error::invalid("adam: shape mismatch"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);

        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for i in 0..params.n_layers() {
            let layer = &mut params.layers[i];
            let ml = &mut self.m.layers[i];
            let vl = &mut self.v.layers[i];
            let gl = &grads.layers[i];
            for ((p, (m, v)), &g) in layer
                .weight
                .iter_mut()
                .zip(ml.weight.iter_mut().zip(vl.weight.iter_mut()))
                .zip(gl.weight.iter())
            {
                update(p, m, v, g);
            }
            for ((p, (m, v)), &g) in layer
                .bias
                .iter_mut()
                .zip(ml.bias.iter_mut().zip(vl.bias.iter_mut()))
                .zip(gl.bias.iter())
            {
                update(p, m, v, g);
            }
        }
        params.apply_mask(masks);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, NetworkSpec, OutputHead};
    use approx::assert_abs_diff_eq;

    fn small_params() -> ParamSet {
        let spec =
            NetworkSpec::new(vec![2, 2], Activation::Relu, OutputHead::Linear).unwrap();
        let mut p = ParamSet::zeros(&spec);
        p.layers[0].weight[[0, 0]] = 0.5;
        p.layers[0].weight[[1, 1]] = -0.25;
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = small_params();
        let before = p.clone();
        let masks = MaskSet::ones_like(&p);
        let grads = ParamSet::zeros_like(&p);
        let mut adam = Adam::new(&p, 1e-3);
        adam.step(&mut p, &masks, &grads).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // At t=1 the bias-corrected update is lr * g / (|g| + eps') ~ lr * sign(g).
        let mut p = small_params();
        let before = p.clone();
        let masks = MaskSet::ones_like(&p);
        let mut grads = ParamSet::zeros_like(&p);
        grads.layers[0].weight[[0, 0]] = 3.0;
        grads.layers[0].weight[[1, 1]] = -0.7;
        let lr = 0.01;
        let mut adam = Adam::new(&p, lr);
        adam.step(&mut p, &masks, &grads).unwrap();
        let d00 = p.layers[0].weight[[0, 0]] - before.layers[0].weight[[0, 0]];
        let d11 = p.layers[0].weight[[1, 1]] - before.layers[0].weight[[1, 1]];
        assert_abs_diff_eq!(d00, -lr, epsilon = 1e-6);
        assert_abs_diff_eq!(d11, lr, epsilon = 1e-6);
    }

    #[test]
    fn masked_entry_stays_zero_after_step() {
        let mut p = small_params();
        let mut masks = MaskSet::ones_like(&p);
        masks.layers[0][[0, 0]] = 0.0;
        p.apply_mask(&masks);
        let mut grads = ParamSet::zeros_like(&p);
        grads.layers[0].weight[[0, 0]] = 5.0; // nonzero gradient at masked slot
        let mut adam = Adam::new(&p, 0.1);
        adam.step(&mut p, &masks, &grads).unwrap();
        assert_eq!(p.layers[0].weight[[0, 0]], 0.0);
    }
}
