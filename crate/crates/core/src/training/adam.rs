use serde::{Deserialize, Serialize};

use crate::model::ModelParams;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self { m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One bias-corrected update of parameter slices against matching gradient slices.
    pub fn update<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut [f64]>,
        grads: impl IntoIterator<Item = &'a [f64]>,
        lr: f64,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut k = 0;
        for (x, g) in params.into_iter().zip(grads) {
            for (xi, &gi) in x.iter_mut().zip(g) {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                let m_hat = self.m[k] / c1;
                let v_hat = self.v[k] / c2;
                *xi -= lr * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, lr: f64) -> Result<()> {
    let named = grads.named_slices();
    let n: usize = named.iter().map(|(_, s)| s.len()).sum();
    if n != state.m.len() || n != params.n_params() {
        return Err(Error::Shape(format!("{n} gradients for {} parameters", params.n_params())));
    }
    if let Some((name, _)) = named.iter().find(|(_, s)| s.iter().any(|g| !g.is_finite())) {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    let slices: Vec<&[f64]> = named.into_iter().map(|(_, s)| s).collect();
    state.update(params.slices_mut(), slices, lr);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_on_quadratic() {
        let mut state = AdamState::new(1);
        let mut x = [1.0];
        let g = [2.0 * x[0]];
        state.update([&mut x[..]], [&g[..]], 0.1);
        assert!((x[0] - (1.0 - 0.1 * 2.0 / (2.0 + 1e-8))).abs() < 1e-15);
        assert!((x[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut state = AdamState::new(2);
        let mut x = [1.0, -2.0];
        state.update([&mut x[..]], [&[1.0, 1.0][..]], 0.1);
        let before = x;
        let m = state.m.clone();
        state.update([&mut x[..]], [&[0.0, 0.0][..]], 0.1);
        assert_eq!(state.m[0], 0.9 * m[0]);
        // Bias-corrected first moment is still nonzero, so the parameters move.
        assert_ne!(x, before);
        let mut fresh = AdamState::new(2);
        let mut y = [1.0, -2.0];
        fresh.update([&mut y[..]], [&[0.0, 0.0][..]], 0.1);
        assert_eq!(y, [1.0, -2.0]);
    }
}
