//! Parameter update rules.

use serde::{Deserialize, Serialize};

use crate::params::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    #[default]
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

pub(crate) struct State {
    kind: Optimizer,
    m: Option<Params>,
    v: Option<Params>,
    t: i32,
}

impl State {
    pub(crate) fn new(kind: Optimizer, like: &Params) -> Self {
        let moments = || {
            let mut p = like.clone();
            p.fill(0.0);
            p
        };
        match kind {
            Optimizer::Sgd => State { kind, m: None, v: None, t: 0 },
            Optimizer::Adam => State { kind, m: Some(moments()), v: Some(moments()), t: 0 },
        }
    }

    pub(crate) fn step(&mut self, values: &mut Params, grads: &Params, lr: f64) {
        let (Optimizer::Adam, Some(m), Some(v)) = (self.kind, self.m.as_mut(), self.v.as_mut()) else {
            values.add_scaled(-lr, grads);
            return;
        };
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let arrays = values.arrays_mut().into_iter().zip(grads.arrays()).zip(m.arrays_mut()).zip(v.arrays_mut());
        for ((((_, x), (_, g)), (_, m)), (_, v)) in arrays {
            for i in 0..x.data.len() {
                let gi = g.data[i];
                m.data[i] = BETA1 * m.data[i] + (1.0 - BETA1) * gi;
                v.data[i] = BETA2 * v.data[i] + (1.0 - BETA2) * gi * gi;
                x.data[i] -= lr * (m.data[i] / c1) / ((v.data[i] / c2).sqrt() + EPS);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::EncoderConfig;

    fn params(value: f64) -> Params {
        let mut p = Params::zeros(&EncoderConfig::default(), 3);
        p.fill(value);
        p
    }

    #[test]
    fn sgd_moves_against_the_gradient() {
        let mut x = params(1.0);
        let mut s = State::new(Optimizer::Sgd, &x);
        s.step(&mut x, &params(2.0), 0.1);
        assert!(x.arrays().iter().all(|(_, a)| a.data.iter().all(|&v| (v - 0.8).abs() < 1e-12)));
    }

    #[test]
    fn first_adam_step_has_size_lr() {
        let mut x = params(1.0);
        let mut s = State::new(Optimizer::Adam, &x);
        s.step(&mut x, &params(-5.0), 0.01);
        assert!(x.arrays().iter().all(|(_, a)| a.data.iter().all(|&v| (v - 1.01).abs() < 1e-9)));
    }
}
