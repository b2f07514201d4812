use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimKind {
    pub fn adam() -> Self {
        OptimKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimKind::SgdMomentum { .. } => "sgd",
            OptimKind::Adam { .. } => "adam",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimState {
    pub kind: OptimKind,
    pub learning_rate: f64,
    pub step_count: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(kind: OptimKind, learning_rate: f64) -> Result<Self> {
        let ok = learning_rate > 0.0
            && match kind {
                OptimKind::SgdMomentum { momentum } => (0.0..1.0).contains(&momentum),
                OptimKind::Adam {
                    beta1,
                    beta2,
                    epsilon,
                } => beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && epsilon > 0.0,
            };
        if !ok {
            return Err(Error::InvalidParam(format!(
                "optimizer hyperparameters out of range: {kind:?}, lr {learning_rate}"
            )));
        }
        Ok(OptimState {
            kind,
            learning_rate,
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }
}

/// Apply one update from the accumulated gradients, then clear them.
pub fn optim_step(params: &mut ParamStore, state: &mut OptimState) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
        return Err(Error::MissingGradient(p.name.clone()));
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        state.second = state.first.clone();
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let lr = state.learning_rate;
    for (i, p) in params.iter_mut().enumerate() {
        let g = p.grad.take().expect("checked above");
        let m = &mut state.first[i];
        match state.kind {
            OptimKind::SgdMomentum { momentum } => {
                for ((w, &gi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()) {
                    *vi = momentum * *vi + gi;
                    *w -= lr * *vi;
                }
            }
            OptimKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let v = &mut state.second[i];
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((w, &gi), mi), vi) in p
                    .value
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                    *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + epsilon);
                }
            }
        }
        p.value.ensure_finite(&format!("optimizer update of {}", p.name))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn store(v: f64, g: Option<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::full([1, 1, 1, 1], v)).unwrap();
        if let Some(g) = g {
            s.accumulate(id, &Tensor::full([1, 1, 1, 1], g)).unwrap();
        }
        s
    }

    #[test]
    fn plain_sgd() {
        let mut s = store(1.0, Some(0.5));
        let mut st = OptimState::new(OptimKind::SgdMomentum { momentum: 0.0 }, 0.1).unwrap();
        optim_step(&mut s, &mut st).unwrap();
        assert_eq!(s.flatten(), vec![1.0 - 0.1 * 0.5]);
        assert!(s.iter().all(|p| p.grad.is_none()));
    }

    #[test]
    fn adam_first_step_oracle() {
        // Scalar Adam by hand: m1 = (1-b1) g, v1 = (1-b2) g², bias-corrected
        // ratio is g/|g|, so the step is lr·sign(g) up to epsilon.
        let (lr, b1, b2, eps, g) = (0.01, 0.9, 0.999, 1e-8, -3.0f64);
        let m = (1.0 - b1) * g / (1.0 - b1);
        let v = (1.0 - b2) * g * g / (1.0 - b2);
        let expected = 2.0 - lr * m / (v.sqrt() + eps);
        let mut s = store(2.0, Some(g));
        let kind = OptimKind::Adam {
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        };
        let mut st = OptimState::new(kind, lr).unwrap();
        optim_step(&mut s, &mut st).unwrap();
        let got = s.flatten()[0];
        assert!((got - expected).abs() < 1e-15);
        assert!((got - (2.0 + lr)).abs() < 1e-9);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn missing_gradient_errors() {
        let mut s = store(1.0, None);
        let mut st = OptimState::new(OptimKind::adam(), 0.1).unwrap();
        assert!(matches!(optim_step(&mut s, &mut st), Err(Error::MissingGradient(_))));
    }

    #[test]
    fn bad_hyperparameters() {
        assert!(OptimState::new(OptimKind::adam(), 0.0).is_err());
        assert!(OptimState::new(OptimKind::SgdMomentum { momentum: 1.5 }, 0.1).is_err());
    }
}
