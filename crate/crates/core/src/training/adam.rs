use crate::error::{Error, Result};
use crate::params::Parameters;

/// Adam with bias correction.
///
/// ```text
/// m <- b1 m + (1 - b1) g
/// v <- b2 v + (1 - b2) g^2
/// theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    /// First moments, one buffer per parameter tensor.
    pub m: Vec<Vec<f64>>,
    /// Second moments.
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update of `params` from `grads`. Non-finite gradients abort the step
    /// before anything is modified.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let mut flat_grads: Vec<Vec<f64>> = Vec::new();
        let mut bad: Option<String> = None;
        grads.visit(&mut |name, g| {
            if bad.is_none() && g.iter().any(|x| !x.is_finite()) {
                bad = Some(name.to_owned());
            }
            flat_grads.push(g.to_vec());
        });
        if let Some(name) = bad {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        if self.m.is_empty() {
            self.m = flat_grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), flat_grads.len(), "parameter structure changed between steps");

        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut group = 0;
        params.visit_mut(&mut |_, theta| {
            let (m, v, g) = (&mut self.m[group], &mut self.v[group], &flat_grads[group]);
            for i in 0..theta.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            group += 1;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Scalars(Vec<f64>);

    impl Parameters for Scalars {
        fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
            f("theta", &self.0)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
            f("theta", &mut self.0)
        }
    }

    #[test]
    fn zero_gradient_first_step_is_identity() {
        let mut p = Scalars(vec![1.0, -2.0, 0.5]);
        let mut s = AdamState::new(0.001);
        s.step(&mut p, &Scalars(vec![0.0; 3])).unwrap();
        assert_eq!(p.0, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn hand_evaluated_first_step() {
        // m = 0.4, v = 0.016, m_hat = 4, v_hat = 16
        let expected = 1.0 - 0.001 * 4.0 / (4.0 + 1e-8);
        let mut p = Scalars(vec![1.0]);
        let mut s = AdamState::new(0.001);
        s.step(&mut p, &Scalars(vec![4.0])).unwrap();
        assert!((p.0[0] - expected).abs() < 1e-12);
        assert!((p.0[0] - 0.999).abs() < 1e-11);
    }

    #[test]
    fn zero_learning_rate_advances_state_only() {
        let mut p = Scalars(vec![3.0]);
        let mut s = AdamState::new(0.0);
        s.step(&mut p, &Scalars(vec![2.0])).unwrap();
        s.step(&mut p, &Scalars(vec![-1.0])).unwrap();
        assert_eq!(p.0, vec![3.0]);
        assert_eq!(s.t, 2);
        assert!(s.v[0][0] > 0.0);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = Scalars(vec![3.0]);
        let mut s = AdamState::new(0.1);
        let err = s.step(&mut p, &Scalars(vec![f64::NAN])).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(p.0, vec![3.0]);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = Scalars(vec![0.3, -0.2]);
            let mut s = AdamState::new(0.01);
            for k in 0..5 {
                s.step(&mut p, &Scalars(vec![k as f64 - 2.0, 0.7])).unwrap();
            }
            (p, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(sa, sb);
    }
}
