use crate::error::{Error, Result};

/// Adam with bias correction. Moments are sized to the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], step_count: 0 }
    }

    /// Applies one update. A non-finite gradient leaves everything untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::domain(format!(
                "gradient has {} entries, parameters {}, moments {}",
                grad.len(),
                params.len(),
                self.m.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::training(format!("non-finite gradient at parameter {i}")));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-3, 0.5, -7.0, 1e4] {
            let mut adam = Adam::new(1);
            let mut p = [2.0];
            adam.step(&mut p, &[g], 0.01).unwrap();
            assert!((p[0] - (2.0 - 0.01 * g.signum())).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut adam = Adam::new(2);
        let mut p = [1.0, -1.0];
        adam.step(&mut p, &[0.3, -0.2], 0.1).unwrap();
        let before = p;
        let (m0, v0) = (adam.m.clone(), adam.v.clone());
        adam.step(&mut p, &[0.0, 0.0], 0.1).unwrap();
        // Moments decay; parameters still move by the remaining momentum only.
        assert!((adam.m[0] - 0.9 * m0[0]).abs() < 1e-15);
        assert!((adam.v[0] - 0.999 * v0[0]).abs() < 1e-15);
        assert_ne!(p, before);

        let mut fresh = Adam::new(1);
        let mut q = [3.0];
        fresh.step(&mut q, &[0.0], 0.1).unwrap();
        assert_eq!(q, [3.0]);
        assert_eq!(fresh.step_count, 1);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut adam = Adam::new(1);
        let mut p = [1.0];
        assert!(matches!(adam.step(&mut p, &[f64::NAN], 0.1), Err(Error::Training(_))));
        assert_eq!(p, [1.0]);
        assert_eq!(adam.step_count, 0);
    }
}
