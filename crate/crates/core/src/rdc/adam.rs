//! Adam optimizer over a flat parameter slice.

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of `params` with gradient `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_parameter_reference() {
        // p = 1, g = 0.5, lr = 0.1:
        // m = 0.05, v = 0.00025, m_hat = 0.5, v_hat = 0.25
        // step = 0.1 * 0.5 / (0.5 + 1e-8)
        let mut opt = Adam::new(1, 0.1, 0.9, 0.999, 1e-8);
        let mut p = [1.0];
        opt.step(&mut p, &[0.5]);
        let expect = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15);
        // second step with g = -0.25
        // m = 0.9*0.05 - 0.025 = 0.02, v = 0.999*0.00025 + 0.001*0.0625
        opt.step(&mut p, &[-0.25]);
        let m_hat = 0.02 / (1.0 - 0.81);
        let v_hat = (0.999 * 0.00025 + 0.001 * 0.0625) / (1.0 - 0.999f64 * 0.999);
        let expect2 = expect - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p[0] - expect2).abs() < 1e-15);
        assert_eq!(opt.steps(), 2);
    }
}
