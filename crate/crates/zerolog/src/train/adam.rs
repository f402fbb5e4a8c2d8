//! Plain Adam with bias correction. One state per parameter group; the
//! discriminator's ascent step is a descent step on the negated gradient.

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One descent step in place. Ascend by passing the negated gradient.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from a scripted run of the textbook update rule: start
    // [1.0, -0.5], lr 0.1, gradients [0.1, -0.2], [0.05, 0.15], [-0.1, 0.05].
    #[test]
    fn three_steps_match_oracle() {
        let mut p = vec![1.0, -0.5];
        let mut adam = AdamState::new(2, 0.1);
        for g in [[0.1, -0.2], [0.05, 0.15], [-0.1, 0.05]] {
            adam.step(&mut p, &g);
        }
        let want = [0.7957037520588724, -0.3968350079383798];
        for (got, want) in p.iter().zip(&want) {
            assert!((got - want).abs() < 1e-14, "{p:?}");
        }
    }

    #[test]
    fn ascent_is_descent_on_negated_gradient() {
        let mut up = vec![0.0];
        let mut down = vec![0.0];
        let mut a1 = AdamState::new(1, 0.01);
        let mut a2 = AdamState::new(1, 0.01);
        a1.step(&mut up, &[-1.0]);
        a2.step(&mut down, &[1.0]);
        assert!(up[0] > 0.0);
        assert_eq!(up[0], -down[0]);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op_on_params() {
        let mut p = vec![0.3, -0.7];
        let orig = p.clone();
        let mut adam = AdamState::new(2, 0.0);
        adam.step(&mut p, &[1.0, -2.0]);
        assert_eq!(p, orig);
    }
}
