use crate::Real;

/// Adam with bias correction over a flat parameter vector. Callers update
/// disjoint segments at fixed offsets so one state can cover a network's grid
/// features and layer weights together.
pub struct AdamState<T: Real> {
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(param_count: usize, lr: T) -> Self {
        AdamState {
            m: vec![T::zero(); param_count],
            v: vec![T::zero(); param_count],
            t: 0,
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Starts a new step; every segment updated afterwards shares the same
    /// bias-correction factors.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Applies one Adam update to `params` using `grads`, tracking moments at
    /// `offset` in the flat state. Segments must not overlap within a step.
    pub fn update(&mut self, offset: usize, params: &mut [T], grads: &[T]) {
        assert!(self.t > 0, "begin_step before update");
        assert_eq!(params.len(), grads.len());
        let t = T::of(self.t as f64);
        let c1 = T::one() - self.beta1.powf(t);
        let c2 = T::one() - self.beta2.powf(t);
        let one = T::one();
        for (k, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            let i = offset + k;
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            *p = *p - self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
