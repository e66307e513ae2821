//! Tiny fully-connected networks with fixed input encodings, hand-rolled
//! backprop, and Adam. No autodiff: the two training heads used by the
//! renderer have closed-form output gradients and everything below them is
//! plain chain rule.

mod adam;
pub mod encoding;
mod loss;
mod mlp;

pub use adam::AdamState;
pub use encoding::{EncodeInput, Encoder, EncodingConfig};
pub use loss::{log_interp_density_grad, relative_l2};
pub use mlp::{Mlp, MlpGrads, MlpScratch};

use crate::math::{fnv1a, Aabb, Vec3};
use crate::Real;
use rand::Rng;

/// Encoder + MLP + one Adam state over both the grid features and the layer
/// parameters, so the learnable encoding trains at the network's rate.
pub struct EncodedNet<T: Real> {
    pub encoder: Encoder<T>,
    pub mlp: Mlp<T>,
    adam: AdamState<T>,
}

/// Reusable buffers for one forward/backward pass through an [`EncodedNet`].
pub struct NetScratch<T: Real> {
    pub encoded: Vec<T>,
    pub mlp: MlpScratch<T>,
    d_encoded: Vec<T>,
    /// Grid-normalized position of the last encode, for the grid backward.
    grid_pos: Vec3,
    pub clamped: bool,
}

/// Gradient accumulator matching an [`EncodedNet`]'s parameters.
pub struct NetGrads<T: Real> {
    pub grid: Vec<T>,
    pub mlp: MlpGrads<T>,
}

impl<T: Real> EncodedNet<T> {
    pub fn new(
        cfg: EncodingConfig,
        bounds: Aabb,
        with_eps1: bool,
        hidden: &[usize],
        output: usize,
        lr: T,
        rng: &mut impl Rng,
    ) -> Self {
        let encoder = Encoder::new(cfg, bounds, with_eps1, rng);
        let mlp = Mlp::new(encoder.output_width(), hidden, output, rng);
        let params = encoder.grid.param_count() + mlp.param_count();
        EncodedNet {
            encoder,
            mlp,
            adam: AdamState::new(params, lr),
        }
    }

    pub fn scratch(&self) -> NetScratch<T> {
        NetScratch {
            encoded: vec![T::zero(); self.encoder.output_width()],
            mlp: self.mlp.scratch(),
            d_encoded: vec![T::zero(); self.encoder.output_width()],
            grid_pos: Vec3::ZERO,
            clamped: false,
        }
    }

    pub fn grads(&self) -> NetGrads<T> {
        NetGrads {
            grid: vec![T::zero(); self.encoder.grid.param_count()],
            mlp: self.mlp.grads(),
        }
    }

    pub fn output_width(&self) -> usize {
        self.mlp.output_width()
    }

    /// Encode + forward. Outputs alias `scratch`.
    pub fn forward<'s>(&self, input: &EncodeInput, scratch: &'s mut NetScratch<T>) -> &'s [T] {
        let (p, clamped) = self.encoder.encode(input, &mut scratch.encoded);
        scratch.grid_pos = p;
        scratch.clamped = clamped;
        self.mlp.forward(&scratch.encoded, &mut scratch.mlp)
    }

    /// Backprop from `d_out` through the MLP into both the layer gradients
    /// and the grid-feature gradients. Requires a matching prior `forward`.
    pub fn backward(&self, scratch: &mut NetScratch<T>, d_out: &[T], grads: &mut NetGrads<T>) {
        let gw = self.encoder.grid_width();
        scratch.d_encoded.fill(T::zero());
        self.mlp.backward(
            &scratch.encoded,
            &mut scratch.mlp,
            d_out,
            &mut grads.mlp,
            Some(&mut scratch.d_encoded),
        );
        self.encoder
            .grid
            .backward(scratch.grid_pos, &scratch.d_encoded[..gw], &mut grads.grid);
    }

    /// One Adam step over all parameters; asserts the result stays finite.
    pub fn apply_gradients(&mut self, grads: &NetGrads<T>) {
        self.adam.begin_step();
        let mut offset = 0;
        self.adam
            .update(offset, &mut self.encoder.grid.features, &grads.grid);
        offset += self.encoder.grid.param_count();
        for (layer, (gw, gb)) in self
            .mlp
            .layers
            .iter_mut()
            .zip(grads.mlp.w.iter().zip(&grads.mlp.b))
        {
            self.adam.update(offset, &mut layer.w, gw);
            offset += layer.w.len();
            self.adam.update(offset, &mut layer.b, gb);
            offset += layer.b.len();
        }
        assert!(
            self.params_finite(),
            "non-finite network parameter after optimizer step"
        );
    }

    pub fn train_steps(&self) -> u64 {
        self.adam.step_count()
    }

    fn params_finite(&self) -> bool {
        self.encoder.grid.features.iter().all(|x| x.is_finite())
            && self
                .mlp
                .layers
                .iter()
                .all(|l| l.w.iter().all(|x| x.is_finite()) && l.b.iter().all(|x| x.is_finite()))
    }

    /// Order-stable FNV-1a fingerprint of every parameter.
    pub fn param_hash(&self) -> u64 {
        let grid = self.encoder.grid.features.iter();
        let layers = self
            .mlp
            .layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()));
        fnv1a(grid.chain(layers).flat_map(|x| x.to_le_bytes_vec()))
    }

    pub fn param_count(&self) -> usize {
        self.encoder.grid.param_count() + self.mlp.param_count()
    }

    /// All learnable parameters flattened in the optimizer's order: grid
    /// features first, then each layer's weights and biases.
    pub fn params_to_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.encoder.grid.features);
        for l in &self.mlp.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    /// Restores parameters from [`Self::params_to_vec`]'s layout.
    pub fn set_params(&mut self, v: &[T]) {
        assert_eq!(v.len(), self.param_count(), "parameter vector length");
        let (grid, mut rest) = v.split_at(self.encoder.grid.features.len());
        self.encoder.grid.features.copy_from_slice(grid);
        for l in &mut self.mlp.layers {
            let (w, r) = rest.split_at(l.w.len());
            let (b, r) = r.split_at(l.b.len());
            l.w.copy_from_slice(w);
            l.b.copy_from_slice(b);
            rest = r;
        }
    }
}

impl<T: Real> NetGrads<T> {
    pub fn clear(&mut self) {
        self.grid.fill(T::zero());
        self.mlp.clear();
    }

    pub fn add_scaled(&mut self, other: &NetGrads<T>, s: T) {
        for (a, &b) in self.grid.iter_mut().zip(&other.grid) {
            *a += s * b;
        }
        self.mlp.add_scaled(&other.mlp, s);
    }

    /// Flattened in the same order as [`EncodedNet::params_to_vec`].
    pub fn to_vec(&self) -> Vec<T> {
        let mut out = self.grid.clone();
        for (w, b) in self.mlp.w.iter().zip(&self.mlp.b) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}
