use crate::Real;
use rand::Rng;

/// Fully connected layer, weights stored row-major `[rows][cols]`.
pub struct Layer<T: Real> {
    pub w: Vec<T>,
    pub b: Vec<T>,
    pub rows: usize,
    pub cols: usize,
}

/// `out += s * x`, unit stride on both sides.
fn axpy<T: Real>(out: &mut [T], s: T, x: &[T]) {
    for (o, &xi) in out.iter_mut().zip(x) {
        *o += s * xi;
    }
}

/// Dot product with sixteen independent accumulators so LLVM can vectorize
/// the reduction without reassociating a single serial chain.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 16];
    let mut ai = a.chunks_exact(16);
    let mut bi = b.chunks_exact(16);
    for (ca, cb) in (&mut ai).zip(&mut bi) {
        for k in 0..16 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ai.remainder().iter().zip(bi.remainder()) {
        tail += x * y;
    }
    let mut s = [T::zero(); 8];
    for k in 0..8 {
        s[k] = acc[k] + acc[k + 8];
    }
    let s01 = s[0] + s[1];
    let s23 = s[2] + s[3];
    let s45 = s[4] + s[5];
    let s67 = s[6] + s[7];
    ((s01 + s23) + (s45 + s67)) + tail
}

/// ReLU-activated MLP with an identity output layer.
pub struct Mlp<T: Real> {
    pub layers: Vec<Layer<T>>,
}

/// Per-call activation storage so forward/backward never allocate.
pub struct MlpScratch<T: Real> {
    /// Post-activation values per layer; the last entry is the output.
    pub a: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

/// Gradient accumulator with the same shapes as [`Mlp`].
pub struct MlpGrads<T: Real> {
    pub w: Vec<Vec<T>>,
    pub b: Vec<Vec<T>>,
}

impl<T: Real> Mlp<T> {
    /// Kaiming-uniform hidden layers; the output layer starts at exactly zero
    /// so fresh networks predict zero logits / zero radiance.
    pub fn new(input: usize, hidden: &[usize], output: usize, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::new();
        let mut cols = input;
        for (i, &rows) in hidden.iter().chain(std::iter::once(&output)).enumerate() {
            let last = i == hidden.len();
            let bound = (6.0 / cols as f64).sqrt();
            let w = (0..rows * cols)
                .map(|_| {
                    if last {
                        T::zero()
                    } else {
                        T::of(rng.gen_range(-bound..bound))
                    }
                })
                .collect();
            layers.push(Layer {
                w,
                b: vec![T::zero(); rows],
                rows,
                cols,
            });
            cols = rows;
        }
        Mlp { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().rows
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn scratch(&self) -> MlpScratch<T> {
        let widest = self.layers.iter().map(|l| l.rows.max(l.cols)).max().unwrap();
        MlpScratch {
            a: self.layers.iter().map(|l| vec![T::zero(); l.rows]).collect(),
            delta: vec![T::zero(); widest],
            delta_prev: vec![T::zero(); widest],
        }
    }

    pub fn grads(&self) -> MlpGrads<T> {
        MlpGrads {
            w: self.layers.iter().map(|l| vec![T::zero(); l.w.len()]).collect(),
            b: self.layers.iter().map(|l| vec![T::zero(); l.rows]).collect(),
        }
    }

    /// Runs the network; the returned slice aliases `scratch.a.last()`.
    pub fn forward<'s>(&self, x: &[T], scratch: &'s mut MlpScratch<T>) -> &'s [T] {
        assert_eq!(x.len(), self.input_width());
        let n = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = scratch.a.split_at_mut(l);
            let src: &[T] = if l == 0 { x } else { &prev[l - 1] };
            let dst = &mut rest[0];
            // Four rows per pass: independent accumulator chains hide the
            // FMA latency that a single row-at-a-time dot cannot.
            let cols = layer.cols;
            let mut r = 0;
            while r + 4 <= layer.rows {
                let w0 = &layer.w[r * cols..(r + 1) * cols];
                let w1 = &layer.w[(r + 1) * cols..(r + 2) * cols];
                let w2 = &layer.w[(r + 2) * cols..(r + 3) * cols];
                let w3 = &layer.w[(r + 3) * cols..(r + 4) * cols];
                let mut a0 = [T::zero(); 16];
                let mut a1 = [T::zero(); 16];
                let mut a2 = [T::zero(); 16];
                let mut a3 = [T::zero(); 16];
                let mut i0 = w0.chunks_exact(16);
                let mut i1 = w1.chunks_exact(16);
                let mut i2 = w2.chunks_exact(16);
                let mut i3 = w3.chunks_exact(16);
                let mut ix = src.chunks_exact(16);
                for ((((c0, c1), c2), c3), cx) in
                    (&mut i0).zip(&mut i1).zip(&mut i2).zip(&mut i3).zip(&mut ix)
                {
                    for k in 0..16 {
                        let xv = cx[k];
                        a0[k] += c0[k] * xv;
                        a1[k] += c1[k] * xv;
                        a2[k] += c2[k] * xv;
                        a3[k] += c3[k] * xv;
                    }
                }
                let reduce = |a: &[T; 16]| {
                    let mut s = [T::zero(); 8];
                    for k in 0..8 {
                        s[k] = a[k] + a[k + 8];
                    }
                    ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]))
                };
                let mut sums = [reduce(&a0), reduce(&a1), reduce(&a2), reduce(&a3)];
                let xt = ix.remainder();
                for (i, wt) in [i0.remainder(), i1.remainder(), i2.remainder(), i3.remainder()]
                    .into_iter()
                    .enumerate()
                {
                    for (&w, &x) in wt.iter().zip(xt) {
                        sums[i] += w * x;
                    }
                }
                for (i, &s) in sums.iter().enumerate() {
                    let mut v = s + layer.b[r + i];
                    if l + 1 < n && v < T::zero() {
                        v = T::zero();
                    }
                    dst[r + i] = v;
                }
                r += 4;
            }
            while r < layer.rows {
                let row = &layer.w[r * cols..(r + 1) * cols];
                let mut v = layer.b[r] + dot(row, src);
                if l + 1 < n && v < T::zero() {
                    v = T::zero();
                }
                dst[r] = v;
                r += 1;
            }
        }
        scratch.a.last().unwrap()
    }

    /// Backpropagates `d_out` (gradient at the identity output), accumulating
    /// parameter gradients into `grads` and, if requested, the gradient with
    /// respect to `x` into `d_input` (accumulated, not overwritten).
    /// `scratch` must hold activations from a matching `forward` call.
    pub fn backward(
        &self,
        x: &[T],
        scratch: &mut MlpScratch<T>,
        d_out: &[T],
        grads: &mut MlpGrads<T>,
        mut d_input: Option<&mut [T]>,
    ) {
        let n = self.layers.len();
        assert_eq!(d_out.len(), self.output_width());
        scratch.delta[..d_out.len()].copy_from_slice(d_out);
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let a_prev: &[T] = if l == 0 { x } else { &scratch.a[l - 1] };
            let want_dprev = l > 0 || d_input.is_some();
            if want_dprev {
                scratch.delta_prev[..layer.cols].fill(T::zero());
            }
            for r in 0..layer.rows {
                let d = scratch.delta[r];
                grads.b[l][r] += d;
                let wrow = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                axpy(&mut grads.w[l][r * layer.cols..(r + 1) * layer.cols], d, a_prev);
                if want_dprev {
                    axpy(&mut scratch.delta_prev[..layer.cols], d, wrow);
                }
            }
            if l > 0 {
                // ReLU derivative: the stored activation is zero exactly
                // where the unit was clamped.
                for (dp, &a) in scratch.delta_prev[..layer.cols].iter_mut().zip(a_prev) {
                    if a <= T::zero() {
                        *dp = T::zero();
                    }
                }
                std::mem::swap(&mut scratch.delta, &mut scratch.delta_prev);
            } else if let Some(di) = d_input.as_deref_mut() {
                axpy(di, T::one(), &scratch.delta_prev[..layer.cols]);
            }
        }
    }
}

impl<T: Real> MlpGrads<T> {
    pub fn clear(&mut self) {
        for w in &mut self.w {
            w.fill(T::zero());
        }
        for b in &mut self.b {
            b.fill(T::zero());
        }
    }

    pub fn add_scaled(&mut self, other: &MlpGrads<T>, s: T) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            axpy(a, s, b);
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            axpy(a, s, b);
        }
    }
}
