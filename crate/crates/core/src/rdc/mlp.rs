//! Dense ReLU network with hand-written backpropagation.
//!
//! Parameters live in one flat vector, layer by layer, each layer as its
//! row-major `out x in` weight matrix followed by its bias. Gradients use the
//! same layout, so the optimizer works on plain slices.

use rand::Rng;

use crate::par;

/// Samples per gradient shard. Shards are reduced in index order, which
/// keeps results bit-identical regardless of how many threads run them.
pub const SHARD: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer `(weights offset, bias offset)` into the flat parameter vector.
fn offsets(sizes: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut at = 0;
    for win in sizes.windows(2) {
        let (n_in, n_out) = (win[0], win[1]);
        out.push((at, at + n_in * n_out));
        at += n_in * n_out + n_out;
    }
    out
}

impl Mlp {
    /// All-zero network with the given layer widths (input first).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        }
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn he_uniform<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for (l, (w_at, b_at)) in offsets(sizes).into_iter().enumerate() {
            let limit = (6.0 / sizes[l] as f64).sqrt();
            for p in &mut net.params[w_at..b_at] {
                *p = rng.random_range(-limit..=limit);
            }
        }
        net
    }

    pub fn from_parts(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        let net = Self::zeros(sizes);
        (net.params.len() == params.len()).then(|| Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_in(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(weights, bias)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (w_at, b_at) = offsets(&self.sizes)[l];
        let n_out = self.sizes[l + 1];
        (&self.params[w_at..b_at], &self.params[b_at..b_at + n_out])
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Row-major transposes (`in x out`) of every weight matrix.
    fn transposed(&self) -> Vec<Vec<f64>> {
        (0..self.n_layers())
            .map(|l| {
                let (w, _) = self.layer(l);
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let mut t = vec![0.0; n_in * n_out];
                for o in 0..n_out {
                    for i in 0..n_in {
                        t[i * n_out + o] = w[o * n_in + i];
                    }
                }
                t
            })
            .collect()
    }

    /// Activations of every layer for `n` row-major inputs; entry 0 is the input.
    fn forward_all(&self, wt: &[Vec<f64>], x: &[f64], n: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (_, b) = self.layer(l);
            let prev = &acts[l];
            let mut z = vec![0.0; n * n_out];
            for s in 0..n {
                let zs = &mut z[s * n_out..(s + 1) * n_out];
                zs.copy_from_slice(b);
                for i in 0..n_in {
                    let xi = prev[s * n_in + i];
                    for (zo, wo) in zs.iter_mut().zip(&wt[l][i * n_out..(i + 1) * n_out]) {
                        *zo += wo * xi;
                    }
                }
            }
            if l + 1 < self.n_layers() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Raw network outputs for `n` row-major inputs.
    pub fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        assert_eq!(x.len(), n * self.n_in());
        let wt = self.transposed();
        let chunks = par::map_chunks(x, SHARD * self.n_in(), |c| {
            let m = c.len() / self.n_in();
            self.forward_all(&wt, c, m).pop().expect("output layer")
        });
        chunks.concat()
    }

    /// Squared-error sum and its gradient for one shard, with the gradient
    /// scaled by `grad_scale`.
    fn shard_grad(&self, wt: &[Vec<f64>], x: &[f64], t: &[f64], n: usize, grad_scale: f64) -> (f64, Vec<f64>) {
        let acts = self.forward_all(wt, x, n);
        let y = acts.last().expect("output layer");
        let mut sse = 0.0;
        let mut delta: Vec<f64> = y
            .iter()
            .zip(t)
            .map(|(yi, ti)| {
                let e = yi - ti;
                sse += e * e;
                2.0 * e * grad_scale
            })
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        let offs = offsets(&self.sizes);
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_at, b_at) = offs[l];
            let a_in = &acts[l];
            {
                let (gw, gb) = grad[w_at..b_at + n_out].split_at_mut(n_in * n_out);
                for s in 0..n {
                    let xs = &a_in[s * n_in..(s + 1) * n_in];
                    for o in 0..n_out {
                        let g = delta[s * n_out + o];
                        if g == 0.0 {
                            continue;
                        }
                        gb[o] += g;
                        for (gwi, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(xs) {
                            *gwi += g * xi;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; n * n_in];
            for s in 0..n {
                let ps = &mut prev[s * n_in..(s + 1) * n_in];
                for o in 0..n_out {
                    let g = delta[s * n_out + o];
                    if g == 0.0 {
                        continue;
                    }
                    for (pi, wi) in ps.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *pi += g * wi;
                    }
                }
                // ReLU derivative at the previous hidden layer
                for (pi, ai) in ps.iter_mut().zip(&a_in[s * n_in..(s + 1) * n_in]) {
                    if *ai <= 0.0 {
                        *pi = 0.0;
                    }
                }
            }
            delta = prev;
        }
        (sse, grad)
    }

    /// Mean squared error over all outputs of `n` samples and its gradient.
    pub fn loss_and_grad(&self, x: &[f64], t: &[f64], n: usize) -> (f64, Vec<f64>) {
        assert_eq!(x.len(), n * self.n_in());
        assert_eq!(t.len(), n * self.n_out());
        let denom = (n * self.n_out()) as f64;
        let wt = self.transposed();
        let (ni, no) = (self.n_in(), self.n_out());
        let n_shards = n.div_ceil(SHARD);
        let parts = par::map_range(n_shards, |s| {
            let (a, b) = (s * SHARD, ((s + 1) * SHARD).min(n));
            self.shard_grad(&wt, &x[a * ni..b * ni], &t[a * no..b * no], b - a, 1.0 / denom)
        });
        let mut sse = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (s, g) in parts {
            sse += s;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        (sse / denom, grad)
    }

    /// Mean squared error without the gradient.
    pub fn loss(&self, x: &[f64], t: &[f64], n: usize) -> f64 {
        let y = self.forward(x, n);
        let denom = (n * self.n_out()) as f64;
        // shard-wise partial sums in fixed order, mirroring loss_and_grad
        let no = self.n_out();
        let mut total = 0.0;
        for (yc, tc) in y.chunks(SHARD * no).zip(t.chunks(SHARD * no)) {
            total += yc.iter().zip(tc).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        total / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (Mlp, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut net = Mlp::he_uniform(&[4, 4, 4], &mut rng);
        // non-zero biases so every code path is exercised
        let n = net.params.len();
        for p in &mut net.params_mut()[n - 4..] {
            *p = rng.random_range(-0.5..0.5);
        }
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        (net, x, t)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (net, x, t) = fixture();
        let (_, grad) = net.loss_and_grad(&x, &t, 3);
        let h = 1e-5;
        for i in 0..net.params.len() {
            let mut p = net.clone();
            p.params[i] += h;
            let lp = p.loss(&x, &t, 3);
            p.params[i] -= 2.0 * h;
            let lm = p.loss(&x, &t, 3);
            let fd = (lp - lm) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!((fd - grad[i]).abs() / scale < 1e-4, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[64, 64, 64, 64, 64]);
        assert!(net.forward(&[1.5; 128], 2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_handles_many_shards() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::he_uniform(&[3, 5, 2], &mut rng);
        let n = SHARD * 3 + 7;
        let x: Vec<f64> = (0..n * 3).map(|i| (i as f64 * 0.37).sin()).collect();
        let all = net.forward(&x, n);
        for s in [0, SHARD, n - 1] {
            assert_eq!(&all[s * 2..s * 2 + 2], &net.forward(&x[s * 3..s * 3 + 3], 1)[..]);
        }
        let (l, _) = net.loss_and_grad(&x, &all, n);
        assert_eq!(l, 0.0);
    }

    #[test]
    fn init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::he_uniform(&[64, 64, 64], &mut rng);
        let lim = (6.0f64 / 64.0).sqrt();
        for l in 0..2 {
            let (w, b) = net.layer(l);
            assert!(w.iter().all(|v| v.abs() <= lim));
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }
}
