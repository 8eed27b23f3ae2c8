//! Minimal feedforward-network engine: tanh hidden layers, linear output,
//! exact reverse-mode gradients with respect to weights and inputs, and Adam.
//!
//! The topology is static (a list of layer widths), so gradients are computed
//! by explicit backprop over cached activations rather than a general tape.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};

/// A fully-connected network with tanh hidden activations and a linear output
/// layer. `weights[l]` has shape `dims[l+1] x dims[l]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Activations recorded by [`DenseNet::forward_cached`], consumed by backprop.
///
/// `acts[0]` is the input; `acts[l]` for hidden layers holds post-tanh values;
/// the final entry is the linear output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds at least the input")
    }
}

/// Reverse-mode partials matching the parameter layout of a [`DenseNet`].
#[derive(Debug, Clone)]
pub struct NetGradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Partials with respect to the input vector, present iff requested.
    pub input: Option<Vec<f64>>,
}

impl NetGradient {
    pub fn zeros_like(net: &DenseNet) -> Self {
        NetGradient {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            input: None,
        }
    }

    pub fn add_assign(&mut self, other: &NetGradient) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            for x in w {
                *x *= s;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().all(|v| v.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }
}

impl DenseNet {
    /// Builds a network with Xavier-uniform weights: U[-a, a] with
    /// a = sqrt(6 / (fan_in + fan_out)). Biases start at zero.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        Self::validate_dims(dims)?;
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(DenseNet {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    /// All-zero weights and biases; useful for closed-form checks.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::validate_dims(dims)?;
        let weights = (0..dims.len() - 1).map(|l| vec![0.0; dims[l] * dims[l + 1]]).collect();
        let biases = (0..dims.len() - 1).map(|l| vec![0.0; dims[l + 1]]).collect();
        Ok(DenseNet {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn from_parts(dims: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        Self::validate_dims(&dims)?;
        if weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::shape(
                format!("{} layers", dims.len() - 1),
                format!("{} weight, {} bias blocks", weights.len(), biases.len()),
            ));
        }
        for l in 0..dims.len() - 1 {
            if weights[l].len() != dims[l] * dims[l + 1] || biases[l].len() != dims[l + 1] {
                return Err(Error::shape(
                    format!("layer {l}: {}x{} weights", dims[l + 1], dims[l]),
                    format!("{} weights, {} biases", weights[l].len(), biases[l].len()),
                ));
            }
        }
        Ok(DenseNet { dims, weights, biases })
    }

    fn validate_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter(format!(
                "layer dims must have >= 2 positive entries, got {dims:?}"
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().all(|v| v.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    fn affine(&self, l: usize, input: &[f64], out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
        let w = &self.weights[l];
        out.clear();
        out.reserve(n_out);
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            out.push(crate::matrix::dot(row, input) + self.biases[l][o]);
        }
    }

    /// Plain forward pass: tanh on hidden layers, no output activation.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.acts.pop().unwrap())
    }

    /// Forward pass that records per-layer activations for backprop.
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.dims[0] {
            return Err(Error::shape(
                format!("input of length {}", self.dims[0]),
                format!("{}", input.len()),
            ));
        }
        let num_layers = self.dims.len() - 1;
        let mut acts = Vec::with_capacity(num_layers + 1);
        acts.push(input.to_vec());
        let mut buf = Vec::new();
        for l in 0..num_layers {
            self.affine(l, acts.last().unwrap(), &mut buf);
            if l + 1 < num_layers {
                for v in &mut buf {
                    *v = v.tanh();
                }
            }
            acts.push(buf.clone());
        }
        Ok(ForwardCache { acts })
    }

    /// Exact reverse-mode partials of `<output, cotangent>` with respect to
    /// every weight and bias and, when `want_input_grad`, the input.
    pub fn backward(&self, cache: &ForwardCache, cotangent: &[f64], want_input_grad: bool) -> Result<NetGradient> {
        if cotangent.len() != self.output_dim() {
            return Err(Error::shape(
                format!("cotangent of length {}", self.output_dim()),
                format!("{}", cotangent.len()),
            ));
        }
        let num_layers = self.dims.len() - 1;
        let mut grad = NetGradient::zeros_like(self);
        let mut delta = cotangent.to_vec();
        for l in (0..num_layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let a_prev = &cache.acts[l];
            let gw = &mut grad.weights[l];
            for o in 0..n_out {
                let d = delta[o];
                grad.biases[l][o] = d;
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(a_prev) {
                    *g = d * a;
                }
            }
            if l > 0 || want_input_grad {
                let mut prev = vec![0.0; n_in];
                let w = &self.weights[l];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (p, wv) in prev.iter_mut().zip(row) {
                        *p += d * wv;
                    }
                }
                if l > 0 {
                    // Crossing the tanh of layer l-1: a_prev holds tanh values.
                    for (p, a) in prev.iter_mut().zip(a_prev) {
                        *p *= 1.0 - a * a;
                    }
                }
                if l == 0 {
                    grad.input = Some(prev);
                } else {
                    delta = prev;
                }
            }
        }
        Ok(grad)
    }

    /// Input-only gradient of `<output, cotangent>`: same chain as
    /// [`DenseNet::backward`] without allocating weight buffers. This is the
    /// hot path of misreport ascent.
    pub fn input_gradient(&self, cache: &ForwardCache, cotangent: &[f64]) -> Vec<f64> {
        let num_layers = self.dims.len() - 1;
        let mut delta = cotangent.to_vec();
        for l in (0..num_layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                let row = &w[o * n_in..(o + 1) * n_in];
                for (p, wv) in prev.iter_mut().zip(row) {
                    *p += d * wv;
                }
            }
            if l > 0 {
                let a_prev = &cache.acts[l];
                for (p, a) in prev.iter_mut().zip(a_prev) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
        delta
    }

    /// Writes the checkpoint format: a `densenet 1` header, the layer dims,
    /// then per layer the row-major weights (one output row per line) and the
    /// bias vector. Floats use Rust's shortest round-trip representation.
    pub fn write_checkpoint<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "densenet 1")?;
        write!(out, "dims")?;
        for d in &self.dims {
            write!(out, " {d}")?;
        }
        writeln!(out)?;
        for l in 0..self.dims.len() - 1 {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            writeln!(out, "weights {l}")?;
            for o in 0..n_out {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
            writeln!(out, "biases {l}")?;
            let line: Vec<String> = self.biases[l].iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: &mut R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next_line = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of checkpoint, expected {what}")))?
                .map_err(Error::Io)
        };
        let header = next_line("header")?;
        if header.trim() != "densenet 1" {
            return Err(Error::Parse(format!("bad densenet header: {header:?}")));
        }
        let dims_line = next_line("dims")?;
        let mut parts = dims_line.split_whitespace();
        if parts.next() != Some("dims") {
            return Err(Error::Parse("expected dims line".into()));
        }
        let dims: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| Error::Parse(format!("bad dim {p:?}"))))
            .collect::<Result<_>>()?;
        Self::validate_dims(&dims)?;
        let parse_floats = |line: &str| -> Result<Vec<f64>> {
            line.split_whitespace()
                .map(|p| p.parse().map_err(|_| Error::Parse(format!("bad float {p:?}"))))
                .collect()
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let tag = next_line("weights tag")?;
            if tag.trim() != format!("weights {l}") {
                return Err(Error::Parse(format!("expected 'weights {l}', got {tag:?}")));
            }
            let mut w = Vec::with_capacity(dims[l] * dims[l + 1]);
            for _ in 0..dims[l + 1] {
                let row = parse_floats(&next_line("weight row")?)?;
                if row.len() != dims[l] {
                    return Err(Error::Parse(format!(
                        "layer {l} weight row has {} entries, expected {}",
                        row.len(),
                        dims[l]
                    )));
                }
                w.extend(row);
            }
            weights.push(w);
            let tag = next_line("biases tag")?;
            if tag.trim() != format!("biases {l}") {
                return Err(Error::Parse(format!("expected 'biases {l}', got {tag:?}")));
            }
            let b = parse_floats(&next_line("bias row")?)?;
            if b.len() != dims[l + 1] {
                return Err(Error::Parse(format!("layer {l} bias has wrong length")));
            }
            biases.push(b);
        }
        DenseNet::from_parts(dims, weights, biases)
    }
}

/// In-place Adam update on one flat parameter block.
#[allow(clippy::too_many_arguments)]
fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam state whose moment buffers mirror a [`DenseNet`]'s parameter shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &DenseNet, learning_rate: f64) -> Self {
        AdamState {
            m_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam step on the network's parameters.
    pub fn step(&mut self, net: &mut DenseNet, grad: &NetGradient) -> Result<()> {
        if grad.weights.len() != net.weights.len()
            || grad
                .weights
                .iter()
                .zip(&net.weights)
                .any(|(g, w)| g.len() != w.len())
        {
            return Err(Error::shape("gradient matching net parameters".into(), "mismatched gradient".into()));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("adam gradient".into()));
        }
        self.step_count += 1;
        let t = self.step_count;
        for l in 0..net.weights.len() {
            adam_update(
                &mut net.weights[l],
                &grad.weights[l],
                &mut self.m_w[l],
                &mut self.v_w[l],
                t,
                self.learning_rate,
                self.beta1,
                self.beta2,
                self.epsilon,
            );
            adam_update(
                &mut net.biases[l],
                &grad.biases[l],
                &mut self.m_b[l],
                &mut self.v_b[l],
                t,
                self.learning_rate,
                self.beta1,
                self.beta2,
                self.epsilon,
            );
        }
        if !net.is_finite() {
            return Err(Error::NonFinite("network parameters after adam step".into()));
        }
        Ok(())
    }
}

/// Adam over a single flat vector, used for misreport ascent.
#[derive(Debug, Clone)]
pub struct AdamVec {
    m: Vec<f64>,
    v: Vec<f64>,
    step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamVec {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        AdamVec {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Ascent step: moves `params` along the gradient.
    pub fn ascend(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step_count += 1;
        let t = self.step_count;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] += self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_net_maps_to_zero() {
        let net = DenseNet::zeros(&[3, 4, 2]).unwrap();
        let out = net.forward(&[0.1, -0.5, 2.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let net = DenseNet::from_parts(
            vec![2, 2],
            vec![vec![1.0, 0.0, 0.0, 1.0]],
            vec![vec![0.0, 0.0]],
        )
        .unwrap();
        let out = net.forward(&[0.3, 0.7]).unwrap();
        assert_eq!(out, vec![0.3, 0.7]);
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        // Independent straight-line evaluation of a 2-4-2 net.
        let mut r = rng(42);
        let net = DenseNet::new(&[2, 4, 2], &mut r).unwrap();
        let input = [0.5, 0.5];
        let out = net.forward(&input).unwrap();

        let mut hidden = [0.0; 4];
        for o in 0..4 {
            let mut z = net.biases[0][o];
            for i in 0..2 {
                z += net.weights[0][o * 2 + i] * input[i];
            }
            hidden[o] = z.tanh();
        }
        for o in 0..2 {
            let mut z = net.biases[1][o];
            for i in 0..4 {
                z += net.weights[1][o * 4 + i] * hidden[i];
            }
            assert!((out[o] - z).abs() < 1e-15, "output {o}: {} vs {z}", out[o]);
        }
    }

    #[test]
    fn forward_rejects_bad_input_shape() {
        let net = DenseNet::zeros(&[3, 2]).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut r = rng(7);
        let net = DenseNet::new(&[3, 5, 2], &mut r).unwrap();
        let a = net.forward(&[0.2, 0.4, 0.9]).unwrap();
        let b = net.forward(&[0.2, 0.4, 0.9]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let mut r = rng(3);
        let net = DenseNet::new(&[2, 3, 2], &mut r).unwrap();
        let cache = net.forward_cached(&[0.4, 0.6]).unwrap();
        let grad = net.backward(&cache, &[0.0, 0.0], true).unwrap();
        assert!(grad.weights.iter().flatten().all(|&g| g == 0.0));
        assert!(grad.biases.iter().flatten().all(|&g| g == 0.0));
        assert!(grad.input.unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_linear_neuron_gradients() {
        // y = w . x with w = (0.3, -0.8), x = (0.5, 0.25); dy/dw = x, dy/dx = w.
        let net = DenseNet::from_parts(vec![2, 1], vec![vec![0.3, -0.8]], vec![vec![0.0]]).unwrap();
        let cache = net.forward_cached(&[0.5, 0.25]).unwrap();
        let grad = net.backward(&cache, &[1.0], true).unwrap();
        assert_eq!(grad.weights[0], vec![0.5, 0.25]);
        assert_eq!(grad.biases[0], vec![1.0]);
        assert_eq!(grad.input.unwrap(), vec![0.3, -0.8]);
    }

    /// Central finite difference of `<forward(x), cot>` in one scalar slot.
    fn fd_scalar(mut eval: impl FnMut(f64) -> f64, at: f64) -> f64 {
        let h = 1e-5;
        (eval(at + h) - eval(at - h)) / (2.0 * h)
    }

    fn check_close(analytic: f64, numeric: f64) {
        let denom = analytic.abs().max(numeric.abs()).max(1e-3);
        assert!(
            (analytic - numeric).abs() / denom < 1e-4,
            "analytic {analytic} vs numeric {numeric}"
        );
    }

    #[test]
    fn backward_matches_finite_differences_on_100_random_nets() {
        let mut r = rng(1234);
        for trial in 0..100 {
            let dims = vec![
                1 + (trial % 3),
                2 + (trial % 4),
                1 + ((trial / 3) % 3),
            ];
            let net = DenseNet::new(&dims, &mut r).unwrap();
            let input: Vec<f64> = (0..dims[0]).map(|_| r.random_range(-1.0..1.0)).collect();
            let cot: Vec<f64> = (0..*dims.last().unwrap()).map(|_| r.random_range(-1.0..1.0)).collect();
            let cache = net.forward_cached(&input).unwrap();
            let grad = net.backward(&cache, &cot, true).unwrap();

            let objective = |n: &DenseNet, x: &[f64]| -> f64 {
                crate::matrix::dot(&n.forward(x).unwrap(), &cot)
            };
            for l in 0..dims.len() - 1 {
                for k in 0..net.weights[l].len() {
                    let base = net.weights[l][k];
                    let num = fd_scalar(
                        |v| {
                            let mut n2 = net.clone();
                            n2.weights[l][k] = v;
                            objective(&n2, &input)
                        },
                        base,
                    );
                    check_close(grad.weights[l][k], num);
                }
                for k in 0..net.biases[l].len() {
                    let base = net.biases[l][k];
                    let num = fd_scalar(
                        |v| {
                            let mut n2 = net.clone();
                            n2.biases[l][k] = v;
                            objective(&n2, &input)
                        },
                        base,
                    );
                    check_close(grad.biases[l][k], num);
                }
            }
            let gin = grad.input.as_ref().unwrap();
            for k in 0..input.len() {
                let num = fd_scalar(
                    |v| {
                        let mut x2 = input.clone();
                        x2[k] = v;
                        objective(&net, &x2)
                    },
                    input[k],
                );
                check_close(gin[k], num);
            }
            let gin2 = net.input_gradient(&cache, &cot);
            for (a, b) in gin.iter().zip(&gin2) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut r = rng(9);
        let net = DenseNet::new(&[2, 3, 1], &mut r).unwrap();
        let mut updated = net.clone();
        let mut state = AdamState::new(&net, 0.1);
        let grad = NetGradient::zeros_like(&net);
        state.step(&mut updated, &grad).unwrap();
        assert_eq!(net, updated);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_scalar_first_step_hand_evaluated() {
        // param 0, grad 1, lr 0.1: after bias correction m_hat = 1, v_hat = 1,
        // so the step is -0.1 / (1 + eps).
        let mut net = DenseNet::from_parts(vec![1, 1], vec![vec![0.0]], vec![vec![0.0]]).unwrap();
        let mut state = AdamState::new(&net, 0.1);
        let grad = NetGradient {
            weights: vec![vec![1.0]],
            biases: vec![vec![0.0]],
            input: None,
        };
        state.step(&mut net, &grad).unwrap();
        assert!((net.weights[0][0] + 0.1).abs() < 1e-6, "got {}", net.weights[0][0]);
    }

    #[test]
    fn adam_two_steps_move_against_gradient() {
        let mut net = DenseNet::from_parts(vec![1, 1], vec![vec![0.0]], vec![vec![0.0]]).unwrap();
        let mut state = AdamState::new(&net, 0.1);
        let grad = NetGradient {
            weights: vec![vec![1.0]],
            biases: vec![vec![0.0]],
            input: None,
        };
        state.step(&mut net, &grad).unwrap();
        let after_one = net.weights[0][0];
        state.step(&mut net, &grad).unwrap();
        assert_eq!(state.step_count(), 2);
        assert!(net.weights[0][0] < after_one && after_one < 0.0);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut net = DenseNet::zeros(&[1, 1]).unwrap();
        let mut state = AdamState::new(&net, 0.1);
        let grad = NetGradient {
            weights: vec![vec![f64::NAN]],
            biases: vec![vec![0.0]],
            input: None,
        };
        assert!(state.step(&mut net, &grad).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut r = rng(5);
        let net = DenseNet::new(&[3, 7, 2], &mut r).unwrap();
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        let restored = DenseNet::read_checkpoint(&mut std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(net, restored);
    }
}
