//! Small fully connected networks with batched forward and reverse passes.
//!
//! All parameters live in one flat vector, layer by layer, each layer being
//! its row-major `out × in` weight matrix followed by its bias. Batches are
//! row-major `batch × width` slices.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Unknown {
                kind: "activation",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<f64>,
}

/// Activations of every layer from one batched forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("input layer is always recorded")
    }
}

fn gemm(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize), beta: f64, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe matrices that lie inside the given slices
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// Uniform initialisation in ±1/√fan_in, the last layer in ±`out_scale`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        out_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut params = Vec::new();
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = if l + 1 == layers {
                out_scale
            } else {
                1.0 / (fan_in as f64).sqrt()
            };
            for _ in 0..fan_out * fan_in + fan_out {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            hidden,
            output,
            params,
        })
    }

    /// Network with every parameter zero.
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            hidden,
            output,
            params: vec![0.0; n],
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 2 == self.sizes.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Offsets of the weight block and bias of `layer`.
    fn offsets(&self, layer: usize) -> (usize, usize) {
        let start: usize = self.sizes[..=layer].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (start, start + self.sizes[layer] * self.sizes[layer + 1])
    }

    /// Forward pass keeping every layer's activations.
    pub fn forward_tape(&self, input: &[f64], batch: usize) -> Tape {
        assert_eq!(input.len(), batch * self.input_dim(), "input shape");
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        for l in 0..self.sizes.len() - 1 {
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let (w0, b0) = self.offsets(l);
            let w = &self.params[w0..b0];
            let b = &self.params[b0..b0 + nout];
            let mut z = Vec::with_capacity(batch * nout);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            let prev = acts.last().expect("non-empty");
            // z += prev (batch × nin) · wᵀ (nin × nout)
            gemm(batch, nin, nout, (prev, nin as isize, 1), (w, 1, nin as isize), 1.0, &mut z);
            let act = self.activation(l);
            if act != Activation::Identity {
                for v in &mut z {
                    *v = act.apply(*v);
                }
            }
            acts.push(z);
        }
        Tape { batch, acts }
    }

    pub fn forward(&self, input: &[f64], batch: usize) -> Vec<f64> {
        let mut tape = self.forward_tape(input, batch);
        tape.acts.pop().expect("output layer")
    }

    /// Reverse pass. Returns parameter gradients, laid out like the
    /// parameters, and the gradient with respect to the input batch.
    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let batch = tape.batch;
        assert_eq!(output_grad.len(), batch * self.output_dim(), "gradient shape");
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = output_grad.to_vec();
        for l in (0..self.sizes.len() - 1).rev() {
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activation(l);
            let out = &tape.acts[l + 1];
            if act != Activation::Identity {
                for (d, a) in delta.iter_mut().zip(out) {
                    *d *= act.slope(*a);
                }
            }
            let (w0, b0) = self.offsets(l);
            let prev = &tape.acts[l];
            // dW (nout × nin) = deltaᵀ (nout × batch) · prev (batch × nin)
            gemm(
                nout,
                batch,
                nin,
                (&delta, 1, nout as isize),
                (prev, nin as isize, 1),
                0.0,
                &mut grads[w0..b0],
            );
            for row in delta.chunks(nout) {
                for (g, d) in grads[b0..b0 + nout].iter_mut().zip(row) {
                    *g += d;
                }
            }
            let mut next = vec![0.0; batch * nin];
            // d prev (batch × nin) = delta (batch × nout) · W (nout × nin)
            gemm(
                batch,
                nout,
                nin,
                (&delta, nout as isize, 1),
                (&self.params[w0..b0], nin as isize, 1),
                0.0,
                &mut next,
            );
            delta = next;
        }
        (grads, delta)
    }

    /// `self ← τ·other + (1 − τ)·self`.
    pub fn soft_update(&mut self, other: &Mlp, tau: f64) {
        assert_eq!(self.sizes, other.sizes, "architectures differ");
        for (t, s) in self.params.iter_mut().zip(&other.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Text dump; every parameter is written as the hex of its IEEE bits so
    /// the round trip is exact on any platform.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "sizes {}", sizes.join(" "));
        let _ = writeln!(out, "hidden {}", self.hidden.name());
        let _ = writeln!(out, "output {}", self.output.name());
        let _ = writeln!(out, "params {}", self.params.len());
        for p in &self.params {
            let _ = writeln!(out, "{:016x}", p.to_bits());
        }
        out
    }

    /// Parses a dump from `to_text`, consuming its lines from `lines`.
    pub fn from_lines<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, context: &str) -> Result<Self> {
        let mut field = |key: &str| -> Result<(usize, &'a str)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::schema(context, 0, format!("missing `{key}`")))?;
            let rest = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| Error::schema(context, n, format!("expected `{key}`")))?;
            Ok((n, rest))
        };
        let (n, sizes) = field("sizes")?;
        let sizes: Vec<usize> = sizes
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::schema(context, n, "bad layer size")))
            .collect::<Result<_>>()?;
        let hidden = Activation::parse(field("hidden")?.1)?;
        let output = Activation::parse(field("output")?.1)?;
        let (n, count) = field("params")?;
        let count: usize = count.parse().map_err(|_| Error::schema(context, n, "bad count"))?;
        let mut net = Self::zeros(&sizes, hidden, output)?;
        if net.len() != count {
            return Err(Error::schema(context, n, "parameter count does not match layer sizes"));
        }
        for p in net.params.iter_mut() {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::schema(context, 0, "truncated parameters"))?;
            let bits = u64::from_str_radix(line.trim(), 16).map_err(|_| Error::schema(context, n, "bad parameter"))?;
            *p = f64::from_bits(bits);
        }
        if !net.is_finite() {
            return Err(Error::schema(context, 0, "non-finite parameter"));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        Self::from_lines(&mut lines, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_computed_chain() {
        // 1 -> 1 -> 1 -> 1 with weights 2, -1, 0.5 and biases 0.1, 0.2, -0.3
        let mut net = Mlp::zeros(&[1, 1, 1, 1], Activation::Tanh, Activation::Identity).unwrap();
        net.params_mut().copy_from_slice(&[2.0, 0.1, -1.0, 0.2, 0.5, -0.3]);
        let x: f64 = 0.7;
        let h1 = (2.0 * x + 0.1).tanh();
        let h2 = (-h1 + 0.2).tanh();
        let y = 0.5 * h2 - 0.3;
        assert!((net.forward(&[x], 1)[0] - y).abs() < 1e-15);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Tanh, 0.003, &mut rng).unwrap();
        let text = net.to_text();
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let back = Mlp::from_lines(&mut lines, "t").unwrap();
        assert_eq!(net, back);
    }
}
