use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Fully connected network with tanh hidden layers and a linear output.
///
/// Parameters are stored flat, layer by layer: the weight matrix
/// (`out x in`, row-major) followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation values of every layer, input first.
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an output layer")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// LeCun-normal weights, zero biases; the output layer is scaled by
    /// `output_scale` (zero gives a constant-zero initial output).
    pub fn new<R: Rng>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output layers");
        let mut params = Vec::with_capacity(param_count(sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale =
                (1.0 / fan_in as f64).sqrt() * if l + 1 == layers { output_scale } else { 1.0 };
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(rng);
                params.push(scale * z);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && param_count(&sizes) == params.len()).then_some(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layer(x: &[f64], w: &[f64], b: &[f64], out: &mut Vec<f64>, hidden: bool) {
        let n_in = x.len();
        out.clear();
        for (o, bias) in b.iter().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            let z = bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            out.push(if hidden { z.tanh() } else { z });
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let layers = self.sizes.len() - 1;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let nw = w[0] * w[1];
            let weights = &self.params[offset..offset + nw];
            let bias = &self.params[offset + nw..offset + nw + w[1]];
            Self::layer(&cur, weights, bias, &mut next, l + 1 < layers);
            std::mem::swap(&mut cur, &mut next);
            offset += nw + w[1];
        }
        cur
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(x.to_vec());
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let nw = w[0] * w[1];
            let weights = &self.params[offset..offset + nw];
            let bias = &self.params[offset + nw..offset + nw + w[1]];
            let mut out = Vec::with_capacity(w[1]);
            Self::layer(
                activations.last().unwrap(),
                weights,
                bias,
                &mut out,
                l + 1 < layers,
            );
            activations.push(out);
            offset += nw + w[1];
        }
        Trace { activations }
    }

    /// Accumulates `d(loss)/d(params)` into `grad`, given `d(loss)/d(output)`.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut delta = grad_output.to_vec();
        let mut offset = self.params.len();
        for l in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            offset -= n_in * n_out + n_out;
            let input = &trace.activations[l];
            let (gw, gb) = grad[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let w = &self.params[offset..offset + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 5, 4, 2], 1.0, &mut rng);
        let x = [0.3, -0.7, 1.2];
        let w = [0.8, -1.3];
        let loss = |n: &Mlp| {
            n.forward(&x)
                .iter()
                .zip(&w)
                .map(|(o, c)| o * c)
                .sum::<f64>()
        };
        let mut grad = vec![0.0; net.num_params()];
        net.backward(&net.forward_trace(&x), &w, &mut grad);
        let h = 1e-6;
        for k in 0..net.num_params() {
            let mut p = net.clone();
            p.params_mut()[k] += h;
            let mut m = net.clone();
            m.params_mut()[k] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!(
                (fd - grad[k]).abs() < 1e-8,
                "param {k}: {fd} vs {}",
                grad[k]
            );
        }
    }

    #[test]
    fn zero_output_scale_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[4, 8, 8, 1], 0.0, &mut rng);
        assert_eq!(net.forward(&[1.0, 2.0, 3.0, 4.0]), vec![0.0]);
        assert_eq!(net.forward_trace(&[1.0, 2.0, 3.0, 4.0]).output(), &[0.0]);
    }
}
