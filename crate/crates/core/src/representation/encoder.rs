use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, EPS};

/// Feed-forward encoder: affine layers with `tanh` between them, followed by
/// L2 normalization of the final affine output.
///
/// Parameters live in one flat vector, layer by layer, each layer storing its
/// `out × in` weights (row-major) followed by its `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    widths: Vec<usize>,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer; entry 0 is the raw input.
    inputs: Vec<Vec<f64>>,
    /// Final affine output before normalization.
    pre_norm: Vec<f64>,
    /// Unit-norm embedding.
    pub output: Vec<f64>,
}

impl Encoder {
    /// Glorot-uniform weights and zero biases drawn from `rng`.
    pub fn new(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("encoder needs at least input and output widths, all positive"));
        }
        let mut params = Vec::new();
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { widths: widths.to_vec(), params })
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Self> {
        let expected: usize = widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        if widths.len() < 2 || params.len() != expected {
            return Err(Error::Shape(format!("expected {expected} parameters, got {}", params.len())));
        }
        Ok(Self { widths: widths.to_vec(), params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// `true` for weight entries, `false` for biases.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.params.len());
        for pair in self.widths.windows(2) {
            mask.extend(std::iter::repeat_n(true, pair[0] * pair[1]));
            mask.extend(std::iter::repeat_n(false, pair[1]));
        }
        mask
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.widths.windows(2).map(move |pair| {
            let start = offset;
            offset += pair[0] * pair[1] + pair[1];
            (start, pair[0], pair[1])
        })
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "encoder expects input dimension {}, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let layers = self.widths.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut h = input.to_vec();
        let mut pre_norm = Vec::new();
        for (l, (start, fan_in, fan_out)) in self.layer_offsets().enumerate() {
            let w = &self.params[start..start + fan_in * fan_out];
            let b = &self.params[start + fan_in * fan_out..start + fan_in * fan_out + fan_out];
            let mut a: Vec<f64> = (0..fan_out).map(|o| dot(&w[o * fan_in..(o + 1) * fan_in], &h) + b[o]).collect();
            if l + 1 < layers {
                a.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut h, a));
        }
        std::mem::swap(&mut pre_norm, &mut h);
        let n = norm(&pre_norm).max(EPS);
        let output = pre_norm.iter().map(|v| v / n).collect();
        Ok(ForwardCache { inputs, pre_norm, output })
    }

    pub fn encode(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.output)
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂x` for the normalized output.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        // through x = o / max(|o|, eps)
        let n = norm(&cache.pre_norm);
        let mut delta: Vec<f64> = if n > EPS {
            let proj = dot(&cache.output, grad_output);
            grad_output.iter().zip(&cache.output).map(|(g, x)| (g - x * proj) / n).collect()
        } else {
            grad_output.iter().map(|g| g / EPS).collect()
        };
        let offsets: Vec<_> = self.layer_offsets().collect();
        for (l, &(start, fan_in, fan_out)) in offsets.iter().enumerate().rev() {
            let h = &cache.inputs[l];
            let w = &self.params[start..start + fan_in * fan_out];
            {
                let (gw, gb) = grad[start..start + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let d = delta[o];
                    gb[o] += d;
                    for (gwi, hi) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(h) {
                        *gwi += d * hi;
                    }
                }
            }
            if l > 0 {
                // h = tanh(a) for every hidden layer input
                delta = (0..fan_in)
                    .map(|i| {
                        let back: f64 = (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum();
                        back * (1.0 - h[i] * h[i])
                    })
                    .collect();
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
    fn output_is_unit_norm_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::new(&[5, 7, 3], &mut rng).unwrap();
        let enc2 = Encoder::new(&[5, 7, 3], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let out = enc.encode(&x).unwrap();
            assert!((norm(&out) - 1.0).abs() < 1e-12);
            assert_eq!(out, enc2.encode(&x).unwrap());
        }
    }

    #[test]
    fn zero_activation_is_guarded() {
        let enc = Encoder::from_params(&[2, 2], vec![0.0; 6]).unwrap();
        let out = enc.encode(&[1.0, -1.0]).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let enc = Encoder::new(&[3, 2], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(enc.encode(&[1.0, 2.0]).is_err());
        assert!(Encoder::from_params(&[3, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = Encoder::new(&[4, 6, 5, 3], &mut rng).unwrap();
        let input: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |e: &Encoder| dot(&e.encode(&input).unwrap(), &probe);
        let cache = enc.forward(&input).unwrap();
        let mut grad = vec![0.0; enc.param_count()];
        enc.backward(&cache, &probe, &mut grad);
        let h = 1e-5;
        let mut numeric = Vec::new();
        for k in 0..enc.param_count() {
            let mut plus = enc.clone();
            plus.params_mut()[k] += h;
            let mut minus = enc.clone();
            minus.params_mut()[k] -= h;
            numeric.push((objective(&plus) - objective(&minus)) / (2.0 * h));
        }
        let diff: f64 = grad.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(diff / norm(&numeric).max(norm(&grad)) < 1e-6);
    }

    #[test]
    fn weight_mask_layout() {
        let enc = Encoder::new(&[2, 3, 1], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mask = enc.weight_mask();
        assert_eq!(mask.len(), enc.param_count());
        assert_eq!(mask.iter().filter(|&&m| m).count(), 2 * 3 + 3);
        assert!(!mask[6] && !mask[8] && mask[9]);
    }
}
