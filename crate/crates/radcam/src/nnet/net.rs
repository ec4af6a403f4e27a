//! The compact encoder-decoder association network.
//!
//! Topology: a stride-1 stem, `stages` stride-2 down stages at C, 2C, 4C...
//! channels, a top-down path that merges 1x1 lateral projections with
//! upsample-add, two restore layers back to full resolution, and a 1x1 head
//! producing `out_channels` representation channels at input resolution.

use serde::{Deserialize, Serialize};

use super::ops::{add, conv2d, relu, upsample_nearest2x};
use super::real::Real;
use super::sgd::Parameter;
use super::tensor::Tensor;
use super::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub in_channels: usize,
    /// Width of the first stage; stage i has `base_channels << i`.
    pub base_channels: usize,
    /// Representation channels D; split in half between pins and boxes
    /// unless `shared_embedding` is set.
    pub out_channels: usize,
    pub stages: usize,
    pub weight_init_seed: u64,
    /// Extract full-D vectors for both modalities instead of half each.
    pub shared_embedding: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            in_channels: 14,
            base_channels: 16,
            out_channels: 16,
            stages: 3,
            weight_init_seed: 0,
            shared_embedding: false,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.out_channels == 0 || self.out_channels % 2 != 0 {
            return Err(NnError::Config {
                why: format!("out_channels {} must be even and nonzero", self.out_channels),
            });
        }
        if self.stages < 2 {
            return Err(NnError::Config {
                why: format!("stages {} must be >= 2", self.stages),
            });
        }
        if self.in_channels == 0 || self.base_channels == 0 {
            return Err(NnError::Config {
                why: "channel counts must be nonzero".into(),
            });
        }
        Ok(())
    }

    /// Length of one extracted representation vector.
    pub fn embedding_dim(&self) -> usize {
        if self.shared_embedding {
            self.out_channels
        } else {
            self.out_channels / 2
        }
    }
}

pub struct Network<T: Real> {
    pub config: NetworkConfig,
    pub params: Vec<Parameter<T>>,
}

impl<T: Real> Network<T> {
    /// Fresh network with He-style fan-in initialization from
    /// `config.weight_init_seed`; biases start at zero.
    pub fn new(config: NetworkConfig) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = crate::rng::Rng::new(crate::rng::seed_for(config.weight_init_seed, 0x6e65));
        let mut params = Vec::new();
        let c = config.base_channels;
        let mut push_conv = |name: &str, c_out: usize, c_in: usize, k: usize| {
            let fan_in = c_in * k * k;
            let sigma = (2.0 / fan_in as f64).sqrt();
            let w: Vec<T> = (0..c_out * c_in * k * k)
                .map(|_| T::from_f64(sigma * rng.normal()))
                .collect();
            params.push(Parameter::new(
                format!("{name}.w"),
                vec![c_out, c_in, k, k],
                w,
            ));
            params.push(Parameter::new(
                format!("{name}.b"),
                vec![c_out],
                vec![T::ZERO; c_out],
            ));
        };
        // The stem and restore layers run at full resolution and dominate
        // CPU cost; they use half width. Stage widths are C, 2C, 4C, ...
        let slim = (c / 2).max(4).min(c);
        push_conv("stem", slim, config.in_channels, 3);
        let mut ch_in = slim;
        for i in 0..config.stages {
            let ch_out = c << i;
            push_conv(&format!("down{i}"), ch_out, ch_in, 3);
            ch_in = ch_out;
        }
        push_conv("top", c, c << (config.stages - 1), 1);
        for i in (0..config.stages - 1).rev() {
            push_conv(&format!("lat{i}"), c, c << i, 1);
        }
        push_conv("restore0", slim, c, 3);
        push_conv("restore1", slim, slim, 3);
        push_conv("head", config.out_channels, slim, 1);
        debug_assert_eq!(params.len(), 4 * config.stages + 8);
        Ok(Network { config, params })
    }

    pub fn param(&self, name: &str) -> Option<&Parameter<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Graph leaves bound to the current parameter values, in `params` order.
    pub fn param_leaves(&self) -> Vec<Tensor<T>> {
        self.params
            .iter()
            .map(|p| Tensor::param(p.shape.clone(), p.value.clone()).expect("param shapes"))
            .collect()
    }

    /// Gradient-free leaves for inference.
    fn const_leaves(&self) -> Vec<Tensor<T>> {
        self.params
            .iter()
            .map(|p| Tensor::from_vec(p.shape.clone(), p.value.clone()).expect("param shapes"))
            .collect()
    }

    /// Forward pass over explicit parameter leaves (as returned by
    /// [`Network::param_leaves`]); input is [in_channels, H, W] with H and W
    /// divisible by 2^stages. Output is [out_channels, H, W].
    pub fn forward(&self, leaves: &[Tensor<T>], input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let shape = input.shape();
        if shape.len() != 3 || shape[0] != self.config.in_channels {
            return Err(NnError::ShapeMismatch {
                op: "forward",
                expected: format!("[{}, H, W]", self.config.in_channels),
                actual: format!("{shape:?}"),
            });
        }
        let div = 1 << self.config.stages;
        if shape[1] % div != 0 || shape[2] % div != 0 {
            return Err(NnError::ShapeMismatch {
                op: "forward",
                expected: format!("H, W divisible by {div}"),
                actual: format!("{}x{}", shape[1], shape[2]),
            });
        }
        let mut it = leaves.iter();
        let mut next_pair = || -> Result<(&Tensor<T>, &Tensor<T>), NnError> {
            match (it.next(), it.next()) {
                (Some(w), Some(b)) => Ok((w, b)),
                _ => Err(NnError::Config {
                    why: "parameter leaves do not match the architecture".into(),
                }),
            }
        };

        let (w, b) = next_pair()?;
        let stem = relu(&conv2d(input, w, b, 1, 1)?)?;
        let mut downs = Vec::with_capacity(self.config.stages);
        let mut cur = stem;
        for _ in 0..self.config.stages {
            let (w, b) = next_pair()?;
            cur = relu(&conv2d(&cur, w, b, 2, 1)?)?;
            downs.push(cur.clone());
        }
        let (w, b) = next_pair()?;
        let mut top = conv2d(downs.last().expect("stages >= 2"), w, b, 1, 0)?;
        for i in (0..self.config.stages - 1).rev() {
            let (w, b) = next_pair()?;
            let lateral = conv2d(&downs[i], w, b, 1, 0)?;
            top = add(&upsample_nearest2x(&top)?, &lateral)?;
        }
        // Restore stage one: smooth at half resolution, then upsample to
        // full; stage two refines at full resolution.
        let (w, b) = next_pair()?;
        let restored = upsample_nearest2x(&relu(&conv2d(&top, w, b, 1, 1)?)?)?;
        let (w, b) = next_pair()?;
        let refined = relu(&conv2d(&restored, w, b, 1, 1)?)?;
        let (w, b) = next_pair()?;
        conv2d(&refined, w, b, 1, 0)
    }

    /// Inference forward pass: no gradients retained.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.forward(&self.const_leaves(), input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> NetworkConfig {
        NetworkConfig {
            in_channels: 14,
            base_channels: 4,
            out_channels: 4,
            stages: 3,
            weight_init_seed: 7,
            shared_embedding: false,
        }
    }

    #[test]
    fn forward_preserves_spatial_size() {
        let net: Network<f32> = Network::new(small_config()).unwrap();
        let input = Tensor::from_vec(vec![14, 64, 128], vec![0.1; 14 * 64 * 128]).unwrap();
        let out = net.infer(&input).unwrap();
        assert_eq!(out.shape(), vec![4, 64, 128]);
    }

    #[test]
    fn forward_rejects_indivisible_size() {
        let net: Network<f32> = Network::new(small_config()).unwrap();
        let input = Tensor::from_vec(vec![14, 12, 20], vec![0.0; 14 * 12 * 20]).unwrap();
        assert!(matches!(
            net.infer(&input),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn forward_deterministic_bitwise() {
        let net: Network<f32> = Network::new(small_config()).unwrap();
        let data: Vec<f32> = (0..14 * 8 * 8).map(|i| (i as f32 * 0.37).sin()).collect();
        let input = Tensor::from_vec(vec![14, 8, 8], data).unwrap();
        let a = net.infer(&input).unwrap().to_vec();
        let b = net.infer(&input).unwrap().to_vec();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn same_seed_same_init() {
        let a: Network<f32> = Network::new(small_config()).unwrap();
        let b: Network<f32> = Network::new(small_config()).unwrap();
        for (pa, pb) in a.params.iter().zip(&b.params) {
            assert_eq!(pa.name, pb.name);
            assert!(pa
                .value
                .iter()
                .zip(&pb.value)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let mut cfg = small_config();
        cfg.weight_init_seed = 8;
        let c: Network<f32> = Network::new(cfg).unwrap();
        assert!(a.params[0].value != c.params[0].value);
    }

    #[test]
    fn config_rejects_odd_out_channels() {
        let cfg = NetworkConfig {
            out_channels: 5,
            ..small_config()
        };
        assert!(Network::<f32>::new(cfg).is_err());
        let cfg = NetworkConfig {
            stages: 1,
            ..small_config()
        };
        assert!(Network::<f32>::new(cfg).is_err());
    }
}
