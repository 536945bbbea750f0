use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output planes per time-frequency cell: mask, cos and sin for two ears.
pub const HEAD_PLANES: usize = 6;

fn default_dnn_hidden() -> [usize; 3] {
    [1024, 1024, 128]
}
fn default_gru_hidden() -> usize {
    1024
}
fn default_gru_layers() -> usize {
    3
}
fn default_unet_channels() -> Vec<usize> {
    vec![32, 64, 128, 256, 384, 384]
}
fn default_kernel() -> usize {
    3
}
fn default_pool() -> usize {
    2
}

/// Network family and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "lowercase")]
pub enum Architecture {
    /// Per-frame MLP: three hidden layers with LeakyReLU, then a projection
    /// to `6 * freq_bins`.
    Dnn4 {
        #[serde(default = "default_dnn_hidden")]
        hidden: [usize; 3],
    },
    /// Stacked bidirectional GRUs over frames, then a per-frame projection to
    /// `6 * freq_bins`.
    Gru4 {
        /// Hidden size per direction.
        #[serde(default = "default_gru_hidden")]
        hidden: usize,
        #[serde(default = "default_gru_layers")]
        layers: usize,
    },
    /// Convolutional encoder/decoder with skip connections over the
    /// `frames x freq_bins` plane.
    Unet {
        /// Output channels of each encoder block; decoders mirror them.
        #[serde(default = "default_unet_channels")]
        channels: Vec<usize>,
        #[serde(default = "default_kernel")]
        kernel: usize,
        /// Average-pool size and transpose-convolution stride, on both axes.
        #[serde(default = "default_pool")]
        pool: usize,
    },
}

impl Architecture {
    pub fn dnn4() -> Self {
        Architecture::Dnn4 {
            hidden: default_dnn_hidden(),
        }
    }

    pub fn gru4() -> Self {
        Architecture::Gru4 {
            hidden: default_gru_hidden(),
            layers: default_gru_layers(),
        }
    }

    pub fn unet() -> Self {
        Architecture::Unet {
            channels: default_unet_channels(),
            kernel: default_kernel(),
            pool: default_pool(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Dnn4 { .. } => "dnn4",
            Architecture::Gru4 { .. } => "gru4",
            Architecture::Unet { .. } => "unet",
        }
    }
}

/// An architecture bound to a concrete input layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub architecture: Architecture,
    pub input_planes: usize,
    pub freq_bins: usize,
}

impl ModelSpec {
    pub fn new(architecture: Architecture, input_planes: usize, freq_bins: usize) -> Result<Self> {
        let spec = Self {
            architecture,
            input_planes,
            freq_bins,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("model spec: {m}")));
        if self.input_planes == 0 || self.freq_bins == 0 {
            return bad("input planes and frequency bins must be positive");
        }
        match &self.architecture {
            Architecture::Dnn4 { hidden } => {
                if hidden.contains(&0) {
                    return bad("dnn4 widths must be positive");
                }
            }
            Architecture::Gru4 { hidden, layers } => {
                if *hidden == 0 || *layers == 0 {
                    return bad("gru4 needs a positive hidden size and layer count");
                }
            }
            Architecture::Unet { channels, kernel, pool } => {
                if channels.is_empty() || channels.contains(&0) {
                    return bad("unet needs at least one block with positive channels");
                }
                if kernel % 2 == 0 {
                    return bad("unet kernel size must be odd");
                }
                if *pool < 2 {
                    return bad("unet pool size must be at least 2");
                }
            }
        }
        Ok(())
    }

    /// Side length the UNet pads `frames` and `freq_bins` up to a multiple of.
    pub fn unet_multiple(&self) -> Option<usize> {
        match &self.architecture {
            Architecture::Unet { channels, pool, .. } => Some(pool.pow(channels.len() as u32)),
            _ => None,
        }
    }
}

/// Shapes `(channels, frames, bins)` at every UNet stage for a given input,
/// without evaluating the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnetShapes {
    pub padded: (usize, usize),
    /// Encoder outputs before pooling, one per block.
    pub encoder: Vec<(usize, usize, usize)>,
    /// Decoder outputs, deepest first.
    pub decoder: Vec<(usize, usize, usize)>,
    pub output: (usize, usize, usize),
}

pub fn unet_shapes(spec: &ModelSpec, frames: usize) -> Result<UnetShapes> {
    let Architecture::Unet { channels, pool, .. } = &spec.architecture else {
        return Err(Error::InvalidArgument("not a unet spec".into()));
    };
    let multiple = spec.unet_multiple().expect("unet");
    let pad_to = |n: usize| n.div_ceil(multiple) * multiple;
    let (mut h, mut w) = (pad_to(frames), pad_to(spec.freq_bins));
    let padded = (h, w);
    let mut encoder = Vec::new();
    for &c in channels {
        encoder.push((c, h, w));
        if h % pool != 0 || w % pool != 0 {
            return Err(Error::Shape(format!("{h}x{w} does not divide by pool {pool}")));
        }
        h /= pool;
        w /= pool;
    }
    let mut decoder = Vec::new();
    for level in (0..channels.len()).rev() {
        h *= pool;
        w *= pool;
        let (c, eh, ew) = encoder[level];
        if (h, w) != (eh, ew) {
            return Err(Error::Shape(format!("decoder {h}x{w} vs skip {eh}x{ew}")));
        }
        decoder.push((c, h, w));
    }
    Ok(UnetShapes {
        padded,
        encoder,
        decoder,
        output: (HEAD_PLANES, frames, spec.freq_bins),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_with_defaults() {
        let spec: ModelSpec =
            serde_json::from_str(r#"{"architecture":"gru4","input_planes":20,"freq_bins":513}"#).unwrap();
        assert_eq!(spec.architecture, Architecture::gru4());
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn validation() {
        assert!(ModelSpec::new(Architecture::Dnn4 { hidden: [4, 0, 4] }, 20, 8).is_err());
        assert!(ModelSpec::new(
            Architecture::Unet {
                channels: vec![4],
                kernel: 2,
                pool: 2
            },
            20,
            8
        )
        .is_err());
        assert!(ModelSpec::new(Architecture::unet(), 20, 513).is_ok());
    }

    // Six 2x2 halvings of 128 x 512: every stage divides evenly and the
    // decoder climbs back to the input size.
    #[test]
    fn unet_shape_propagation() {
        let spec = ModelSpec::new(Architecture::unet(), 20, 512).unwrap();
        let shapes = unet_shapes(&spec, 128).unwrap();
        assert_eq!(shapes.padded, (128, 512));
        let expected_enc: Vec<_> = [32, 64, 128, 256, 384, 384]
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, 128 >> i, 512 >> i))
            .collect();
        assert_eq!(shapes.encoder, expected_enc);
        assert_eq!(shapes.decoder.first(), Some(&(384, 4, 16)));
        assert_eq!(shapes.decoder.last(), Some(&(32, 128, 512)));
        assert_eq!(shapes.output, (6, 128, 512));
    }

    #[test]
    fn unet_pads_to_multiple() {
        let spec = ModelSpec::new(Architecture::unet(), 20, 513).unwrap();
        let shapes = unet_shapes(&spec, 282).unwrap();
        assert_eq!(shapes.padded, (320, 576));
        assert_eq!(shapes.output, (6, 282, 513));
    }
}
