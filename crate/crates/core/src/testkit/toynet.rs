use super::rng::SplitMix;
use crate::error::{Error, Result};
use crate::metrics::FeatureExtractor;
use crate::tensor::Tensor;

pub const CONV1_CHANNELS: usize = 4;
pub const CONV2_CHANNELS: usize = 8;
const K: usize = 3;

/// Two 3x3 same-padded convolutions with rectifiers, global average pooling
/// and a linear class head.
///
/// `conv1_w` is `[4, in_channels, 3, 3]`, `conv2_w` is `[8, 4, 3, 3]` and
/// `head_w` is `[classes, 8]`, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    pub in_channels: usize,
    pub classes: usize,
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

/// Intermediate values of one forward pass over a single image.
#[derive(Debug, Clone)]
pub struct Forward {
    pub height: usize,
    pub width: usize,
    pub input: Vec<f64>,
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub z2: Vec<f64>,
    pub a2: Vec<f64>,
    pub pooled: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Gradients of a scalar of the class scores.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub input: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl Gradients {
    /// Parameter gradients in [`ToyNet::params`] order.
    pub fn params(&self) -> Vec<f64> {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.head_w,
            &self.head_b,
        ]
        .into_iter()
        .flatten()
        .copied()
        .collect()
    }
}

fn uniform_vec(rng: &mut SplitMix, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.range(-scale, scale)).collect()
}

impl ToyNet {
    /// Weights uniform in `+-sqrt(3 / fan_in)`, biases in `+-0.1`.
    pub fn random(seed: u64, in_channels: usize, classes: usize) -> Self {
        let mut rng = SplitMix::new(seed);
        let s1 = (3.0 / (in_channels * K * K) as f64).sqrt();
        let s2 = (3.0 / (CONV1_CHANNELS * K * K) as f64).sqrt();
        let s3 = (3.0 / CONV2_CHANNELS as f64).sqrt();
        ToyNet {
            in_channels,
            classes,
            conv1_w: uniform_vec(&mut rng, CONV1_CHANNELS * in_channels * K * K, s1),
            conv1_b: uniform_vec(&mut rng, CONV1_CHANNELS, 0.1),
            conv2_w: uniform_vec(&mut rng, CONV2_CHANNELS * CONV1_CHANNELS * K * K, s2),
            conv2_b: uniform_vec(&mut rng, CONV2_CHANNELS, 0.1),
            head_w: uniform_vec(&mut rng, classes * CONV2_CHANNELS, s3),
            head_b: uniform_vec(&mut rng, classes, 0.1),
        }
    }

    /// All parameters flattened: conv1 weights and biases, conv2 weights and
    /// biases, head weights and biases.
    pub fn params(&self) -> Vec<f64> {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.head_w,
            &self.head_b,
        ]
        .into_iter()
        .flatten()
        .copied()
        .collect()
    }

    pub fn with_params(&self, params: &[f64]) -> ToyNet {
        let mut net = self.clone();
        let mut rest = params;
        for slot in [
            &mut net.conv1_w,
            &mut net.conv1_b,
            &mut net.conv2_w,
            &mut net.conv2_b,
            &mut net.head_w,
            &mut net.head_b,
        ] {
            let (head, tail) = rest.split_at(slot.len());
            slot.copy_from_slice(head);
            rest = tail;
        }
        assert!(rest.is_empty(), "parameter vector too long");
        net
    }

    fn check_image(&self, image: &Tensor) -> Result<(usize, usize)> {
        match image.shape() {
            [c, h, w] if *c == self.in_channels => Ok((*h, *w)),
            s => Err(Error::Shape(format!(
                "ToyNet expects [{}, H, W] images, got {s:?}",
                self.in_channels
            ))),
        }
    }

    pub fn forward(&self, image: &Tensor) -> Result<Forward> {
        let (h, w) = self.check_image(image)?;
        let input = image.data().to_vec();
        let z1 = conv_same(
            &input,
            self.in_channels,
            h,
            w,
            &self.conv1_w,
            &self.conv1_b,
            CONV1_CHANNELS,
        );
        let a1 = relu(&z1);
        let z2 = conv_same(&a1, CONV1_CHANNELS, h, w, &self.conv2_w, &self.conv2_b, CONV2_CHANNELS);
        let a2 = relu(&z2);
        let hw = (h * w) as f64;
        let pooled: Vec<f64> = a2.chunks_exact(h * w).map(|c| c.iter().sum::<f64>() / hw).collect();
        let scores = (0..self.classes)
            .map(|c| {
                let row = &self.head_w[c * CONV2_CHANNELS..(c + 1) * CONV2_CHANNELS];
                row.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>() + self.head_b[c]
            })
            .collect();
        Ok(Forward {
            height: h,
            width: w,
            input,
            z1,
            a1,
            z2,
            a2,
            pooled,
            scores,
        })
    }

    /// Reverse pass for `L = sum_c dscores[c] * scores[c]`.
    pub fn backward(&self, fw: &Forward, dscores: &[f64]) -> Gradients {
        assert_eq!(dscores.len(), self.classes);
        let (h, w) = (fw.height, fw.width);
        let hw = h * w;

        let mut head_w = vec![0.0; self.head_w.len()];
        let mut dpooled = [0.0; CONV2_CHANNELS];
        for c in 0..self.classes {
            for k in 0..CONV2_CHANNELS {
                head_w[c * CONV2_CHANNELS + k] = dscores[c] * fw.pooled[k];
                dpooled[k] += dscores[c] * self.head_w[c * CONV2_CHANNELS + k];
            }
        }
        let head_b = dscores.to_vec();

        let a2: Vec<f64> = dpooled
            .iter()
            .flat_map(|d| std::iter::repeat_n(d / hw as f64, hw))
            .collect();
        let dz2 = relu_backward(&fw.z2, &a2);
        let (a1, conv2_w, conv2_b) =
            conv_same_backward(&fw.a1, CONV1_CHANNELS, h, w, &self.conv2_w, CONV2_CHANNELS, &dz2);
        let dz1 = relu_backward(&fw.z1, &a1);
        let (input, conv1_w, conv1_b) =
            conv_same_backward(&fw.input, self.in_channels, h, w, &self.conv1_w, CONV1_CHANNELS, &dz1);

        Gradients {
            input,
            a1,
            a2,
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            head_w,
            head_b,
        }
    }

    /// Second-layer activations `[8, H, W]` and the gradient of class
    /// `class`'s score with respect to them.
    pub fn layer_and_class_grad(&self, image: &Tensor, class: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if class >= self.classes {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {} classes",
                self.classes
            )));
        }
        let fw = self.forward(image)?;
        let mut onehot = vec![0.0; self.classes];
        onehot[class] = 1.0;
        let g = self.backward(&fw, &onehot);
        Ok((fw.a2, g.a2))
    }
}

impl FeatureExtractor for ToyNet {
    /// Flattened second-layer activations.
    fn features(&self, image: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward(image)?.a2)
    }
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect()
}

fn relu_backward(z: &[f64], upstream: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(upstream)
        .map(|(z, g)| if *z > 0.0 { *g } else { 0.0 })
        .collect()
}

/// Cross-correlation with a 3x3 kernel and one pixel of zero padding.
fn conv_same(input: &[f64], cin: usize, h: usize, w: usize, weights: &[f64], bias: &[f64], cout: usize) -> Vec<f64> {
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias[o];
                for c in 0..cin {
                    for ky in 0..K {
                        for kx in 0..K {
                            if let Some((sy, sx)) = tap(y, x, ky, kx, h, w) {
                                acc += weights[((o * cin + c) * K + ky) * K + kx] * input[(c * h + sy) * w + sx];
                            }
                        }
                    }
                }
                out[(o * h + y) * w + x] = acc;
            }
        }
    }
    out
}

/// Returns `(d input, d weights, d bias)` for upstream gradient `dout`.
fn conv_same_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    cout: usize,
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut din = vec![0.0; cin * h * w];
    let mut dw = vec![0.0; weights.len()];
    let mut db = vec![0.0; cout];
    for o in 0..cout {
        for y in 0..h {
            for x in 0..w {
                let g = dout[(o * h + y) * w + x];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                for c in 0..cin {
                    for ky in 0..K {
                        for kx in 0..K {
                            if let Some((sy, sx)) = tap(y, x, ky, kx, h, w) {
                                let wi = ((o * cin + c) * K + ky) * K + kx;
                                let ii = (c * h + sy) * w + sx;
                                dw[wi] += g * input[ii];
                                din[ii] += g * weights[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    (din, dw, db)
}

fn tap(y: usize, x: usize, ky: usize, kx: usize, h: usize, w: usize) -> Option<(usize, usize)> {
    let sy = (y + ky).checked_sub(1)?;
    let sx = (x + kx).checked_sub(1)?;
    (sy < h && sx < w).then_some((sy, sx))
}
