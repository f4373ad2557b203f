//! The velocity resampling layer: a learnable temporal filter applied
//! identically to every pixel, initialized from closed-form spline
//! interpolation weights and refined during training.

use crate::error::{Error, Result};
use crate::layers::{no_cache_err, require_rank5, Layer, LayerParams};
use crate::spline::velocity_weights;
use crate::tensor::{Matrix, Tensor};

pub struct VelocityLayer {
    name: String,
    params: LayerParams,
    out_frames: usize,
    in_frames: usize,
    cache: Option<Tensor>,
}

impl VelocityLayer {
    /// Weights from the temporal weight matrix (rows = output frames,
    /// columns = input frames); biases start at zero.
    pub fn from_weights(name: impl Into<String>, weights: Matrix) -> Self {
        let out_frames = weights.rows();
        let in_frames = weights.cols();
        let biases = Tensor::zeros(&[out_frames]);
        VelocityLayer {
            name: name.into(),
            params: LayerParams::new(weights.into_tensor(), biases),
            out_frames,
            in_frames,
            cache: None,
        }
    }

    /// Spline-initialized layer for a sampling factor over `n_frames`
    /// integer-time frames.
    pub fn from_factor(name: impl Into<String>, n_frames: usize, factor: f64) -> Result<Self> {
        Ok(VelocityLayer::from_weights(
            name,
            velocity_weights(n_frames, factor)?,
        ))
    }

    pub fn weight_matrix(&self) -> Matrix {
        Matrix::from_tensor(&self.params.weights).expect("velocity weights are rank 2")
    }

    fn check_input(&self, dims: &[usize]) -> Result<()> {
        require_rank5(dims, "velocity layer")?;
        if dims[1] != self.in_frames {
            return Err(Error::shape(format!(
                "velocity layer expects {} input frames, got {}",
                self.in_frames, dims[1]
            )));
        }
        Ok(())
    }
}

impl Layer for VelocityLayer {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input.dims())?;
        let dims = input.dims();
        let (batch, frame_len) = (dims[0], dims[2] * dims[3] * dims[4]);
        let mut out_dims = dims.to_vec();
        out_dims[1] = self.out_frames;
        let mut out = Tensor::zeros(&out_dims);

        let w = self.params.weights.data();
        let biases = self.params.biases.data();
        let in_stride = self.in_frames * frame_len;
        let out_stride = self.out_frames * frame_len;
        for b in 0..batch {
            let src = &input.data()[b * in_stride..(b + 1) * in_stride];
            let dst = &mut out.data_mut()[b * out_stride..(b + 1) * out_stride];
            for j in 0..self.out_frames {
                let row = &w[j * self.in_frames..(j + 1) * self.in_frames];
                let frame = &mut dst[j * frame_len..(j + 1) * frame_len];
                frame.iter_mut().for_each(|v| *v = biases[j]);
                for (i, &wji) in row.iter().enumerate() {
                    if wji == 0.0 {
                        continue;
                    }
                    let in_frame = &src[i * frame_len..(i + 1) * frame_len];
                    for (o, &x) in frame.iter_mut().zip(in_frame) {
                        *o += wji * x;
                    }
                }
            }
        }
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let input = self.cache.as_ref().ok_or_else(|| no_cache_err(&self.name))?;
        let dims = input.dims();
        let (batch, frame_len) = (dims[0], dims[2] * dims[3] * dims[4]);
        let mut up_dims = dims.to_vec();
        up_dims[1] = self.out_frames;
        if upstream.dims() != up_dims.as_slice() {
            return Err(Error::shape(format!(
                "velocity backward expects upstream {up_dims:?}, got {:?}",
                upstream.dims()
            )));
        }

        let mut input_grad = Tensor::zeros(dims);
        let w = self.params.weights.data().to_vec();
        let wg = self.params.weight_grads_mut().data_mut();
        let in_stride = self.in_frames * frame_len;
        let out_stride = self.out_frames * frame_len;
        for b in 0..batch {
            let src = &input.data()[b * in_stride..(b + 1) * in_stride];
            let up = &upstream.data()[b * out_stride..(b + 1) * out_stride];
            let ig = &mut input_grad.data_mut()[b * in_stride..(b + 1) * in_stride];
            for j in 0..self.out_frames {
                let up_frame = &up[j * frame_len..(j + 1) * frame_len];
                for i in 0..self.in_frames {
                    let wji = w[j * self.in_frames + i];
                    let in_frame = &src[i * frame_len..(i + 1) * frame_len];
                    let ig_frame = &mut ig[i * frame_len..(i + 1) * frame_len];
                    let mut dot = 0.0;
                    for ((g, &u), &x) in ig_frame.iter_mut().zip(up_frame).zip(in_frame) {
                        *g += wji * u;
                        dot += u * x;
                    }
                    wg[j * self.in_frames + i] += dot;
                }
            }
        }
        let bg = self.params.bias_grads_mut().data_mut();
        for b in 0..batch {
            let up = &upstream.data()[b * out_stride..(b + 1) * out_stride];
            for j in 0..self.out_frames {
                bg[j] += up[j * frame_len..(j + 1) * frame_len].iter().sum::<f64>();
            }
        }
        Ok(input_grad)
    }

    fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.check_input(input)?;
        let mut out = input.to_vec();
        out[1] = self.out_frames;
        Ok(out)
    }

    fn params(&self) -> Option<&LayerParams> {
        Some(&self.params)
    }

    fn params_mut(&mut self) -> Option<&mut LayerParams> {
        Some(&mut self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{spline_weights, Knots, QueryTimes};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_batch(rng: &mut impl Rng, dims: &[usize]) -> Tensor {
        let mut t = Tensor::zeros(dims);
        for v in t.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        t
    }

    #[test]
    fn identity_weights_are_identity_map() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let input = random_batch(&mut rng, &[2, 4, 1, 3, 3]);
        let mut layer = VelocityLayer::from_weights("v", Matrix::identity(4));
        let out = layer.forward(&input).unwrap();
        assert!(out.bit_eq(&input));
    }

    #[test]
    fn factor_one_init_is_identity_within_tolerance() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let input = random_batch(&mut rng, &[1, 9, 1, 2, 2]);
        let mut layer = VelocityLayer::from_factor("v", 9, 1.0).unwrap();
        let out = layer.forward(&input).unwrap();
        assert!(out.max_abs_diff(&input) < 1e-9);
    }

    #[test]
    fn matches_spline_resampling_per_pixel() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let input = random_batch(&mut rng, &[2, 4, 1, 2, 2]);
        let knots = Knots::uniform(4).unwrap();
        let queries = QueryTimes::new(vec![0.5, 1.5, 2.5]).unwrap();
        let w = spline_weights(&knots, &queries).unwrap();
        let mut layer = VelocityLayer::from_weights("v", w.clone());
        let out = layer.forward(&input).unwrap();

        for b in 0..2 {
            for h in 0..2 {
                for x in 0..2 {
                    let series: Vec<f64> = (0..4).map(|t| input.get(&[b, t, 0, h, x])).collect();
                    let expect = w.apply(&series).unwrap();
                    for (j, &e) in expect.iter().enumerate() {
                        assert!((out.get(&[b, j, 0, h, x]) - e).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let input = random_batch(&mut rng, &[1, 3, 1, 2, 2]);
        let mut layer = VelocityLayer::from_weights("v", Matrix::identity(3));
        layer.params_mut().unwrap().zero_grads();
        layer.forward(&input).unwrap();
        let ig = layer.backward(&Tensor::zeros(&[1, 3, 1, 2, 2])).unwrap();
        assert!(ig.data().iter().all(|&v| v == 0.0));
        let p = layer.params().unwrap();
        assert!(p.weight_grads().data().iter().all(|&v| v == 0.0));
        assert!(p.bias_grads().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_weights_pass_gradient_through() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let input = random_batch(&mut rng, &[1, 3, 1, 2, 2]);
        let upstream = random_batch(&mut rng, &[1, 3, 1, 2, 2]);
        let mut layer = VelocityLayer::from_weights("v", Matrix::identity(3));
        layer.params_mut().unwrap().zero_grads();
        layer.forward(&input).unwrap();
        let ig = layer.backward(&upstream).unwrap();
        assert!(ig.bit_eq(&upstream));
    }

    #[test]
    fn backward_without_forward_errors() {
        let mut layer = VelocityLayer::from_weights("v", Matrix::identity(3));
        assert!(layer.backward(&Tensor::zeros(&[1, 3, 1, 1, 1])).is_err());
    }

    #[test]
    fn temporal_extent_mismatch_errors() {
        let mut layer = VelocityLayer::from_weights("v", Matrix::identity(3));
        assert!(layer.forward(&Tensor::zeros(&[1, 4, 1, 2, 2])).is_err());
    }
}
