use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::dense::glorot;
use crate::nn::tensor::Param;

/// Valid convolution along time of an `height x t` matrix with a
/// `height x width` kernel, before the nonlinearity.
pub fn conv_time_pre(
    kernel: &[f64],
    bias: f64,
    m: &[f64],
    height: usize,
    width: usize,
    t: usize,
) -> Result<Vec<f64>> {
    if width == 0 || t < width {
        return Err(Error::Shape(format!(
            "time length {t} shorter than kernel width {width}"
        )));
    }
    if kernel.len() != height * width || m.len() != height * t {
        return Err(Error::Shape(format!(
            "kernel {} / input {} do not match height {height}",
            kernel.len(),
            m.len()
        )));
    }
    let out = t - width + 1;
    let mut s = vec![bias; out];
    for r in 0..height {
        let row = &m[r * t..(r + 1) * t];
        let k = &kernel[r * width..(r + 1) * width];
        for (tau, acc) in s.iter_mut().enumerate() {
            let window = &row[tau..tau + width];
            *acc += k.iter().zip(window).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(s)
}

/// `ReLU(conv_time_pre(..))`, output length `t - width + 1`.
pub fn conv_time_forward(
    kernel: &[f64],
    bias: f64,
    m: &[f64],
    height: usize,
    width: usize,
    t: usize,
) -> Result<Vec<f64>> {
    let mut s = conv_time_pre(kernel, bias, m, height, width, t)?;
    for v in &mut s {
        *v = v.max(0.0);
    }
    Ok(s)
}

/// Backward of [`conv_time_forward`]: accumulates into `dm`, `dk`, `db` given
/// the forward output `s` and its upstream gradient `ds`.
#[allow(clippy::too_many_arguments)]
pub fn conv_time_backward(
    kernel: &[f64],
    m: &[f64],
    s: &[f64],
    ds: &[f64],
    height: usize,
    width: usize,
    t: usize,
    dm: &mut [f64],
    dk: &mut [f64],
    db: &mut f64,
) {
    let out = t + 1 - width;
    debug_assert_eq!(s.len(), out);
    for tau in 0..out {
        if s[tau] <= 0.0 {
            continue;
        }
        let g = ds[tau];
        if g == 0.0 {
            continue;
        }
        *db += g;
        for r in 0..height {
            let row = &m[r * t + tau..r * t + tau + width];
            let drow = &mut dm[r * t + tau..r * t + tau + width];
            let k = &kernel[r * width..(r + 1) * width];
            let dkr = &mut dk[r * width..(r + 1) * width];
            for c in 0..width {
                dkr[c] += g * row[c];
                drow[c] += g * k[c];
            }
        }
    }
}

/// Time-axis convolution applied to each of `channels` matrices, with either
/// one kernel per channel or one kernel shared by all.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1DLayer {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub per_channel: bool,
    pub kernel: Param,
    pub bias: Param,
}

impl Conv1DLayer {
    pub fn new<R: Rng>(
        rng: &mut R,
        channels: usize,
        height: usize,
        width: usize,
        per_channel: bool,
    ) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Shape(
                "convolution dimensions must be positive".into(),
            ));
        }
        let n_kernels = if per_channel { channels } else { 1 };
        let fan = height * width;
        Ok(Self {
            height,
            width,
            channels,
            per_channel,
            kernel: Param::new(glorot(rng, n_kernels * fan, fan, 1)),
            bias: Param::zeros(n_kernels),
        })
    }

    pub fn from_parts(
        channels: usize,
        height: usize,
        width: usize,
        per_channel: bool,
        kernel: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let n_kernels = if per_channel { channels } else { 1 };
        if width == 0 || kernel.len() != n_kernels * height * width || bias.len() != n_kernels {
            return Err(Error::Shape(format!(
                "convolution {channels}x{height}x{width} got {} kernel and {} bias values",
                kernel.len(),
                bias.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            per_channel,
            kernel: Param::new(kernel),
            bias: Param::new(bias),
        })
    }

    fn kernel_index(&self, ch: usize) -> usize {
        if self.per_channel {
            ch
        } else {
            0
        }
    }

    pub fn output_len(&self, t: usize) -> usize {
        t + 1 - self.width
    }

    /// Input is `channels x height x t`; output is `channels x (t - width + 1)`.
    pub fn forward(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        if x.len() != self.channels * self.height * t {
            return Err(Error::Shape(format!(
                "convolution input has {} values, expected {} x {} x {t}",
                x.len(),
                self.channels,
                self.height
            )));
        }
        let fan = self.height * self.width;
        let mut y = Vec::new();
        for ch in 0..self.channels {
            let k = self.kernel_index(ch);
            let m = &x[ch * self.height * t..(ch + 1) * self.height * t];
            y.extend(conv_time_forward(
                &self.kernel.value[k * fan..(k + 1) * fan],
                self.bias.value[k],
                m,
                self.height,
                self.width,
                t,
            )?);
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &[f64], y: &[f64], dy: &[f64], t: usize) -> Vec<f64> {
        let fan = self.height * self.width;
        let out = self.output_len(t);
        let block = self.height * t;
        let mut dx = vec![0.0; x.len()];
        for ch in 0..self.channels {
            let k = self.kernel_index(ch);
            let mut db = 0.0;
            conv_time_backward(
                &self.kernel.value[k * fan..(k + 1) * fan],
                &x[ch * block..(ch + 1) * block],
                &y[ch * out..(ch + 1) * out],
                &dy[ch * out..(ch + 1) * out],
                self.height,
                self.width,
                t,
                &mut dx[ch * block..(ch + 1) * block],
                &mut self.kernel.grad[k * fan..(k + 1) * fan],
                &mut db,
            );
            self.bias.grad[k] += db;
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.kernel, &mut self.bias]
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use crate::nn::loss::mse_loss;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_kernel_gives_zero() {
        let s = conv_time_forward(&[0.0; 6], 0.0, &[1.0; 12], 2, 3, 6).unwrap();
        assert_eq!(s, vec![0.0; 4]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        assert_eq!(
            conv_time_pre(&[1.0], 0.0, &[1.0, 2.0, 3.0], 1, 1, 3).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        assert!(conv_time_pre(&[1.0, 1.0, 1.0], 0.0, &[1.0, 2.0], 1, 3, 2).is_err());
    }

    #[test]
    fn matches_direct_sum() {
        // 2 x 4 input, 2 x 2 kernel
        let m = [1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 2.0, 1.0];
        let k = [0.5, -1.0, 2.0, 1.0];
        let s = conv_time_pre(&k, 0.1, &m, 2, 2, 4).unwrap();
        let want0 = 0.1 + 0.5 * 1.0 - 2.0 + 2.0 * -1.0 + 0.5;
        assert!((s[0] - want0).abs() < 1e-12);
        assert_eq!(s.len(), 3);
    }

    fn check_layer(per_channel: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ch, h, w, t) = (3, 5, 3, 9);
        let mut layer = Conv1DLayer::new(&mut rng, ch, h, w, per_channel).unwrap();
        for b in &mut layer.bias.value {
            *b = 0.3;
        }
        let x: Vec<f64> = (0..ch * h * t)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let target: Vec<f64> = (0..ch * (t - w + 1))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let y = layer.forward(&x, t).unwrap();
        let (_, dy) = mse_loss(&y, &target).unwrap();
        let mut l = layer.clone();
        let dx = l.backward(&x, &y, &dy, t);

        let f_k = |k: &[f64]| {
            let mut c = layer.clone();
            c.kernel.value.copy_from_slice(k);
            mse_loss(&c.forward(&x, t).unwrap(), &target).unwrap().0
        };
        let mut k = layer.kernel.value.clone();
        assert!(grad_check(&mut k, &l.kernel.grad, f_k, 1e-5) < 1e-6);
        let f_b = |b: &[f64]| {
            let mut c = layer.clone();
            c.bias.value.copy_from_slice(b);
            mse_loss(&c.forward(&x, t).unwrap(), &target).unwrap().0
        };
        let mut b = layer.bias.value.clone();
        assert!(grad_check(&mut b, &l.bias.grad, f_b, 1e-5) < 1e-6);
        let f_x = |xv: &[f64]| mse_loss(&layer.forward(xv, t).unwrap(), &target).unwrap().0;
        let mut xv = x.clone();
        assert!(grad_check(&mut xv, &dx, f_x, 1e-5) < 1e-6);
    }

    #[test]
    fn per_channel_gradients() {
        check_layer(true);
    }

    #[test]
    fn shared_gradients() {
        check_layer(false);
    }
}
