use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::dense::{glorot, sigmoid};
use crate::nn::linalg::gemm;
use crate::nn::tensor::Param;

/// Single LSTM layer. Gate blocks are stored side by side in the order
/// forget, input, output, candidate: `w` is `input x 4H`, `u` is `H x 4H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input: usize,
    pub hidden: usize,
    pub w: Param,
    pub u: Param,
    pub b: Param,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub seq: usize,
    pub batch: usize,
    /// Inputs, time-major `seq x batch x input`.
    pub x: Vec<f64>,
    /// Post-activation gates per step, `seq x batch x 4H`.
    pub gates: Vec<f64>,
    /// Cell states per step, `seq x batch x H`.
    pub c: Vec<f64>,
    /// Hidden states per step, `seq x batch x H`.
    pub h: Vec<f64>,
}

impl LstmLayer {
    pub fn new<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let g = 4 * hidden;
        let mut b = vec![0.0; g];
        // forget gate starts open
        b[..hidden].fill(1.0);
        Self {
            input,
            hidden,
            w: Param::new(glorot(rng, input * g, input, hidden)),
            u: Param::new(glorot(rng, hidden * g, hidden, hidden)),
            b: Param::new(b),
        }
    }

    pub fn from_parts(
        input: usize,
        hidden: usize,
        w: Vec<f64>,
        u: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        let g = 4 * hidden;
        if w.len() != input * g || u.len() != hidden * g || b.len() != g {
            return Err(Error::Shape(format!(
                "lstm {input}->{hidden} parameter sizes"
            )));
        }
        Ok(Self {
            input,
            hidden,
            w: Param::new(w),
            u: Param::new(u),
            b: Param::new(b),
        })
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }

    pub fn params_mut(&mut self) -> [&mut Param; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }

    /// Runs the layer over a time-major batch starting from zero state.
    pub fn forward(&self, x: &[f64], seq: usize, batch: usize) -> Result<LstmCache> {
        if seq == 0 || batch == 0 {
            return Err(Error::Shape("lstm needs a nonempty sequence".into()));
        }
        if x.len() != seq * batch * self.input {
            return Err(Error::Shape(format!(
                "lstm input has {} values, expected {seq} x {batch} x {}",
                x.len(),
                self.input
            )));
        }
        let hs = self.hidden;
        let g4 = 4 * hs;
        let mut gates = vec![0.0; seq * batch * g4];
        let mut c = vec![0.0; seq * batch * hs];
        let mut h = vec![0.0; seq * batch * hs];
        for t in 0..seq {
            let pre = &mut gates[t * batch * g4..(t + 1) * batch * g4];
            for row in pre.chunks_exact_mut(g4) {
                row.copy_from_slice(&self.b.value);
            }
            let xt = &x[t * batch * self.input..(t + 1) * batch * self.input];
            gemm(
                batch,
                self.input,
                g4,
                xt,
                false,
                &self.w.value,
                false,
                1.0,
                pre,
            );
            if t > 0 {
                let hp = &h[(t - 1) * batch * hs..t * batch * hs];
                gemm(batch, hs, g4, hp, false, &self.u.value, false, 1.0, pre);
            }
            for bi in 0..batch {
                let gr = &mut pre[bi * g4..(bi + 1) * g4];
                for v in &mut gr[..3 * hs] {
                    *v = sigmoid(*v);
                }
                for v in &mut gr[3 * hs..] {
                    *v = v.tanh();
                }
                let base = (t * batch + bi) * hs;
                for j in 0..hs {
                    let c_prev = if t > 0 { c[base - batch * hs + j] } else { 0.0 };
                    let (f, i, o, g) = (gr[j], gr[hs + j], gr[2 * hs + j], gr[3 * hs + j]);
                    let ct = f * c_prev + i * g;
                    c[base + j] = ct;
                    h[base + j] = o * ct.tanh();
                }
            }
        }
        Ok(LstmCache {
            seq,
            batch,
            x: x.to_vec(),
            gates,
            c,
            h,
        })
    }

    /// Backpropagation through time. `dh` is the loss gradient with respect to
    /// every hidden state (`seq x batch x H`). Accumulates parameter gradients
    /// and returns the input gradient (`seq x batch x input`).
    pub fn backward(&mut self, cache: &LstmCache, dh: &[f64]) -> Vec<f64> {
        let (seq, batch, hs) = (cache.seq, cache.batch, self.hidden);
        let g4 = 4 * hs;
        let mut dx = vec![0.0; cache.x.len()];
        let mut dh_next = vec![0.0; batch * hs];
        let mut dc_next = vec![0.0; batch * hs];
        let mut dpre = vec![0.0; batch * g4];
        for t in (0..seq).rev() {
            for bi in 0..batch {
                let base = (t * batch + bi) * hs;
                let gr = &cache.gates[(t * batch + bi) * g4..(t * batch + bi + 1) * g4];
                let dp = &mut dpre[bi * g4..(bi + 1) * g4];
                for j in 0..hs {
                    let (f, i, o, g) = (gr[j], gr[hs + j], gr[2 * hs + j], gr[3 * hs + j]);
                    let ct = cache.c[base + j];
                    let tc = ct.tanh();
                    let c_prev = if t > 0 {
                        cache.c[base - batch * hs + j]
                    } else {
                        0.0
                    };
                    let dht = dh[base + j] + dh_next[bi * hs + j];
                    let dct = dht * o * (1.0 - tc * tc) + dc_next[bi * hs + j];
                    dp[j] = dct * c_prev * f * (1.0 - f);
                    dp[hs + j] = dct * g * i * (1.0 - i);
                    dp[2 * hs + j] = dht * tc * o * (1.0 - o);
                    dp[3 * hs + j] = dct * i * (1.0 - g * g);
                    dc_next[bi * hs + j] = dct * f;
                }
            }
            let xt = &cache.x[t * batch * self.input..(t + 1) * batch * self.input];
            gemm(
                self.input,
                batch,
                g4,
                xt,
                true,
                &dpre,
                false,
                1.0,
                &mut self.w.grad,
            );
            for row in dpre.chunks_exact(g4) {
                for (a, b) in self.b.grad.iter_mut().zip(row) {
                    *a += b;
                }
            }
            let dxt = &mut dx[t * batch * self.input..(t + 1) * batch * self.input];
            gemm(
                batch,
                g4,
                self.input,
                &dpre,
                false,
                &self.w.value,
                true,
                0.0,
                dxt,
            );
            if t > 0 {
                let hp = &cache.h[(t - 1) * batch * hs..t * batch * hs];
                gemm(hs, batch, g4, hp, true, &dpre, false, 1.0, &mut self.u.grad);
                gemm(
                    batch,
                    g4,
                    hs,
                    &dpre,
                    false,
                    &self.u.value,
                    true,
                    0.0,
                    &mut dh_next,
                );
            }
        }
        dx
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
    fn zero_weights_give_zero_hidden() {
        let l = LstmLayer::from_parts(2, 3, vec![0.0; 24], vec![0.0; 36], vec![0.0; 12]).unwrap();
        let cache = l.forward(&[1.0, -2.0, 0.5, 3.0, 7.0, 1.0], 3, 1).unwrap();
        assert!(cache.h.iter().all(|v| *v == 0.0));
        assert!(l.forward(&[], 0, 1).is_err());
    }

    #[test]
    fn single_step_matches_scalar_equations() {
        // one input, one hidden unit: gate weights w_*, biases b_*
        let (wf, wi, wo, wc) = (0.3, -0.7, 1.1, 0.5);
        let (bf, bi, bo, bc) = (0.1, 0.2, -0.3, 0.05);
        let l = LstmLayer::from_parts(
            1,
            1,
            vec![wf, wi, wo, wc],
            vec![0.9, -0.4, 0.2, 0.6],
            vec![bf, bi, bo, bc],
        )
        .unwrap();
        let x = 0.8;
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let f = s(wf * x + bf);
        let i = s(wi * x + bi);
        let o = s(wo * x + bo);
        let c = f * 0.0 + i * (wc * x + bc).tanh();
        let h = o * c.tanh();
        let cache = l.forward(&[x], 1, 1).unwrap();
        assert!((cache.h[0] - h).abs() < 1e-15);
        assert!((cache.c[0] - c).abs() < 1e-15);
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (input, hidden, seq, batch) = (3, 4, 5, 2);
        let layer = LstmLayer::new(&mut rng, input, hidden);
        let x: Vec<f64> = (0..seq * batch * input)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let target: Vec<f64> = (0..seq * batch * hidden)
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        let loss = |l: &LstmLayer, xv: &[f64]| {
            mse_loss(&l.forward(xv, seq, batch).unwrap().h, &target)
                .unwrap()
                .0
        };

        let cache = layer.forward(&x, seq, batch).unwrap();
        let (_, dh) = mse_loss(&cache.h, &target).unwrap();
        let mut l = layer.clone();
        let dx = l.backward(&cache, &dh);

        let mut w = layer.w.value.clone();
        let e = grad_check(
            &mut w,
            &l.w.grad,
            |p| {
                let mut c = layer.clone();
                c.w.value.copy_from_slice(p);
                loss(&c, &x)
            },
            1e-5,
        );
        assert!(e < 1e-5, "dW {e}");
        let mut u = layer.u.value.clone();
        let e = grad_check(
            &mut u,
            &l.u.grad,
            |p| {
                let mut c = layer.clone();
                c.u.value.copy_from_slice(p);
                loss(&c, &x)
            },
            1e-5,
        );
        assert!(e < 1e-5, "dU {e}");
        let mut b = layer.b.value.clone();
        let e = grad_check(
            &mut b,
            &l.b.grad,
            |p| {
                let mut c = layer.clone();
                c.b.value.copy_from_slice(p);
                loss(&c, &x)
            },
            1e-5,
        );
        assert!(e < 1e-5, "db {e}");
        let mut xv = x.clone();
        let e = grad_check(&mut xv, &dx, |p| loss(&layer, p), 1e-5);
        assert!(e < 1e-5, "dx {e}");
    }
}
