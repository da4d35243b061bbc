use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{affine, backprop_affine, check_len, concat, sigmoid, Cell, CellState, RecurrentError};

/// GRU weights. With `use_bias` off the gate and candidate biases are held
/// at zero and ignored by both passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub hidden_size: usize,
    pub input_size: usize,
    pub use_bias: bool,
    pub w_r: Vec<f64>,
    pub w_z: Vec<f64>,
    pub w_h: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b_h: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruStep {
    pub z: Vec<f64>,
    pub reset: Vec<f64>,
    pub update: Vec<f64>,
    /// `[r ⊙ h_prev, x]`
    pub z_reset: Vec<f64>,
    pub candidate: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub h: Vec<f64>,
}

impl GruParams {
    pub fn zeros(hidden_size: usize, input_size: usize) -> GruParams {
        let w = vec![0.0; hidden_size * (hidden_size + input_size)];
        let b = vec![0.0; hidden_size];
        GruParams {
            hidden_size,
            input_size,
            use_bias: true,
            w_r: w.clone(),
            w_z: w.clone(),
            w_h: w,
            b_r: b.clone(),
            b_z: b.clone(),
            b_h: b,
            w_out: vec![0.0; hidden_size],
            b_out: 0.0,
        }
    }

    pub fn random<R: Rng>(hidden_size: usize, input_size: usize, use_bias: bool, scale: f64, rng: &mut R) -> GruParams {
        let mut p = GruParams::zeros(hidden_size, input_size);
        let flat: Vec<f64> = (0..p.to_flat().len()).map(|_| rng.gen_range(-scale..=scale)).collect();
        p.set_flat(&flat);
        p.use_bias = use_bias;
        if !use_bias {
            p.clear_biases();
        }
        p
    }

    fn clear_biases(&mut self) {
        for b in [&mut self.b_r, &mut self.b_z, &mut self.b_h] {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn bias<'a>(&self, b: &'a [f64]) -> Option<&'a [f64]> {
        self.use_bias.then_some(b)
    }

    fn check(&self) -> Result<(), RecurrentError> {
        let (h, cols) = (self.hidden_size, self.hidden_size + self.input_size);
        for w in [&self.w_r, &self.w_z, &self.w_h] {
            check_len("gru weight", h * cols, w.len())?;
        }
        for b in [&self.b_r, &self.b_z, &self.b_h, &self.w_out] {
            check_len("gru bias/readout", h, b.len())?;
        }
        Ok(())
    }
}

/// One GRU step:
///
/// ```text
/// r = σ(W_r·[h,x] + b_r)   z = σ(W_z·[h,x] + b_z)
/// ĥ = tanh(W·[r⊙h, x] + b_h)
/// h' = (1 − z)⊙h + z⊙ĥ      y = w_out·h' + b_out
/// ```
pub fn gru_step(p: &GruParams, s: &CellState, x: &[f64]) -> Result<(CellState, f64), RecurrentError> {
    p.step(s, x).map(|(state, y, _)| (state, y))
}

impl Cell for GruParams {
    type Step = GruStep;

    fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn initial_state(&self) -> CellState {
        CellState { h: vec![0.0; self.hidden_size], c: None }
    }

    fn step(&self, state: &CellState, x: &[f64]) -> Result<(CellState, f64, GruStep), RecurrentError> {
        self.check()?;
        check_len("input", self.input_size, x.len())?;
        check_len("hidden state", self.hidden_size, state.h.len())?;
        let h_prev = state.h.clone();
        let z = concat(&h_prev, x);
        let reset: Vec<f64> = affine(&self.w_r, self.bias(&self.b_r), &z).into_iter().map(sigmoid).collect();
        let update: Vec<f64> = affine(&self.w_z, self.bias(&self.b_z), &z).into_iter().map(sigmoid).collect();
        let gated: Vec<f64> = reset.iter().zip(&h_prev).map(|(r, h)| r * h).collect();
        let z_reset = concat(&gated, x);
        let candidate: Vec<f64> = affine(&self.w_h, self.bias(&self.b_h), &z_reset)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h: Vec<f64> = (0..self.hidden_size)
            .map(|k| (1.0 - update[k]) * h_prev[k] + update[k] * candidate[k])
            .collect();
        let y = self.w_out.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + self.b_out;
        Ok((
            CellState { h: h.clone(), c: None },
            y,
            GruStep { z, reset, update, z_reset, candidate, h_prev, h },
        ))
    }

    fn backward(&self, steps: &[GruStep], d_outputs: &[f64]) -> GruParams {
        let hs = self.hidden_size;
        let mut g = self.zeros_like();
        let mut dh_next = vec![0.0; hs];
        for (s, &dy) in steps.iter().zip(d_outputs).rev() {
            g.b_out += dy;
            let mut dh_prev = vec![0.0; hs];
            let mut d_update = vec![0.0; hs];
            let mut d_cand = vec![0.0; hs];
            for k in 0..hs {
                g.w_out[k] += dy * s.h[k];
                let dh = dy * self.w_out[k] + dh_next[k];
                d_update[k] = dh * (s.candidate[k] - s.h_prev[k]) * s.update[k] * (1.0 - s.update[k]);
                d_cand[k] = dh * s.update[k] * (1.0 - s.candidate[k] * s.candidate[k]);
                dh_prev[k] = dh * (1.0 - s.update[k]);
            }
            let dz_reset = backprop_affine(&self.w_h, &mut g.w_h, &d_cand, &s.z_reset);
            let mut d_reset = vec![0.0; hs];
            for k in 0..hs {
                dh_prev[k] += dz_reset[k] * s.reset[k];
                d_reset[k] = dz_reset[k] * s.h_prev[k] * s.reset[k] * (1.0 - s.reset[k]);
            }
            let dz_r = backprop_affine(&self.w_r, &mut g.w_r, &d_reset, &s.z);
            let dz_u = backprop_affine(&self.w_z, &mut g.w_z, &d_update, &s.z);
            for k in 0..hs {
                dh_prev[k] += dz_r[k] + dz_u[k];
            }
            if self.use_bias {
                for k in 0..hs {
                    g.b_r[k] += d_reset[k];
                    g.b_z[k] += d_update[k];
                    g.b_h[k] += d_cand[k];
                }
            }
            dh_next = dh_prev;
        }
        g
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for part in [&self.w_r, &self.w_z, &self.w_h, &self.b_r, &self.b_z, &self.b_h, &self.w_out] {
            v.extend_from_slice(part);
        }
        v.push(self.b_out);
        v
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut rest = flat;
        for part in [
            &mut self.w_r,
            &mut self.w_z,
            &mut self.w_h,
            &mut self.b_r,
            &mut self.b_z,
            &mut self.b_h,
            &mut self.w_out,
        ] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
        self.b_out = rest[0];
        if !self.use_bias {
            self.clear_biases();
        }
    }
}
