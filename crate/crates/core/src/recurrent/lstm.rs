use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{affine, backprop_affine, check_len, concat, sigmoid, Cell, CellState, RecurrentError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden_size: usize,
    pub input_size: usize,
    pub w_f: Vec<f64>,
    pub w_i: Vec<f64>,
    pub w_c: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

/// Activations of one LSTM step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub z: Vec<f64>,
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden_size: usize, input_size: usize) -> LstmParams {
        let w = vec![0.0; hidden_size * (hidden_size + input_size)];
        let b = vec![0.0; hidden_size];
        LstmParams {
            hidden_size,
            input_size,
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
            w_out: vec![0.0; hidden_size],
            b_out: 0.0,
        }
    }

    pub fn random<R: Rng>(hidden_size: usize, input_size: usize, scale: f64, rng: &mut R) -> LstmParams {
        let mut p = LstmParams::zeros(hidden_size, input_size);
        let flat: Vec<f64> = (0..p.to_flat().len()).map(|_| rng.gen_range(-scale..=scale)).collect();
        p.set_flat(&flat);
        p
    }

    fn check(&self) -> Result<(), RecurrentError> {
        let (h, cols) = (self.hidden_size, self.hidden_size + self.input_size);
        for w in [&self.w_f, &self.w_i, &self.w_c, &self.w_o] {
            check_len("lstm weight", h * cols, w.len())?;
        }
        for b in [&self.b_f, &self.b_i, &self.b_c, &self.b_o, &self.w_out] {
            check_len("lstm bias/readout", h, b.len())?;
        }
        Ok(())
    }
}

/// One LSTM step:
///
/// ```text
/// f = σ(W_f·[h,x] + b_f)   i = σ(W_i·[h,x] + b_i)   ĉ = tanh(W_c·[h,x] + b_c)
/// c' = f⊙c + i⊙ĉ           o = σ(W_o·[h,x] + b_o)   h' = o⊙tanh(c')
/// y = w_out·h' + b_out
/// ```
pub fn lstm_step(p: &LstmParams, s: &CellState, x: &[f64]) -> Result<(CellState, f64), RecurrentError> {
    p.step(s, x).map(|(state, y, _)| (state, y))
}

impl Cell for LstmParams {
    type Step = LstmStep;

    fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn initial_state(&self) -> CellState {
        CellState { h: vec![0.0; self.hidden_size], c: Some(vec![0.0; self.hidden_size]) }
    }

    fn step(&self, state: &CellState, x: &[f64]) -> Result<(CellState, f64, LstmStep), RecurrentError> {
        self.check()?;
        check_len("input", self.input_size, x.len())?;
        check_len("hidden state", self.hidden_size, state.h.len())?;
        let c_prev = state.c.clone().ok_or(RecurrentError::Shape {
            what: "lstm cell state",
            expected: self.hidden_size,
            got: 0,
        })?;
        check_len("cell state", self.hidden_size, c_prev.len())?;

        let z = concat(&state.h, x);
        let forget: Vec<f64> = affine(&self.w_f, Some(&self.b_f), &z).into_iter().map(sigmoid).collect();
        let input: Vec<f64> = affine(&self.w_i, Some(&self.b_i), &z).into_iter().map(sigmoid).collect();
        let candidate: Vec<f64> = affine(&self.w_c, Some(&self.b_c), &z).into_iter().map(f64::tanh).collect();
        let output: Vec<f64> = affine(&self.w_o, Some(&self.b_o), &z).into_iter().map(sigmoid).collect();
        let c: Vec<f64> = (0..self.hidden_size)
            .map(|k| forget[k] * c_prev[k] + input[k] * candidate[k])
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = output.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
        let y = self.w_out.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + self.b_out;
        let next = CellState { h: h.clone(), c: Some(c.clone()) };
        Ok((next, y, LstmStep { z, forget, input, candidate, output, c_prev, c, tanh_c, h }))
    }

    fn backward(&self, steps: &[LstmStep], d_outputs: &[f64]) -> LstmParams {
        let hs = self.hidden_size;
        let mut g = self.zeros_like();
        let mut dh_next = vec![0.0; hs];
        let mut dc_next = vec![0.0; hs];
        for (s, &dy) in steps.iter().zip(d_outputs).rev() {
            g.b_out += dy;
            for k in 0..hs {
                g.w_out[k] += dy * s.h[k];
            }
            let mut d_forget = vec![0.0; hs];
            let mut d_input = vec![0.0; hs];
            let mut d_cand = vec![0.0; hs];
            let mut d_out = vec![0.0; hs];
            for k in 0..hs {
                let dh = dy * self.w_out[k] + dh_next[k];
                let dc = dh * s.output[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
                d_out[k] = dh * s.tanh_c[k] * s.output[k] * (1.0 - s.output[k]);
                d_forget[k] = dc * s.c_prev[k] * s.forget[k] * (1.0 - s.forget[k]);
                d_input[k] = dc * s.candidate[k] * s.input[k] * (1.0 - s.input[k]);
                d_cand[k] = dc * s.input[k] * (1.0 - s.candidate[k] * s.candidate[k]);
                dc_next[k] = dc * s.forget[k];
            }
            let mut dz = vec![0.0; s.z.len()];
            for (w, dw, db, delta) in [
                (&self.w_f, &mut g.w_f, &mut g.b_f, &d_forget),
                (&self.w_i, &mut g.w_i, &mut g.b_i, &d_input),
                (&self.w_c, &mut g.w_c, &mut g.b_c, &d_cand),
                (&self.w_o, &mut g.w_o, &mut g.b_o, &d_out),
            ] {
                for (a, b) in dz.iter_mut().zip(backprop_affine(w, dw, delta, &s.z)) {
                    *a += b;
                }
                for (b, d) in db.iter_mut().zip(delta.iter()) {
                    *b += d;
                }
            }
            dh_next.copy_from_slice(&dz[..hs]);
        }
        g
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for part in [
            &self.w_f, &self.w_i, &self.w_c, &self.w_o, &self.b_f, &self.b_i, &self.b_c, &self.b_o, &self.w_out,
        ] {
            v.extend_from_slice(part);
        }
        v.push(self.b_out);
        v
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut rest = flat;
        for part in [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
            &mut self.w_out,
        ] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
        self.b_out = rest[0];
    }
}
