//! Echo-state network with a ridge-trained linear readout.
//!
//! The state follows the leaky discrete update
//!
//! ```text
//! x ← (1 − a)·x + a·tanh(W_self·x + W_in·u + W_fb·y + b)
//! y = W_out·x
//! ```
//!
//! where `b` is a fixed random bias column (a constant input channel). Only
//! `W_out` is ever trained.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{RngState, RngStream};
use crate::series::TimeSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirParams {
    /// Neuron count.
    pub n: usize,
    /// Leak rate `a` in `(0, 1]`.
    pub leak: f64,
    /// Target spectral radius of `W_self`.
    pub rho: f64,
    pub input_scale: f64,
    /// Scale of the constant bias column.
    pub bias_scale: f64,
    pub fb_scale: f64,
    /// Fraction of nonzero `W_self` entries.
    pub connectivity: f64,
    pub ridge_lambda: f64,
    /// Initial steps excluded from readout training.
    pub washout: usize,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        Self {
            n: 300,
            leak: 1.0,
            rho: 0.6,
            input_scale: 0.2,
            bias_scale: 0.2,
            fb_scale: 0.0,
            connectivity: 0.05,
            ridge_lambda: 1e-8,
            washout: 200,
        }
    }
}

impl ReservoirParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if !(self.leak > 0.0 && self.leak <= 1.0) {
            return Err(Error::param(
                "leak",
                format!("must lie in (0, 1], got {}", self.leak),
            ));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::param("rho", "must be finite and >= 0"));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return Err(Error::param("connectivity", "must lie in (0, 1]"));
        }
        for (name, v) in [
            ("input_scale", self.input_scale),
            ("bias_scale", self.bias_scale),
            ("fb_scale", self.fb_scale),
            ("ridge_lambda", self.ridge_lambda),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Row-compressed copy of `W_self` used by [`Reservoir::step`].
#[derive(Debug, Clone, PartialEq)]
struct SparseRows {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseRows {
    fn from_dense(m: &Matrix) -> Self {
        let mut row_ptr = Vec::with_capacity(m.rows() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    cols.push(c as u32);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            vals,
        }
    }

    #[inline]
    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[s..e]
            .iter()
            .zip(&self.vals[s..e])
            .map(|(&c, &v)| v * x[c as usize])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ReservoirRepr", try_from = "ReservoirRepr")]
pub struct Reservoir {
    params: ReservoirParams,
    w_self: Matrix,
    w_in: Matrix,
    w_bias: Vec<f64>,
    w_fb: Matrix,
    w_out: Matrix,
    state: Vec<f64>,
    provenance: Option<RngState>,
    sparse: SparseRows,
}

impl Reservoir {
    /// Draws a fresh reservoir: sparse uniform `W_self` rescaled to spectral
    /// radius `rho`, dense uniform input/bias/feedback weights, zero state and
    /// zero readout.
    pub fn init(
        params: ReservoirParams,
        d_in: usize,
        d_out: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        params.validate()?;
        if d_out == 0 {
            return Err(Error::param("d_out", "must be at least 1"));
        }
        let provenance = Some(rng.state());
        let n = params.n;

        let mut w_self = Self::draw_recurrent(n, params.connectivity, rng);
        let mut radius = linalg::spectral_radius(&w_self)?;
        if radius == 0.0 {
            log::warn!("reservoir draw had zero spectral radius, redrawing once");
            w_self = Self::draw_recurrent(n, params.connectivity, rng);
            radius = linalg::spectral_radius(&w_self)?;
            if radius == 0.0 {
                return Err(Error::Degenerate(
                    "recurrent weights have zero spectral radius after redraw".into(),
                ));
            }
        }
        w_self.scale(params.rho / radius);

        let mut w_in = Matrix::random_uniform(n, d_in, -1.0, 1.0, rng);
        w_in.scale(params.input_scale);
        let w_bias: Vec<f64> = (0..n)
            .map(|_| rng.uniform_range(-1.0, 1.0) * params.bias_scale)
            .collect();
        let mut w_fb = Matrix::random_uniform(n, d_out, -1.0, 1.0, rng);
        w_fb.scale(params.fb_scale);

        let sparse = SparseRows::from_dense(&w_self);
        Ok(Self {
            params,
            w_self,
            w_in,
            w_bias,
            w_fb,
            w_out: Matrix::zeros(d_out, n),
            state: vec![0.0; n],
            provenance,
            sparse,
        })
    }

    fn draw_recurrent(n: usize, connectivity: f64, rng: &mut RngStream) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for v in m.as_mut_slice() {
            // draw both numbers unconditionally so the stream layout does not
            // depend on the sparsity pattern
            let keep = rng.uniform() < connectivity;
            let w = rng.uniform_range(-1.0, 1.0);
            if keep {
                *v = w;
            }
        }
        m
    }

    /// Assembles a reservoir from explicit weights. The leak may be any value
    /// in `[0, 1]` here, including the degenerate frozen case `a = 0`.
    pub fn from_parts(
        params: ReservoirParams,
        w_self: Matrix,
        w_in: Matrix,
        w_bias: Vec<f64>,
        w_fb: Matrix,
        w_out: Matrix,
    ) -> Result<Self> {
        let n = params.n;
        if !(0.0..=1.0).contains(&params.leak) {
            return Err(Error::param("leak", "must lie in [0, 1]"));
        }
        if w_self.rows() != n || w_self.cols() != n {
            return Err(Error::dims(
                "W_self",
                format!("{n}x{n}"),
                format!("{}x{}", w_self.rows(), w_self.cols()),
            ));
        }
        if w_in.rows() != n {
            return Err(Error::dims("W_in rows", n, w_in.rows()));
        }
        if w_bias.len() != n {
            return Err(Error::dims("bias", n, w_bias.len()));
        }
        if w_fb.rows() != n {
            return Err(Error::dims("W_fb rows", n, w_fb.rows()));
        }
        if w_out.cols() != n || w_out.rows() != w_fb.cols() {
            return Err(Error::dims(
                "W_out",
                format!("{}x{n}", w_fb.cols()),
                format!("{}x{}", w_out.rows(), w_out.cols()),
            ));
        }
        if !(w_self.is_finite() && w_in.is_finite() && w_fb.is_finite() && w_out.is_finite())
            || w_bias.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("reservoir weights"));
        }
        let sparse = SparseRows::from_dense(&w_self);
        Ok(Self {
            params,
            w_self,
            w_in,
            w_bias,
            w_fb,
            w_out,
            state: vec![0.0; n],
            provenance: None,
            sparse,
        })
    }

    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }

    pub fn size(&self) -> usize {
        self.params.n
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_out.rows()
    }

    pub fn w_self(&self) -> &Matrix {
        &self.w_self
    }

    pub fn w_in(&self) -> &Matrix {
        &self.w_in
    }

    pub fn w_bias(&self) -> &[f64] {
        &self.w_bias
    }

    pub fn w_fb(&self) -> &Matrix {
        &self.w_fb
    }

    pub fn w_out(&self) -> &Matrix {
        &self.w_out
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn provenance(&self) -> Option<RngState> {
        self.provenance
    }

    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.state.len() {
            return Err(Error::dims("set_state", self.state.len(), state.len()));
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reservoir state"));
        }
        self.state.copy_from_slice(state);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn is_trained(&self) -> bool {
        self.w_out.as_slice().iter().any(|v| *v != 0.0)
    }

    /// Advances the state by one step and returns it.
    pub fn step(&mut self, u: &[f64], y_fb: &[f64]) -> Result<&[f64]> {
        if u.len() != self.input_dim() {
            return Err(Error::dims("step input", self.input_dim(), u.len()));
        }
        if y_fb.len() != self.output_dim() {
            return Err(Error::dims("step feedback", self.output_dim(), y_fb.len()));
        }
        if u.iter().chain(y_fb).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reservoir input"));
        }
        let a = self.params.leak;
        let n = self.params.n;
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let mut pre = self.sparse.row_dot(i, &self.state);
            pre += linalg::dot(self.w_in.row(i), u);
            pre += linalg::dot(self.w_fb.row(i), y_fb);
            pre += self.w_bias[i];
            next.push((1.0 - a) * self.state[i] + a * pre.tanh());
        }
        self.state = next;
        Ok(&self.state)
    }

    /// `W_out · x`.
    pub fn readout(&self) -> Vec<f64> {
        (0..self.w_out.rows())
            .map(|r| linalg::dot(self.w_out.row(r), &self.state))
            .collect()
    }

    /// Runs the reservoir from the zero state over `inputs` (one row per time
    /// step) with teacher forcing: the feedback at step `t` is `teacher[t−1]`.
    /// Returns the states of steps `washout..len` as rows.
    pub fn harvest_states(&mut self, inputs: &Matrix, teacher: &Matrix) -> Result<Matrix> {
        let len = inputs.rows();
        if teacher.rows() != len {
            return Err(Error::dims("harvest teacher length", len, teacher.rows()));
        }
        if inputs.cols() != self.input_dim() {
            return Err(Error::dims(
                "harvest input width",
                self.input_dim(),
                inputs.cols(),
            ));
        }
        if teacher.cols() != self.output_dim() {
            return Err(Error::dims(
                "harvest teacher width",
                self.output_dim(),
                teacher.cols(),
            ));
        }
        let washout = self.params.washout;
        if len <= washout {
            return Err(Error::param(
                "washout",
                format!("sequence of length {len} leaves nothing after a washout of {washout}"),
            ));
        }
        self.reset();
        let mut states = Matrix::zeros(len - washout, self.params.n);
        let zero_fb = vec![0.0; self.output_dim()];
        for t in 0..len {
            let fb = if t == 0 {
                &zero_fb[..]
            } else {
                teacher.row(t - 1)
            };
            self.step(inputs.row(t), fb)?;
            if t >= washout {
                states.row_mut(t - washout).copy_from_slice(&self.state);
            }
        }
        Ok(states)
    }

    /// Fits `W_out` by ridge regression of `targets` on `states`.
    pub fn train_readout(&mut self, states: &Matrix, targets: &Matrix) -> Result<()> {
        if states.cols() != self.params.n {
            return Err(Error::dims(
                "train_readout states",
                self.params.n,
                states.cols(),
            ));
        }
        if targets.cols() != self.output_dim() {
            return Err(Error::dims(
                "train_readout targets",
                self.output_dim(),
                targets.cols(),
            ));
        }
        let w = linalg::ridge_solve(states, targets, self.params.ridge_lambda)?;
        self.w_out = w.transpose();
        Ok(())
    }

    pub fn set_readout(&mut self, w_out: Matrix) -> Result<()> {
        if w_out.rows() != self.output_dim() || w_out.cols() != self.params.n {
            return Err(Error::dims(
                "set_readout",
                format!("{}x{}", self.output_dim(), self.params.n),
                format!("{}x{}", w_out.rows(), w_out.cols()),
            ));
        }
        self.w_out = w_out;
        Ok(())
    }

    /// Runs a trained single-input, single-output reservoir over `distorted`
    /// from the zero state and returns the reconstructed signal. Feedback,
    /// when enabled, is the reservoir's own previous output.
    pub fn equalize(&mut self, distorted: &TimeSeries) -> Result<TimeSeries> {
        if !self.is_trained() {
            return Err(Error::Untrained("equalizer readout is all zero"));
        }
        if self.input_dim() != 1 || self.output_dim() != 1 {
            return Err(Error::dims(
                "equalize",
                "1 input, 1 output",
                format!("{} inputs, {} outputs", self.input_dim(), self.output_dim()),
            ));
        }
        self.reset();
        let mut out = Vec::with_capacity(distorted.len());
        let mut y = [0.0];
        for &u in distorted.samples() {
            self.step(&[u], &y)?;
            y[0] = linalg::dot(self.w_out.row(0), &self.state);
            out.push(y[0]);
        }
        TimeSeries::new(out, distorted.dt())
    }

    /// Trains a single-channel inverse model from a distorted input and its
    /// clean source, as in channel equalization.
    pub fn fit_inverse_model(
        params: ReservoirParams,
        distorted: &TimeSeries,
        clean: &TimeSeries,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if distorted.len() != clean.len() {
            return Err(Error::dims(
                "fit_inverse_model",
                clean.len(),
                distorted.len(),
            ));
        }
        let mut r = Reservoir::init(params, 1, 1, rng)?;
        let inputs = Matrix::from_vec(distorted.len(), 1, distorted.samples().to_vec())?;
        let teacher = Matrix::from_vec(clean.len(), 1, clean.samples().to_vec())?;
        let states = r.harvest_states(&inputs, &teacher)?;
        let washout = r.params.washout;
        let targets = Matrix::from_vec(
            clean.len() - washout,
            1,
            clean.samples()[washout..].to_vec(),
        )?;
        r.train_readout(&states, &targets)?;
        r.reset();
        Ok(r)
    }
}

#[derive(Serialize, Deserialize)]
struct ReservoirRepr {
    d_in: usize,
    d_out: usize,
    params: ReservoirParams,
    provenance: Option<RngState>,
    w_self: Vec<f64>,
    w_in: Vec<f64>,
    w_bias: Vec<f64>,
    w_fb: Vec<f64>,
    w_out: Vec<f64>,
}

impl From<Reservoir> for ReservoirRepr {
    fn from(r: Reservoir) -> Self {
        Self {
            d_in: r.input_dim(),
            d_out: r.output_dim(),
            params: r.params,
            provenance: r.provenance,
            w_self: r.w_self.into_vec(),
            w_in: r.w_in.into_vec(),
            w_bias: r.w_bias,
            w_fb: r.w_fb.into_vec(),
            w_out: r.w_out.into_vec(),
        }
    }
}

impl TryFrom<ReservoirRepr> for Reservoir {
    type Error = Error;

    fn try_from(repr: ReservoirRepr) -> Result<Self> {
        let n = repr.params.n;
        let mut r = Reservoir::from_parts(
            repr.params,
            Matrix::from_vec(n, n, repr.w_self)?,
            Matrix::from_vec(n, repr.d_in, repr.w_in)?,
            repr.w_bias,
            Matrix::from_vec(n, repr.d_out, repr.w_fb)?,
            Matrix::from_vec(repr.d_out, n, repr.w_out)?,
        )?;
        r.provenance = repr.provenance;
        Ok(r)
    }
}
