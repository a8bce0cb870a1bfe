//! Small convolutional classifier: one conv layer (valid, with bias), ReLU,
//! max pooling, a dense layer and softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::rng::RngStream;

pub const BACKGROUND: &str = "background";

/// One labeled classifier input: `input_size²` intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub patch: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.003,
            batch_size: 32,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvNet {
    pub classes: Vec<String>,
    input_size: usize,
    kernel_size: usize,
    n_kernels: usize,
    pool: usize,
    kernels: Vec<f64>,
    conv_bias: Vec<f64>,
    dense_w: Vec<f64>,
    dense_b: Vec<f64>,
    /// Fraction of the box side added as surrounding context on every side
    /// when a region is sampled for this net.
    #[serde(default)]
    context: f64,
}

/// Reusable buffers for [`ConvNet::probabilities_with`].
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    conv: Vec<f64>,
    features: Vec<f64>,
    argmax: Vec<usize>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl Workspace {
    /// Log-odds `ln p_c − ln(1 − p_c)` of class `c` from the last pass.
    /// Monotone in `p_c` but free of saturation near 1.
    pub fn log_odds(&self, c: usize) -> f64 {
        let z = &self.logits;
        let m = z
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != c)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let rest: f64 = z
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != c)
            .map(|(_, v)| (v - m).exp())
            .sum();
        z[c] - (m + rest.ln())
    }
}

impl ConvNet {
    pub const INPUT: usize = 16;
    pub const KERNEL: usize = 3;
    pub const KERNELS: usize = 4;
    pub const POOL: usize = 2;

    /// All-zero parameters. Every input maps to the uniform distribution.
    pub fn zeros(classes: Vec<String>) -> Result<Self> {
        Self::with_shape(
            classes,
            Self::INPUT,
            Self::KERNEL,
            Self::KERNELS,
            Self::POOL,
        )
    }

    /// Like [`ConvNet::zeros`] with a different number of conv kernels.
    pub fn zeros_with_kernels(classes: Vec<String>, n_kernels: usize) -> Result<Self> {
        Self::with_shape(classes, Self::INPUT, Self::KERNEL, n_kernels, Self::POOL)
    }

    pub fn with_shape(
        classes: Vec<String>,
        input_size: usize,
        kernel_size: usize,
        n_kernels: usize,
        pool: usize,
    ) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::param("classes", "need at least two"));
        }
        if kernel_size % 2 == 0 || kernel_size > input_size {
            return Err(Error::param("kernel_size", "must be odd and fit the input"));
        }
        if n_kernels == 0 {
            return Err(Error::param("n_kernels", "must be at least 1"));
        }
        if pool == 0 || (input_size - kernel_size + 1) / pool == 0 {
            return Err(Error::param("pool", "window leaves no pooled output"));
        }
        let mut net = Self {
            classes,
            input_size,
            kernel_size,
            n_kernels,
            pool,
            kernels: vec![0.0; n_kernels * kernel_size * kernel_size],
            conv_bias: vec![0.0; n_kernels],
            dense_w: Vec::new(),
            dense_b: Vec::new(),
            context: 0.0,
        };
        net.dense_w = vec![0.0; net.classes.len() * net.features()];
        net.dense_b = vec![0.0; net.classes.len()];
        Ok(net)
    }

    /// He-uniform conv kernels, Glorot-uniform dense weights, zero biases.
    pub fn random(classes: Vec<String>, rng: &mut RngStream) -> Result<Self> {
        Self::random_with_kernels(classes, Self::KERNELS, rng)
    }

    pub fn random_with_kernels(
        classes: Vec<String>,
        n_kernels: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut net = Self::zeros_with_kernels(classes, n_kernels)?;
        let kc = (6.0 / (net.kernel_size * net.kernel_size) as f64).sqrt();
        for w in &mut net.kernels {
            *w = rng.uniform_range(-kc, kc);
        }
        let dc = (6.0 / (net.features() + net.classes.len()) as f64).sqrt();
        for w in &mut net.dense_w {
            *w = rng.uniform_range(-dc, dc);
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a serialized net and checks that every weight array matches
    /// the declared shape.
    pub fn from_json(s: &str) -> Result<Self> {
        let net: ConvNet = serde_json::from_str(s)?;
        let shape = Self::with_shape(
            net.classes.clone(),
            net.input_size,
            net.kernel_size,
            net.n_kernels,
            net.pool,
        )?;
        for (name, have, want) in [
            ("kernels", net.kernels.len(), shape.kernels.len()),
            ("conv_bias", net.conv_bias.len(), shape.conv_bias.len()),
            ("dense_w", net.dense_w.len(), shape.dense_w.len()),
            ("dense_b", net.dense_b.len(), shape.dense_b.len()),
        ] {
            if have != want {
                return Err(Error::dims(name, want, have));
            }
        }
        if !net.params().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network weights"));
        }
        if !(net.context >= 0.0 && net.context.is_finite()) {
            return Err(Error::param("context", "must be finite and non-negative"));
        }
        Ok(net)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn context(&self) -> f64 {
        self.context
    }

    pub fn set_context(&mut self, context: f64) -> Result<()> {
        if !(context >= 0.0 && context.is_finite()) {
            return Err(Error::param("context", "must be finite and non-negative"));
        }
        self.context = context;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn background_index(&self) -> Option<usize> {
        self.classes.iter().position(|c| c == BACKGROUND)
    }

    fn conv_side(&self) -> usize {
        self.input_size - self.kernel_size + 1
    }

    fn pooled_side(&self) -> usize {
        self.conv_side() / self.pool
    }

    fn features(&self) -> usize {
        self.n_kernels * self.pooled_side() * self.pooled_side()
    }

    pub fn param_count(&self) -> usize {
        self.kernels.len() + self.conv_bias.len() + self.dense_w.len() + self.dense_b.len()
    }

    /// Parameters flattened in the order kernels, conv biases, dense weights,
    /// dense biases.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.kernels);
        v.extend_from_slice(&self.conv_bias);
        v.extend_from_slice(&self.dense_w);
        v.extend_from_slice(&self.dense_b);
        v
    }

    fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for block in [
            &mut self.kernels,
            &mut self.conv_bias,
            &mut self.dense_w,
            &mut self.dense_b,
        ] {
            if i < block.len() {
                return &mut block[i];
            }
            i -= block.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        *self.param_mut(i) = value;
    }

    /// Adds `delta` to every dense bias, shifting all logits equally.
    pub fn shift_logits(&mut self, delta: f64) {
        self.dense_b.iter_mut().for_each(|b| *b += delta);
    }

    fn check_patch(&self, patch: &[f64]) -> Result<()> {
        let n = self.input_size * self.input_size;
        if patch.len() != n {
            return Err(Error::dims("classifier patch", n, patch.len()));
        }
        Ok(())
    }

    /// Class probabilities for a patch of exactly the input size.
    pub fn forward(&self, patch: &Frame) -> Result<Vec<f64>> {
        if patch.width() != self.input_size || patch.height() != self.input_size {
            return Err(Error::dims(
                "forward",
                format!("{0}x{0} patch", self.input_size),
                format!("{}x{}", patch.width(), patch.height()),
            ));
        }
        self.probabilities(patch.pixels())
    }

    pub fn probabilities(&self, patch: &[f64]) -> Result<Vec<f64>> {
        let mut ws = Workspace::default();
        Ok(self.probabilities_with(patch, &mut ws)?.to_vec())
    }

    pub fn probabilities_with<'w>(
        &self,
        patch: &[f64],
        ws: &'w mut Workspace,
    ) -> Result<&'w [f64]> {
        self.check_patch(patch)?;
        self.run(patch, ws);
        Ok(&ws.probs)
    }

    fn run(&self, x: &[f64], ws: &mut Workspace) {
        let s = self.input_size;
        let k = self.kernel_size;
        let o = self.conv_side();
        let ps = self.pooled_side();
        ws.conv.clear();
        ws.conv.resize(self.n_kernels * o * o, 0.0);
        for kk in 0..self.n_kernels {
            let w = &self.kernels[kk * k * k..(kk + 1) * k * k];
            let b = self.conv_bias[kk];
            let out = &mut ws.conv[kk * o * o..(kk + 1) * o * o];
            out.fill(b);
            // row-wise axpy per tap; each output still sums taps in row-major order
            for p in 0..k {
                for q in 0..k {
                    let wv = w[p * k + q];
                    for r in 0..o {
                        let src = &x[(r + p) * s + q..(r + p) * s + q + o];
                        for (acc, xv) in out[r * o..(r + 1) * o].iter_mut().zip(src) {
                            *acc += wv * xv;
                        }
                    }
                }
            }
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
        }
        let nf = self.features();
        ws.features.clear();
        ws.features.resize(nf, 0.0);
        ws.argmax.clear();
        ws.argmax.resize(nf, 0);
        for kk in 0..self.n_kernels {
            let map = &ws.conv[kk * o * o..(kk + 1) * o * o];
            for i in 0..ps {
                for j in 0..ps {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for di in 0..self.pool {
                        for dj in 0..self.pool {
                            let idx = (i * self.pool + di) * o + j * self.pool + dj;
                            if map[idx] > best {
                                best = map[idx];
                                at = idx;
                            }
                        }
                    }
                    let f = kk * ps * ps + i * ps + j;
                    ws.features[f] = best;
                    ws.argmax[f] = kk * o * o + at;
                }
            }
        }
        let nc = self.classes.len();
        ws.logits.clear();
        for c in 0..nc {
            let w = &self.dense_w[c * nf..(c + 1) * nf];
            let z = self.dense_b[c] + w.iter().zip(&ws.features).map(|(a, b)| a * b).sum::<f64>();
            ws.logits.push(z);
        }
        ws.probs.clear();
        ws.probs.extend_from_slice(&ws.logits);
        softmax_in_place(&mut ws.probs);
    }

    /// Mean cross-entropy over `batch`.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64> {
        let mut ws = Workspace::default();
        let mut total = 0.0;
        for s in batch {
            self.check_label(s)?;
            let p = self.probabilities_with(&s.patch, &mut ws)?;
            total -= p[s.label].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / batch.len().max(1) as f64)
    }

    fn check_label(&self, s: &Sample) -> Result<()> {
        if s.label >= self.classes.len() {
            return Err(Error::param("label", format!("{} out of range", s.label)));
        }
        Ok(())
    }

    /// Mean cross-entropy over `batch` and its gradient, flattened in
    /// [`ConvNet::params`] order.
    pub fn gradient(&self, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.param_count()];
        let mut ws = Workspace::default();
        let mut dconv = Vec::new();
        let mut loss = 0.0;
        let s = self.input_size;
        let k = self.kernel_size;
        let o = self.conv_side();
        let nf = self.features();
        let nc = self.classes.len();
        let (gk, rest) = grad.split_at_mut(self.kernels.len());
        let (gcb, rest) = rest.split_at_mut(self.conv_bias.len());
        let (gdw, gdb) = rest.split_at_mut(self.dense_w.len());
        for smp in batch {
            self.check_patch(&smp.patch)?;
            self.check_label(smp)?;
            self.run(&smp.patch, &mut ws);
            loss -= ws.probs[smp.label].max(f64::MIN_POSITIVE).ln();

            let mut dz = ws.probs.clone();
            dz[smp.label] -= 1.0;
            let mut df = vec![0.0; nf];
            for c in 0..nc {
                gdb[c] += dz[c];
                let w = &self.dense_w[c * nf..(c + 1) * nf];
                let g = &mut gdw[c * nf..(c + 1) * nf];
                for f in 0..nf {
                    g[f] += dz[c] * ws.features[f];
                    df[f] += dz[c] * w[f];
                }
            }
            dconv.clear();
            dconv.resize(ws.conv.len(), 0.0);
            for f in 0..nf {
                let at = ws.argmax[f];
                // ReLU passes gradient only where the pre-activation was positive
                if ws.conv[at] > 0.0 {
                    dconv[at] += df[f];
                }
            }
            for kk in 0..self.n_kernels {
                let d = &dconv[kk * o * o..(kk + 1) * o * o];
                let gw = &mut gk[kk * k * k..(kk + 1) * k * k];
                for r in 0..o {
                    for c in 0..o {
                        let g = d[r * o + c];
                        if g == 0.0 {
                            continue;
                        }
                        gcb[kk] += g;
                        for p in 0..k {
                            for q in 0..k {
                                gw[p * k + q] += g * smp.patch[(r + p) * s + c + q];
                            }
                        }
                    }
                }
            }
        }
        let scale = 1.0 / batch.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((loss * scale, grad))
    }

    /// Mini-batch gradient descent with momentum on mean cross-entropy.
    pub fn train(
        &mut self,
        data: &[Sample],
        cfg: &TrainConfig,
        rng: &mut RngStream,
    ) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::param("dataset", "is empty"));
        }
        let first = data[0].label;
        if data.iter().all(|s| s.label == first) {
            return Err(Error::param("dataset", "contains a single class"));
        }
        if cfg.lr < 0.0 || !cfg.lr.is_finite() {
            return Err(Error::param("lr", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&cfg.momentum) {
            return Err(Error::param("momentum", "must lie in [0, 1)"));
        }
        if cfg.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        let initial_loss = self.loss(data)?;
        let mut velocity = vec![0.0; self.param_count()];
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut epoch_losses = Vec::with_capacity(cfg.epochs);
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.epochs {
            rng.shuffle(&mut order);
            let mut running = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| data[i].clone()));
                let (l, g) = self.gradient(&batch)?;
                running += l * chunk.len() as f64;
                for (i, (v, gi)) in velocity.iter_mut().zip(&g).enumerate() {
                    *v = cfg.momentum * *v + gi;
                    *self.param_mut(i) -= cfg.lr * *v;
                }
            }
            epoch_losses.push(running / data.len() as f64);
        }
        let final_loss = self.loss(data)?;
        if !final_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        log::debug!("classifier loss {initial_loss:.4} -> {final_loss:.4}");
        Ok(TrainReport {
            initial_loss,
            final_loss,
            epoch_losses,
        })
    }

    /// Fraction of samples whose argmax class equals the label.
    pub fn accuracy(&self, data: &[Sample]) -> Result<f64> {
        let mut ws = Workspace::default();
        let mut hits = 0usize;
        for s in data {
            let p = self.probabilities_with(&s.patch, &mut ws)?;
            if argmax(p) == s.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len().max(1) as f64)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> Vec<String> {
        vec![BACKGROUND.into(), "square".into(), "disk".into()]
    }

    #[test]
    fn zero_net_is_uniform() {
        let net = ConvNet::zeros(classes()).unwrap();
        let patch = Frame::from_fn(16, 16, |x, y| ((x * y) % 7) as f64 / 7.0);
        let p = net.forward(&patch).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn wrong_patch_size() {
        let net = ConvNet::zeros(classes()).unwrap();
        assert!(net.forward(&Frame::zeros(15, 16)).is_err());
        assert!(net.probabilities(&[0.0; 10]).is_err());
    }

    #[test]
    fn parameter_count() {
        let net = ConvNet::zeros(classes()).unwrap();
        assert_eq!(net.param_count(), 4 * 9 + 4 + 3 * 196 + 3);
        assert_eq!(net.params().len(), net.param_count());
    }

    #[test]
    fn train_rejects_degenerate_data() {
        let mut net = ConvNet::zeros(classes()).unwrap();
        let mut rng = RngStream::new(0, 0);
        let cfg = TrainConfig::default();
        assert!(net.train(&[], &cfg, &mut rng).is_err());
        let one = vec![
            Sample {
                patch: vec![0.0; 256],
                label: 1,
            };
            3
        ];
        assert!(net.train(&one, &cfg, &mut rng).is_err());
    }

    #[test]
    fn json_round_trip() {
        let net = ConvNet::random(classes(), &mut RngStream::new(1, 0)).unwrap();
        let s = serde_json::to_string(&net).unwrap();
        let back: ConvNet = serde_json::from_str(&s).unwrap();
        assert_eq!(net, back);
    }
}
