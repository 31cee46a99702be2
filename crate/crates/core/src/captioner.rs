//! Stacked-GRU language model conditioned on a fused latent vector.
//!
//! Every step adds a learned projection of the latent to the embedding of the
//! previous token. Layers above the first receive the (dropped-out) output of
//! the layer below and add it back to their own output. A linear map from the
//! top output gives vocabulary logits.

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{BOS, EOS, PAD};
use crate::features::LatentVector;
use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum CaptionerError {
    #[error("embedding size {embed} must equal hidden size {hidden}")]
    EmbedHiddenMismatch { embed: usize, hidden: usize },
    #[error("invalid captioner size: {0}")]
    InvalidSize(String),
    #[error("token {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("caption must hold at least BOS and EOS, got {0} tokens")]
    CaptionTooShort(usize),
    #[error("latent has {found} entries, captioner expects {expected}")]
    LatentSize { expected: usize, found: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptionerConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub latent_dim: usize,
    pub dropout: f64,
}

impl Default for CaptionerConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            embed_dim: 64,
            hidden: 64,
            layers: 2,
            latent_dim: 96,
            dropout: 0.5,
        }
    }
}

impl CaptionerConfig {
    fn validate(&self) -> Result<(), CaptionerError> {
        if self.embed_dim != self.hidden {
            return Err(CaptionerError::EmbedHiddenMismatch {
                embed: self.embed_dim,
                hidden: self.hidden,
            });
        }
        if self.vocab_size == 0 || self.hidden == 0 || self.layers == 0 || self.latent_dim == 0 {
            return Err(CaptionerError::InvalidSize(format!("{self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CaptionerError::InvalidSize(format!("dropout {}", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GruIds {
    w_z: ParamId,
    u_z: ParamId,
    b_z: ParamId,
    w_r: ParamId,
    u_r: ParamId,
    b_r: ParamId,
    w_n: ParamId,
    u_n: ParamId,
    b_n: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    embedding: ParamId,
    latent_w: ParamId,
    latent_b: ParamId,
    layers: Vec<GruIds>,
    out_w: ParamId,
    out_b: ParamId,
}

/// Per-layer hidden vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T> {
    pub hidden: Vec<Vec<T>>,
}

impl<T: Scalar> DecoderState<T> {
    pub fn zeros(layers: usize, hidden: usize) -> Self {
        Self {
            hidden: vec![vec![T::zero(); hidden]; layers],
        }
    }

    pub fn norm(&self, layer: usize) -> T {
        self.hidden[layer].iter().map(|&x| x * x).sum::<T>().sqrt()
    }
}

/// Captioner parameters bound to one tape.
#[derive(Debug, Clone)]
pub struct BoundCaptioner {
    vars: Vec<Var>,
}

/// Dropout settings for a forward pass; `None` means eval mode.
pub struct Train<'a, R> {
    pub dropout: f64,
    pub rng: &'a mut R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Captioner<T> {
    config: CaptionerConfig,
    params: ParamStore<T>,
    layout: Layout,
}

impl<T: Scalar> Captioner<T> {
    /// Uniform `(-a, a)` initialisation with `a = sqrt(1 / hidden)`.
    pub fn new(config: CaptionerConfig, seed: u64) -> Result<Self, CaptionerError> {
        config.validate()?;
        let a = (1.0 / config.hidden as f64).sqrt();
        let dist = Uniform::new(-a, a);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut init = |params: &mut ParamStore<T>, name: String, shape: &[usize]| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| T::of(dist.sample(&mut rng))).collect();
            params.insert(name, Tensor::new(shape.to_vec(), data).expect("shape matches"))
        };
        let (v, h, e) = (config.vocab_size, config.hidden, config.embed_dim);
        let embedding = init(&mut params, "embedding".into(), &[v, e]);
        let latent_w = init(&mut params, "latent_proj.weight".into(), &[config.latent_dim, e]);
        let latent_b = init(&mut params, "latent_proj.bias".into(), &[e]);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let mut gate = |g: &str| {
                (
                    init(&mut params, format!("gru{l}.w_{g}"), &[h, h]),
                    init(&mut params, format!("gru{l}.u_{g}"), &[h, h]),
                    init(&mut params, format!("gru{l}.b_{g}"), &[h]),
                )
            };
            let (w_z, u_z, b_z) = gate("z");
            let (w_r, u_r, b_r) = gate("r");
            let (w_n, u_n, b_n) = gate("n");
            layers.push(GruIds {
                w_z,
                u_z,
                b_z,
                w_r,
                u_r,
                b_r,
                w_n,
                u_n,
                b_n,
            });
        }
        let out_w = init(&mut params, "output.weight".into(), &[h, v]);
        let out_b = init(&mut params, "output.bias".into(), &[v]);
        Ok(Self {
            config,
            params,
            layout: Layout {
                embedding,
                latent_w,
                latent_b,
                layers,
                out_w,
                out_b,
            },
        })
    }

    /// Rebuilds a captioner from stored parameters (names without prefix).
    pub fn from_params(config: CaptionerConfig, stored: &ParamStore<T>) -> Result<Self, CaptionerError> {
        let mut model = Self::new(config, 0)?;
        model.params.load_values(stored)?;
        Ok(model)
    }

    pub fn config(&self) -> &CaptionerConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> BoundCaptioner {
        BoundCaptioner {
            vars: self.params.bind(tape),
        }
    }

    pub fn accumulate_grads(&mut self, tape: &Tape<T>, bound: &BoundCaptioner) {
        self.params.accumulate_grads(tape, &bound.vars);
    }

    fn check_latent(&self, tape: &Tape<T>, latent: Var) -> Result<(), CaptionerError> {
        let found = tape.value(latent).len();
        if found != self.config.latent_dim {
            return Err(CaptionerError::LatentSize {
                expected: self.config.latent_dim,
                found,
            });
        }
        Ok(())
    }

    /// Learned projection of the latent into embedding space, computed once
    /// per caption and added at every step.
    pub fn project_latent(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundCaptioner,
        latent: Var,
    ) -> Result<Var, CaptionerError> {
        self.check_latent(tape, latent)?;
        let p = |id: ParamId| bound.vars[id.0];
        let proj = tape.matmul(latent, p(self.layout.latent_w))?;
        Ok(tape.add(proj, p(self.layout.latent_b))?)
    }

    /// One decoding step on `tape`. Returns the logits and the new per-layer
    /// hidden states.
    pub fn step_on_tape<R: Rng>(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundCaptioner,
        projected_latent: Var,
        prev_token: usize,
        state: &[Var],
        mut train: Option<&mut Train<'_, R>>,
    ) -> Result<(Var, Vec<Var>), CaptionerError> {
        if prev_token >= self.config.vocab_size {
            return Err(CaptionerError::TokenOutOfRange {
                token: prev_token,
                vocab: self.config.vocab_size,
            });
        }
        let p = |id: ParamId| bound.vars[id.0];
        let embedded = tape.row(p(self.layout.embedding), prev_token)?;
        let mut input = tape.add(embedded, projected_latent)?;
        let mut next_state = Vec::with_capacity(self.config.layers);
        let mut below = None;
        for (l, ids) in self.layout.layers.iter().enumerate() {
            if let Some(out) = below {
                input = match train.as_deref_mut() {
                    Some(t) => tape.dropout(out, t.dropout, t.rng)?,
                    None => out,
                };
            }
            let h = state[l];
            let z = gate(tape, input, h, p(ids.w_z), p(ids.u_z), p(ids.b_z))?;
            let z = tape.sigmoid(z)?;
            let r = gate(tape, input, h, p(ids.w_r), p(ids.u_r), p(ids.b_r))?;
            let r = tape.sigmoid(r)?;
            let xn = tape.matmul(input, p(ids.w_n))?;
            let hn = tape.matmul(h, p(ids.u_n))?;
            let rhn = tape.mul(r, hn)?;
            let n = tape.add(xn, rhn)?;
            let n = tape.add(n, p(ids.b_n))?;
            let n = tape.tanh(n)?;
            // h' = (1 - z) ⊙ n + z ⊙ h
            let keep = tape.affine(z, -T::one(), T::one())?;
            let a = tape.mul(keep, n)?;
            let b = tape.mul(z, h)?;
            let h_new = tape.add(a, b)?;
            next_state.push(h_new);
            let out = if l == 0 { h_new } else { tape.add(h_new, input)? };
            below = Some(out);
        }
        let top = below.expect("at least one layer");
        let top = match train {
            Some(t) => tape.dropout(top, t.dropout, t.rng)?,
            None => top,
        };
        let logits = tape.matmul(top, p(self.layout.out_w))?;
        let logits = tape.add(logits, p(self.layout.out_b))?;
        Ok((logits, next_state))
    }

    fn zero_state_on_tape(&self, tape: &mut Tape<T>) -> Vec<Var> {
        (0..self.config.layers)
            .map(|_| tape.constant(Tensor::zeros(&[self.config.hidden])))
            .collect()
    }

    /// Mean cross-entropy of predicting `caption[t + 1]` from the
    /// ground-truth `caption[t]`, starting from a zero state.
    pub fn loss_on_tape<R: Rng>(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundCaptioner,
        latent: Var,
        caption: &[usize],
        mut train: Option<&mut Train<'_, R>>,
    ) -> Result<Var, CaptionerError> {
        if caption.len() < 2 {
            return Err(CaptionerError::CaptionTooShort(caption.len()));
        }
        if let Some(&token) = caption.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(CaptionerError::TokenOutOfRange {
                token,
                vocab: self.config.vocab_size,
            });
        }
        let projected = self.project_latent(tape, bound, latent)?;
        let mut state = self.zero_state_on_tape(tape);
        let mut terms = Vec::with_capacity(caption.len() - 1);
        for pair in caption.windows(2) {
            let (logits, next) = self.step_on_tape(tape, bound, projected, pair[0], &state, train.as_deref_mut())?;
            terms.push(tape.softmax_cross_entropy(logits, pair[1])?);
            state = next;
        }
        let total = tape.add_all(&terms)?.expect("non-empty caption");
        Ok(tape.scale(total, T::one() / T::of(terms.len() as f64))?)
    }

    /// Single decoding step outside of training.
    pub fn decode_step<R: Rng>(
        &self,
        latent: &LatentVector<T>,
        prev_token: usize,
        state: &DecoderState<T>,
        train: Option<&mut Train<'_, R>>,
    ) -> Result<(Tensor<T>, DecoderState<T>), CaptionerError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let z = tape.constant(latent.to_tensor());
        let projected = self.project_latent(&mut tape, &bound, z)?;
        let hs: Vec<Var> = state
            .hidden
            .iter()
            .map(|h| tape.constant(Tensor::vector(h.clone())))
            .collect();
        let (logits, next) = self.step_on_tape(&mut tape, &bound, projected, prev_token, &hs, train)?;
        let next = DecoderState {
            hidden: next.iter().map(|&v| tape.value(v).data().to_vec()).collect(),
        };
        Ok((tape.value(logits).clone(), next))
    }

    /// Teacher-forcing loss value in eval mode.
    pub fn teacher_forcing_loss(&self, latent: &LatentVector<T>, caption: &[usize]) -> Result<T, CaptionerError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let z = tape.constant(latent.to_tensor());
        let loss = self.loss_on_tape::<ChaCha8Rng>(&mut tape, &bound, z, caption, None)?;
        Ok(tape.value(loss).item())
    }

    /// Greedy decoding from BOS. Stops after EOS or `max_len` tokens; PAD and
    /// BOS are never emitted and ties go to the lowest index.
    pub fn generate(&self, latent: &LatentVector<T>, max_len: usize) -> Result<Vec<usize>, CaptionerError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let z = tape.constant(latent.to_tensor());
        let projected = self.project_latent(&mut tape, &bound, z)?;
        let mut state = self.zero_state_on_tape(&mut tape);
        let mut prev = BOS;
        let mut out = Vec::new();
        while out.len() < max_len {
            let (logits, next) = self.step_on_tape::<ChaCha8Rng>(&mut tape, &bound, projected, prev, &state, None)?;
            let token = argmax_excluding(tape.value(logits).data(), &[PAD, BOS]);
            out.push(token);
            if token == EOS {
                break;
            }
            prev = token;
            state = next;
        }
        Ok(out)
    }
}

fn gate<T: Scalar>(tape: &mut Tape<T>, x: Var, h: Var, w: Var, u: Var, b: Var) -> Result<Var, TensorError> {
    let xw = tape.matmul(x, w)?;
    let hu = tape.matmul(h, u)?;
    let s = tape.add(xw, hu)?;
    tape.add(s, b)
}

fn argmax_excluding<T: Scalar>(values: &[T], excluded: &[usize]) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map_or(EOS, |(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Adam, AdamConfig};

    fn config(v: usize) -> CaptionerConfig {
        CaptionerConfig {
            vocab_size: v,
            embed_dim: 8,
            hidden: 8,
            layers: 2,
            latent_dim: 5,
            dropout: 0.5,
        }
    }

    fn latent() -> LatentVector<f64> {
        LatentVector::new(vec![0.3, -0.2, 0.9, 0.1, -0.5], 2)
    }

    #[test]
    fn init_rules() {
        let a = Captioner::<f64>::new(config(12), 4).unwrap();
        let b = Captioner::<f64>::new(config(12), 4).unwrap();
        let c = Captioner::<f64>::new(config(12), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        let bound = (1.0f64 / 8.0).sqrt();
        assert!(a.params().iter().flat_map(|p| p.value.data()).all(|v| v.abs() < bound));

        let mut bad = config(12);
        bad.embed_dim = 7;
        assert!(matches!(
            Captioner::<f64>::new(bad, 0),
            Err(CaptionerError::EmbedHiddenMismatch { .. })
        ));
    }

    #[test]
    fn zero_weights_halve_state() {
        let mut m = Captioner::<f64>::new(config(12), 1).unwrap();
        for p in m.params_mut().iter_mut() {
            p.value.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let state = DecoderState {
            hidden: vec![vec![1.0, -2.0, 0.5, 0.0, 3.0, 1.0, 1.0, -1.0]; 2],
        };
        let (_, next) = m.decode_step::<ChaCha8Rng>(&latent(), 4, &state, None).unwrap();
        for l in 0..2 {
            for (a, b) in next.hidden[l].iter().zip(&state.hidden[l]) {
                assert_eq!(*a, 0.5 * b);
            }
            assert_eq!(next.norm(l), 0.5 * state.norm(l));
        }
    }

    #[test]
    fn eval_mode_is_deterministic_and_train_mode_is_not() {
        let m = Captioner::<f64>::new(config(12), 1).unwrap();
        let s = DecoderState::zeros(2, 8);
        let (a, _) = m.decode_step::<ChaCha8Rng>(&latent(), 4, &s, None).unwrap();
        let (b, _) = m.decode_step::<ChaCha8Rng>(&latent(), 4, &s, None).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut train = Train {
            dropout: 0.5,
            rng: &mut rng,
        };
        let (c, _) = m.decode_step(&latent(), 4, &s, Some(&mut train)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn token_range_checked() {
        let m = Captioner::<f64>::new(config(12), 1).unwrap();
        let s = DecoderState::zeros(2, 8);
        assert!(matches!(
            m.decode_step::<ChaCha8Rng>(&latent(), 12, &s, None),
            Err(CaptionerError::TokenOutOfRange { .. })
        ));
        assert!(matches!(
            m.teacher_forcing_loss(&latent(), &[BOS]),
            Err(CaptionerError::CaptionTooShort(1))
        ));
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let mut m = Captioner::<f64>::new(config(8), 1).unwrap();
        for p in m.params_mut().iter_mut() {
            p.value.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let loss = m.teacher_forcing_loss(&latent(), &[BOS, EOS]).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_is_order_sensitive() {
        let m = Captioner::<f64>::new(config(12), 1).unwrap();
        let a = m.teacher_forcing_loss(&latent(), &[BOS, 4, 5, 6, EOS]).unwrap();
        let b = m.teacher_forcing_loss(&latent(), &[BOS, 5, 4, 6, EOS]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn generation_contract() {
        let m = Captioner::<f64>::new(config(12), 1).unwrap();
        let one = m.generate(&latent(), 1).unwrap();
        assert!(one.len() <= 1);
        let out = m.generate(&latent(), 20).unwrap();
        assert!(!out.contains(&PAD));
        let eos = out.iter().filter(|&&t| t == EOS).count();
        assert!(eos <= 1);
        if eos == 1 {
            assert_eq!(*out.last().unwrap(), EOS);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_excluding(&[9.0, 1.0, 3.0, 3.0], &[0]), 2);
    }

    fn overfit(steps: usize) -> (Captioner<f64>, Vec<f64>) {
        let mut m = Captioner::<f64>::new(config(12), 2).unwrap();
        let caption = [BOS, 4, 7, 5, 9, EOS];
        let mut adam = Adam::new(AdamConfig {
            lr: 0.02,
            ..Default::default()
        });
        let mut losses = Vec::new();
        for _ in 0..steps {
            let mut tape = Tape::new();
            let bound = m.bind(&mut tape);
            let z = tape.constant(latent().to_tensor());
            let loss = m
                .loss_on_tape::<ChaCha8Rng>(&mut tape, &bound, z, &caption, None)
                .unwrap();
            losses.push(tape.value(loss).item());
            tape.backward(loss).unwrap();
            m.params_mut().zero_grad();
            m.accumulate_grads(&tape, &bound);
            adam.step(m.params_mut()).unwrap();
        }
        (m, losses)
    }

    #[test]
    fn overfitting_one_sample() {
        let (_, losses) = overfit(30);
        assert!(losses[29] <= 0.5 * losses[0], "{losses:?}");

        let (m, losses) = overfit(100);
        let mut best = f64::INFINITY;
        let mut improvements = 0;
        for &l in &losses {
            if l < best {
                best = l;
                improvements += 1;
            }
        }
        assert!(improvements > 50 && best < 0.05 * losses[0]);
        assert_eq!(m.generate(&latent(), 10).unwrap(), vec![4, 7, 5, 9, EOS]);
    }
}
