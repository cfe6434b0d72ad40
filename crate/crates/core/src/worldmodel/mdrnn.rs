use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{check_param_shapes, clamp_log_sigma, dense, init_linear, lit};
use super::{gmm_nll_graph, GmmParams, StepPrediction, WorldModelError};
use super::{LOG_SIGMA_MAX, LOG_SIGMA_MIN};
use crate::autodiff::{sigmoid, Graph, ParamSet, Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MdrnnConfig {
    pub latent_dim: usize,
    pub action_dim: usize,
    pub hidden_dim: usize,
    pub mixtures: usize,
}

impl Default for MdrnnConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            action_dim: crate::env::Action::DIM,
            hidden_dim: 64,
            mixtures: 3,
        }
    }
}

impl MdrnnConfig {
    pub fn input_dim(&self) -> usize {
        self.latent_dim + self.action_dim
    }

    /// Output columns of the head: `pi | mu | log_sigma | reward | terminal`.
    pub fn head_dim(&self) -> usize {
        self.mixtures * (1 + 2 * self.latent_dim) + 2
    }
}

/// Recurrent state carried between steps. Plain values: copying a state and
/// stepping the copy never affects the original.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldModelState {
    pub h: Vec<f32>,
    pub c: Vec<f32>,
}

impl WorldModelState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

const NAMES: [&str; 5] = ["lstm.wx", "lstm.wh", "lstm.b", "head.w", "head.b"];

/// LSTM over `[z, a]` with linear mixture, reward and terminal heads on the
/// new hidden state. Gate order in the fused weights is input, forget,
/// candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdrnn {
    config: MdrnnConfig,
    params: ParamSet,
}

#[derive(Clone, Copy, Debug)]
pub struct MdrnnVars {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
    pub head_w: Var,
    pub head_b: Var,
}

impl MdrnnVars {
    pub fn all(&self) -> [Var; 5] {
        [self.wx, self.wh, self.b, self.head_w, self.head_b]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MdrnnHeads {
    pub pi_logits: Var,
    pub mu: Var,
    /// Already clamped.
    pub log_sigma: Var,
    pub reward: Var,
    pub terminal_logit: Var,
}

impl Mdrnn {
    fn layout(config: &MdrnnConfig) -> [(&'static str, [usize; 2]); 5] {
        let (i, h, o) = (config.input_dim(), config.hidden_dim, config.head_dim());
        [
            (NAMES[0], [i, 4 * h]),
            (NAMES[1], [h, 4 * h]),
            (NAMES[2], [1, 4 * h]),
            (NAMES[3], [h, o]),
            (NAMES[4], [1, o]),
        ]
    }

    pub fn new<R: Rng + ?Sized>(config: MdrnnConfig, rng: &mut R) -> Self {
        let (h, o) = (config.hidden_dim, config.head_dim());
        let mut params = ParamSet::new();
        // the input and recurrent weights share one fan-in so the initial
        // gate pre-activations stay in the same range as a single layer
        let fan_in = config.input_dim() + h;
        let mut lstm = ParamSet::new();
        init_linear(&mut lstm, "x", fan_in, 4 * h, rng);
        let joint = lstm.require("x.w").expect("just inserted").data();
        let split = config.input_dim() * 4 * h;
        params.insert(
            NAMES[0],
            Tensor::matrix(config.input_dim(), 4 * h, joint[..split].to_vec()).expect("shape"),
        );
        params.insert(
            NAMES[1],
            Tensor::matrix(h, 4 * h, joint[split..].to_vec()).expect("shape"),
        );
        params.insert(
            NAMES[2],
            lstm.require("x.b").expect("just inserted").clone(),
        );
        init_linear(&mut params, "head", h, o, rng);
        Self { config, params }
    }

    pub fn zeroed(config: MdrnnConfig) -> Self {
        let mut params = ParamSet::new();
        for (name, shape) in Self::layout(&config) {
            params.insert(name, Tensor::zeros(&shape));
        }
        Self { config, params }
    }

    /// Rebuilds the network from stored tensors. The action width must be
    /// supplied because the fused input weight only fixes `L + A`.
    pub fn from_params(params: ParamSet, action_dim: usize) -> Result<Self, WorldModelError> {
        let (input, four_h) = params.require(NAMES[0])?.dims2()?;
        let (_, head) = params.require(NAMES[3])?.dims2()?;
        let hidden_dim = four_h / 4;
        let latent_dim = input.saturating_sub(action_dim);
        // head = K * (1 + 2L) + 2
        let mixtures = head.saturating_sub(2) / (1 + 2 * latent_dim).max(1);
        let config = MdrnnConfig {
            latent_dim,
            action_dim,
            hidden_dim,
            mixtures,
        };
        check_param_shapes(&params, &Self::layout(&config))?;
        let mut ordered = ParamSet::new();
        for name in NAMES {
            ordered.insert(name, params.require(name)?.clone());
        }
        Ok(Self {
            config,
            params: ordered,
        })
    }

    pub fn config(&self) -> &MdrnnConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn initial_state(&self) -> WorldModelState {
        WorldModelState::zeros(self.config.hidden_dim)
    }

    fn p(&self, i: usize) -> &Tensor {
        &self.params.tensors()[i]
    }

    /// One recurrent update on `[z, action]` followed by the output heads.
    pub fn step(
        &self,
        z: &[f32],
        action: &[f32],
        state: &WorldModelState,
    ) -> Result<(StepPrediction, WorldModelState), WorldModelError> {
        let c = &self.config;
        let check = |what, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(WorldModelError::Length {
                    what,
                    expected,
                    got,
                })
            }
        };
        check("latent", c.latent_dim, z.len())?;
        check("action", c.action_dim, action.len())?;
        check("hidden state", c.hidden_dim, state.h.len())?;
        check("cell state", c.hidden_dim, state.c.len())?;

        let h = c.hidden_dim;
        let mut x = Vec::with_capacity(c.input_dim());
        x.extend_from_slice(z);
        x.extend_from_slice(action);
        let mut gates = Vec::new();
        dense(&x, self.p(0), self.p(2), &mut gates);
        for (hv, wrow) in state.h.iter().zip(self.p(1).data().chunks_exact(4 * h)) {
            if *hv == 0.0 {
                continue;
            }
            for (g, w) in gates.iter_mut().zip(wrow) {
                *g += hv * w;
            }
        }
        let mut next = WorldModelState::zeros(h);
        for j in 0..h {
            let i_g = sigmoid(gates[j]);
            let f_g = sigmoid(gates[h + j]);
            let g_g = libm::tanhf(gates[2 * h + j]);
            let o_g = sigmoid(gates[3 * h + j]);
            let cell = f_g * state.c[j] + i_g * g_g;
            next.c[j] = cell;
            next.h[j] = o_g * libm::tanhf(cell);
        }

        let mut out = Vec::new();
        dense(&next.h, self.p(3), self.p(4), &mut out);
        Ok((self.decode_heads(&out), next))
    }

    fn decode_heads(&self, out: &[f32]) -> StepPrediction {
        let (k, l) = (self.config.mixtures, self.config.latent_dim);
        let logits = &out[..k];
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f32> = logits.iter().map(|&v| libm::expf(v - max)).collect();
        let total: f32 = exps.iter().sum();
        let pi = exps.iter().map(|e| e / total).collect();
        let mu = out[k..k + k * l].to_vec();
        let sigma = out[k + k * l..k + 2 * k * l]
            .iter()
            .map(|&v| libm::expf(clamp_log_sigma(v)))
            .collect();
        let reward_mean = out[k + 2 * k * l];
        let terminal_p = sigmoid(out[k + 2 * k * l + 1]);
        StepPrediction {
            gmm: GmmParams {
                pi,
                mu,
                sigma,
                latent_dim: l,
            },
            reward_mean,
            terminal_p,
        }
    }

    pub fn load<T: Scalar>(&self, g: &mut Graph<T>) -> MdrnnVars {
        let v: Vec<Var> = self
            .params
            .tensors()
            .iter()
            .map(|t| g.param(t.cast()))
            .collect();
        MdrnnVars {
            wx: v[0],
            wh: v[1],
            b: v[2],
            head_w: v[3],
            head_b: v[4],
        }
    }

    /// Batched LSTM update. `x` is `B x (L + A)`, `h` and `c` are `B x H`.
    pub fn cell_graph<T: Scalar>(
        config: &MdrnnConfig,
        vars: &MdrnnVars,
        g: &mut Graph<T>,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var), WorldModelError> {
        let hd = config.hidden_dim;
        let gx = g.matmul(x, vars.wx)?;
        let gh = g.matmul(h, vars.wh)?;
        let gates = g.add(gx, gh)?;
        let gates = g.add(gates, vars.b)?;
        let i = g.slice_cols(gates, 0, hd)?;
        let f = g.slice_cols(gates, hd, 2 * hd)?;
        let cand = g.slice_cols(gates, 2 * hd, 3 * hd)?;
        let o = g.slice_cols(gates, 3 * hd, 4 * hd)?;
        let i = g.sigmoid(i)?;
        let f = g.sigmoid(f)?;
        let cand = g.tanh(cand)?;
        let o = g.sigmoid(o)?;
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next)?;
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    pub fn heads_graph<T: Scalar>(
        config: &MdrnnConfig,
        vars: &MdrnnVars,
        g: &mut Graph<T>,
        h: Var,
    ) -> Result<MdrnnHeads, WorldModelError> {
        let (k, l) = (config.mixtures, config.latent_dim);
        let out = g.matmul(h, vars.head_w)?;
        let out = g.add(out, vars.head_b)?;
        let pi_logits = g.slice_cols(out, 0, k)?;
        let mu = g.slice_cols(out, k, k + k * l)?;
        let raw = g.slice_cols(out, k + k * l, k + 2 * k * l)?;
        let log_sigma = g.clamp(raw, lit(LOG_SIGMA_MIN as f64), lit(LOG_SIGMA_MAX as f64))?;
        let reward = g.slice_cols(out, k + 2 * k * l, k + 2 * k * l + 1)?;
        let terminal_logit = g.slice_cols(out, k + 2 * k * l + 1, k + 2 * k * l + 2)?;
        Ok(MdrnnHeads {
            pi_logits,
            mu,
            log_sigma,
            reward,
            terminal_logit,
        })
    }

    /// Summed step loss over the batch.
    ///
    /// `reward`, `terminal`, `mask` and `latent_mask` are `B x 1`; `mask`
    /// selects rows that are real steps, `latent_mask` the subset that also
    /// has a next latent to score.
    #[allow(clippy::too_many_arguments)]
    pub fn step_loss_graph<T: Scalar>(
        g: &mut Graph<T>,
        heads: &MdrnnHeads,
        z_next: Var,
        reward: Var,
        terminal: Var,
        mask: Var,
        latent_mask: Var,
    ) -> Result<Var, WorldModelError> {
        let err = g.sub(reward, heads.reward)?;
        let mse = g.square(err)?;

        let p = g.sigmoid(heads.terminal_logit)?;
        let p = g.clamp(p, lit(1e-7), lit(1.0 - 1e-7))?;
        let one = g.input(Tensor::scalar(T::one()));
        let log_p = g.log(p)?;
        let q = g.sub(one, p)?;
        let log_q = g.log(q)?;
        let not_terminal = g.sub(one, terminal)?;
        let a = g.mul(terminal, log_p)?;
        let b = g.mul(not_terminal, log_q)?;
        let ll = g.add(a, b)?;
        let bce = g.neg(ll)?;

        let nll = gmm_nll_graph(g, heads.pi_logits, heads.mu, heads.log_sigma, z_next)?;

        let per_row = g.add(mse, bce)?;
        let per_row = g.mul(per_row, mask)?;
        let nll = g.mul(nll, latent_mask)?;
        let total = g.add(per_row, nll)?;
        Ok(g.sum(total)?)
    }
}
