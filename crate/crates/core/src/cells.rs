//! Scalar node kinds: a plain tanh neuron and five memory cells.
//!
//! Each genome node is a scalar unit. Its input `x` is the weighted sum of all
//! incoming forward and recurrent edges (edge weights live in the genome); the
//! cell's own parameters are the gate weights on `x`, the gate weights on its
//! previous output `h(t-1)` and the gate biases. The scalar equations are
//! written out in `docs/cells.md`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    #[serde(rename = "simple")]
    SimpleNeuron,
    Delta,
    Gru,
    Lstm,
    Mgu,
    Ugrnn,
}

impl CellKind {
    pub const COUNT: usize = 6;
    pub const ALL: [CellKind; Self::COUNT] = [
        CellKind::SimpleNeuron,
        CellKind::Delta,
        CellKind::Gru,
        CellKind::Lstm,
        CellKind::Mgu,
        CellKind::Ugrnn,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            CellKind::SimpleNeuron => "simple",
            CellKind::Delta => "delta",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
            CellKind::Mgu => "mgu",
            CellKind::Ugrnn => "ugrnn",
        }
    }

    /// Number of per-node parameters. Independent of fan-in because incoming
    /// edge weights are held by the genome, not the cell.
    pub fn param_count(self) -> usize {
        match self {
            CellKind::SimpleNeuron => 1,
            CellKind::Delta => 6,
            CellKind::Gru => 9,
            CellKind::Lstm => 12,
            CellKind::Mgu => 6,
            CellKind::Ugrnn => 6,
        }
    }

    /// True when the cell reads its own previous output.
    pub fn is_stateful(self) -> bool {
        self != CellKind::SimpleNeuron
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        CellKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown cell kind '{s}'")))
    }
}

// Parameter layouts.
pub mod layout {
    /// LSTM gate blocks of `[w, u, b]`: input, forget, output, candidate.
    pub const LSTM_I: usize = 0;
    pub const LSTM_F: usize = 3;
    pub const LSTM_O: usize = 6;
    pub const LSTM_G: usize = 9;
    /// GRU blocks: update, reset, candidate.
    pub const GRU_Z: usize = 0;
    pub const GRU_R: usize = 3;
    pub const GRU_H: usize = 6;
    /// MGU blocks: forget, candidate.
    pub const MGU_F: usize = 0;
    pub const MGU_H: usize = 3;
    /// UGRNN blocks: candidate, gate.
    pub const UGRNN_C: usize = 0;
    pub const UGRNN_G: usize = 3;
    /// Delta-RNN: `[alpha, beta1, beta2, v, r_bias, z_bias]`.
    pub const DELTA_ALPHA: usize = 0;
    pub const DELTA_BETA1: usize = 1;
    pub const DELTA_BETA2: usize = 2;
    pub const DELTA_V: usize = 3;
    pub const DELTA_R_BIAS: usize = 4;
    pub const DELTA_Z_BIAS: usize = 5;
    /// Offset of the bias within a `[w, u, b]` block.
    pub const BIAS: usize = 2;
}

pub const LSTM_FORGET_BIAS_OFFSET: f64 = 1.0;

/// Fresh parameters: every entry uniform on `[-0.5, 0.5]`, with 1.0 added to
/// the LSTM forget-gate bias.
pub fn init_params<R: Rng + ?Sized>(kind: CellKind, rng: &mut R) -> Vec<f64> {
    let mut params: Vec<f64> = (0..kind.param_count())
        .map(|_| crate::uniform_weight(rng))
        .collect();
    if kind == CellKind::Lstm {
        params[layout::LSTM_F + layout::BIAS] += LSTM_FORGET_BIAS_OFFSET;
    }
    params
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub h: f64,
    /// Memory cell content; only the LSTM uses it.
    pub c: f64,
}

/// Gradient with respect to a [`CellState`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StateGrad {
    pub h: f64,
    pub c: f64,
}

/// Everything `cell_backward` needs from the matching forward call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellCache {
    pub kind: CellKind,
    pub x: f64,
    pub prev: CellState,
    /// Gate activations. LSTM `[i, f, o, g]`, GRU `[z, r, h~, _]`,
    /// MGU `[f, h~, _, _]`, UGRNN `[c~, g, _, _]`, Delta `[z~, r, _, _]`,
    /// simple `[_, _, _, _]`.
    pub act: [f64; 4],
    pub out: CellState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellGrads {
    pub input: f64,
    pub params: Vec<f64>,
    pub prev: StateGrad,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("non-finite value in {kind} cell (input {input}, output {output})")]
pub struct CellDivergence {
    pub kind: CellKind,
    pub input: f64,
    pub output: f64,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn gate(p: &[f64], block: usize, x: f64, h: f64) -> f64 {
    p[block] * x + p[block + 1] * h + p[block + 2]
}

/// One timestep of `kind`. `prev` is the node's own state at `t-1` (zero
/// before the sequence starts).
pub fn cell_forward(
    kind: CellKind,
    params: &[f64],
    x: f64,
    prev: CellState,
) -> Result<CellCache, CellDivergence> {
    use layout::*;
    debug_assert_eq!(params.len(), kind.param_count());
    let p = params;
    let hp = prev.h;
    let mut act = [0.0; 4];
    let out = match kind {
        CellKind::SimpleNeuron => CellState {
            h: (x + p[0]).tanh(),
            c: 0.0,
        },
        CellKind::Lstm => {
            let i = sigmoid(gate(p, LSTM_I, x, hp));
            let f = sigmoid(gate(p, LSTM_F, x, hp));
            let o = sigmoid(gate(p, LSTM_O, x, hp));
            let g = gate(p, LSTM_G, x, hp).tanh();
            let c = f * prev.c + i * g;
            act = [i, f, o, g];
            CellState { h: o * c.tanh(), c }
        }
        CellKind::Gru => {
            let z = sigmoid(gate(p, GRU_Z, x, hp));
            let r = sigmoid(gate(p, GRU_R, x, hp));
            let cand = (p[GRU_H] * x + p[GRU_H + 1] * (r * hp) + p[GRU_H + 2]).tanh();
            act = [z, r, cand, 0.0];
            CellState {
                h: (1.0 - z) * hp + z * cand,
                c: 0.0,
            }
        }
        CellKind::Mgu => {
            let f = sigmoid(gate(p, MGU_F, x, hp));
            let cand = (p[MGU_H] * x + p[MGU_H + 1] * (f * hp) + p[MGU_H + 2]).tanh();
            act = [f, cand, 0.0, 0.0];
            CellState {
                h: (1.0 - f) * hp + f * cand,
                c: 0.0,
            }
        }
        CellKind::Ugrnn => {
            let cand = gate(p, UGRNN_C, x, hp).tanh();
            let g = sigmoid(gate(p, UGRNN_G, x, hp));
            act = [cand, g, 0.0, 0.0];
            CellState {
                h: g * hp + (1.0 - g) * cand,
                c: 0.0,
            }
        }
        CellKind::Delta => {
            let vh = p[DELTA_V] * hp;
            let d1 = p[DELTA_ALPHA] * vh * x;
            let d2 = p[DELTA_BETA1] * vh + p[DELTA_BETA2] * x;
            let z = (d1 + d2 + p[DELTA_Z_BIAS]).tanh();
            let r = sigmoid(x + p[DELTA_R_BIAS]);
            act = [z, r, 0.0, 0.0];
            CellState {
                h: ((1.0 - r) * z + r * hp).tanh(),
                c: 0.0,
            }
        }
    };
    if !(x.is_finite() && out.h.is_finite() && out.c.is_finite()) {
        return Err(CellDivergence {
            kind,
            input: x,
            output: out.h,
        });
    }
    Ok(CellCache {
        kind,
        x,
        prev,
        act,
        out,
    })
}

/// Exact gradients of the cell's outputs, chain-ruled with `upstream`.
pub fn cell_backward(params: &[f64], cache: &CellCache, upstream: StateGrad) -> CellGrads {
    use layout::*;
    let p = params;
    let x = cache.x;
    let hp = cache.prev.h;
    let dh = upstream.h;
    let mut dp = vec![0.0; cache.kind.param_count()];
    let mut dx = 0.0;
    let mut dprev = StateGrad::default();

    // Accumulates the gradient of a `[w, u, b]` pre-activation.
    let block = |dp: &mut [f64], at: usize, dz: f64, hin: f64, dx: &mut f64, dhp: &mut f64| {
        dp[at] += dz * x;
        dp[at + 1] += dz * hin;
        dp[at + BIAS] += dz;
        *dx += dz * p[at];
        *dhp += dz * p[at + 1];
    };

    match cache.kind {
        CellKind::SimpleNeuron => {
            let dz = dh * (1.0 - cache.out.h * cache.out.h);
            dp[0] = dz;
            dx = dz;
        }
        CellKind::Lstm => {
            let [i, f, o, g] = cache.act;
            let tc = cache.out.c.tanh();
            let dout = dh * tc;
            let dc = upstream.c + dh * o * (1.0 - tc * tc);
            dprev.c = dc * f;
            let dzi = dc * g * i * (1.0 - i);
            let dzf = dc * cache.prev.c * f * (1.0 - f);
            let dzo = dout * o * (1.0 - o);
            let dzg = dc * i * (1.0 - g * g);
            let mut dhp = 0.0;
            block(&mut dp, LSTM_I, dzi, hp, &mut dx, &mut dhp);
            block(&mut dp, LSTM_F, dzf, hp, &mut dx, &mut dhp);
            block(&mut dp, LSTM_O, dzo, hp, &mut dx, &mut dhp);
            block(&mut dp, LSTM_G, dzg, hp, &mut dx, &mut dhp);
            dprev.h = dhp;
        }
        CellKind::Gru => {
            let [z, r, cand, _] = cache.act;
            let mut dhp = dh * (1.0 - z);
            let dzz = dh * (cand - hp) * z * (1.0 - z);
            let dzh = dh * z * (1.0 - cand * cand);
            // candidate block sees `r * h(t-1)` as its recurrent input
            block(&mut dp, GRU_H, dzh, r * hp, &mut dx, &mut 0.0);
            dhp += dzh * p[GRU_H + 1] * r;
            let dzr = dzh * p[GRU_H + 1] * hp * r * (1.0 - r);
            block(&mut dp, GRU_Z, dzz, hp, &mut dx, &mut dhp);
            block(&mut dp, GRU_R, dzr, hp, &mut dx, &mut dhp);
            dprev.h = dhp;
        }
        CellKind::Mgu => {
            let [f, cand, _, _] = cache.act;
            let mut dhp = dh * (1.0 - f);
            let dzh = dh * f * (1.0 - cand * cand);
            block(&mut dp, MGU_H, dzh, f * hp, &mut dx, &mut 0.0);
            dhp += dzh * p[MGU_H + 1] * f;
            let df = dh * (cand - hp) + dzh * p[MGU_H + 1] * hp;
            let dzf = df * f * (1.0 - f);
            block(&mut dp, MGU_F, dzf, hp, &mut dx, &mut dhp);
            dprev.h = dhp;
        }
        CellKind::Ugrnn => {
            let [cand, g, _, _] = cache.act;
            let mut dhp = dh * g;
            let dzc = dh * (1.0 - g) * (1.0 - cand * cand);
            let dzg = dh * (hp - cand) * g * (1.0 - g);
            block(&mut dp, UGRNN_C, dzc, hp, &mut dx, &mut dhp);
            block(&mut dp, UGRNN_G, dzg, hp, &mut dx, &mut dhp);
            dprev.h = dhp;
        }
        CellKind::Delta => {
            let [z, r, _, _] = cache.act;
            let h = cache.out.h;
            let ds = dh * (1.0 - h * h);
            let dr = ds * (hp - z);
            let dzr = dr * r * (1.0 - r);
            let dpre = ds * (1.0 - r) * (1.0 - z * z);
            let (alpha, beta1, beta2, v) = (p[DELTA_ALPHA], p[DELTA_BETA1], p[DELTA_BETA2], p[DELTA_V]);
            dp[DELTA_ALPHA] = dpre * v * hp * x;
            dp[DELTA_BETA1] = dpre * v * hp;
            dp[DELTA_BETA2] = dpre * x;
            dp[DELTA_V] = dpre * (alpha * hp * x + beta1 * hp);
            dp[DELTA_R_BIAS] = dzr;
            dp[DELTA_Z_BIAS] = dpre;
            dx = dzr + dpre * (alpha * v * hp + beta2);
            dprev.h = ds * r + dpre * (alpha * v * x + beta1 * v);
        }
    }

    CellGrads {
        input: dx,
        params: dp,
        prev: dprev,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn zero(kind: CellKind) -> Vec<f64> {
        vec![0.0; kind.param_count()]
    }

    #[test]
    fn simple_neuron_at_origin() {
        let c = cell_forward(CellKind::SimpleNeuron, &[0.0], 0.0, CellState::default()).unwrap();
        assert_eq!(c.out.h, 0.0);
        let g = cell_backward(&[0.0], &c, StateGrad { h: 1.0, c: 0.0 });
        assert_eq!(g.input, 1.0);
    }

    #[test]
    fn origin_table() {
        // every kind outputs 0 at the origin; gates sit at sigmoid(0) = 0.5
        let table: [(CellKind, [f64; 4]); 6] = [
            (CellKind::SimpleNeuron, [0.0, 0.0, 0.0, 0.0]),
            (CellKind::Lstm, [0.5, 0.5, 0.5, 0.0]),
            (CellKind::Gru, [0.5, 0.5, 0.0, 0.0]),
            (CellKind::Mgu, [0.5, 0.0, 0.0, 0.0]),
            (CellKind::Ugrnn, [0.0, 0.5, 0.0, 0.0]),
            (CellKind::Delta, [0.0, 0.5, 0.0, 0.0]),
        ];
        for (kind, act) in table {
            let c = cell_forward(kind, &zero(kind), 0.0, CellState::default()).unwrap();
            assert_eq!(c.out, CellState::default(), "{kind}");
            assert_eq!(c.act, act, "{kind}");
        }
    }

    #[test]
    fn lstm_forget_gate_with_offset() {
        let mut p = zero(CellKind::Lstm);
        p[layout::LSTM_F + layout::BIAS] = LSTM_FORGET_BIAS_OFFSET;
        let c = cell_forward(CellKind::Lstm, &p, 0.0, CellState::default()).unwrap();
        assert!((c.act[1] - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn init_adds_forget_offset() {
        let mut rng = crate::SearchRng::seed_from_u64(3);
        for _ in 0..50 {
            let p = init_params(CellKind::Lstm, &mut rng);
            assert!((0.5..=1.5).contains(&p[layout::LSTM_F + layout::BIAS]));
            assert!(p
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != layout::LSTM_F + layout::BIAS)
                .all(|(_, v)| (-0.5..=0.5).contains(v)));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = crate::SearchRng::seed_from_u64(11);
        for kind in CellKind::ALL {
            let p = init_params(kind, &mut rng);
            let prev = CellState { h: 0.3, c: -0.2 };
            let c = cell_forward(kind, &p, 0.7, prev).unwrap();
            let g = cell_backward(&p, &c, StateGrad::default());
            assert_eq!(g.input, 0.0);
            assert!(g.params.iter().all(|&v| v == 0.0));
            assert_eq!(g.prev, StateGrad::default());
        }
    }

    #[test]
    fn non_finite_input_is_divergence() {
        for kind in CellKind::ALL {
            let err = cell_forward(kind, &zero(kind), f64::NAN, CellState::default());
            assert!(err.is_err(), "{kind}");
        }
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = crate::SearchRng::seed_from_u64(5);
        for kind in CellKind::ALL {
            let p = init_params(kind, &mut rng);
            let prev = CellState { h: -0.4, c: 0.9 };
            let a = cell_forward(kind, &p, 1.3, prev).unwrap();
            let b = cell_forward(kind, &p, 1.3, prev).unwrap();
            assert_eq!(a.out.h.to_bits(), b.out.h.to_bits());
            assert_eq!(a.out.c.to_bits(), b.out.c.to_bits());
        }
    }

    #[test]
    fn labels_round_trip() {
        for kind in CellKind::ALL {
            assert_eq!(kind.label().parse::<CellKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.label()));
        }
    }
}
