//! Group-equivariant layers and the word-to-word translator classifier.
//!
//! All layer outputs indexed by group element use the element's shift
//! amount as the row index, so row 0 always belongs to the identity.
//!
//! The three layers:
//!   embed:  e(x)[g, k] = omega[g^-1 . x, k]
//!   conv:   out[g, d]  = sum_h sum_k f[h, k] * psi[d, g^-1 . h, k]
//!   decode: logit(y)   = sum_h dot(phi[h], rho[h^-1 . y])
//! Each is equivariant: acting on the input token (or permuting input rows
//! accordingly) permutes output rows the same way, which makes the final
//! class probabilities transform with the group instead of changing.

use crate::data::{LexicalClassMap, TokenId};
use crate::group::{act_on_token, inverse, CyclicShiftGroup, TokenAction};
use crate::tensor::{real, Graph, ParamStore, Real, TensorData, Var};
use rand::Rng;

pub const OMEGA: &str = "translator.omega";
pub const PSI: &str = "translator.psi";
pub const RHO: &str = "translator.rho";

/// Whether the first layer is the equivariant embed or a plain word
/// embedding.  The plain variant exists as a negative control: it breaks
/// the equivariance guarantee while keeping every shape identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedKind {
    Equivariant,
    Flat,
}

/// Classifier giving p(output word | input word) through the three
/// equivariant layers, with tanh after embed and conv.
#[derive(Debug, Clone)]
pub struct Translator {
    group: CyclicShiftGroup,
    input_action: TokenAction,
    output_action: TokenAction,
    n_inputs: usize,
    n_outputs: usize,
    k_embed: usize,
    n_filters: usize,
    embed_kind: EmbedKind,
}

impl Translator {
    pub fn new(map: &LexicalClassMap, k_embed: usize, n_filters: usize, embed_kind: EmbedKind) -> Self {
        Translator {
            group: map.group(),
            input_action: map.input_action(),
            output_action: map.output_action(),
            n_inputs: map.input_vocab_len(),
            n_outputs: map.output_vocab_len(),
            k_embed,
            n_filters,
            embed_kind,
        }
    }

    pub fn group(&self) -> CyclicShiftGroup {
        self.group
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn embed_kind(&self) -> EmbedKind {
        self.embed_kind
    }

    /// Parameter shapes: omega |Sigma| x K, psi (|G|*K) x D with row
    /// (h*K + k) holding filter weight psi[., h, k], rho |Delta| x D.
    pub fn init_params<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        let g = self.group.order();
        let bound = |fan_in: usize| real::<T>(1.0 / (fan_in as f64).sqrt());
        store
            .insert(OMEGA, TensorData::uniform(self.n_inputs, self.k_embed, bound(self.k_embed), rng))
            .expect("fresh store");
        store
            .insert(
                PSI,
                TensorData::uniform(g * self.k_embed, self.n_filters, bound(g * self.k_embed), rng),
            )
            .expect("fresh store");
        store
            .insert(RHO, TensorData::uniform(self.n_outputs, self.n_filters, bound(self.n_filters), rng))
            .expect("fresh store");
    }

    /// |G| x K embedding of one token: row g holds omega[g^-1 . x].
    pub fn g_embed<T: Real>(&self, graph: &Graph<T>, store: &ParamStore<T>, x: TokenId) -> Var {
        let omega = store.var(graph, OMEGA);
        let ids: Vec<usize> = match self.embed_kind {
            EmbedKind::Equivariant => self
                .group
                .elements()
                .map(|g| act_on_token(inverse(g), &self.input_action, x))
                .collect(),
            EmbedKind::Flat => vec![x; self.group.order()],
        };
        graph.gather_rows(omega, &ids)
    }

    /// |G| x D group convolution of a |G| x K feature map.
    pub fn g_conv<T: Real>(&self, graph: &Graph<T>, store: &ParamStore<T>, f: Var) -> Var {
        let p = self.group.order();
        assert_eq!(graph.shape(f), (p, self.k_embed), "g_conv: feature map shape");
        let psi = store.var(graph, PSI);
        let rows: Vec<Var> = (0..p)
            .map(|g| {
                // out[g] = sum_r f[g.r] psi[., r, .]; gather puts f[g.r] at
                // block r so one matmul against psi covers the double sum
                let perm: Vec<usize> = (0..p).map(|r| (g + r) % p).collect();
                let fg = graph.gather_rows(f, &perm);
                let flat = graph.reshape(fg, 1, p * self.k_embed);
                graph.matmul(flat, psi)
            })
            .collect();
        graph.concat(&rows, 0)
    }

    /// Scalar logit for one candidate output token.
    pub fn g_decode<T: Real>(
        &self,
        graph: &Graph<T>,
        store: &ParamStore<T>,
        phi: Var,
        y: TokenId,
    ) -> Var {
        assert!(y < self.n_outputs, "g_decode: token {y} out of {}", self.n_outputs);
        let rho = store.var(graph, RHO);
        let ids: Vec<usize> = self
            .group
            .elements()
            .map(|h| act_on_token(inverse(h), &self.output_action, y))
            .collect();
        let selected = graph.gather_rows(rho, &ids);
        graph.sum(graph.mul(phi, selected))
    }

    /// Logits over the whole output vocabulary, |Delta| x 1.
    pub fn decode_logits<T: Real>(&self, graph: &Graph<T>, store: &ParamStore<T>, phi: Var) -> Var {
        let logits: Vec<Var> =
            (0..self.n_outputs).map(|y| self.g_decode(graph, store, phi, y)).collect();
        graph.concat(&logits, 0)
    }

    /// Log-probabilities over output words given one input word.
    pub fn logprobs<T: Real>(&self, graph: &Graph<T>, store: &ParamStore<T>, x: TokenId) -> Var {
        let e = graph.tanh(self.g_embed(graph, store, x));
        let c = graph.tanh(self.g_conv(graph, store, e));
        graph.log_softmax(self.decode_logits(graph, store, c))
    }
}
