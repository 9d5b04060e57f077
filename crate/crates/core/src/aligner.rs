//! Alignment distribution over input positions.
//!
//! Both sequences are reduced to lexical-class ids before touching any
//! parameter, so permuting words within a class cannot change anything
//! the aligner computes: invariance is structural and therefore
//! bit-exact, not a property the network has to learn.
//!
//! Input classes are encoded with a bidirectional recurrent cell, the
//! output prefix with a forward cell, and position scores come from the
//! bilinear form e_mn = h_dec_m' T enc_n, normalized over n.

use crate::data::{ClassId, LexicalClassMap};
use crate::tensor::{real, Graph, ParamStore, Real, TensorData, Var};
use rand::Rng;

pub const EMB_IN: &str = "aligner.emb_in";
pub const EMB_OUT: &str = "aligner.emb_out";
pub const BILINEAR: &str = "aligner.T";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    EncForward,
    EncBackward,
    Decoder,
}

impl Cell {
    fn name(self, block: &str) -> String {
        let prefix = match self {
            Cell::EncForward => "aligner.enc_fwd",
            Cell::EncBackward => "aligner.enc_bwd",
            Cell::Decoder => "aligner.dec",
        };
        format!("{prefix}.{block}")
    }
}

const CELL_BLOCKS: [&str; 4] = ["w_ih", "w_hh", "b_ih", "b_hh"];

/// Decoder recurrence carried across output positions; `h` after
/// consuming the prefix of length m-1 (plus the start symbol) is the
/// query state for position m.
#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub h: Var,
    pub c: Var,
}

#[derive(Debug, Clone)]
pub struct Aligner {
    n_input_classes: usize,
    n_output_classes: usize,
    emb_dim: usize,
    hidden_dim: usize,
}

impl Aligner {
    pub fn new(map: &LexicalClassMap, emb_dim: usize, hidden_dim: usize) -> Self {
        assert!(emb_dim > 0 && hidden_dim > 0);
        Aligner {
            n_input_classes: map.num_input_classes(),
            n_output_classes: map.num_output_classes(),
            emb_dim,
            hidden_dim,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Row of the output embedding table reserved for the start-of-output
    /// symbol consumed at m = 1.
    pub fn bos_class(&self) -> ClassId {
        self.n_output_classes
    }

    /// Embedding tables, four blocks per recurrent cell (input/hidden
    /// weights and the two bias vectors, gates stacked i,f,g,o), and the
    /// bilinear matrix `aligner.T` of shape d_h x 2d_h.
    pub fn init_params<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        let d = self.hidden_dim;
        let e = self.emb_dim;
        let bound = |fan_in: usize| real::<T>(1.0 / (fan_in as f64).sqrt());
        store
            .insert(EMB_IN, TensorData::uniform(self.n_input_classes, e, bound(e), rng))
            .expect("fresh store");
        store
            .insert(EMB_OUT, TensorData::uniform(self.n_output_classes + 1, e, bound(e), rng))
            .expect("fresh store");
        for cell in [Cell::EncForward, Cell::EncBackward, Cell::Decoder] {
            let shapes = [(4 * d, e), (4 * d, d), (4 * d, 1), (4 * d, 1)];
            for (block, (rows, cols)) in CELL_BLOCKS.iter().zip(shapes) {
                store
                    .insert(&cell.name(block), TensorData::uniform(rows, cols, bound(d), rng))
                    .expect("fresh store");
            }
        }
        store
            .insert(BILINEAR, TensorData::uniform(d, 2 * d, bound(2 * d), rng))
            .expect("fresh store");
    }

    fn embedding<T: Real>(
        &self,
        graph: &Graph<T>,
        store: &ParamStore<T>,
        table: &str,
        cls: ClassId,
    ) -> Var {
        graph.transpose(graph.gather_rows(store.var(graph, table), &[cls]))
    }

    fn zero_state<T: Real>(&self, graph: &Graph<T>) -> (Var, Var) {
        let z = graph.constant(TensorData::zeros(self.hidden_dim, 1));
        let z2 = graph.constant(TensorData::zeros(self.hidden_dim, 1));
        (z, z2)
    }

    fn step<T: Real>(
        &self,
        graph: &Graph<T>,
        store: &ParamStore<T>,
        cell: Cell,
        x: Var,
        h: Var,
        c: Var,
    ) -> (Var, Var) {
        let d = self.hidden_dim;
        let wx = graph.matmul(store.var(graph, &cell.name("w_ih")), x);
        let wh = graph.matmul(store.var(graph, &cell.name("w_hh")), h);
        let bias = graph.add(
            store.var(graph, &cell.name("b_ih")),
            store.var(graph, &cell.name("b_hh")),
        );
        let pre = graph.add(graph.add(wx, wh), bias);
        let gate_i = graph.sigmoid(graph.slice_rows(pre, 0, d));
        let gate_f = graph.sigmoid(graph.slice_rows(pre, d, d));
        let gate_g = graph.tanh(graph.slice_rows(pre, 2 * d, d));
        let gate_o = graph.sigmoid(graph.slice_rows(pre, 3 * d, d));
        let c_next = graph.add(graph.mul(gate_f, c), graph.mul(gate_i, gate_g));
        let h_next = graph.mul(gate_o, graph.tanh(c_next));
        (h_next, c_next)
    }

    /// N x 2d_h encoding of the input class sequence; row n is the
    /// forward state at n followed by the backward state at n.
    pub fn encode_input<T: Real>(
        &self,
        graph: &Graph<T>,
        store: &ParamStore<T>,
        classes: &[ClassId],
    ) -> Var {
        let n = classes.len();
        assert!(n > 0, "encode_input: empty input");
        let mut fwd = Vec::with_capacity(n);
        let (mut h, mut c) = self.zero_state(graph);
        for &cls in classes {
            let x = self.embedding(graph, store, EMB_IN, cls);
            (h, c) = self.step(graph, store, Cell::EncForward, x, h, c);
            fwd.push(h);
        }
        let mut bwd = vec![fwd[0]; n];
        let (mut h, mut c) = self.zero_state(graph);
        for i in (0..n).rev() {
            let x = self.embedding(graph, store, EMB_IN, classes[i]);
            (h, c) = self.step(graph, store, Cell::EncBackward, x, h, c);
            bwd[i] = h;
        }
        let rows: Vec<Var> =
            (0..n).map(|i| graph.transpose(graph.concat(&[fwd[i], bwd[i]], 0))).collect();
        graph.concat(&rows, 0)
    }

    /// Decoder state for position m = 1: zero recurrence fed the start
    /// symbol.
    pub fn decoder_start<T: Real>(&self, graph: &Graph<T>, store: &ParamStore<T>) -> DecoderState {
        let (h, c) = self.zero_state(graph);
        let x = self.embedding(graph, store, EMB_OUT, self.bos_class());
        let (h, c) = self.step(graph, store, Cell::Decoder, x, h, c);
        DecoderState { h, c }
    }

    /// Advance past one emitted output class, yielding the query state
    /// for the next position.
    pub fn decoder_advance<T: Real>(
        &self,
        graph: &Graph<T>,
        store: &ParamStore<T>,
        state: DecoderState,
        cls: ClassId,
    ) -> DecoderState {
        assert!(cls < self.n_output_classes, "decoder_advance: class {cls} out of range");
        let x = self.embedding(graph, store, EMB_OUT, cls);
        let (h, c) = self.step(graph, store, Cell::Decoder, x, state.h, state.c);
        DecoderState { h, c }
    }

    /// Log-probabilities over the N input positions for the query state:
    /// log_softmax_n of h' T enc_n.
    pub fn align_from_state<T: Real>(
        &self,
        graph: &Graph<T>,
        store: &ParamStore<T>,
        state: DecoderState,
        enc: Var,
    ) -> Var {
        let t = store.var(graph, BILINEAR);
        let query = graph.matmul(graph.transpose(t), state.h);
        graph.log_softmax(graph.matmul(enc, query))
    }

    /// N x 1 log-probability column for one output position given the
    /// classes of the emitted prefix (empty at m = 1).
    pub fn align_logprobs<T: Real>(
        &self,
        graph: &Graph<T>,
        store: &ParamStore<T>,
        prefix_classes: &[ClassId],
        enc: Var,
    ) -> Var {
        let mut state = self.decoder_start(graph, store);
        for &cls in prefix_classes {
            state = self.decoder_advance(graph, store, state, cls);
        }
        self.align_from_state(graph, store, state, enc)
    }

    /// M x N matrix whose row m holds align_logprobs for position m+1,
    /// sharing one decoder sweep across all rows.
    pub fn align_matrix<T: Real>(
        &self,
        graph: &Graph<T>,
        store: &ParamStore<T>,
        out_classes: &[ClassId],
        enc: Var,
    ) -> Var {
        assert!(!out_classes.is_empty(), "align_matrix: empty output");
        let mut state = self.decoder_start(graph, store);
        let mut rows = Vec::with_capacity(out_classes.len());
        for m in 0..out_classes.len() {
            if m > 0 {
                state = self.decoder_advance(graph, store, state, out_classes[m - 1]);
            }
            rows.push(graph.transpose(self.align_from_state(graph, store, state, enc)));
        }
        graph.concat(&rows, 0)
    }
}
