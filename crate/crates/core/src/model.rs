//! The DiscLSTM network: a down-projection of utterance embeddings, a stack
//! of temporally ordered graph-attention layers over the discourse graph, a
//! bidirectional recurrent layer whose cells also read the graph encoding,
//! and a linear classifier per utterance.
//!
//! Everything that trains is written against the [`Tape`]; the value-level
//! helpers at the bottom wrap a throwaway tape. [`vanilla_lstm_reference`] is
//! a separate plain-loop LSTM used as an oracle for the cell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{self, AutodiffError, Matrix, Tape, Var};
use crate::graph::DiscourseGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Utterance embedding width.
    pub dim_u: usize,
    /// Graph state width.
    pub dim_g: usize,
    /// Recurrent hidden width per direction.
    pub dim_h: usize,
    /// Number of graph-attention layers.
    pub layers: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim_u: 1024,
            dim_g: 300,
            dim_h: 300,
            layers: 2,
            num_classes: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dim_u", self.dim_u),
            ("dim_g", self.dim_g),
            ("dim_h", self.dim_h),
            ("layers", self.layers),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

macro_rules! direction_params {
    ($($field:ident => $name:literal),* $(,)?) => {
        /// Recurrent parameters of one direction. Only the matrices that the
        /// cell equations use exist: no recurrent matrix for the `p`/`n`
        /// paths, no graph matrix for the `i`/`u` paths.
        #[derive(Clone, Debug, PartialEq)]
        pub struct DirectionParams<T> {
            $(pub $field: T,)*
        }

        impl<T> DirectionParams<T> {
            pub const NAMES: &'static [&'static str] = &[$($name),*];

            pub fn tensors(&self) -> Vec<&T> {
                vec![$(&self.$field),*]
            }

            pub fn tensors_mut(&mut self) -> Vec<&mut T> {
                vec![$(&mut self.$field),*]
            }

            pub fn try_map<U, E>(
                &self,
                mut f: impl FnMut(&'static str, &T) -> std::result::Result<U, E>,
            ) -> std::result::Result<DirectionParams<U>, E> {
                Ok(DirectionParams { $($field: f($name, &self.$field)?,)* })
            }
        }
    };
}

direction_params! {
    w_f => "W_f", w_o => "W_o", w_i => "W_i", w_p => "W_p", w_u => "W_u", w_n => "W_n",
    u_f => "U_f", u_o => "U_o", u_i => "U_i", u_u => "U_u",
    q_f => "Q_f", q_o => "Q_o", q_p => "Q_p", q_n => "Q_n",
    b_f => "b_f", b_o => "b_o", b_i => "b_i", b_p => "b_p", b_u => "b_u", b_n => "b_n",
}

fn direction_shape(name: &str, cfg: &ModelConfig) -> (usize, usize) {
    match name.as_bytes()[0] {
        b'W' => (cfg.dim_h, cfg.dim_u),
        b'U' => (cfg.dim_h, cfg.dim_h),
        b'Q' => (cfg.dim_h, cfg.dim_g),
        _ => (cfg.dim_h, 1),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatParams<T> {
    /// `dim_g x dim_u`.
    pub down_weight: T,
    pub down_bias: T,
    /// One `1 x 2·dim_g` scoring row per layer.
    pub attention: Vec<T>,
}

/// Every learnable tensor, generic over storage (`Matrix` for values, `Var`
/// once bound to a tape).
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub gat: GatParams<T>,
    pub forward: DirectionParams<T>,
    pub backward: DirectionParams<T>,
    /// `num_classes x 2·dim_h`.
    pub out_weight: T,
    pub out_bias: T,
}

impl<T> Params<T> {
    /// Tensors in canonical order.
    pub fn tensors(&self) -> Vec<&T> {
        let mut v = vec![&self.gat.down_weight, &self.gat.down_bias];
        v.extend(self.gat.attention.iter());
        v.extend(self.forward.tensors());
        v.extend(self.backward.tensors());
        v.push(&self.out_weight);
        v.push(&self.out_bias);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        let mut v = vec![&mut self.gat.down_weight, &mut self.gat.down_bias];
        v.extend(self.gat.attention.iter_mut());
        v.extend(self.forward.tensors_mut());
        v.extend(self.backward.tensors_mut());
        v.push(&mut self.out_weight);
        v.push(&mut self.out_bias);
        v
    }

    /// Map every tensor in canonical order, passing its canonical name.
    pub fn try_map<U, E>(
        &self,
        mut f: impl FnMut(&str, &T) -> std::result::Result<U, E>,
    ) -> std::result::Result<Params<U>, E> {
        Ok(Params {
            gat: GatParams {
                down_weight: f("down.weight", &self.gat.down_weight)?,
                down_bias: f("down.bias", &self.gat.down_bias)?,
                attention: self
                    .gat
                    .attention
                    .iter()
                    .enumerate()
                    .map(|(l, a)| f(&format!("gat.{l}.attention"), a))
                    .collect::<std::result::Result<_, _>>()?,
            },
            forward: self.forward.try_map(|n, t| f(&format!("forward.{n}"), t))?,
            backward: self.backward.try_map(|n, t| f(&format!("backward.{n}"), t))?,
            out_weight: f("classifier.weight", &self.out_weight)?,
            out_bias: f("classifier.bias", &self.out_bias)?,
        })
    }
}

/// Canonical tensor names and shapes for a config.
pub fn parameter_layout(cfg: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let mut v = vec![
        ("down.weight".to_string(), (cfg.dim_g, cfg.dim_u)),
        ("down.bias".to_string(), (cfg.dim_g, 1)),
    ];
    for l in 0..cfg.layers {
        v.push((format!("gat.{l}.attention"), (1, 2 * cfg.dim_g)));
    }
    for dir in ["forward", "backward"] {
        for name in DirectionParams::<()>::NAMES {
            v.push((format!("{dir}.{name}"), direction_shape(name, cfg)));
        }
    }
    v.push(("classifier.weight".to_string(), (cfg.num_classes, 2 * cfg.dim_h)));
    v.push(("classifier.bias".to_string(), (cfg.num_classes, 1)));
    v
}

fn params_from_layout(
    cfg: &ModelConfig,
    mut make: impl FnMut(&str, (usize, usize)) -> Matrix,
) -> Params<Matrix> {
    let layout = parameter_layout(cfg);
    let mut it = layout.iter().map(|(name, shape)| make(name, *shape));
    let mut next = || it.next().expect("layout covers every tensor");
    let down_weight = next();
    let down_bias = next();
    let attention = (0..cfg.layers).map(|_| next()).collect();
    let mut direction = || DirectionParams {
        w_f: next(),
        w_o: next(),
        w_i: next(),
        w_p: next(),
        w_u: next(),
        w_n: next(),
        u_f: next(),
        u_o: next(),
        u_i: next(),
        u_u: next(),
        q_f: next(),
        q_o: next(),
        q_p: next(),
        q_n: next(),
        b_f: next(),
        b_o: next(),
        b_i: next(),
        b_p: next(),
        b_u: next(),
        b_n: next(),
    };
    let forward = direction();
    let backward = direction();
    Params {
        gat: GatParams {
            down_weight,
            down_bias,
            attention,
        },
        forward,
        backward,
        out_weight: next(),
        out_bias: next(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub params: Params<Matrix>,
}

impl ModelParams {
    /// All tensors zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            params: params_from_layout(&config, |_, (r, c)| Matrix::zeros(r, c)),
        })
    }

    /// Glorot-uniform weights, zero biases except the forget-gate bias at 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = params_from_layout(&config, |name, (rows, cols)| {
            let is_bias = cols == 1;
            if is_bias {
                let fill = if name.ends_with(".b_f") { 1.0 } else { 0.0 };
                return Matrix::filled(rows, cols, fill);
            }
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        });
        Ok(Self { config, params })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        parameter_layout(&self.config)
            .into_iter()
            .map(|(n, _)| n)
            .zip(self.params.tensors())
            .collect()
    }

    /// All values concatenated in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_parameters());
        for t in self.params.tensors() {
            v.extend_from_slice(t.data());
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(ModelError::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_parameters()
            )));
        }
        let mut offset = 0;
        for t in self.params.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn from_flat(config: ModelConfig, flat: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        m.set_flat(flat)?;
        Ok(m)
    }

    /// Record every tensor on `tape`, as differentiable leaves when
    /// `trainable`, otherwise as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Params<Var> {
        self.params
            .try_map::<Var, std::convert::Infallible>(|_, m| {
                Ok(if trainable {
                    tape.leaf(m.clone())
                } else {
                    tape.constant(m.clone())
                })
            })
            .unwrap_or_else(|e| match e {})
    }

    fn check_embeddings(&self, embeddings: &Matrix, graph: &DiscourseGraph) -> Result<()> {
        if embeddings.cols() != self.config.dim_u {
            return Err(ModelError::Shape(format!(
                "embeddings have width {}, model expects {}",
                embeddings.cols(),
                self.config.dim_u
            )));
        }
        if embeddings.rows() != graph.n() {
            return Err(ModelError::Shape(format!(
                "{} embedding rows for a graph of {} utterances",
                embeddings.rows(),
                graph.n()
            )));
        }
        Ok(())
    }

    /// Logits, `n x num_classes`.
    pub fn forward(&self, embeddings: &Matrix, graph: &DiscourseGraph) -> Result<Matrix> {
        self.check_embeddings(embeddings, graph)?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let u = embedding_rows(&mut tape, embeddings);
        let logits = forward(&mut tape, &u, graph, &p)?;
        Ok(stack_rows(&tape, &logits))
    }

    pub fn predict(&self, embeddings: &Matrix, graph: &DiscourseGraph) -> Result<Vec<usize>> {
        let logits = self.forward(embeddings, graph)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    /// Graph encoding with every layer and attention distribution exposed.
    pub fn encode_graph(&self, embeddings: &Matrix, graph: &DiscourseGraph) -> Result<GatTrace> {
        self.check_embeddings(embeddings, graph)?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let u = embedding_rows(&mut tape, embeddings);
        let g1 = down_project(&mut tape, &u, &p.gat)?;
        let mut layers = vec![stack_rows(&tape, &g1)];
        let mut attention = Vec::new();
        let mut prev = g1;
        for &att in &p.gat.attention {
            let out = gat_layer(&mut tape, &prev, graph, att)?;
            layers.push(stack_rows(&tape, &out.states));
            attention.push(
                out.weights
                    .iter()
                    .map(|w| w.map(|v| tape.value(v).data().to_vec()))
                    .collect(),
            );
            prev = out.states;
        }
        Ok(GatTrace { layers, attention })
    }
}

/// Graph encoder internals for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct GatTrace {
    /// `layers[0]` is the down-projection G¹, `layers[l]` the output of
    /// attention layer `l`; each `n x dim_g`.
    pub layers: Vec<Matrix>,
    /// `attention[l][i]` is the distribution over `i`'s predecessors in layer
    /// `l`, `None` when `i` has none.
    pub attention: Vec<Vec<Option<Vec<f64>>>>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Each row of `m` as a constant column vector.
pub fn embedding_rows(tape: &mut Tape, m: &Matrix) -> Vec<Var> {
    (0..m.rows())
        .map(|r| tape.constant(Matrix::column(m.row(r).to_vec())))
        .collect()
}

/// Stack column vectors as the rows of a matrix.
pub fn stack_rows(tape: &Tape, rows: &[Var]) -> Matrix {
    let cols = rows.first().map_or(0, |&r| tape.value(r).len());
    let mut data = Vec::with_capacity(rows.len() * cols);
    for &r in rows {
        data.extend_from_slice(tape.value(r).data());
    }
    Matrix::from_vec(rows.len(), cols, data).expect("uniform rows")
}

fn affine(tape: &mut Tape, terms: &[(Var, Var)], bias: Var) -> autodiff::Result<Var> {
    let mut products = Vec::with_capacity(terms.len() + 1);
    for &(w, x) in terms {
        products.push(tape.matmul(w, x)?);
    }
    products.push(bias);
    tape.add_all(&products)
}

/// `g_i = W_down u_i + b_down` for every row.
pub fn down_project(tape: &mut Tape, u: &[Var], gat: &GatParams<Var>) -> Result<Vec<Var>> {
    u.iter()
        .map(|&ui| Ok(affine(tape, &[(gat.down_weight, ui)], gat.down_bias)?))
        .collect()
}

pub struct GatLayerOutput {
    pub states: Vec<Var>,
    /// Attention distribution over each node's predecessors, in
    /// predecessor order; `None` for nodes without predecessors.
    pub weights: Vec<Option<Var>>,
}

/// One attention layer.
///
/// Nodes are visited in index order, so each predecessor `j < i` has already
/// been updated in this layer. Node `i` scores each predecessor with
/// `attention · [g_j(current) ; g_i(previous)]`, takes a softmax over its
/// predecessors, and adds the weighted sum of their current states to its own
/// previous state. Nodes without predecessors pass through unchanged.
pub fn gat_layer(tape: &mut Tape, prev: &[Var], graph: &DiscourseGraph, attention: Var) -> Result<GatLayerOutput> {
    if prev.len() != graph.n() {
        return Err(ModelError::Shape(format!(
            "{} node states for a graph of {} nodes",
            prev.len(),
            graph.n()
        )));
    }
    let mut states: Vec<Var> = Vec::with_capacity(prev.len());
    let mut weights = Vec::with_capacity(prev.len());
    for (i, &own) in prev.iter().enumerate() {
        let preds = graph.predecessors(i);
        if preds.is_empty() {
            states.push(own);
            weights.push(None);
            continue;
        }
        let mut scores = Vec::with_capacity(preds.len());
        for &j in preds {
            let pair = tape.concat(&[states[j], own])?;
            scores.push(tape.matmul(attention, pair)?);
        }
        let scores = tape.concat(&scores)?;
        let active: Vec<usize> = (0..preds.len()).collect();
        let alpha = tape.softmax_masked(scores, &active)?;
        let mut terms = Vec::with_capacity(preds.len() + 1);
        for (k, &j) in preds.iter().enumerate() {
            let a = tape.row_select(alpha, k)?;
            terms.push(tape.scale(a, states[j])?);
        }
        terms.push(own);
        states.push(tape.add_all(&terms)?);
        weights.push(Some(alpha));
    }
    Ok(GatLayerOutput { states, weights })
}

/// Down-projection followed by every attention layer.
pub fn gat_encode(tape: &mut Tape, u: &[Var], graph: &DiscourseGraph, gat: &GatParams<Var>) -> Result<Vec<Var>> {
    let mut states = down_project(tape, u, gat)?;
    for &att in &gat.attention {
        states = gat_layer(tape, &states, graph, att)?.states;
    }
    Ok(states)
}

#[derive(Clone, Copy, Debug)]
pub struct CellVars {
    pub h: Var,
    pub c: Var,
}

impl CellVars {
    pub fn zeros(tape: &mut Tape, dim_h: usize) -> Self {
        Self {
            h: tape.constant(Matrix::zeros(dim_h, 1)),
            c: tape.constant(Matrix::zeros(dim_h, 1)),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GateVars {
    pub forget: Var,
    pub output: Var,
    pub input: Var,
    /// Gate on the graph candidate.
    pub graph: Var,
    pub candidate: Var,
    pub graph_candidate: Var,
}

/// One DiscLSTM step:
///
/// ```text
/// f = σ(W_f u + U_f h + Q_f g + b_f)     o = σ(W_o u + U_o h + Q_o g + b_o)
/// i = σ(W_i u + U_i h + b_i)             p = σ(W_p u + Q_p g + b_p)
/// c̃ = tanh(W_u u + U_u h + b_u)          s̃ = tanh(W_n u + Q_n g + b_n)
/// c = f⊙c_prev + i⊙c̃ + p⊙s̃              h = o⊙tanh(c)
/// ```
pub fn disclstm_cell(
    tape: &mut Tape,
    u: Var,
    g: Var,
    prev: CellVars,
    p: &DirectionParams<Var>,
) -> Result<(CellVars, GateVars)> {
    let h = prev.h;
    let pre_f = affine(tape, &[(p.w_f, u), (p.u_f, h), (p.q_f, g)], p.b_f)?;
    let pre_o = affine(tape, &[(p.w_o, u), (p.u_o, h), (p.q_o, g)], p.b_o)?;
    let pre_i = affine(tape, &[(p.w_i, u), (p.u_i, h)], p.b_i)?;
    let pre_p = affine(tape, &[(p.w_p, u), (p.q_p, g)], p.b_p)?;
    let pre_c = affine(tape, &[(p.w_u, u), (p.u_u, h)], p.b_u)?;
    let pre_s = affine(tape, &[(p.w_n, u), (p.q_n, g)], p.b_n)?;
    let gates = GateVars {
        forget: tape.sigmoid(pre_f)?,
        output: tape.sigmoid(pre_o)?,
        input: tape.sigmoid(pre_i)?,
        graph: tape.sigmoid(pre_p)?,
        candidate: tape.tanh(pre_c)?,
        graph_candidate: tape.tanh(pre_s)?,
    };
    let kept = tape.hadamard(gates.forget, prev.c)?;
    let written = tape.hadamard(gates.input, gates.candidate)?;
    let from_graph = tape.hadamard(gates.graph, gates.graph_candidate)?;
    let c = tape.add_all(&[kept, written, from_graph])?;
    let squashed = tape.tanh(c)?;
    let h = tape.hadamard(gates.output, squashed)?;
    Ok((CellVars { h, c }, gates))
}

/// Hidden states of both directions, concatenated per utterance as
/// `[h_forward ; h_backward]`. Both directions start from zero state and
/// read the same graph encoding.
pub fn run_bidirectional(
    tape: &mut Tape,
    u: &[Var],
    g: &[Var],
    forward: &DirectionParams<Var>,
    backward: &DirectionParams<Var>,
    dim_h: usize,
) -> Result<Vec<Var>> {
    if u.len() != g.len() {
        return Err(ModelError::Shape(format!(
            "{} utterance rows but {} graph rows",
            u.len(),
            g.len()
        )));
    }
    let n = u.len();
    let mut hf = Vec::with_capacity(n);
    let mut state = CellVars::zeros(tape, dim_h);
    for t in 0..n {
        state = disclstm_cell(tape, u[t], g[t], state, forward)?.0;
        hf.push(state.h);
    }
    let mut hb = vec![state.h; n];
    let mut state = CellVars::zeros(tape, dim_h);
    for t in (0..n).rev() {
        state = disclstm_cell(tape, u[t], g[t], state, backward)?.0;
        hb[t] = state.h;
    }
    hf.into_iter()
        .zip(hb)
        .map(|(f, b)| Ok(tape.concat(&[f, b])?))
        .collect()
}

/// `logits_i = W_out h_i + b_out`.
pub fn classify(tape: &mut Tape, h: &[Var], weight: Var, bias: Var) -> Result<Vec<Var>> {
    h.iter()
        .map(|&hi| Ok(affine(tape, &[(weight, hi)], bias)?))
        .collect()
}

/// Full network: graph encoding, bidirectional recurrence, classifier.
pub fn forward(tape: &mut Tape, u: &[Var], graph: &DiscourseGraph, p: &Params<Var>) -> Result<Vec<Var>> {
    let dim_h = tape.value(p.forward.b_f).rows();
    let g = gat_encode(tape, u, graph, &p.gat)?;
    let h = run_bidirectional(tape, u, &g, &p.forward, &p.backward, dim_h)?;
    classify(tape, &h, p.out_weight, p.out_bias)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(dim_h: usize) -> Self {
        Self {
            h: vec![0.0; dim_h],
            c: vec![0.0; dim_h],
        }
    }
}

/// Gate activations of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Gates {
    pub forget: Vec<f64>,
    pub output: Vec<f64>,
    pub input: Vec<f64>,
    pub graph: Vec<f64>,
}

impl DirectionParams<Matrix> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        params_from_layout(cfg, |_, (r, c)| Matrix::zeros(r, c)).forward
    }

    /// One cell step on plain vectors.
    pub fn step(&self, u: &[f64], g: &[f64], prev: &CellState) -> Result<(CellState, Gates)> {
        let dim_h = self.b_f.rows();
        if u.len() != self.w_f.cols() || g.len() != self.q_f.cols() || prev.h.len() != dim_h || prev.c.len() != dim_h {
            return Err(ModelError::Shape(format!(
                "cell step with u:{} g:{} h:{} c:{} for W:{:?} Q:{:?}",
                u.len(),
                g.len(),
                prev.h.len(),
                prev.c.len(),
                self.w_f.shape(),
                self.q_f.shape()
            )));
        }
        let mut tape = Tape::new();
        let p = self
            .try_map::<Var, std::convert::Infallible>(|_, m| Ok(tape.constant(m.clone())))
            .unwrap_or_else(|e| match e {});
        let u = tape.constant(Matrix::column(u.to_vec()));
        let g = tape.constant(Matrix::column(g.to_vec()));
        let state = CellVars {
            h: tape.constant(Matrix::column(prev.h.clone())),
            c: tape.constant(Matrix::column(prev.c.clone())),
        };
        let (next, gates) = disclstm_cell(&mut tape, u, g, state, &p)?;
        let col = |v: Var| tape.value(v).data().to_vec();
        Ok((
            CellState {
                h: col(next.h),
                c: col(next.c),
            },
            Gates {
                forget: col(gates.forget),
                output: col(gates.output),
                input: col(gates.input),
                graph: col(gates.graph),
            },
        ))
    }

    /// Zero every path that carries the graph input into the cell
    /// (`W_n`, `Q_n`, `b_n`, `Q_f`, `Q_o`).
    pub fn without_graph_paths(&self) -> Self {
        let mut p = self.clone();
        for m in [&mut p.w_n, &mut p.q_n, &mut p.b_n, &mut p.q_f, &mut p.q_o] {
            m.data_mut().fill(0.0);
        }
        p
    }

    /// The parameters shared with a plain LSTM.
    pub fn lstm_part(&self) -> LstmParams {
        LstmParams {
            w_f: self.w_f.clone(),
            w_i: self.w_i.clone(),
            w_o: self.w_o.clone(),
            w_u: self.w_u.clone(),
            u_f: self.u_f.clone(),
            u_i: self.u_i.clone(),
            u_o: self.u_o.clone(),
            u_u: self.u_u.clone(),
            b_f: self.b_f.clone(),
            b_i: self.b_i.clone(),
            b_o: self.b_o.clone(),
            b_u: self.b_u.clone(),
        }
    }
}

/// Parameters of a standard LSTM cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_o: Matrix,
    pub w_u: Matrix,
    pub u_f: Matrix,
    pub u_i: Matrix,
    pub u_o: Matrix,
    pub u_u: Matrix,
    pub b_f: Matrix,
    pub b_i: Matrix,
    pub b_o: Matrix,
    pub b_u: Matrix,
}

/// Standard LSTM step in plain loops, independent of the tape.
pub fn vanilla_lstm_reference(u: &[f64], prev: &CellState, p: &LstmParams) -> Result<CellState> {
    let dim_h = p.b_f.rows();
    if u.len() != p.w_f.cols() || prev.h.len() != dim_h || prev.c.len() != dim_h {
        return Err(ModelError::Shape(format!(
            "lstm step with u:{} h:{} c:{} for W:{:?}",
            u.len(),
            prev.h.len(),
            prev.c.len(),
            p.w_f.shape()
        )));
    }
    let pre = |w: &Matrix, r: &Matrix, b: &Matrix, k: usize| {
        let mut wu = 0.0;
        for (a, x) in w.row(k).iter().zip(u) {
            wu += a * x;
        }
        let mut rh = 0.0;
        for (a, x) in r.row(k).iter().zip(&prev.h) {
            rh += a * x;
        }
        wu + rh + b.get(k, 0)
    };
    let mut next = CellState::zeros(dim_h);
    for k in 0..dim_h {
        let f = autodiff::sigmoid(pre(&p.w_f, &p.u_f, &p.b_f, k));
        let i = autodiff::sigmoid(pre(&p.w_i, &p.u_i, &p.b_i, k));
        let o = autodiff::sigmoid(pre(&p.w_o, &p.u_o, &p.b_o, k));
        let cand = pre(&p.w_u, &p.u_u, &p.b_u, k).tanh();
        let c = f * prev.c[k] + i * cand;
        next.c[k] = c;
        next.h[k] = o * c.tanh();
    }
    Ok(next)
}
