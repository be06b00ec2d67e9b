//! The seven recurrent cell variants: sRNN, LSTM, GRU, MGU, and the
//! simplified MGU1/MGU2/MGU3, which progressively strip terms out of the
//! forget-gate map. Each cell is defined by its parameter schema, an exact
//! scalar parameter count, and a single-timestep forward map that caches
//! every intermediate the backward pass needs.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numkernel::{glorot_uniform, orthogonal_init, sigmoid, tanh_vec, Matrix, SeededRng};

/// Closed enumeration of the supported cell variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Srnn,
    Lstm,
    Gru,
    Mgu,
    Mgu1,
    Mgu2,
    Mgu3,
}

impl CellKind {
    pub const ALL: [CellKind; 7] = [
        CellKind::Srnn,
        CellKind::Lstm,
        CellKind::Gru,
        CellKind::Mgu,
        CellKind::Mgu1,
        CellKind::Mgu2,
        CellKind::Mgu3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Srnn => "srnn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
            CellKind::Mgu => "mgu",
            CellKind::Mgu1 => "mgu1",
            CellKind::Mgu2 => "mgu2",
            CellKind::Mgu3 => "mgu3",
        }
    }

    /// Stable one-byte tag used by the checkpoint format.
    pub fn tag(self) -> u8 {
        match self {
            CellKind::Srnn => 0,
            CellKind::Lstm => 1,
            CellKind::Gru => 2,
            CellKind::Mgu => 3,
            CellKind::Mgu1 => 4,
            CellKind::Mgu2 => 5,
            CellKind::Mgu3 => 6,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        CellKind::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or_else(|| Error::Format(format!("unknown cell tag {tag}")))
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        CellKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown cell kind '{s}'"))
    }
}

/// Which dynamic signal a gate produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateRole {
    Input,
    Forget,
    Output,
    Update,
    Reset,
}

/// Static description of one gate's parameter schema.
#[derive(Clone, Copy, Debug)]
struct GateSpec {
    role: GateRole,
    has_u: bool,
    has_w: bool,
    has_b: bool,
}

const fn full_gate(role: GateRole) -> GateSpec {
    GateSpec {
        role,
        has_u: true,
        has_w: true,
        has_b: true,
    }
}

const LSTM_GATES: [GateSpec; 3] = [
    full_gate(GateRole::Input),
    full_gate(GateRole::Forget),
    full_gate(GateRole::Output),
];
const GRU_GATES: [GateSpec; 2] = [full_gate(GateRole::Update), full_gate(GateRole::Reset)];
const MGU_GATES: [GateSpec; 1] = [full_gate(GateRole::Forget)];
const MGU1_GATES: [GateSpec; 1] = [GateSpec {
    role: GateRole::Forget,
    has_u: true,
    has_w: false,
    has_b: true,
}];
const MGU2_GATES: [GateSpec; 1] = [GateSpec {
    role: GateRole::Forget,
    has_u: true,
    has_w: false,
    has_b: false,
}];
const MGU3_GATES: [GateSpec; 1] = [GateSpec {
    role: GateRole::Forget,
    has_u: false,
    has_w: false,
    has_b: true,
}];

/// Gate schemas per kind, in equation order. The MGU variants differ only in
/// which terms survive in the forget-gate map: MGU1 drops the input weights,
/// MGU2 additionally drops the bias, MGU3 keeps only the bias.
fn gate_specs(kind: CellKind) -> &'static [GateSpec] {
    match kind {
        CellKind::Srnn => &[],
        CellKind::Lstm => &LSTM_GATES,
        CellKind::Gru => &GRU_GATES,
        CellKind::Mgu => &MGU_GATES,
        CellKind::Mgu1 => &MGU1_GATES,
        CellKind::Mgu2 => &MGU2_GATES,
        CellKind::Mgu3 => &MGU3_GATES,
    }
}

/// Exact scalar parameter count of a cell (readout excluded).
pub fn param_count(kind: CellKind, n: usize, m: usize) -> usize {
    let base = n * n + n * m + n;
    match kind {
        CellKind::Srnn => base,
        CellKind::Lstm => 4 * base,
        CellKind::Gru => 3 * base,
        CellKind::Mgu => 2 * base,
        CellKind::Mgu1 => 2 * base - n * m,
        CellKind::Mgu2 => 2 * base - n * (m + 1),
        CellKind::Mgu3 => 2 * base - n * (n + m),
    }
}

/// The candidate map's parameters: always a recurrent matrix, an input
/// matrix, and a bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub u: Matrix,
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// One gate's parameters; absent arrays are absent, not zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub role: GateRole,
    pub u: Option<Matrix>,
    pub w: Option<Matrix>,
    pub b: Option<Vec<f64>>,
}

impl GateParams {
    /// Gate signal: sigmoid over whichever of `U h + W x + b` exist.
    fn activate(&self, h_prev: &[f64], x: &[f64]) -> Vec<f64> {
        let mut pre = vec![0.0; h_prev.len()];
        if let Some(u) = &self.u {
            pre = u.mul_vec(h_prev);
        }
        if let Some(w) = &self.w {
            for (p, wx) in pre.iter_mut().zip(w.mul_vec(x)) {
                *p += wx;
            }
        }
        if let Some(b) = &self.b {
            for (p, bi) in pre.iter_mut().zip(b) {
                *p += bi;
            }
        }
        sigmoid(&pre)
    }
}

/// Full parameter set of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub n: usize,
    pub m: usize,
    pub candidate: Affine,
    pub gates: Vec<GateParams>,
}

impl CellParams {
    /// All arrays zeroed; the schema (which arrays exist) is fixed by `kind`.
    pub fn zeros(kind: CellKind, n: usize, m: usize) -> Self {
        let candidate = Affine {
            u: Matrix::zeros(n, n),
            w: Matrix::zeros(n, m),
            b: vec![0.0; n],
        };
        let gates = gate_specs(kind)
            .iter()
            .map(|spec| GateParams {
                role: spec.role,
                u: spec.has_u.then(|| Matrix::zeros(n, n)),
                w: spec.has_w.then(|| Matrix::zeros(n, m)),
                b: spec.has_b.then(|| vec![0.0; n]),
            })
            .collect();
        CellParams {
            kind,
            n,
            m,
            candidate,
            gates,
        }
    }

    /// Seeded init: recurrent (U-type) matrices orthogonal, input (W-type)
    /// matrices Glorot uniform, biases zero. Draw order is the flat order.
    pub fn init(kind: CellKind, n: usize, m: usize, rng: &mut SeededRng) -> Self {
        let mut p = CellParams::zeros(kind, n, m);
        p.candidate.u = orthogonal_init(rng, n);
        p.candidate.w = glorot_uniform(rng, n, m);
        for gate in &mut p.gates {
            if gate.u.is_some() {
                gate.u = Some(orthogonal_init(rng, n));
            }
            if gate.w.is_some() {
                gate.w = Some(glorot_uniform(rng, n, m));
            }
        }
        p
    }

    /// A zeroed parameter set with the same schema, used for gradients.
    pub fn zeros_like(&self) -> Self {
        CellParams::zeros(self.kind, self.n, self.m)
    }

    pub fn flat_len(&self) -> usize {
        param_count(self.kind, self.n, self.m)
    }

    fn arrays(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.candidate.u.data(),
            self.candidate.w.data(),
            &self.candidate.b,
        ];
        for gate in &self.gates {
            if let Some(u) = &gate.u {
                out.push(u.data());
            }
            if let Some(w) = &gate.w {
                out.push(w.data());
            }
            if let Some(b) = &gate.b {
                out.push(b);
            }
        }
        out
    }

    fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.candidate.u.data_mut(),
            self.candidate.w.data_mut(),
            &mut self.candidate.b,
        ];
        for gate in &mut self.gates {
            if let Some(u) = &mut gate.u {
                out.push(u.data_mut());
            }
            if let Some(w) = &mut gate.w {
                out.push(w.data_mut());
            }
            if let Some(b) = &mut gate.b {
                out.push(b);
            }
        }
        out
    }

    /// Canonical flat enumeration: candidate U, W, b, then each gate's
    /// present arrays (U, W, b) in equation order. Length equals
    /// `param_count(kind, n, m)`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for a in self.arrays() {
            out.extend_from_slice(a);
        }
        out
    }

    /// Inverse of `flatten`; the slice length must match exactly.
    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::Dimension(format!(
                "flat parameter length {} does not match schema length {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let mut offset = 0;
        for a in self.arrays_mut() {
            a.copy_from_slice(&flat[offset..offset + a.len()]);
            offset += a.len();
        }
        Ok(())
    }

    pub fn from_flat(kind: CellKind, n: usize, m: usize, flat: &[f64]) -> Result<Self> {
        let mut p = CellParams::zeros(kind, n, m);
        p.assign_from_flat(flat)?;
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|x| x.is_finite()))
    }
}

/// Recurrent state: hidden vector, plus the memory cell for LSTM only.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Option<Vec<f64>>,
}

impl RecurrentState {
    /// Zero initial state (`h0 = 0`, and `c0 = 0` for LSTM).
    pub fn initial(kind: CellKind, n: usize) -> Self {
        RecurrentState {
            h: vec![0.0; n],
            c: (kind == CellKind::Lstm).then(|| vec![0.0; n]),
        }
    }
}

/// Everything one timestep caches for the exact backward pass.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Option<Vec<f64>>,
    /// Gate activations in the same order as `CellParams::gates`.
    pub gates: Vec<Vec<f64>>,
    /// Candidate activation (tanh output). For sRNN this is the new state.
    pub candidate: Vec<f64>,
    /// The gated history fed into the candidate's U product (GRU: r.h, MGU
    /// family: f.h). Absent for sRNN and LSTM, which feed h directly.
    pub gated_h: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub h: Vec<f64>,
}

fn affine_forward(affine: &Affine, h_input: &[f64], x: &[f64]) -> Vec<f64> {
    let mut pre = affine.u.mul_vec(h_input);
    for (p, wx) in pre.iter_mut().zip(affine.w.mul_vec(x)) {
        *p += wx;
    }
    for (p, b) in pre.iter_mut().zip(&affine.b) {
        *p += b;
    }
    pre
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Convex blend `(1 - g) . h_prev + g . cand` shared by GRU and the MGU family.
fn gate_blend(gate: &[f64], h_prev: &[f64], cand: &[f64]) -> Vec<f64> {
    gate.iter()
        .zip(h_prev)
        .zip(cand)
        .map(|((&g, &h), &c)| (1.0 - g) * h + g * c)
        .collect()
}

/// One timestep of the cell's dynamics. Pure: identical inputs give bitwise
/// identical outputs.
pub fn step_forward(
    params: &CellParams,
    state: &RecurrentState,
    x: &[f64],
) -> Result<(RecurrentState, StepCache)> {
    if x.len() != params.m {
        return Err(Error::Dimension(format!(
            "input length {} does not match m={}",
            x.len(),
            params.m
        )));
    }
    if state.h.len() != params.n {
        return Err(Error::Dimension(format!(
            "state length {} does not match n={}",
            state.h.len(),
            params.n
        )));
    }
    if params.kind == CellKind::Lstm && state.c.is_none() {
        return Err(Error::State("LSTM step requires a memory cell".into()));
    }

    let h_prev = &state.h;
    let cache = match params.kind {
        CellKind::Srnn => {
            let h = tanh_vec(&affine_forward(&params.candidate, h_prev, x));
            StepCache {
                x: x.to_vec(),
                h_prev: h_prev.clone(),
                c_prev: None,
                gates: Vec::new(),
                candidate: h.clone(),
                gated_h: None,
                c: None,
                h,
            }
        }
        CellKind::Lstm => {
            let c_prev = state.c.as_ref().unwrap();
            let i = params.gates[0].activate(h_prev, x);
            let f = params.gates[1].activate(h_prev, x);
            let o = params.gates[2].activate(h_prev, x);
            let cand = tanh_vec(&affine_forward(&params.candidate, h_prev, x));
            let c: Vec<f64> = f
                .iter()
                .zip(c_prev)
                .zip(i.iter().zip(&cand))
                .map(|((&ft, &cp), (&it, &cd))| ft * cp + it * cd)
                .collect();
            let h = hadamard(&o, &tanh_vec(&c));
            StepCache {
                x: x.to_vec(),
                h_prev: h_prev.clone(),
                c_prev: Some(c_prev.clone()),
                gates: vec![i, f, o],
                candidate: cand,
                gated_h: None,
                c: Some(c),
                h,
            }
        }
        CellKind::Gru => {
            let z = params.gates[0].activate(h_prev, x);
            let r = params.gates[1].activate(h_prev, x);
            let gated = hadamard(&r, h_prev);
            let cand = tanh_vec(&affine_forward(&params.candidate, &gated, x));
            let h = gate_blend(&z, h_prev, &cand);
            StepCache {
                x: x.to_vec(),
                h_prev: h_prev.clone(),
                c_prev: None,
                gates: vec![z, r],
                candidate: cand,
                gated_h: Some(gated),
                c: None,
                h,
            }
        }
        CellKind::Mgu | CellKind::Mgu1 | CellKind::Mgu2 | CellKind::Mgu3 => {
            // The single forget gate both gates the history inside the
            // candidate and drives the state interpolation.
            let f = params.gates[0].activate(h_prev, x);
            let gated = hadamard(&f, h_prev);
            let cand = tanh_vec(&affine_forward(&params.candidate, &gated, x));
            let h = gate_blend(&f, h_prev, &cand);
            StepCache {
                x: x.to_vec(),
                h_prev: h_prev.clone(),
                c_prev: None,
                gates: vec![f],
                candidate: cand,
                gated_h: Some(gated),
                c: None,
                h,
            }
        }
    };

    let state = RecurrentState {
        h: cache.h.clone(),
        c: cache.c.clone(),
    };
    Ok((state, cache))
}
