//! Full-sequence forward evaluation with a recorded tape, and exact
//! backpropagation through time for every cell variant. The backward pass is
//! untruncated: gradients are the true derivatives of the scalar loss, which
//! is what the central-difference checker certifies.

use crate::cells::{step_forward, CellKind, CellParams, GateParams, RecurrentState, StepCache};
use crate::error::{Error, Result};

/// Per-step caches for one sequence, plus the final state.
#[derive(Clone, Debug)]
pub struct SequenceTape {
    pub steps: Vec<StepCache>,
    pub final_state: RecurrentState,
}

impl SequenceTape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Gradients with the same schema as the owning `CellParams` (absent arrays
/// get no slots), plus the gradient that flows out of the first timestep
/// into the initial state.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub cell: CellParams,
    pub d_h0: Vec<f64>,
    pub d_c0: Option<Vec<f64>>,
}

/// Run the cell over a whole sequence from the zero initial state.
pub fn forward_sequence(
    params: &CellParams,
    xs: &[Vec<f64>],
) -> Result<(RecurrentState, SequenceTape)> {
    if xs.is_empty() {
        return Err(Error::Input("empty input sequence".into()));
    }
    let mut state = RecurrentState::initial(params.kind, params.n);
    let mut steps = Vec::with_capacity(xs.len());
    for x in xs {
        let (next, cache) = step_forward(params, &state, x)?;
        steps.push(cache);
        state = next;
    }
    let tape = SequenceTape {
        steps,
        final_state: state.clone(),
    };
    Ok((state, tape))
}

/// Sigmoid-gate backward: routes `d_gate` through the gate's present
/// parameter arrays and returns the contribution to `d_h_prev`.
fn gate_backward(
    gate: &GateParams,
    grad: &mut GateParams,
    d_gate: &[f64],
    activation: &[f64],
    h_prev: &[f64],
    x: &[f64],
    n: usize,
) -> Vec<f64> {
    // d(pre-activation) through sigma' = g (1 - g)
    let dp: Vec<f64> = d_gate
        .iter()
        .zip(activation)
        .map(|(&d, &g)| d * g * (1.0 - g))
        .collect();
    let mut d_h_prev = vec![0.0; n];
    if let (Some(u), Some(gu)) = (&gate.u, &mut grad.u) {
        gu.add_outer(&dp, h_prev);
        d_h_prev = u.mul_vec_t(&dp);
    }
    if let Some(gw) = &mut grad.w {
        gw.add_outer(&dp, x);
    }
    if let Some(gb) = &mut grad.b {
        for (b, d) in gb.iter_mut().zip(&dp) {
            *b += d;
        }
    }
    d_h_prev
}

/// Candidate backward: `cand = tanh(U hin + W x + b)`. Accumulates the
/// candidate parameter gradients and returns `d_hin = Uᵀ d(pre)`.
fn candidate_backward(
    params: &CellParams,
    grad: &mut CellParams,
    d_cand: &[f64],
    cand: &[f64],
    h_input: &[f64],
    x: &[f64],
) -> Vec<f64> {
    let da: Vec<f64> = d_cand
        .iter()
        .zip(cand)
        .map(|(&d, &c)| d * (1.0 - c * c))
        .collect();
    grad.candidate.u.add_outer(&da, h_input);
    grad.candidate.w.add_outer(&da, x);
    for (b, d) in grad.candidate.b.iter_mut().zip(&da) {
        *b += d;
    }
    params.candidate.u.mul_vec_t(&da)
}

fn add_in_place(acc: &mut [f64], inc: &[f64]) {
    for (a, i) in acc.iter_mut().zip(inc) {
        *a += i;
    }
}

/// Exact reverse-mode sweep over a tape produced by `forward_sequence`.
/// `dl_dht` is the loss gradient with respect to the final hidden state.
pub fn backward_sequence(
    params: &CellParams,
    tape: &SequenceTape,
    dl_dht: &[f64],
) -> Result<Gradients> {
    if tape.steps.is_empty() {
        return Err(Error::State("backward over an empty tape".into()));
    }
    if dl_dht.len() != params.n {
        return Err(Error::Dimension(format!(
            "upstream gradient length {} does not match n={}",
            dl_dht.len(),
            params.n
        )));
    }
    let first = &tape.steps[0];
    if first.h_prev.len() != params.n
        || first.x.len() != params.m
        || first.gates.len() != params.gates.len()
    {
        return Err(Error::State(
            "tape does not match the parameter schema".into(),
        ));
    }

    let n = params.n;
    let mut grad = params.zeros_like();
    let mut dh = dl_dht.to_vec();
    let mut dc: Option<Vec<f64>> = (params.kind == CellKind::Lstm).then(|| vec![0.0; n]);

    for cache in tape.steps.iter().rev() {
        match params.kind {
            CellKind::Srnn => {
                // h = tanh(U h_prev + W x + b); cache.candidate == h
                let dh_prev = candidate_backward(
                    params,
                    &mut grad,
                    &dh,
                    &cache.candidate,
                    &cache.h_prev,
                    &cache.x,
                );
                dh = dh_prev;
            }
            CellKind::Lstm => {
                let i = &cache.gates[0];
                let f = &cache.gates[1];
                let o = &cache.gates[2];
                let c = cache.c.as_ref().unwrap();
                let c_prev = cache.c_prev.as_ref().unwrap();
                let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();

                // h = o . tanh(c)
                let d_o: Vec<f64> = dh.iter().zip(&tanh_c).map(|(&d, &t)| d * t).collect();
                let mut d_c: Vec<f64> = dh
                    .iter()
                    .zip(o)
                    .zip(&tanh_c)
                    .map(|((&d, &ot), &t)| d * ot * (1.0 - t * t))
                    .collect();
                add_in_place(&mut d_c, dc.as_ref().unwrap());

                // c = f . c_prev + i . cand
                let d_f: Vec<f64> = d_c.iter().zip(c_prev).map(|(&d, &cp)| d * cp).collect();
                let d_i: Vec<f64> = d_c
                    .iter()
                    .zip(&cache.candidate)
                    .map(|(&d, &cd)| d * cd)
                    .collect();
                let d_cand: Vec<f64> = d_c.iter().zip(i).map(|(&d, &it)| d * it).collect();
                let d_c_prev: Vec<f64> = d_c.iter().zip(f).map(|(&d, &ft)| d * ft).collect();

                let mut dh_prev = candidate_backward(
                    params,
                    &mut grad,
                    &d_cand,
                    &cache.candidate,
                    &cache.h_prev,
                    &cache.x,
                );
                let (gi, rest) = grad.gates.split_first_mut().unwrap();
                let (gf, go_slice) = rest.split_first_mut().unwrap();
                let go = &mut go_slice[0];
                add_in_place(
                    &mut dh_prev,
                    &gate_backward(&params.gates[0], gi, &d_i, i, &cache.h_prev, &cache.x, n),
                );
                add_in_place(
                    &mut dh_prev,
                    &gate_backward(&params.gates[1], gf, &d_f, f, &cache.h_prev, &cache.x, n),
                );
                add_in_place(
                    &mut dh_prev,
                    &gate_backward(&params.gates[2], go, &d_o, o, &cache.h_prev, &cache.x, n),
                );
                dh = dh_prev;
                dc = Some(d_c_prev);
            }
            CellKind::Gru => {
                let z = &cache.gates[0];
                let r = &cache.gates[1];
                let gated = cache.gated_h.as_ref().unwrap();

                // h = (1 - z) . h_prev + z . cand
                let d_z: Vec<f64> = dh
                    .iter()
                    .zip(&cache.candidate)
                    .zip(&cache.h_prev)
                    .map(|((&d, &cd), &hp)| d * (cd - hp))
                    .collect();
                let d_cand: Vec<f64> = dh.iter().zip(z).map(|(&d, &zt)| d * zt).collect();
                let mut dh_prev: Vec<f64> =
                    dh.iter().zip(z).map(|(&d, &zt)| d * (1.0 - zt)).collect();

                // cand = tanh(U (r . h_prev) + W x + b)
                let ds = candidate_backward(
                    params,
                    &mut grad,
                    &d_cand,
                    &cache.candidate,
                    gated,
                    &cache.x,
                );
                let d_r: Vec<f64> = ds.iter().zip(&cache.h_prev).map(|(&d, &hp)| d * hp).collect();
                for ((acc, &d), &rt) in dh_prev.iter_mut().zip(&ds).zip(r) {
                    *acc += d * rt;
                }

                let (gz, gr_slice) = grad.gates.split_first_mut().unwrap();
                let gr = &mut gr_slice[0];
                add_in_place(
                    &mut dh_prev,
                    &gate_backward(&params.gates[0], gz, &d_z, z, &cache.h_prev, &cache.x, n),
                );
                add_in_place(
                    &mut dh_prev,
                    &gate_backward(&params.gates[1], gr, &d_r, r, &cache.h_prev, &cache.x, n),
                );
                dh = dh_prev;
            }
            CellKind::Mgu | CellKind::Mgu1 | CellKind::Mgu2 | CellKind::Mgu3 => {
                let f = &cache.gates[0];
                let gated = cache.gated_h.as_ref().unwrap();

                // h = (1 - f) . h_prev + f . cand, with f also inside the
                // candidate as cand = tanh(U (f . h_prev) + W x + b), so the
                // gate receives gradient through both uses.
                let mut d_f: Vec<f64> = dh
                    .iter()
                    .zip(&cache.candidate)
                    .zip(&cache.h_prev)
                    .map(|((&d, &cd), &hp)| d * (cd - hp))
                    .collect();
                let d_cand: Vec<f64> = dh.iter().zip(f).map(|(&d, &ft)| d * ft).collect();
                let mut dh_prev: Vec<f64> =
                    dh.iter().zip(f).map(|(&d, &ft)| d * (1.0 - ft)).collect();

                let ds = candidate_backward(
                    params,
                    &mut grad,
                    &d_cand,
                    &cache.candidate,
                    gated,
                    &cache.x,
                );
                for ((df, &d), &hp) in d_f.iter_mut().zip(&ds).zip(&cache.h_prev) {
                    *df += d * hp;
                }
                for ((acc, &d), &ft) in dh_prev.iter_mut().zip(&ds).zip(f) {
                    *acc += d * ft;
                }

                add_in_place(
                    &mut dh_prev,
                    &gate_backward(
                        &params.gates[0],
                        &mut grad.gates[0],
                        &d_f,
                        f,
                        &cache.h_prev,
                        &cache.x,
                        n,
                    ),
                );
                dh = dh_prev;
            }
        }
    }

    Ok(Gradients {
        cell: grad,
        d_h0: dh,
        d_c0: dc,
    })
}

/// Perturbation for the central-difference oracle.
pub const GRAD_CHECK_EPS: f64 = 1e-5;

/// Relative error with a floor so dead parameters do not divide by zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Central-difference check of `backward_sequence` against an arbitrary
/// scalar loss of the final hidden state. `loss` and `loss_grad` must be the
/// same function and its exact gradient. Returns the maximum relative error
/// over all parameter scalars.
pub fn gradient_check<L, G>(
    params: &CellParams,
    xs: &[Vec<f64>],
    loss: L,
    loss_grad: G,
) -> Result<f64>
where
    L: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let (state, tape) = forward_sequence(params, xs)?;
    let base_loss = loss(&state.h);
    if !base_loss.is_finite() {
        return Err(Error::Numeric("non-finite loss in gradient check".into()));
    }
    let upstream = loss_grad(&state.h);
    let analytic = backward_sequence(params, &tape, &upstream)?.cell.flatten();

    let base = params.flatten();
    let mut probe = params.clone();
    let mut max_rel: f64 = 0.0;
    let mut theta = base.clone();
    for j in 0..base.len() {
        theta[j] = base[j] + GRAD_CHECK_EPS;
        probe.assign_from_flat(&theta)?;
        let plus = loss(&forward_sequence(&probe, xs)?.0.h);

        theta[j] = base[j] - GRAD_CHECK_EPS;
        probe.assign_from_flat(&theta)?;
        let minus = loss(&forward_sequence(&probe, xs)?.0.h);

        theta[j] = base[j];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(
                "non-finite perturbed loss in gradient check".into(),
            ));
        }
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_EPS);
        max_rel = max_rel.max(relative_error(analytic[j], numeric));
    }
    Ok(max_rel)
}
