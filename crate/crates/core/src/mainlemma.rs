//! The synthesis pipeline: rebuild a system with the same time-one map whose
//! Hamiltonian obeys sup-norm bounds, stage by stage.
//!
//! Given a sequence of systems whose flows converge (or a single system,
//! treated as a constant sequence), each stage bridges consecutive time-one
//! maps with a transition Hamiltonian, makes it regular by composing a small
//! loop, reparameterizes it to constant speed, flattens it near the
//! endpoints, and squeezes it into a shrinking time slot. The concatenation
//! reaches the same time-one map while every stage satisfies a quantified
//! inequality; the trace records each measured value beside its bound.
//!
//! The infinite construction is not finitely representable, so the pipeline
//! executes a finite depth and asserts the per-stage inequalities plus
//! endpoint conservation, which is the checkable content at desk scale.

use crate::chart::ChartRef;
use crate::error::{Error, Result};
use crate::flow::{
    ComposedIsotopy, ConcatIsotopy, ConstIsotopy, FlowMap, InverseIsotopy, Isotopy, TimeSlice,
};
use crate::grid::{seeded_cloud, simpson, time_knots, GridSpec};
use crate::ham::{ConstantHam, HamImpl, Hamiltonian};
use crate::metrics::{c0_distance, ham_norm, norm_profile, NormKind};
use crate::regularize::{build_variation, regularize_isotopy};
use crate::reparam::{boundary_flatten, constant_speed, ReparamFn};
use crate::system::{compose_general, reparam_system, ContactDynamicalSystem, Provenance};
use serde::Serialize;
use std::sync::Arc;

/// Stage schedule: epsilon budgets eps_i = scale (1/2)^{2i-1} and time knots
/// t_i = 1 - (1/2)^i.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Schedule {
    /// Number of executed stages (head included).
    pub depth: usize,
    /// Multiplier of the epsilon rule; 1/3 reproduces the standard budgets.
    pub eps_scale: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            depth: 3,
            eps_scale: 1.0 / 3.0,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::BadParameter("depth must be at least 2".into()));
        }
        if !(self.eps_scale > 0.0) {
            return Err(Error::BadParameter("eps scale must be positive".into()));
        }
        Ok(())
    }

    /// eps_i, strictly decreasing in i.
    pub fn eps(&self, i: usize) -> f64 {
        self.eps_scale * 0.5f64.powi(2 * i as i32 - 1)
    }

    /// t_i, strictly increasing to one; t_0 = 0.
    pub fn knot(&self, i: usize) -> f64 {
        1.0 - 0.5f64.powi(i as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SynthesisMode {
    /// Stay close to the input in the integrated norm.
    NearInput,
    /// Control the output sup norm by the input's integrated norm.
    NearIdentity,
}

/// Tuning for the pipeline's numerics.
#[derive(Debug, Clone)]
pub struct PipelineParams {
    /// Integrator step for stage flow integrations.
    pub step: f64,
    /// Norm grids inside the stages.
    pub spec: GridSpec,
    /// Knot count for speed profiles and stage norms.
    pub time_knots: usize,
    /// Starting half-width of the regularization lattice.
    pub loop_box: f64,
    /// Cutoff radius of the loop variation.
    pub loop_cutoff: f64,
    /// Base point of the loop variation, working coordinates.
    pub loop_base: Vec<f64>,
    /// Sample cloud for endpoint and continuity checks.
    pub cloud: usize,
    pub seed: u64,
}

impl PipelineParams {
    pub fn darboux_default(chart: &ChartRef) -> Self {
        let p = chart.to_working(&{
            let mut d = vec![0.0; chart.dim()];
            d[0] = 0.45; // a radius well inside the box
            d
        });
        PipelineParams {
            step: 5e-3,
            spec: GridSpec::new(10, 64),
            time_knots: 200,
            loop_box: 0.02,
            loop_cutoff: 0.3,
            loop_base: p,
            cloud: 60,
            seed: 20240811,
        }
    }
}

/// Everything one stage measured, beside the bound it must satisfy.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub index: usize,
    pub interval: (f64, f64),
    pub eps: f64,
    pub transition_norm_1inf: f64,
    pub transition_bound: f64,
    pub l_norm_inf: f64,
    pub l_bound: f64,
    pub m_norm_inf: f64,
    pub m_bound: f64,
    pub n_norm_inf: f64,
    pub n_bound: f64,
    pub regular_margin: f64,
    pub loop_norm_1inf: f64,
    pub speed_ratio: f64,
    pub flat_width: f64,
    pub endpoint_error: f64,
    pub zero_stage: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainRow {
    pub from_stage: usize,
    pub to_stage: usize,
    pub flow_distance: f64,
    pub flow_bound: f64,
    pub conformal_distance: f64,
    pub conformal_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineTrace {
    pub mode: SynthesisMode,
    pub requested_eps: f64,
    pub stage_offset: usize,
    pub input_norm_1inf: f64,
    pub head_norm_inf: f64,
    pub head_bound: f64,
    pub stages: Vec<StageRecord>,
    pub kept_indices: Vec<usize>,
    pub thinning_delta: Vec<f64>,
    pub thinning_delta_estimated: bool,
    pub final_norm_inf: f64,
    pub final_norm_bound: f64,
    pub near_input_distance: f64,
    pub time_one_error: f64,
    pub truncation_gap: f64,
    pub integrator_tolerance: f64,
    pub knot_continuity: f64,
    pub chain: Vec<ChainRow>,
}

#[derive(Debug)]
pub struct SynthesisResult {
    pub system: ContactDynamicalSystem,
    pub trace: PipelineTrace,
}

pub enum SynthesisInput {
    Single(ContactDynamicalSystem),
    Sequence(Vec<ContactDynamicalSystem>),
}

// ---------------------------------------------------------------------------
// transition Hamiltonians
// ---------------------------------------------------------------------------

/// The bridge Hamiltonian between consecutive systems: its flow runs from
/// the previous time-one map to the next one. Evaluation walks one inverse
/// trajectory to time one and one forward trajectory, which the sweep shares
/// across all requested times.
#[derive(Debug)]
struct TransitionHam {
    prev_ham: Arc<Hamiltonian>,
    prev_iso: Arc<dyn Isotopy>,
    next_ham: Arc<Hamiltonian>,
}

impl HamImpl for TransitionHam {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
        Ok(self.sweep(&[t], w)?[0])
    }

    fn sweep(&self, ts: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let inv1 = self.prev_iso.eval_inverse(1.0, w)?;
        let h_end = -inv1.conformal;
        let along = self.prev_iso.eval_many(ts, &inv1.point)?;
        ts.iter()
            .zip(along)
            .map(|(&t, s)| {
                let gap = self.next_ham.eval(t, &s.point)? - self.prev_ham.eval(t, &s.point)?;
                Ok((h_end - s.conformal).exp() * gap)
            })
            .collect()
    }

    fn name(&self) -> String {
        format!(
            "transition({} -> {})",
            self.prev_ham.describe(),
            self.next_ham.describe()
        )
    }
}

/// One transition stage: the bridge system from `from`'s time-one map to
/// `to`'s, based at the former.
#[derive(Debug, Clone)]
pub struct TransitionStage {
    pub from: usize,
    pub to: usize,
    pub system: ContactDynamicalSystem,
    pub norm_1inf: f64,
}

fn transition_system(
    prev: &ContactDynamicalSystem,
    next: &ContactDynamicalSystem,
) -> ContactDynamicalSystem {
    let ham = Hamiltonian::composite(
        prev.chart(),
        Arc::new(TransitionHam {
            prev_ham: prev.ham.clone(),
            prev_iso: prev.flow.iso.clone(),
            next_ham: next.ham.clone(),
        }),
        prev.ham.interval,
        None,
    );
    let iso = Arc::new(ComposedIsotopy {
        a: Arc::new(ConstIsotopy {
            chart: prev.chart(),
            map: Arc::new(TimeSlice {
                iso: prev.flow.iso.clone(),
                t: 1.0,
            }),
            interval: prev.ham.interval,
        }),
        b: Arc::new(ComposedIsotopy {
            a: Arc::new(InverseIsotopy {
                a: prev.flow.iso.clone(),
            }),
            b: next.flow.iso.clone(),
        }),
    });
    ContactDynamicalSystem {
        flow: FlowMap::from_isotopy(iso, prev.flow.step, 32),
        ham,
        provenance: Provenance::AlgebraicComposition,
        identity_based: false,
    }
}

fn l1inf_of(ham: &Arc<Hamiltonian>, spec: &GridSpec) -> Result<f64> {
    Ok(ham_norm(ham, NormKind::L1Inf, spec)?.value)
}

/// Build the transition Hamiltonians along a sequence, thinning it greedily
/// so that each stage meets its epsilon gate (and a flow-distance gate).
/// Returns the stages and the kept indices.
pub fn transition_hamiltonians(
    systems: &[ContactDynamicalSystem],
    gates: &[(f64, f64)],
    spec: &GridSpec,
) -> Result<(Vec<TransitionStage>, Vec<usize>)> {
    if systems.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut kept = vec![0usize];
    let mut stages = Vec::new();
    let mut cursor = 0usize;
    for (stage_no, &(eps_gate, delta_gate)) in gates.iter().enumerate() {
        let mut found = None;
        for cand in (cursor + 1)..systems.len() {
            let sys = transition_system(&systems[cursor], &systems[cand]);
            let norm = l1inf_of(&sys.ham, spec)?;
            let dist = c0_distance(
                &systems[cursor].flow,
                &systems[cand].flow,
                &GridSpec::new(spec.per_axis.min(4), 8),
                true,
            )?;
            if norm < eps_gate && dist < delta_gate {
                found = Some((cand, sys, norm));
                break;
            }
        }
        match found {
            Some((cand, sys, norm)) => {
                stages.push(TransitionStage {
                    from: cursor,
                    to: cand,
                    system: sys,
                    norm_1inf: norm,
                });
                kept.push(cand);
                cursor = cand;
            }
            None => {
                return Err(Error::ThinningExhausted {
                    kept: kept.len(),
                    total: systems.len(),
                });
            }
        }
        let _ = stage_no;
    }
    Ok((stages, kept))
}

// ---------------------------------------------------------------------------
// stage transforms
// ---------------------------------------------------------------------------

/// Outcome of regularize + constant speed + flatten on one stage.
pub struct ShortenedStage {
    pub system: ContactDynamicalSystem,
    pub l_norm_inf: f64,
    pub m_norm_inf: f64,
    pub regular_margin: f64,
    pub loop_norm_1inf: f64,
    pub speed_ratio: f64,
    pub flat_width: f64,
}

/// Regularize (small loop), reparameterize to constant speed, flatten near
/// the endpoints. Endpoint maps are preserved exactly by construction; the
/// sup-norm chain |L|_inf < |K|_(1,inf) + eps and |M|_inf <= |L|_inf + eps
/// is measured and enforced.
pub fn shorten_and_flatten(
    stage: &ContactDynamicalSystem,
    stage_norm_1inf: f64,
    eps: f64,
    params: &PipelineParams,
) -> Result<ShortenedStage> {
    let chart = stage.chart();
    let variation = build_variation(
        chart.clone(),
        params.loop_base.clone(),
        1,
        params.loop_cutoff,
    )?;

    // loop budget: a quarter of the stage epsilon
    let mut eps_box = params.loop_box;
    let mut reg = regularize_isotopy(&stage.ham, &variation, eps_box, &params.spec, 100)?;
    for _ in 0..3 {
        if reg.loop_norm_1inf <= 0.25 * eps || reg.eps_star.iter().all(|e| *e == 0.0) {
            break;
        }
        eps_box *= 0.8 * (0.25 * eps) / reg.loop_norm_1inf;
        reg = regularize_isotopy(&stage.ham, &variation, eps_box, &params.spec, 100)?;
    }

    // G = loop # K (skip the loop when the stage is already regular)
    let g_sys = if reg.eps_star.iter().all(|e| *e == 0.0) {
        stage.clone()
    } else {
        let loop_sys = ContactDynamicalSystem {
            ham: reg.loop_ham.clone(),
            flow: reg.loop_flow.clone(),
            provenance: Provenance::AlgebraicComposition,
            identity_based: true,
        };
        compose_general(&loop_sys, stage)?
    };

    let cs = constant_speed(&g_sys.ham, &params.spec, params.time_knots)?;
    let l_sys = reparam_system(&g_sys, cs.zeta.clone());

    // |L_t| profile and its time-Lipschitz estimate, for the flat width
    let knots = time_knots(0.0, 1.0, params.time_knots);
    let l_prof = norm_profile(&l_sys.ham, &knots, &params.spec)?;
    let l_norm_inf = l_prof.iter().cloned().fold(f64::MIN, f64::max);
    let l_bound = stage_norm_1inf + eps;
    if l_norm_inf >= l_bound {
        return Err(Error::StageBound {
            stage: 0,
            name: "constant-speed sup norm".into(),
            measured: l_norm_inf,
            bound: l_bound,
        });
    }
    let mut lip_t = 0.0f64;
    for w in l_prof.windows(2) {
        lip_t = lip_t.max((w[1] - w[0]).abs() * params.time_knots as f64);
    }

    // zeta-est guided flat width: osc changes by at most
    // (3 lip + 4 |L|_inf) per unit of profile deformation
    let width = (eps / (2.0 * (3.0 * lip_t + 4.0 * l_norm_inf + 1e-9)))
        .clamp(2e-3, 0.2);
    let zeta_flat = ReparamFn::boundary_flat(width);
    let m_sys = reparam_system(&l_sys, zeta_flat);

    // measure |M|_inf on knots graded to the flat profile
    let mut m_norm_inf = f64::MIN;
    for seg in crate::reparam::flat_breakpoints(width).windows(2) {
        let ts = time_knots(seg[0], seg[1], (params.time_knots / 4).max(16));
        for v in norm_profile(&m_sys.ham, &ts, &params.spec)? {
            m_norm_inf = m_norm_inf.max(v);
        }
    }
    let m_bound = l_norm_inf + eps;
    if m_norm_inf > m_bound {
        return Err(Error::StageBound {
            stage: 0,
            name: "flattened sup norm".into(),
            measured: m_norm_inf,
            bound: m_bound,
        });
    }

    Ok(ShortenedStage {
        system: m_sys,
        l_norm_inf,
        m_norm_inf,
        regular_margin: reg.margin,
        loop_norm_1inf: if reg.eps_star.iter().all(|e| *e == 0.0) {
            0.0
        } else {
            reg.loop_norm_1inf
        },
        speed_ratio: cs.speed_ratio,
        flat_width: width,
    })
}

// ---------------------------------------------------------------------------
// the pipeline
// ---------------------------------------------------------------------------

/// Relative floor below which a transition is treated as exactly zero
/// (constant subsequences produce vanishing bridges).
const ZERO_STAGE_FLOOR: f64 = 1e-10;

pub fn synthesize(
    input: SynthesisInput,
    schedule: &Schedule,
    mode: SynthesisMode,
    epsilon: f64,
    params: &PipelineParams,
) -> Result<SynthesisResult> {
    schedule.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::BadParameter("epsilon must be positive".into()));
    }
    let systems: Vec<ContactDynamicalSystem> = match input {
        SynthesisInput::Single(s) => vec![s],
        SynthesisInput::Sequence(v) => {
            if v.is_empty() {
                return Err(Error::NoCandidates);
            }
            v
        }
    };
    let chart = systems[0].chart();
    let reference = systems.last().unwrap();
    let input_norm_1inf = l1inf_of(&reference.ham, &params.spec)?;

    // ------------------------------------------------------------------ i0
    let head_budget = 0.5 * epsilon;
    let stage_offset = {
        // rescale inflation (1/t_i0 - 1) must fit in a quarter epsilon, and
        // the tail stage bounds 2^{1-i} must sit under epsilon as well
        let ratio = (input_norm_1inf + head_budget) / (input_norm_1inf + 0.75 * epsilon);
        let from_rescale = (-(1.0 - ratio).log2()).ceil() as i64;
        let from_tail = (2.0 / epsilon).log2().ceil() as i64;
        let i0 = from_rescale.max(from_tail).max(2) as usize;
        if i0 > 40 {
            return Err(Error::BadParameter(format!(
                "requested epsilon {epsilon} needs stage offset {i0}, beyond desk scale"
            )));
        }
        i0
    };

    // ------------------------------------------------------ thinning gates
    let tail_stages = schedule.depth - 1;
    let mut gates = Vec::new();
    let mut delta_gates = Vec::new();
    let delta_estimated = systems.len() > 1;
    let lip = if delta_estimated {
        // modulus estimate from the last map: probe pairs on a small cloud
        let cloud = seeded_cloud(&chart, 16, params.seed, 0.05);
        let mut worst: f64 = 1.0;
        let probe = 1e-4;
        for p in &cloud {
            let img = reference.flow.forward(1.0, p)?;
            let mut q = p.clone();
            q[0] += probe;
            let img2 = reference.flow.forward(1.0, &q)?;
            worst = worst.max(chart.distance(&img.point, &img2.point) / probe);
        }
        worst
    } else {
        1.0
    };
    for s in 1..=tail_stages {
        let eps_i = schedule.eps(stage_offset + s);
        gates.push((eps_i, eps_i / lip));
        delta_gates.push(eps_i / lip);
    }

    let (stages_raw, kept) = if systems.len() == 1 {
        (Vec::new(), vec![0usize])
    } else {
        transition_hamiltonians(
            &systems,
            &gates,
            &GridSpec::new(params.spec.per_axis, params.spec.time_knots),
        )?
    };

    // ------------------------------------------------------------- head
    let head_src = &systems[kept[0]];
    let t_head = schedule.knot(stage_offset);
    let (head_full, head_norm_inf) = match mode {
        SynthesisMode::NearInput => {
            let flat = boundary_flatten(&head_src.ham, epsilon / 3.0, &params.spec)?;
            let sys = reparam_system(head_src, flat.zeta.clone());
            let mut sup = f64::MIN;
            let width = 2.0 * flat.zeta.boundary_flat.unwrap_or(1e-3);
            for seg in crate::reparam::flat_breakpoints(width).windows(2) {
                let ts = time_knots(seg[0], seg[1], (params.time_knots / 4).max(16));
                for v in norm_profile(&sys.ham, &ts, &params.spec)? {
                    sup = sup.max(v);
                }
            }
            (sys, sup)
        }
        SynthesisMode::NearIdentity => {
            let short = shorten_and_flatten(head_src, input_norm_1inf, head_budget, params)?;
            let sup = short.m_norm_inf;
            (short.system, sup)
        }
    };
    let head_bound = match mode {
        SynthesisMode::NearIdentity => input_norm_1inf + head_budget,
        SynthesisMode::NearInput => f64::INFINITY,
    };
    if head_norm_inf > head_bound {
        return Err(Error::StageBound {
            stage: stage_offset,
            name: "head sup norm".into(),
            measured: head_norm_inf,
            bound: head_bound,
        });
    }
    let head_piece = reparam_system(&head_full, ReparamFn::linear_map(0.0, t_head));

    // --------------------------------------------------------- tail stages
    let cloud = seeded_cloud(&chart, params.cloud, params.seed, 0.05);
    let mut pieces_ham: Vec<Arc<Hamiltonian>> = vec![head_piece.ham.clone()];
    let mut pieces_iso: Vec<Arc<dyn Isotopy>> = vec![head_piece.flow.iso.clone()];
    let mut records = Vec::new();
    let mut partials: Vec<Arc<dyn Isotopy>> = Vec::new();

    let freeze = |sys: &ContactDynamicalSystem, interval: (f64, f64)| -> Arc<dyn Isotopy> {
        Arc::new(ConstIsotopy {
            chart: sys.chart(),
            map: Arc::new(TimeSlice {
                iso: sys.flow.iso.clone(),
                t: 1.0,
            }),
            interval,
        })
    };

    // partial assembly 1: head then frozen at phi_{kept[0]}
    partials.push(Arc::new(ConcatIsotopy {
        pieces: vec![
            pieces_iso[0].clone(),
            freeze(&systems[kept[0]], (t_head, 1.0)),
        ],
    }));

    for s in 1..schedule.depth {
        let index = stage_offset + s;
        let eps_i = schedule.eps(index);
        let (t_lo, t_hi) = (schedule.knot(index - 1), schedule.knot(index));
        let zero_floor = ZERO_STAGE_FLOOR * (1.0 + input_norm_1inf);

        let (stage_sys, stage_norm) = if s <= stages_raw.len() {
            let st = &stages_raw[s - 1];
            (Some(st.system.clone()), st.norm_1inf)
        } else {
            (None, 0.0)
        };

        let trans_bound = schedule.eps(index);
        if stage_norm >= trans_bound {
            return Err(Error::StageBound {
                stage: index,
                name: "transition norm".into(),
                measured: stage_norm,
                bound: trans_bound,
            });
        }

        let endpoint_sys = &systems[kept[s.min(kept.len() - 1)]];
        if stage_sys.is_none() || stage_norm <= zero_floor {
            // zero stage: nothing to bridge, freeze the reached map
            let zero_ham = Hamiltonian::closed_form(
                chart.clone(),
                Arc::new(ConstantHam(0.0)),
                (t_lo, t_hi),
                None,
            );
            pieces_ham.push(zero_ham);
            let frozen = freeze(endpoint_sys, (t_lo, t_hi));
            pieces_iso.push(frozen);
            records.push(StageRecord {
                index,
                interval: (t_lo, t_hi),
                eps: eps_i,
                transition_norm_1inf: stage_norm,
                transition_bound: trans_bound,
                l_norm_inf: 0.0,
                l_bound: stage_norm + eps_i,
                m_norm_inf: 0.0,
                m_bound: eps_i,
                n_norm_inf: 0.0,
                n_bound: 0.5f64.powi(index as i32 - 1),
                regular_margin: 0.0,
                loop_norm_1inf: 0.0,
                speed_ratio: 1.0,
                flat_width: 0.0,
                endpoint_error: 0.0,
                zero_stage: true,
            });
        } else {
            let stage_sys = stage_sys.unwrap();
            let short = shorten_and_flatten(&stage_sys, stage_norm, eps_i, params)?;
            let n_sys = reparam_system(&short.system, ReparamFn::linear_map(t_lo, t_hi));
            // the linear rescale multiplies the sup norm exactly
            let n_norm = short.m_norm_inf / (t_hi - t_lo);
            let n_bound = 0.5f64.powi(index as i32 - 1);
            if n_norm > n_bound {
                return Err(Error::StageBound {
                    stage: index,
                    name: "slot sup norm".into(),
                    measured: n_norm,
                    bound: n_bound,
                });
            }
            // endpoint conservation: the slot flow at t_hi must reach the
            // next system's time-one map
            let mut endpoint_error = 0.0f64;
            for p in cloud.iter().take(12) {
                let a = n_sys.flow.forward(t_hi, p)?;
                let b = endpoint_sys.flow.forward(1.0, p)?;
                endpoint_error = endpoint_error.max(chart.distance(&a.point, &b.point));
            }
            records.push(StageRecord {
                index,
                interval: (t_lo, t_hi),
                eps: eps_i,
                transition_norm_1inf: stage_norm,
                transition_bound: trans_bound,
                l_norm_inf: short.l_norm_inf,
                l_bound: stage_norm + eps_i,
                m_norm_inf: short.m_norm_inf,
                m_bound: short.l_norm_inf + eps_i,
                n_norm_inf: n_norm,
                n_bound,
                regular_margin: short.regular_margin,
                loop_norm_1inf: short.loop_norm_1inf,
                speed_ratio: short.speed_ratio,
                flat_width: short.flat_width,
                endpoint_error,
                zero_stage: false,
            });
            pieces_ham.push(n_sys.ham.clone());
            pieces_iso.push(n_sys.flow.iso.clone());
        }

        let mut partial_pieces = pieces_iso.clone();
        partial_pieces.push(freeze(endpoint_sys, (t_hi, 1.0)));
        partials.push(Arc::new(ConcatIsotopy {
            pieces: partial_pieces,
        }));
    }

    // final frozen tail on [t_last, 1]
    let t_last = schedule.knot(stage_offset + schedule.depth - 1);
    let last_sys = &systems[*kept.last().unwrap()];
    pieces_ham.push(Hamiltonian::closed_form(
        chart.clone(),
        Arc::new(ConstantHam(0.0)),
        (t_last, 1.0),
        None,
    ));
    pieces_iso.push(freeze(last_sys, (t_last, 1.0)));

    let final_ham = Hamiltonian::concat(pieces_ham)?;
    let final_iso: Arc<dyn Isotopy> = Arc::new(ConcatIsotopy { pieces: pieces_iso });
    let final_flow = FlowMap::from_isotopy(final_iso, params.step, 64);
    let system = ContactDynamicalSystem {
        ham: final_ham.clone(),
        flow: final_flow,
        provenance: Provenance::AlgebraicComposition,
        identity_based: true,
    };

    // -------------------------------------------------------- measurements
    // Time-one conservation against the truncated target: the depth-limited
    // pipeline reaches the last kept system's endpoint. The gap between that
    // endpoint and the final input element (the remaining Cauchy tail) is
    // reported separately.
    let mut time_one_error = 0.0f64;
    let mut truncation_gap = 0.0f64;
    let mut round_trip = 0.0f64;
    for p in &cloud {
        let a = system.flow.forward(1.0, p)?;
        let b = last_sys.flow.forward(1.0, p)?;
        time_one_error = time_one_error.max(chart.distance(&a.point, &b.point));
        let c = reference.flow.forward(1.0, p)?;
        truncation_gap = truncation_gap.max(chart.distance(&b.point, &c.point));
        let back = last_sys.flow.inverse(1.0, &b.point)?;
        round_trip = round_trip.max(chart.distance(&back.point, p));
    }
    let integrator_tolerance = (2.0 * round_trip).max(1e-8);
    if time_one_error > 3.0 * integrator_tolerance {
        return Err(Error::StageBound {
            stage: stage_offset + schedule.depth,
            name: "time-one conservation".into(),
            measured: time_one_error,
            bound: 3.0 * integrator_tolerance,
        });
    }

    // final sup norm over all pieces (piecewise knots)
    let mut final_norm_inf = f64::MIN;
    {
        let (a0, _) = final_ham.interval;
        let mut breaks = vec![a0, t_head];
        for r in &records {
            breaks.push(r.interval.1);
        }
        breaks.push(1.0);
        for seg in breaks.windows(2) {
            if seg[1] <= seg[0] {
                continue;
            }
            let ts = time_knots(seg[0], seg[1], params.time_knots / 2);
            for v in norm_profile(&final_ham, &ts, &params.spec)? {
                final_norm_inf = final_norm_inf.max(v);
            }
        }
    }
    let final_norm_bound = match mode {
        SynthesisMode::NearIdentity => input_norm_1inf + epsilon,
        SynthesisMode::NearInput => f64::INFINITY,
    };
    if final_norm_inf > final_norm_bound {
        return Err(Error::StageBound {
            stage: stage_offset + schedule.depth,
            name: "final sup norm".into(),
            measured: final_norm_inf,
            bound: final_norm_bound,
        });
    }

    // near-input distance |F - H|_(1,inf)
    let near_input_distance = {
        let diff = Hamiltonian::lincomb(vec![(1.0, final_ham.clone()), (-1.0, reference.ham.clone())])?;
        let (ts, ws) = simpson(0.0, 1.0, params.time_knots);
        let prof = norm_profile(&diff, &ts, &params.spec)?;
        prof.iter().zip(&ws).map(|(v, w)| v * w).sum()
    };
    if mode == SynthesisMode::NearInput && near_input_distance >= epsilon {
        return Err(Error::StageBound {
            stage: stage_offset,
            name: "near-input distance".into(),
            measured: near_input_distance,
            bound: epsilon,
        });
    }

    // knot continuity: |F| at both sides of each stage boundary
    let mut knot_continuity = 0.0f64;
    for r in &records {
        for p in cloud.iter().take(8) {
            let before = final_ham.eval(r.interval.0 - 1e-9, p)?.abs();
            let after = final_ham.eval(r.interval.0 + 1e-9, p)?.abs();
            knot_continuity = knot_continuity.max(before).max(after);
        }
    }

    // Cauchy decay and conformal chain over partial assemblies
    let mut chain = Vec::new();
    let chain_spec = GridSpec::new(params.spec.per_axis.min(4), 16);
    for i in 0..partials.len() {
        for j in (i + 1)..partials.len() {
            let fi = FlowMap::from_isotopy(partials[i].clone(), params.step, 16);
            let fj = FlowMap::from_isotopy(partials[j].clone(), params.step, 16);
            let flow_distance = c0_distance(&fi, &fj, &chain_spec, true)?;
            let conformal_distance = crate::metrics::conformal_distance(&fi, &fj, &chain_spec)?;
            let mut flow_bound = 0.0;
            for m in (i + 1)..=j {
                flow_bound += 7.0 * schedule.eps(stage_offset + m);
            }
            let conformal_bound = 9.0 * schedule.eps(stage_offset + i + 1);
            let pass = flow_distance <= flow_bound && conformal_distance <= conformal_bound;
            chain.push(ChainRow {
                from_stage: stage_offset + i,
                to_stage: stage_offset + j,
                flow_distance,
                flow_bound,
                conformal_distance,
                conformal_bound,
                pass,
            });
        }
    }

    let trace = PipelineTrace {
        mode,
        requested_eps: epsilon,
        stage_offset,
        input_norm_1inf,
        head_norm_inf,
        head_bound,
        stages: records,
        kept_indices: kept,
        thinning_delta: delta_gates,
        thinning_delta_estimated: delta_estimated,
        final_norm_inf,
        final_norm_bound,
        near_input_distance,
        time_one_error,
        truncation_gap,
        integrator_tolerance,
        knot_continuity,
        chain,
    };
    Ok(SynthesisResult { system, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::ham::{BumpHam, TimeProfile};

    fn bump_system(chart: &ChartRef, amp: f64, step: f64) -> ContactDynamicalSystem {
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(BumpHam {
                center: vec![0.45, 0.0, 0.0],
                radius: 0.32,
                amp,
                time: TimeProfile::Trig {
                    mean: 1.0,
                    cos_amp: 0.3,
                    sin_amp: 0.0,
                    freq: 1.0,
                },
                wrap: false,
            }),
            (0.0, 1.0),
            None,
        );
        ContactDynamicalSystem::from_ham(h, step).unwrap()
    }

    #[test]
    fn schedule_rules() {
        let s = Schedule::default();
        assert!((s.eps(1) - 1.0 / 6.0).abs() < 1e-15);
        assert!((s.eps(2) - 1.0 / 24.0).abs() < 1e-15);
        assert!((s.knot(1) - 0.5).abs() < 1e-15);
        assert!((s.knot(3) - 0.875).abs() < 1e-15);
        for i in 1..10 {
            assert!(s.eps(i + 1) < s.eps(i));
            assert!(s.knot(i + 1) > s.knot(i));
        }
    }

    #[test]
    fn constant_sequence_transitions_vanish() {
        let chart = Chart::darboux(1, 1.2, 1.2).unwrap();
        let a = bump_system(&chart, 0.4, 5e-3);
        let k = transition_system(&a, &a);
        let mut worst = 0.0f64;
        for p in seeded_cloud(&chart, 10, 3, 0.05) {
            for t in [0.2, 0.7] {
                worst = worst.max(k.ham.eval(t, &p).unwrap().abs());
            }
        }
        assert!(worst <= 1e-10, "constant-sequence bridge {worst}");
    }

    #[test]
    fn two_element_sequence_bridges_the_endpoints() {
        let chart = Chart::darboux(1, 1.2, 1.2).unwrap();
        let a = bump_system(&chart, 0.40, 5e-3);
        let b = bump_system(&chart, 0.42, 5e-3);
        let k = transition_system(&a, &b);
        // flow runs from a's time-one map (at t=0) to b's (at t=1)
        for p in seeded_cloud(&chart, 6, 7, 0.05) {
            let start = k.flow.forward(0.0, &p).unwrap();
            let a1 = a.flow.forward(1.0, &p).unwrap();
            assert!(chart.distance(&start.point, &a1.point) < 1e-7);
            let end = k.flow.forward(1.0, &p).unwrap();
            let b1 = b.flow.forward(1.0, &p).unwrap();
            assert!(chart.distance(&end.point, &b1.point) < 1e-7);
        }
    }

    #[test]
    fn transition_norm_uses_the_conformal_weight() {
        // |K|_(1,inf) < 3 e^{sup |h1 - h|} |H_next - H_prev|_(1,inf) style
        // sanity: for small gaps the transition norm is comparable to the gap
        let chart = Chart::darboux(1, 1.2, 1.2).unwrap();
        let a = bump_system(&chart, 0.40, 5e-3);
        let b = bump_system(&chart, 0.41, 5e-3);
        let k = transition_system(&a, &b);
        let spec = GridSpec::new(5, 32);
        let norm_k = l1inf_of(&k.ham, &spec).unwrap();
        let gap = {
            let diff =
                Hamiltonian::lincomb(vec![(1.0, b.ham.clone()), (-1.0, a.ham.clone())]).unwrap();
            l1inf_of(&diff, &spec).unwrap()
        };
        assert!(norm_k > 0.0);
        assert!(
            norm_k < 3.0 * 1.5 * gap,
            "transition norm {norm_k} vs weighted gap {gap}"
        );
    }

    #[test]
    fn synthesize_single_system_near_identity() {
        let chart = Chart::darboux(1, 1.2, 1.2).unwrap();
        let sys = bump_system(&chart, 0.5, 5e-3);
        let params = PipelineParams::darboux_default(&chart);
        let schedule = Schedule::default();
        let eps = 0.3;
        let out = synthesize(
            SynthesisInput::Single(sys.clone()),
            &schedule,
            SynthesisMode::NearIdentity,
            eps,
            &params,
        )
        .unwrap();
        let tr = &out.trace;
        assert!(tr.final_norm_inf < tr.input_norm_1inf + eps);
        assert!(tr.time_one_error <= 3.0 * tr.integrator_tolerance);
        for r in &tr.stages {
            assert!(r.zero_stage, "constant input must produce zero stages");
            assert!(r.n_norm_inf <= r.n_bound);
        }
        for row in &tr.chain {
            assert!(row.pass, "chain row {row:?}");
        }
        assert!(tr.knot_continuity <= 1e-9);
    }

    #[test]
    fn synthesize_rejects_hopeless_epsilon() {
        let chart = Chart::darboux(1, 1.2, 1.2).unwrap();
        let sys = bump_system(&chart, 0.5, 5e-3);
        let params = PipelineParams::darboux_default(&chart);
        let err = synthesize(
            SynthesisInput::Single(sys),
            &Schedule::default(),
            SynthesisMode::NearIdentity,
            1e-15,
            &params,
        )
        .unwrap_err();
        assert!(matches!(err, Error::BadParameter(_)), "{err:?}");
    }

    #[test]
    fn synthesize_sequence_near_input() {
        // a genuinely varying Cauchy-style sequence of bumps
        let chart = Chart::darboux(1, 1.2, 1.2).unwrap();
        let amps = [0.5, 0.5001, 0.500001, 0.5000001, 0.50000001];
        let systems: Vec<_> = amps.iter().map(|&a| bump_system(&chart, a, 5e-3)).collect();
        let params = PipelineParams::darboux_default(&chart);
        let schedule = Schedule {
            depth: 3,
            eps_scale: 1.0 / 3.0,
        };
        let out = synthesize(
            SynthesisInput::Sequence(systems.clone()),
            &schedule,
            SynthesisMode::NearInput,
            0.5,
            &params,
        )
        .unwrap();
        let tr = &out.trace;
        assert!(tr.near_input_distance < 0.5, "{}", tr.near_input_distance);
        assert!(tr.time_one_error <= 3.0 * tr.integrator_tolerance);
        for r in &tr.stages {
            assert!(r.transition_norm_1inf < r.transition_bound);
            if !r.zero_stage {
                assert!(r.l_norm_inf < r.l_bound);
                assert!(r.m_norm_inf <= r.m_bound);
                assert!(r.n_norm_inf <= r.n_bound);
                assert!(r.regular_margin > 0.0);
            }
        }
    }
}
