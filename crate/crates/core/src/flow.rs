//! Flow-map integration and conformal factors.
//!
//! Trajectories are integrated with a fixed-step classical fourth-order
//! scheme; the conformal factor rides along as one extra state component,
//! h' = mu(t, x(t)), so every flow evaluation returns the point and its
//! conformal factor together. Inverse maps integrate the time-reversed field.
//! Fixed stepping keeps grid-based norms and distances reproducible run to
//! run; adaptive stepping would make them nondeterministic.
//!
//! Flows of group-law expressions (compositions, inverses, conjugations and
//! reparameterizations) are represented algebraically by combinators over the
//! operand flows; the direct integration of the corresponding composite
//! Hamiltonian is kept as an independent cross-check route.

use crate::chart::{ChartKind, ChartRef};
use crate::error::{Error, Result};
use crate::ham::{ContactVectorField, Hamiltonian, MAX_DIM};
use std::fmt::Debug;
use std::io::Write;
use std::sync::Arc;

/// Default integrator step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// A flow evaluation: the image point and the conformal factor there.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub point: Vec<f64>,
    pub conformal: f64,
}

/// Time-t maps of an isotopy, with conformal factors.
pub trait Isotopy: Send + Sync + Debug {
    fn chart(&self) -> &ChartRef;
    fn interval(&self) -> (f64, f64);
    /// phi_t(x) and the conformal factor h_t(x).
    fn eval(&self, t: f64, x: &[f64]) -> Result<FlowSample>;
    /// phi_t^{-1}(y) and the conformal factor of the inverse map,
    /// -h_t(phi_t^{-1}(y)).
    fn eval_inverse(&self, t: f64, y: &[f64]) -> Result<FlowSample>;

    /// Evaluate at several ascending times, reusing one trajectory pass when
    /// the representation allows it.
    fn eval_many(&self, ts: &[f64], x: &[f64]) -> Result<Vec<FlowSample>> {
        ts.iter().map(|&t| self.eval(t, x)).collect()
    }
}

/// An invertible point map with a conformal factor (time-frozen
/// automorphisms, time-one maps, the identity).
pub trait PointMap: Send + Sync + Debug {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn invert(&self, y: &[f64]) -> Result<Vec<f64>>;
    /// g with psi^* alpha = e^g alpha.
    fn conformal(&self, x: &[f64]) -> Result<f64>;
}

#[derive(Debug)]
pub struct IdentityMap;

impl PointMap for IdentityMap {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
    fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(y.to_vec())
    }
    fn conformal(&self, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

/// The time-t map of an isotopy, frozen as a point map.
#[derive(Debug)]
pub struct TimeSlice {
    pub iso: Arc<dyn Isotopy>,
    pub t: f64,
}

impl PointMap for TimeSlice {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.iso.eval(self.t, x)?.point)
    }
    fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.iso.eval_inverse(self.t, y)?.point)
    }
    fn conformal(&self, x: &[f64]) -> Result<f64> {
        Ok(self.iso.eval(self.t, x)?.conformal)
    }
}

// ---------------------------------------------------------------------------
// direct integration
// ---------------------------------------------------------------------------

/// Fixed-step integration of a contact vector field, optionally from a
/// non-identity time-zero map.
#[derive(Debug)]
pub struct DirectFlow {
    pub field: ContactVectorField,
    pub base: Option<Arc<dyn PointMap>>,
    pub step: f64,
    interval: (f64, f64),
}

impl DirectFlow {
    pub fn new(
        field: ContactVectorField,
        base: Option<Arc<dyn PointMap>>,
        step: f64,
    ) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::BadParameter(format!("step must be > 0, got {step}")));
        }
        let interval = field.ham.interval;
        Ok(DirectFlow {
            field,
            base,
            step,
            interval,
        })
    }

    /// March the augmented state (x, h) from `t0` to each requested time.
    /// `ts` must be ascending and inside the interval.
    fn march(&self, x0: &[f64], ts: &[f64]) -> Result<Vec<FlowSample>> {
        let dim = x0.len();
        let (a, _) = self.interval;
        let escape_check = matches!(self.field.chart.kind, ChartKind::DarbouxPolar { .. });
        let mut state = [0.0f64; MAX_DIM + 1];
        state[..dim].copy_from_slice(x0);
        state[dim] = 0.0;
        let mut t = a;
        let mut out = Vec::with_capacity(ts.len());
        for &target in ts {
            if target < t - 1e-12 {
                return Err(Error::BadParameter(
                    "eval_many times must be ascending".into(),
                ));
            }
            while t < target - 1e-14 {
                let h = self.step.min(target - t);
                self.rk4_step(t, h, dim, &mut state)?;
                t += h;
                if escape_check && !self.field.chart.contains_working(&state[..dim]) {
                    return Err(Error::TrajectoryEscaped {
                        time: t,
                        point: state[..dim].to_vec(),
                    });
                }
            }
            t = target;
            out.push(FlowSample {
                point: state[..dim].to_vec(),
                conformal: state[dim],
            });
        }
        Ok(out)
    }

    fn rk4_step(&self, t: f64, h: f64, dim: usize, state: &mut [f64]) -> Result<()> {
        let mut k1 = [0.0f64; MAX_DIM + 1];
        let mut k2 = [0.0f64; MAX_DIM + 1];
        let mut k3 = [0.0f64; MAX_DIM + 1];
        let mut k4 = [0.0f64; MAX_DIM + 1];
        let mut tmp = [0.0f64; MAX_DIM + 1];

        self.deriv(t, &state[..dim], &mut k1, dim)?;
        for i in 0..=dim {
            tmp[i] = state[i] + 0.5 * h * k1[i];
        }
        self.deriv(t + 0.5 * h, &tmp[..dim], &mut k2, dim)?;
        for i in 0..=dim {
            tmp[i] = state[i] + 0.5 * h * k2[i];
        }
        self.deriv(t + 0.5 * h, &tmp[..dim], &mut k3, dim)?;
        for i in 0..=dim {
            tmp[i] = state[i] + h * k3[i];
        }
        self.deriv(t + h, &tmp[..dim], &mut k4, dim)?;
        for i in 0..=dim {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }

    #[inline]
    fn deriv(&self, t: f64, x: &[f64], k: &mut [f64], dim: usize) -> Result<()> {
        let mu = self.field.eval(t, x, &mut k[..dim])?;
        k[dim] = mu;
        Ok(())
    }

    /// Reverse-time march computing theta_t^{-1}(y) together with
    /// h_t(theta_t^{-1}(y)) (the accumulator integrates mu forward along the
    /// same trajectory traversed backwards).
    fn march_inverse(&self, y: &[f64], t: f64) -> Result<(Vec<f64>, f64)> {
        let dim = y.len();
        let (a, _) = self.interval;
        let escape_check = matches!(self.field.chart.kind, ChartKind::DarbouxPolar { .. });
        let span = t - a;
        if span < 0.0 {
            return Err(Error::TimeOutOfRange {
                t,
                lo: a,
                hi: self.interval.1,
            });
        }
        let mut state = [0.0f64; MAX_DIM + 1];
        state[..dim].copy_from_slice(y);
        let mut s = 0.0;
        let reversed = ReversedField {
            flow: self,
            t_total: t,
        };
        while s < span - 1e-14 {
            let h = self.step.min(span - s);
            reversed.rk4_step(s, h, dim, &mut state)?;
            s += h;
            if escape_check && !self.field.chart.contains_working(&state[..dim]) {
                return Err(Error::TrajectoryEscaped {
                    time: t - s,
                    point: state[..dim].to_vec(),
                });
            }
        }
        Ok((state[..dim].to_vec(), state[dim]))
    }
}

/// u'(s) = -X(t - s, u), with the conformal accumulator integrating
/// mu(t - s, u) so the result is h_t at the inverse image.
struct ReversedField<'a> {
    flow: &'a DirectFlow,
    t_total: f64,
}

impl ReversedField<'_> {
    fn rk4_step(&self, s: f64, h: f64, dim: usize, state: &mut [f64]) -> Result<()> {
        let mut k1 = [0.0f64; MAX_DIM + 1];
        let mut k2 = [0.0f64; MAX_DIM + 1];
        let mut k3 = [0.0f64; MAX_DIM + 1];
        let mut k4 = [0.0f64; MAX_DIM + 1];
        let mut tmp = [0.0f64; MAX_DIM + 1];
        self.deriv(s, &state[..dim], &mut k1, dim)?;
        for i in 0..=dim {
            tmp[i] = state[i] + 0.5 * h * k1[i];
        }
        self.deriv(s + 0.5 * h, &tmp[..dim], &mut k2, dim)?;
        for i in 0..=dim {
            tmp[i] = state[i] + 0.5 * h * k2[i];
        }
        self.deriv(s + 0.5 * h, &tmp[..dim], &mut k3, dim)?;
        for i in 0..=dim {
            tmp[i] = state[i] + h * k3[i];
        }
        self.deriv(s + h, &tmp[..dim], &mut k4, dim)?;
        for i in 0..=dim {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }

    #[inline]
    fn deriv(&self, s: f64, x: &[f64], k: &mut [f64], dim: usize) -> Result<()> {
        let mu = self.flow.field.eval(self.t_total - s, x, &mut k[..dim])?;
        for v in k[..dim].iter_mut() {
            *v = -*v;
        }
        k[dim] = mu;
        Ok(())
    }
}

impl Isotopy for DirectFlow {
    fn chart(&self) -> &ChartRef {
        &self.field.chart
    }

    fn interval(&self) -> (f64, f64) {
        self.interval
    }

    fn eval(&self, t: f64, x: &[f64]) -> Result<FlowSample> {
        Ok(self.eval_many(&[t], x)?.pop().unwrap())
    }

    fn eval_many(&self, ts: &[f64], x: &[f64]) -> Result<Vec<FlowSample>> {
        let (start, g) = match &self.base {
            Some(b) => (b.apply(x)?, b.conformal(x)?),
            None => (x.to_vec(), 0.0),
        };
        let mut samples = self.march(&start, ts)?;
        for s in samples.iter_mut() {
            s.conformal += g;
        }
        Ok(samples)
    }

    fn eval_inverse(&self, t: f64, y: &[f64]) -> Result<FlowSample> {
        let (theta_inv, h_at) = self.march_inverse(y, t)?;
        match &self.base {
            Some(b) => {
                let w = b.invert(&theta_inv)?;
                let g = b.conformal(&w)?;
                Ok(FlowSample {
                    point: w,
                    conformal: -(h_at + g),
                })
            }
            None => Ok(FlowSample {
                point: theta_inv,
                conformal: -h_at,
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// algebraic combinators
// ---------------------------------------------------------------------------

/// Pointwise composition phi_t = a_t o b_t.
#[derive(Debug)]
pub struct ComposedIsotopy {
    pub a: Arc<dyn Isotopy>,
    pub b: Arc<dyn Isotopy>,
}

impl Isotopy for ComposedIsotopy {
    fn chart(&self) -> &ChartRef {
        self.a.chart()
    }
    fn interval(&self) -> (f64, f64) {
        self.b.interval()
    }
    fn eval(&self, t: f64, x: &[f64]) -> Result<FlowSample> {
        let sb = self.b.eval(t, x)?;
        let sa = self.a.eval(t, &sb.point)?;
        Ok(FlowSample {
            point: sa.point,
            conformal: sa.conformal + sb.conformal,
        })
    }
    fn eval_inverse(&self, t: f64, y: &[f64]) -> Result<FlowSample> {
        let ua = self.a.eval_inverse(t, y)?;
        let ub = self.b.eval_inverse(t, &ua.point)?;
        Ok(FlowSample {
            point: ub.point,
            conformal: ua.conformal + ub.conformal,
        })
    }
}

/// phi_t = a_t^{-1}.
#[derive(Debug)]
pub struct InverseIsotopy {
    pub a: Arc<dyn Isotopy>,
}

impl Isotopy for InverseIsotopy {
    fn chart(&self) -> &ChartRef {
        self.a.chart()
    }
    fn interval(&self) -> (f64, f64) {
        self.a.interval()
    }
    fn eval(&self, t: f64, x: &[f64]) -> Result<FlowSample> {
        self.a.eval_inverse(t, x)
    }
    fn eval_inverse(&self, t: f64, y: &[f64]) -> Result<FlowSample> {
        self.a.eval(t, y)
    }
}

/// phi_t = base_{zeta(t)}.
#[derive(Debug)]
pub struct ReparamIsotopy {
    pub base: Arc<dyn Isotopy>,
    pub zeta: crate::reparam::ReparamFn,
}

impl ReparamIsotopy {
    fn mapped(&self, t: f64) -> f64 {
        let (a, b) = self.base.interval();
        a + (b - a) * self.zeta.value(t)
    }
}

impl Isotopy for ReparamIsotopy {
    fn chart(&self) -> &ChartRef {
        self.base.chart()
    }
    fn interval(&self) -> (f64, f64) {
        self.zeta.interval()
    }
    fn eval(&self, t: f64, x: &[f64]) -> Result<FlowSample> {
        self.base.eval(self.mapped(t), x)
    }
    fn eval_inverse(&self, t: f64, y: &[f64]) -> Result<FlowSample> {
        self.base.eval_inverse(self.mapped(t), y)
    }
}

/// phi_t = psi^{-1} o base_t o psi, with the transformation-law conformal
/// factor h o psi + g - g o (psi^{-1} o Phi o psi).
#[derive(Debug)]
pub struct ConjugatedIsotopy {
    pub base: Arc<dyn Isotopy>,
    pub psi: Arc<dyn PointMap>,
}

impl Isotopy for ConjugatedIsotopy {
    fn chart(&self) -> &ChartRef {
        self.base.chart()
    }
    fn interval(&self) -> (f64, f64) {
        self.base.interval()
    }
    fn eval(&self, t: f64, x: &[f64]) -> Result<FlowSample> {
        let px = self.psi.apply(x)?;
        let g_x = self.psi.conformal(x)?;
        let s = self.base.eval(t, &px)?;
        let result = self.psi.invert(&s.point)?;
        let g_out = self.psi.conformal(&result)?;
        Ok(FlowSample {
            conformal: s.conformal + g_x - g_out,
            point: result,
        })
    }
    fn eval_inverse(&self, t: f64, y: &[f64]) -> Result<FlowSample> {
        let py = self.psi.apply(y)?;
        let g_y = self.psi.conformal(y)?;
        let s = self.base.eval_inverse(t, &py)?;
        let result = self.psi.invert(&s.point)?;
        let g_out = self.psi.conformal(&result)?;
        Ok(FlowSample {
            conformal: s.conformal + g_y - g_out,
            point: result,
        })
    }
}

/// Constant isotopy frozen at a point map.
#[derive(Debug)]
pub struct ConstIsotopy {
    pub chart: ChartRef,
    pub map: Arc<dyn PointMap>,
    pub interval: (f64, f64),
}

impl Isotopy for ConstIsotopy {
    fn chart(&self) -> &ChartRef {
        &self.chart
    }
    fn interval(&self) -> (f64, f64) {
        self.interval
    }
    fn eval(&self, _t: f64, x: &[f64]) -> Result<FlowSample> {
        Ok(FlowSample {
            point: self.map.apply(x)?,
            conformal: self.map.conformal(x)?,
        })
    }
    fn eval_inverse(&self, _t: f64, y: &[f64]) -> Result<FlowSample> {
        let w = self.map.invert(y)?;
        let g = self.map.conformal(&w)?;
        Ok(FlowSample {
            point: w,
            conformal: -g,
        })
    }
}

/// Piecewise isotopy over abutting intervals; each piece carries its own
/// history (it starts at the previous piece's endpoint map), so evaluation
/// dispatches to the piece containing t.
#[derive(Debug)]
pub struct ConcatIsotopy {
    pub pieces: Vec<Arc<dyn Isotopy>>,
}

impl ConcatIsotopy {
    fn piece(&self, t: f64) -> &Arc<dyn Isotopy> {
        for p in &self.pieces {
            if t <= p.interval().1 + 1e-12 {
                return p;
            }
        }
        self.pieces.last().unwrap()
    }
}

impl Isotopy for ConcatIsotopy {
    fn chart(&self) -> &ChartRef {
        self.pieces[0].chart()
    }
    fn interval(&self) -> (f64, f64) {
        (
            self.pieces[0].interval().0,
            self.pieces.last().unwrap().interval().1,
        )
    }
    fn eval(&self, t: f64, x: &[f64]) -> Result<FlowSample> {
        self.piece(t).eval(t, x)
    }
    fn eval_inverse(&self, t: f64, y: &[f64]) -> Result<FlowSample> {
        self.piece(t).eval_inverse(t, y)
    }
}

// ---------------------------------------------------------------------------
// the public flow-map face
// ---------------------------------------------------------------------------

/// An isotopy with its time grid and integrator metadata.
#[derive(Debug, Clone)]
pub struct FlowMap {
    pub chart: ChartRef,
    pub iso: Arc<dyn Isotopy>,
    pub knots: Vec<f64>,
    pub step: f64,
    pub order: usize,
    ham_id: Option<u64>,
}

impl FlowMap {
    pub fn from_isotopy(iso: Arc<dyn Isotopy>, step: f64, knot_count: usize) -> Self {
        let chart = iso.chart().clone();
        let (a, b) = iso.interval();
        FlowMap {
            chart,
            knots: crate::grid::time_knots(a, b, knot_count),
            iso,
            step,
            order: 4,
            ham_id: None,
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        self.iso.interval()
    }

    pub fn forward(&self, t: f64, x: &[f64]) -> Result<FlowSample> {
        self.iso.eval(t, x)
    }

    pub fn inverse(&self, t: f64, y: &[f64]) -> Result<FlowSample> {
        self.iso.eval_inverse(t, y)
    }

    pub fn ham_id(&self) -> Option<u64> {
        self.ham_id
    }

    /// CSV snapshot: one row per (t, seed): t, input display coords, output
    /// display coords, conformal factor.
    pub fn export_snapshot<W: Write>(
        &self,
        ts: &[f64],
        seeds: &[Vec<f64>],
        mut w: W,
    ) -> Result<()> {
        let dim = self.chart.dim();
        let mut header = vec!["t".to_string()];
        for i in 0..dim {
            header.push(format!("in{i}"));
        }
        for i in 0..dim {
            header.push(format!("out{i}"));
        }
        header.push("h".into());
        let io_err = |e: std::io::Error| Error::Io {
            path: "<snapshot>".into(),
            source: e,
        };
        writeln!(w, "{}", header.join(",")).map_err(io_err)?;
        for seed in seeds {
            let samples = self.iso.eval_many(ts, seed)?;
            let din = self.chart.to_display(seed);
            for (t, s) in ts.iter().zip(samples) {
                let dout = self.chart.to_display(&s.point);
                let mut row = vec![format!("{t:?}")];
                row.extend(din.iter().map(|v| format!("{v:?}")));
                row.extend(dout.iter().map(|v| format!("{v:?}")));
                row.push(format!("{:?}", s.conformal));
                writeln!(w, "{}", row.join(",")).map_err(io_err)?;
            }
        }
        Ok(())
    }
}

/// Integrate the flow of a contact vector field over its Hamiltonian's time
/// interval, optionally starting from a non-identity base map.
pub fn integrate_flow(
    field: ContactVectorField,
    base: Option<Arc<dyn PointMap>>,
    step: f64,
) -> Result<FlowMap> {
    let ham_id = field.ham.id();
    let (a, b) = field.ham.interval;
    let direct = DirectFlow::new(field, base, step)?;
    let knots = (((b - a) / step).round() as usize).clamp(10, 200);
    let mut fm = FlowMap::from_isotopy(Arc::new(direct), step, knots);
    fm.ham_id = Some(ham_id);
    Ok(fm)
}

/// Conformal factor attached to a flow map.
#[derive(Debug, Clone)]
pub struct ConformalFactor {
    pub iso: Arc<dyn Isotopy>,
}

impl ConformalFactor {
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.iso.eval(t, x)?.conformal)
    }
}

/// Extract the conformal factor of a flow generated from `ham`; errors if the
/// flow was built from a different Hamiltonian.
pub fn conformal_factor(ham: &Arc<Hamiltonian>, flow: &FlowMap) -> Result<ConformalFactor> {
    match flow.ham_id {
        Some(id) if id == ham.id() => Ok(ConformalFactor {
            iso: flow.iso.clone(),
        }),
        _ => Err(Error::MismatchedPairing),
    }
}

/// Sup over samples and a tangent probe basis of
/// |(phi_t^* alpha)(e_i) - e^{h_t} alpha(e_i)|, the pullback identity
/// residual. The Jacobian is taken by centered differences with probe step
/// `JACOBIAN_PROBE`.
pub const JACOBIAN_PROBE: f64 = 1e-4;

pub fn pullback_residual(
    flow: &FlowMap,
    conf: &ConformalFactor,
    t: f64,
    samples: &[Vec<f64>],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let chart = &flow.chart;
    let dim = chart.dim();
    let mut worst = 0.0f64;
    let mut probe = vec![0.0; dim];
    let mut a_here = vec![0.0; dim];
    let mut a_img = vec![0.0; dim];
    for x in samples {
        let s = flow.forward(t, x)?;
        let h = conf.eval(t, x)?;
        chart.form_coeffs(x, &mut a_here);
        chart.form_coeffs(&s.point, &mut a_img);
        for i in 0..dim {
            probe.copy_from_slice(x);
            probe[i] = x[i] + 2.0 * JACOBIAN_PROBE;
            let pp = flow.forward(t, &probe)?.point;
            probe[i] = x[i] + JACOBIAN_PROBE;
            let p1 = flow.forward(t, &probe)?.point;
            probe[i] = x[i] - JACOBIAN_PROBE;
            let m1 = flow.forward(t, &probe)?.point;
            probe[i] = x[i] - 2.0 * JACOBIAN_PROBE;
            let mm = flow.forward(t, &probe)?.point;
            // column i of the Jacobian, fourth-order stencil
            let mut pulled = 0.0;
            for j in 0..dim {
                let dj = (-pp[j] + 8.0 * p1[j] - 8.0 * m1[j] + mm[j]) / (12.0 * JACOBIAN_PROBE);
                pulled += a_img[j] * dj;
            }
            let expected = h.exp() * a_here[i];
            worst = worst.max((pulled - expected).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::grid::{seeded_cloud, vertex_grid};
    use crate::ham::{contact_vector_field, BumpHam, ConstantHam, TimeProfile, TorusMode, TorusTrigHam};

    fn torus_reeb_flow(step: f64) -> (ChartRef, Arc<Hamiltonian>, FlowMap) {
        let chart = Chart::torus3().unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(ConstantHam(1.0)),
            (0.0, 1.0),
            None,
        );
        let fm = integrate_flow(contact_vector_field(h.clone()), None, step).unwrap();
        (chart, h, fm)
    }

    #[test]
    fn zero_hamiltonian_flows_to_identity() {
        let chart = Chart::torus3().unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(ConstantHam(0.0)),
            (0.0, 1.0),
            None,
        );
        let fm = integrate_flow(contact_vector_field(h), None, 1e-2).unwrap();
        for t in [0.0, 0.4, 1.0] {
            let s = fm.forward(t, &[1.0, 2.0, 3.0]).unwrap();
            assert_eq!(s.point, vec![1.0, 2.0, 3.0]);
            assert_eq!(s.conformal, 0.0);
        }
    }

    #[test]
    fn reeb_flow_translates_along_orbits() {
        // analytic orbit: (x + t cos z, y - t sin z, z)
        let (_, _, fm) = torus_reeb_flow(1e-3);
        let p = [0.7, 1.9, 0.6];
        for t in [0.25, 1.0] {
            let s = fm.forward(t, &p).unwrap();
            let exact = [p[0] + t * p[2].cos(), p[1] - t * p[2].sin(), p[2]];
            for i in 0..3 {
                assert!((s.point[i] - exact[i]).abs() < 1e-10);
            }
            assert!(s.conformal.abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trips() {
        let chart = Chart::torus3().unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(TorusTrigHam {
                modes: vec![TorusMode {
                    amp: 0.5,
                    kx: 1,
                    ky: 1,
                    kz: 1,
                    phase: 0.0,
                }],
                time: TimeProfile::One,
            }),
            (0.0, 1.0),
            None,
        );
        let fm = integrate_flow(contact_vector_field(h), None, 1e-3).unwrap();
        for p in vertex_grid(&chart, 3) {
            let fwd = fm.forward(1.0, &p).unwrap();
            let back = fm.inverse(1.0, &fwd.point).unwrap();
            let d = chart.distance(&back.point, &p);
            assert!(d < 1e-9, "round trip error {d}");
            // inverse conformal factor = -h at the preimage
            assert!((back.conformal + fwd.conformal).abs() < 1e-9);
        }
    }

    #[test]
    fn basic_hamiltonian_flow_is_strictly_contact() {
        let chart = Chart::torus3().unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(TorusTrigHam {
                modes: vec![TorusMode {
                    amp: 0.7,
                    kx: 0,
                    ky: 0,
                    kz: 2,
                    phase: 0.4,
                }],
                time: TimeProfile::One,
            }),
            (0.0, 1.0),
            None,
        );
        let fm = integrate_flow(contact_vector_field(h.clone()), None, 1e-3).unwrap();
        let conf = conformal_factor(&h, &fm).unwrap();
        let cloud = seeded_cloud(&chart, 40, 11, 0.0);
        let mut worst_h = 0.0f64;
        for p in &cloud {
            worst_h = worst_h.max(conf.eval(1.0, p).unwrap().abs());
        }
        assert!(worst_h <= 1e-8, "|h| = {worst_h}");
        let res = pullback_residual(&fm, &conf, 1.0, &cloud[..12].to_vec()).unwrap();
        assert!(res <= 1e-5, "pullback residual {res}");
    }

    #[test]
    fn conformal_factor_matches_pullback_log_ratio() {
        // generic (non-basic) bump on the Darboux chart
        let chart = Chart::darboux(1, 1.2, 1.2).unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(BumpHam {
                center: vec![0.25, 0.0, 0.1],
                radius: 0.5,
                amp: 0.6,
                time: TimeProfile::One,
                wrap: false,
            }),
            (0.0, 1.0),
            None,
        );
        let fm = integrate_flow(contact_vector_field(h.clone()), None, 1e-3).unwrap();
        let conf = conformal_factor(&h, &fm).unwrap();
        // log of (phi^* alpha)(R) is the conformal factor since alpha(R) = 1
        let x = [0.3, 0.05, 0.12];
        let hval = conf.eval(1.0, &x).unwrap();
        let mut r = [0.0; 3];
        chart.reeb(&x, &mut r);
        let d = 1e-5;
        let plus = fm
            .forward(1.0, &[x[0] + d * r[0], x[1] + d * r[1], x[2] + d * r[2]])
            .unwrap()
            .point;
        let minus = fm
            .forward(1.0, &[x[0] - d * r[0], x[1] - d * r[1], x[2] - d * r[2]])
            .unwrap()
            .point;
        let img = fm.forward(1.0, &x).unwrap().point;
        let mut a_img = vec![0.0; 3];
        chart.form_coeffs(&img, &mut a_img);
        let mut dphi_r = [0.0; 3];
        for j in 0..3 {
            dphi_r[j] = (plus[j] - minus[j]) / (2.0 * d);
        }
        let ratio: f64 = (0..3).map(|j| a_img[j] * dphi_r[j]).sum();
        assert!((ratio.ln() - hval).abs() < 1e-5, "{} vs {}", ratio.ln(), hval);
    }

    #[test]
    fn pullback_residual_identity_is_tiny() {
        let chart = Chart::torus3().unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(ConstantHam(0.0)),
            (0.0, 1.0),
            None,
        );
        let fm = integrate_flow(contact_vector_field(h.clone()), None, 1e-2).unwrap();
        let conf = conformal_factor(&h, &fm).unwrap();
        let samples = seeded_cloud(&chart, 10, 3, 0.0);
        let res = pullback_residual(&fm, &conf, 1.0, &samples).unwrap();
        assert!(res <= 1e-10, "identity residual {res}");
    }

    #[test]
    fn flow_property_for_autonomous_fields() {
        let (chart, _, fm) = torus_reeb_flow(1e-3);
        let p = [0.3, 0.4, 1.1];
        let a = fm.forward(0.3, &p).unwrap().point;
        let b = fm.forward(0.7, &a).unwrap().point; // autonomous: shifted field = same
        let c = fm.forward(1.0, &p).unwrap().point;
        assert!(chart.distance(&b, &c) < 1e-9);
    }

    #[test]
    fn fourth_order_convergence_of_pullback_residual() {
        let chart = Chart::torus3().unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(TorusTrigHam {
                modes: vec![TorusMode {
                    amp: 0.8,
                    kx: 1,
                    ky: 2,
                    kz: 1,
                    phase: 0.2,
                }],
                time: TimeProfile::One,
            }),
            (0.0, 1.0),
            None,
        );
        let samples = seeded_cloud(&chart, 6, 5, 0.0);
        let res_at = |step: f64| {
            let fm = integrate_flow(contact_vector_field(h.clone()), None, step).unwrap();
            let conf = conformal_factor(&h, &fm).unwrap();
            pullback_residual(&fm, &conf, 1.0, &samples).unwrap()
        };
        let coarse = res_at(0.05);
        let fine = res_at(0.025);
        assert!(
            coarse / fine >= 8.0,
            "expected 4th-order drop, got {coarse} -> {fine}"
        );
    }

    #[test]
    fn trajectory_escape_is_reported() {
        // H = 1 is not compactly supported: the Reeb flow marches z out of
        // the box, which must surface as an escape error.
        let chart = Chart::darboux(1, 1.0, 0.2).unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(ConstantHam(1.0)),
            (0.0, 1.0),
            None,
        );
        let fm = integrate_flow(contact_vector_field(h), None, 1e-2).unwrap();
        let err = fm.forward(1.0, &[0.3, 0.0, 0.1]).unwrap_err();
        assert!(matches!(err, Error::TrajectoryEscaped { .. }), "{err:?}");
    }

    #[test]
    fn mismatched_pairing_is_rejected() {
        let (chart, h, fm) = torus_reeb_flow(1e-2);
        let other = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(ConstantHam(2.0)),
            (0.0, 1.0),
            None,
        );
        assert!(conformal_factor(&other, &fm).is_err());
        assert!(conformal_factor(&h, &fm).is_ok());
    }

    #[test]
    fn snapshot_export_has_expected_columns() {
        let (_, _, fm) = torus_reeb_flow(1e-2);
        let mut buf = Vec::new();
        fm.export_snapshot(&[0.0, 0.5], &[vec![0.1, 0.2, 0.3]], &mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,in0,in1,in2,out0,out1,out2,h");
        assert_eq!(lines.count(), 2);
    }
}
