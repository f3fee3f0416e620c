//! The rotation family with a radial blow-up: Hamiltonians
//! H = eta(z) int_r^1 s rho(s) ds whose profile rho(r) = r^{-a} near the
//! origin (0 < a < 2), their smooth truncations, closed-form flows on the
//! invariant slab, convergence diagnostics, the non-Lipschitz displacement
//! certificate, and the pair of smooth fields conjugated by the limit
//! homeomorphism.
//!
//! Profile bookkeeping: rho is the pure power below `r_inner`, spliced to
//! zero by a smooth step on [r_inner, r_outer]. A truncation caps rho below
//! eps_j through a concave C-infinity profile that is exactly the identity
//! below the cap, so truncated and untruncated evaluations are bit-identical
//! wherever they agree mathematically; that is what makes the flow
//! stabilization identity checkable at machine precision.

use crate::chart::{ChartKind, ChartRef};
use crate::error::{Error, Result};
use crate::flow::PointMap;
use crate::ham::{HamImpl, Hamiltonian, MAX_DIM};
use crate::reparam::MonotoneSpline;
use crate::smooth::{step, Plateau};
use serde::Serialize;
use std::f64::consts::TAU;
use std::sync::Arc;

/// Parameters of the radial profile.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoProfile {
    /// Blow-up exponent a in (0, 2).
    pub exponent: f64,
    /// Pure power rho = r^{-a} for r <= r_inner.
    pub r_inner: f64,
    /// rho = 0 for r >= r_outer.
    pub r_outer: f64,
    /// Truncation radii eps_j, strictly decreasing.
    pub truncations: Vec<f64>,
}

impl RhoProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent < 2.0) {
            return Err(Error::BadParameter(format!(
                "exponent must lie in (0, 2), got {}",
                self.exponent
            )));
        }
        if !(0.0 < self.r_inner && self.r_inner < self.r_outer && self.r_outer < 1.0) {
            return Err(Error::BadParameter(
                "need 0 < r_inner < r_outer < 1".into(),
            ));
        }
        let mut prev = f64::MAX;
        for &e in &self.truncations {
            if !(e > 0.0 && e < prev) {
                return Err(Error::BadParameter(
                    "truncation radii must be positive and strictly decreasing".into(),
                ));
            }
            if e >= self.r_inner {
                return Err(Error::BadParameter(
                    "truncation radii must sit in the pure power region".into(),
                ));
            }
            prev = e;
        }
        Ok(())
    }
}

/// Saturation point of the truncation cap in units of the cap value.
const CAP_SPAN: f64 = 3.0;

/// Evaluated profile with cached quadrature tables.
#[derive(Debug)]
pub struct RhoState {
    pub profile: RhoProfile,
    /// Cumulative int_r^{r_outer} s rho(s) ds on the splice segment.
    splice_tail: MonotoneSpline,
    /// Concave cap mu on [1, CAP_SPAN]: identity below 1, constant above.
    cap: MonotoneSpline,
    cap_max: f64,
    /// Per-truncation: int_r^{eps_j} s rho_j(s) ds on [0, eps_j].
    trunc_tails: Vec<MonotoneSpline>,
    /// int_{0+}^1 s rho(s) ds.
    pub tail_at_zero: f64,
}

impl RhoState {
    pub fn new(profile: RhoProfile) -> Result<Arc<Self>> {
        profile.validate()?;
        let a = profile.exponent;
        let (ri, ro) = (profile.r_inner, profile.r_outer);

        // splice step: 1 at r_inner, 0 at r_outer, C-infinity
        let splice = |r: f64| step((ro - r) / (ro - ri));
        let rho_raw = move |r: f64| r.powf(-a) * splice(r);

        // cumulative tail on [r_inner, r_outer] by per-cell Simpson
        let n = 2048usize;
        let h = (ro - ri) / n as f64;
        let mut xs = vec![0.0; n + 1];
        let mut ys = vec![0.0; n + 1];
        xs[n] = ro;
        ys[n] = 0.0;
        let mut acc = 0.0;
        for i in (0..n).rev() {
            let r0 = ri + h * i as f64;
            let r1 = r0 + h;
            let mid = 0.5 * (r0 + r1);
            acc += h / 6.0
                * (r0 * rho_raw(r0) + 4.0 * mid * rho_raw(mid) + r1 * rho_raw(r1));
            xs[i] = r0;
            ys[i] = acc;
        }
        // MonotoneSpline wants the data as given (decreasing values are fine)
        let splice_tail = MonotoneSpline::new(xs, ys);

        // cap profile: mu(u) = u up to 1, then bends over with slope
        // step((CAP_SPAN - u)/(CAP_SPAN - 1)) until it is constant
        let m = 512usize;
        let hh = (CAP_SPAN - 1.0) / m as f64;
        let mut uxs = vec![0.0; m + 1];
        let mut uys = vec![0.0; m + 1];
        uxs[0] = 1.0;
        uys[0] = 1.0;
        let mut s_acc = 1.0;
        let slope = |u: f64| step((CAP_SPAN - u) / (CAP_SPAN - 1.0));
        for i in 0..m {
            let u0 = 1.0 + hh * i as f64;
            let u1 = u0 + hh;
            let mid = 0.5 * (u0 + u1);
            s_acc += hh / 6.0 * (slope(u0) + 4.0 * slope(mid) + slope(u1));
            uxs[i + 1] = u1;
            uys[i + 1] = s_acc;
        }
        let cap_max = s_acc;
        let cap = MonotoneSpline::new(uxs, uys);

        let mut state = RhoState {
            profile,
            splice_tail,
            cap,
            cap_max,
            trunc_tails: Vec::new(),
            tail_at_zero: 0.0,
        };
        state.tail_at_zero = state.tail(1e-300);

        // per-truncation capped tails
        for j in 0..state.profile.truncations.len() {
            let eps = state.profile.truncations[j];
            let n = 1024usize;
            let h = eps / n as f64;
            let mut xs = vec![0.0; n + 1];
            let mut ys = vec![0.0; n + 1];
            xs[n] = eps;
            ys[n] = 0.0;
            let mut acc = 0.0;
            for i in (0..n).rev() {
                let r0 = h * i as f64;
                let r1 = r0 + h;
                let mid = 0.5 * (r0 + r1);
                acc += h / 6.0
                    * (r0 * state.rho_trunc(j, r0)
                        + 4.0 * mid * state.rho_trunc(j, mid)
                        + r1 * state.rho_trunc(j, r1));
                xs[i] = r0;
                ys[i] = acc;
            }
            state.trunc_tails.push(MonotoneSpline::new(xs, ys));
        }
        Ok(Arc::new(state))
    }

    /// The limit profile.
    pub fn rho(&self, r: f64) -> f64 {
        let (ri, ro) = (self.profile.r_inner, self.profile.r_outer);
        if r >= ro {
            0.0
        } else if r <= ri {
            r.powf(-self.profile.exponent)
        } else {
            r.powf(-self.profile.exponent) * step((ro - r) / (ro - ri))
        }
    }

    /// d rho / dr (away from r = 0).
    pub fn rho_deriv(&self, r: f64) -> f64 {
        let a = self.profile.exponent;
        let (ri, ro) = (self.profile.r_inner, self.profile.r_outer);
        if r >= ro {
            0.0
        } else if r <= ri {
            -a * r.powf(-a - 1.0)
        } else {
            let u = (ro - r) / (ro - ri);
            -a * r.powf(-a - 1.0) * step(u)
                - r.powf(-a) * crate::smooth::step_d(u) / (ro - ri)
        }
    }

    /// Truncated profile: identical to rho for r >= eps_j (same code path,
    /// hence bit-identical), capped by the concave profile below.
    pub fn rho_trunc(&self, j: usize, r: f64) -> f64 {
        let eps = self.profile.truncations[j];
        if r >= eps {
            return self.rho(r);
        }
        let cj = self.rho(eps);
        let u = if r == 0.0 {
            f64::INFINITY
        } else {
            self.rho(r) / cj
        };
        if u <= 1.0 {
            self.rho(r)
        } else if u >= CAP_SPAN {
            cj * self.cap_max
        } else {
            cj * self.cap.value(u)
        }
    }

    pub fn rho_trunc_deriv(&self, j: usize, r: f64) -> f64 {
        let eps = self.profile.truncations[j];
        if r >= eps {
            return self.rho_deriv(r);
        }
        let cj = self.rho(eps);
        let u = if r == 0.0 {
            f64::INFINITY
        } else {
            self.rho(r) / cj
        };
        if u <= 1.0 {
            self.rho_deriv(r)
        } else if u >= CAP_SPAN {
            0.0
        } else {
            self.cap.deriv(u) * self.rho_deriv(r)
        }
    }

    /// int_r^1 s rho(s) ds.
    pub fn tail(&self, r: f64) -> f64 {
        let a = self.profile.exponent;
        let (ri, ro) = (self.profile.r_inner, self.profile.r_outer);
        if r >= ro {
            0.0
        } else if r >= ri {
            self.splice_tail.value(r)
        } else {
            // closed form on the power segment plus the splice integral
            let power = (ri.powf(2.0 - a) - r.powf(2.0 - a)) / (2.0 - a);
            power + self.splice_tail.value(ri)
        }
    }

    /// int_r^1 s rho_j(s) ds.
    pub fn tail_trunc(&self, j: usize, r: f64) -> f64 {
        let eps = self.profile.truncations[j];
        if r >= eps {
            self.tail(r)
        } else {
            self.trunc_tails[j].value(r) + self.tail(eps)
        }
    }

    /// z-displacement of the time-one map: 1/2 r^2 rho + tail.
    pub fn displacement(&self, r: f64) -> f64 {
        if r == 0.0 {
            return self.tail_at_zero;
        }
        0.5 * r * r * self.rho(r) + self.tail(r)
    }

    pub fn displacement_trunc(&self, j: usize, r: f64) -> f64 {
        0.5 * r * r * self.rho_trunc(j, r) + self.tail_trunc(j, r)
    }

    /// d/dr of the displacement: 1/2 r^2 rho'.
    pub fn displacement_deriv(&self, r: f64) -> f64 {
        0.5 * r * r * self.rho_deriv(r)
    }

    fn displacement_max(&self, trunc: Option<usize>) -> f64 {
        let n = 4096;
        let mut best = match trunc {
            Some(j) => self.displacement_trunc(j, 0.0),
            None => self.tail_at_zero,
        };
        for i in 1..=n {
            let r = self.profile.r_outer * i as f64 / n as f64;
            let d = match trunc {
                Some(j) => self.displacement_trunc(j, r),
                None => self.displacement(r),
            };
            best = best.max(d);
        }
        best
    }
}

/// Axial cutoff with its invariance bound: eta = 1 on the plateau, and `u`
/// is the largest slab half-width on which the displaced orbit never leaves
/// the plateau.
#[derive(Debug, Clone)]
pub struct CutoffEta {
    pub eta: Plateau,
    /// u: the invariance half-width for the limit profile.
    pub invariance: f64,
    /// b = 1/2 |eta'| int_{0+}^1 s rho ds.
    pub radial_bound: f64,
}

/// The full family: chart, profile state, cutoff, and per-truncation
/// invariance widths.
#[derive(Debug, Clone)]
pub struct RotationFamily {
    pub chart: ChartRef,
    pub state: Arc<RhoState>,
    pub cutoff: CutoffEta,
    /// u_j for each truncation; nested slabs U_j contain U.
    pub invariance_trunc: Vec<f64>,
}

impl RotationFamily {
    pub fn new(chart: ChartRef, profile: RhoProfile, eta: Plateau) -> Result<Self> {
        if !matches!(chart.kind, ChartKind::DarbouxPolar { .. }) {
            return Err(Error::BadParameter(
                "the rotation family lives on Darboux charts".into(),
            ));
        }
        let state = RhoState::new(profile)?;
        let b = 0.5 * eta.deriv_max() * state.tail_at_zero;
        let u = bisect_invariance(&state, None, &eta);
        if u <= 0.0 {
            return Err(Error::BadParameter(format!(
                "cutoff plateau {} too narrow for the displacement {:.4}",
                eta.plateau,
                state.displacement_max(None)
            )));
        }
        let mut invariance_trunc = Vec::new();
        for j in 0..state.profile.truncations.len() {
            invariance_trunc.push(bisect_invariance(&state, Some(j), &eta));
        }
        Ok(RotationFamily {
            chart,
            state,
            cutoff: CutoffEta {
                eta,
                invariance: u,
                radial_bound: b,
            },
            invariance_trunc,
        })
    }

    /// The Hamiltonian eta(z) int_r^1 s rho_j(s) ds (or the limit for None;
    /// continuous but not smooth, so only its evaluations are exposed).
    pub fn hamiltonian(&self, trunc: Option<usize>) -> Arc<Hamiltonian> {
        let imp = RotationHam {
            state: self.state.clone(),
            eta: self.cutoff.eta,
            trunc,
        };
        Hamiltonian::closed_form(self.chart.clone(), Arc::new(imp), (0.0, 1.0), None)
    }

    /// Closed-form flow in display (polar) coordinates on the invariant
    /// slab: angles rotate by -t rho(r), z translates by t D(r), radii are
    /// untouched (bit-exactly).
    pub fn closed_form_polar(
        &self,
        trunc: Option<usize>,
        t: f64,
        polar: &[f64],
    ) -> Result<Vec<f64>> {
        let n = self.chart.pairs();
        let z = polar[2 * n];
        let u = match trunc {
            Some(j) => self.invariance_trunc[j],
            None => self.cutoff.invariance,
        };
        if z.abs() > u {
            return Err(Error::OutsideMapDomain(polar.to_vec()));
        }
        let r2: f64 = polar[..n].iter().map(|r| r * r).sum();
        let r = r2.sqrt();
        let (rot, dz) = match trunc {
            Some(j) => (
                self.state.rho_trunc(j, r),
                self.state.displacement_trunc(j, r),
            ),
            None => (
                if r == 0.0 { 0.0 } else { self.state.rho(r) },
                self.state.displacement(r),
            ),
        };
        let mut out = polar.to_vec();
        for i in 0..n {
            out[n + i] = polar[n + i] - t * rot;
        }
        out[2 * n] = z + t * dz;
        Ok(out)
    }

    /// Closed-form flow in working coordinates (for oracle comparisons; the
    /// rotation goes through sin/cos, so radii are preserved only to
    /// roundoff here).
    pub fn closed_form_working(
        &self,
        trunc: Option<usize>,
        t: f64,
        w: &[f64],
    ) -> Result<Vec<f64>> {
        let n = self.chart.pairs();
        let z = w[2 * n];
        let u = match trunc {
            Some(j) => self.invariance_trunc[j],
            None => self.cutoff.invariance,
        };
        if z.abs() > u {
            return Err(Error::OutsideMapDomain(w.to_vec()));
        }
        let r2: f64 = w[..2 * n].iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let (rot, dz) = match trunc {
            Some(j) => (
                self.state.rho_trunc(j, r),
                self.state.displacement_trunc(j, r),
            ),
            None => (
                if r == 0.0 { 0.0 } else { self.state.rho(r) },
                self.state.displacement(r),
            ),
        };
        let (s, c) = (t * rot).sin_cos();
        let mut out = w.to_vec();
        for i in 0..n {
            let (x, y) = (w[2 * i], w[2 * i + 1]);
            // rotation by -t rho
            out[2 * i] = x * c + y * s;
            out[2 * i + 1] = -x * s + y * c;
        }
        out[2 * n] = z + t * dz;
        Ok(out)
    }

    /// The limit time-one map as a point map on the invariant slab, with its
    /// vanishing conformal factor there.
    pub fn limit_time_one(self: &Arc<Self>) -> Arc<dyn PointMap> {
        Arc::new(LimitTimeOne {
            family: self.clone(),
        })
    }
}

fn bisect_invariance(state: &RhoState, trunc: Option<usize>, eta: &Plateau) -> f64 {
    // largest u with eta(z +- D(r)) = 1 for all |z| <= u and all r:
    // bisection on u against the grid sup of the displacement
    let holds = |u: f64| -> bool {
        let n = 512;
        for i in 0..=n {
            let r = state.profile.r_outer * i as f64 / n as f64;
            let d = match trunc {
                Some(j) => state.displacement_trunc(j, r),
                None => state.displacement(r),
            };
            if u + d > eta.plateau {
                return false;
            }
        }
        true
    };
    if !holds(0.0) {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = eta.plateau;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// eta(z) * tail_j(r), with the exact gradient
/// (-eta rho_j x_i, ..., eta' tail_j).
#[derive(Debug)]
struct RotationHam {
    state: Arc<RhoState>,
    eta: Plateau,
    trunc: Option<usize>,
}

impl HamImpl for RotationHam {
    fn value(&self, _t: f64, w: &[f64]) -> Result<f64> {
        let dim = w.len();
        let z = w[dim - 1];
        let e = self.eta.value(z);
        if e == 0.0 {
            return Ok(0.0);
        }
        let r2: f64 = w[..dim - 1].iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let tail = match self.trunc {
            Some(j) => self.state.tail_trunc(j, r),
            None => {
                if r == 0.0 {
                    self.state.tail_at_zero
                } else {
                    self.state.tail(r)
                }
            }
        };
        Ok(e * tail)
    }

    fn grad(&self, _t: f64, w: &[f64], out: &mut [f64]) -> Result<()> {
        let dim = w.len();
        out[..dim].iter_mut().for_each(|g| *g = 0.0);
        let z = w[dim - 1];
        let e = self.eta.value(z);
        let de = self.eta.deriv(z);
        if e == 0.0 && de == 0.0 {
            return Ok(());
        }
        let r2: f64 = w[..dim - 1].iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let (tail, rho) = match self.trunc {
            Some(j) => (self.state.tail_trunc(j, r), self.state.rho_trunc(j, r)),
            None => {
                if r == 0.0 {
                    (self.state.tail_at_zero, 0.0)
                } else {
                    (self.state.tail(r), self.state.rho(r))
                }
            }
        };
        // d tail/dr = -r rho, and dr/dx_i = x_i / r
        for i in 0..dim - 1 {
            out[i] = -e * rho * w[i];
        }
        out[dim - 1] = de * tail;
        Ok(())
    }

    fn name(&self) -> String {
        match self.trunc {
            Some(j) => format!("rotation(trunc={j})"),
            None => "rotation(limit)".into(),
        }
    }
}

/// Time-one limit homeomorphism restricted to the invariant slab.
#[derive(Debug)]
struct LimitTimeOne {
    family: Arc<RotationFamily>,
}

impl PointMap for LimitTimeOne {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.family.closed_form_working(None, 1.0, x)
    }
    fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        // the inverse flips the sign of rho: rotate forward, translate down
        self.family.closed_form_working(None, -1.0, y)
    }
    fn conformal(&self, x: &[f64]) -> Result<f64> {
        let n = self.family.chart.pairs();
        if x[2 * n].abs() > self.family.cutoff.invariance {
            return Err(Error::OutsideMapDomain(x.to_vec()));
        }
        Ok(0.0)
    }
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

/// One (j, k) comparison row of the truncation diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationRow {
    pub j: usize,
    pub k: usize,
    pub sup_ham_diff: f64,
    pub ham_diff_bound: f64,
    pub sup_y_diff: f64,
    pub flow_sup_distance: f64,
    pub stabilized_sup: f64,
    pub stabilized_radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationDiagnostics {
    pub rows: Vec<TruncationRow>,
    pub radial_ratio_max: f64,
    pub radial_ratio_min: f64,
    pub radial_bound: f64,
    pub invariance_widths: Vec<f64>,
    pub invariance_limit: f64,
}

/// The Y-part of the field (radial and axial components) in working
/// coordinates; the angular part is removed, so radii obey the exponential
/// bound along its flow.
fn y_field(family: &RotationFamily, trunc: Option<usize>, w: &[f64], out: &mut [f64]) {
    let dim = w.len();
    let z = w[dim - 1];
    let e = family.cutoff.eta.value(z);
    let de = family.cutoff.eta.deriv(z);
    let r2: f64 = w[..dim - 1].iter().map(|v| v * v).sum();
    let r = r2.sqrt();
    let (tail, disp) = match trunc {
        Some(j) => (
            family.state.tail_trunc(j, r),
            family.state.displacement_trunc(j, r),
        ),
        None => (
            if r == 0.0 {
                family.state.tail_at_zero
            } else {
                family.state.tail(r)
            },
            family.state.displacement(r),
        ),
    };
    for i in 0..dim - 1 {
        out[i] = 0.5 * de * tail * w[i];
    }
    out[dim - 1] = e * disp;
}

/// Convergence table over truncation index pairs, radial-bound measurement
/// along integrated trajectories, and the exact stabilization check.
pub fn truncation_sequence_diagnostics(
    family: &RotationFamily,
    seeds: &[Vec<f64>],
    step: f64,
) -> Result<TruncationDiagnostics> {
    let state = &family.state;
    let jn = state.profile.truncations.len();
    if jn < 2 {
        return Err(Error::BadParameter(
            "need at least two truncations to compare".into(),
        ));
    }
    let chart = &family.chart;
    let dim = chart.dim();
    let mut rows = Vec::new();

    // radial grid for sup |H_j - H_k| and |Y_j - Y_k|
    let mut grid = Vec::new();
    for i in 0..=400 {
        let r = state.profile.r_outer * 1.05 * i as f64 / 400.0;
        for &z in &[0.0, 0.3 * family.cutoff.eta.plateau, 0.9 * family.cutoff.eta.plateau] {
            let mut p = vec![0.0; dim];
            p[0] = r;
            p[dim - 1] = z;
            grid.push(p);
        }
    }

    let flows: Vec<_> = (0..jn)
        .map(|j| {
            crate::flow::integrate_flow(
                crate::ham::contact_vector_field(family.hamiltonian(Some(j))),
                None,
                step,
            )
        })
        .collect::<Result<_>>()?;

    for j in 0..jn - 1 {
        for k in (j + 1)..jn {
            let hj = family.hamiltonian(Some(j));
            let hk = family.hamiltonian(Some(k));
            let mut sup_h = 0.0f64;
            let mut sup_y = 0.0f64;
            let mut yj = [0.0f64; MAX_DIM];
            let mut yk = [0.0f64; MAX_DIM];
            for p in &grid {
                let d = (hj.eval(0.0, p)? - hk.eval(0.0, p)?).abs();
                sup_h = sup_h.max(d);
                y_field(family, Some(j), p, &mut yj[..dim]);
                y_field(family, Some(k), p, &mut yk[..dim]);
                let dy: f64 = (0..dim)
                    .map(|i| (yj[i] - yk[i]) * (yj[i] - yk[i]))
                    .sum::<f64>()
                    .sqrt();
                sup_y = sup_y.max(dy);
            }
            // |eta| int_0^{eps_j} s rho ds bounds the Hamiltonian gap
            let bound = state.tail_at_zero - state.tail(state.profile.truncations[j]);

            let mut flow_dist = 0.0f64;
            for s in seeds {
                let a = flows[j].forward(1.0, s)?;
                let b = flows[k].forward(1.0, s)?;
                flow_dist = flow_dist.max(chart.distance(&a.point, &b.point));
            }

            // stabilization: seeds regenerated outside the mixing radius
            let stab_radius = family.cutoff.radial_bound.exp() * state.profile.truncations[j];
            let mut stab_sup = 0.0f64;
            let mut rng = crate::smooth::SplitMix64::new(777);
            for _ in 0..24 {
                let r0 = stab_radius * (1.0 + 1e-6) + rng.next_f64() * 0.2;
                let th = rng.next_f64() * TAU;
                let z0 = (rng.next_f64() - 0.5) * family.cutoff.eta.plateau;
                let mut p = vec![0.0; dim];
                p[0] = r0 * th.cos();
                p[1] = r0 * th.sin();
                p[dim - 1] = z0;
                let a = flows[j].forward(1.0, &p)?;
                let b = flows[k].forward(1.0, &p)?;
                for i in 0..dim {
                    stab_sup = stab_sup.max((a.point[i] - b.point[i]).abs());
                }
            }

            rows.push(TruncationRow {
                j,
                k,
                sup_ham_diff: sup_h,
                ham_diff_bound: bound,
                sup_y_diff: sup_y,
                flow_sup_distance: flow_dist,
                stabilized_sup: stab_sup,
                stabilized_radius: stab_radius,
            });
        }
    }

    // radial ratio bound along full trajectories of the finest truncation
    let mut ratio_max = 1.0f64;
    let mut ratio_min = 1.0f64;
    let finest = jn - 1;
    for s in seeds {
        let r0: f64 = s[..dim - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        if r0 < 1e-9 {
            continue;
        }
        for knot in 1..=4 {
            let t = knot as f64 / 4.0;
            let img = flows[finest].forward(t, s)?;
            let r1: f64 = img.point[..dim - 1]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            ratio_max = ratio_max.max(r1 / r0);
            ratio_min = ratio_min.min(r1 / r0);
        }
    }

    Ok(TruncationDiagnostics {
        rows,
        radial_ratio_max: ratio_max,
        radial_ratio_min: ratio_min,
        radial_bound: family.cutoff.radial_bound,
        invariance_widths: family.invariance_trunc.clone(),
        invariance_limit: family.cutoff.invariance,
    })
}

// ---------------------------------------------------------------------------
// the non-Lipschitz certificate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CertificateRow {
    pub k: u64,
    pub s_k: f64,
    pub s_k_prime: f64,
    pub gap_ok: bool,
    pub quotient: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Smallest radius admitted into the certificate; below this the blow-up
/// outruns 64-bit arithmetic.
pub const CERTIFICATE_FLOOR: f64 = 1e-8;

/// Stream the displacement-quotient certificate: radii where the rotation
/// angle is 0 mod 2 pi versus pi mod 2 pi, quotient against s_k^{-delta}.
/// Returns the number of rows visited; stops at the float floor.
pub fn lipschitz_certificate_scan(
    family: &RotationFamily,
    delta: f64,
    k_max: u64,
    mut visit: impl FnMut(&CertificateRow),
) -> Result<u64> {
    let a = family.state.profile.exponent;
    if !(delta > 0.0 && delta < a) {
        return Err(Error::BadParameter(format!(
            "need 0 < delta < a = {a}, got {delta}"
        )));
    }
    let mut count = 0u64;
    for k in 1..=k_max {
        let base = TAU * k as f64;
        let s_k = base.powf(-1.0 / a);
        if s_k < CERTIFICATE_FLOOR {
            break;
        }
        if s_k > family.state.profile.r_inner {
            continue; // outside the pure power region
        }
        let s_kp = (base + std::f64::consts::PI).powf(-1.0 / a);
        // cancellation-free gap: s_k (1 - (1 + 1/(2k))^{-1/a})
        let gap = s_k * (-(-(1.0 / a) * (1.0 / (2.0 * k as f64)).ln_1p()).exp_m1());
        let gap_ok = gap < s_k.powf(1.0 + delta);

        // images of (s, theta=0, z=0) under the closed-form time-one map:
        // polar (s, -rho(s), D(s))
        let img = |s: f64| -> (f64, f64, f64) {
            let rot = family.state.rho(s);
            let dz = family.state.displacement(s);
            let (sn, cs) = rot.sin_cos();
            (s * cs, -s * sn, dz)
        };
        let (x1, y1, z1) = img(s_k);
        let (x2, y2, z2) = img(s_kp);
        let dist = ((x1 - x2).powi(2) + (y1 - y2).powi(2) + (z1 - z2).powi(2)).sqrt();
        let quotient = dist / gap;
        let bound = s_k.powf(-delta);
        visit(&CertificateRow {
            k,
            s_k,
            s_k_prime: s_kp,
            gap_ok,
            quotient,
            bound,
            pass: gap_ok && quotient > bound,
        });
        count += 1;
    }
    if count == 0 {
        return Err(Error::BadParameter(
            "no usable certificate indices in range".into(),
        ));
    }
    Ok(count)
}

/// Collected certificate table (for report emission; the scan form avoids
/// holding millions of rows).
pub fn lipschitz_certificate(
    family: &RotationFamily,
    delta: f64,
    k_max: u64,
) -> Result<Vec<CertificateRow>> {
    let mut rows = Vec::new();
    lipschitz_certificate_scan(family, delta, k_max, |r| rows.push(r.clone()))?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// conjugate smooth fields
// ---------------------------------------------------------------------------

/// The reference Hamiltonian with elliptical level sets:
/// F = exp(-4 / (16 x^2 + y^2)) cut off in z and in radius. The quadratic
/// form is the squared radius after the area-preserving coordinate change
/// (x, y) -> (2x, y/2).
#[derive(Debug)]
pub struct EllipticHam {
    pub z_cut: Plateau,
    pub r_cut: Plateau,
    /// When set, the angular coordinate is shifted by -rho(r) before
    /// evaluation: this is F composed with the limit time-one map.
    pub twist: Option<Arc<RhoState>>,
}

impl EllipticHam {
    /// f and its (x, y) gradient at an (optionally twisted) planar point.
    fn planar(&self, x: f64, y: f64, r: f64) -> (f64, f64, f64) {
        // untwisted: f = 4 / (16 x^2 + y^2)
        let q = 16.0 * x * x + y * y;
        if q == 0.0 {
            return (f64::INFINITY, 0.0, 0.0);
        }
        let f = 4.0 / q;
        match &self.twist {
            None => {
                let c = -4.0 / (q * q);
                (f, c * 32.0 * x, c * 2.0 * y)
            }
            Some(state) => {
                // rotate the point by +rho(r) (angle shift theta - rho under
                // the map composes as a rotation of the argument)
                let rho = if r == 0.0 { 0.0 } else { state.rho(r) };
                let (sn, cs) = rho.sin_cos();
                let xt = x * cs + y * sn;
                let yt = -x * sn + y * cs;
                let q = 16.0 * xt * xt + yt * yt;
                if q == 0.0 {
                    return (f64::INFINITY, 0.0, 0.0);
                }
                let f = 4.0 / q;
                let c = -4.0 / (q * q);
                let (fx_t, fy_t) = (c * 32.0 * xt, c * 2.0 * yt);
                // chain rule: d(xt,yt)/d(x,y) includes the rho'(r) swirl
                let drho = state.rho_deriv(r);
                let (dx_r, dy_r) = (x / r, y / r);
                // d xt = cs dx + sn dy + (-x sn + y cs) drho dr = ...
                let dxt_dx = cs + yt * drho * dx_r;
                let dxt_dy = sn + yt * drho * dy_r;
                let dyt_dx = -sn - xt * drho * dx_r;
                let dyt_dy = cs - xt * drho * dy_r;
                (
                    f,
                    fx_t * dxt_dx + fy_t * dyt_dx,
                    fx_t * dxt_dy + fy_t * dyt_dy,
                )
            }
        }
    }
}

impl HamImpl for EllipticHam {
    fn value(&self, _t: f64, w: &[f64]) -> Result<f64> {
        let (x, y, z) = (w[0], w[1], w[2]);
        let r = x.hypot(y);
        let zc = match &self.twist {
            None => self.z_cut.value(z),
            Some(state) => self.z_cut.value(z + state.displacement(r)),
        };
        if zc == 0.0 {
            return Ok(0.0);
        }
        let rc = self.r_cut.value(r);
        if rc == 0.0 {
            return Ok(0.0);
        }
        let (f, _, _) = self.planar(x, y, r);
        if f > 700.0 {
            return Ok(0.0); // exp underflow: exactly zero, smoothly
        }
        Ok((-f).exp() * zc * rc)
    }

    fn grad(&self, _t: f64, w: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|g| *g = 0.0);
        let (x, y, z) = (w[0], w[1], w[2]);
        let r = x.hypot(y);
        let (zc, dzc, dz_dr) = match &self.twist {
            None => (self.z_cut.value(z), self.z_cut.deriv(z), 0.0),
            Some(state) => {
                let zt = z + state.displacement(r);
                (
                    self.z_cut.value(zt),
                    self.z_cut.deriv(zt),
                    state.displacement_deriv(r),
                )
            }
        };
        let rc = self.r_cut.value(r);
        if (zc == 0.0 && dzc == 0.0) || rc == 0.0 {
            return Ok(());
        }
        let drc = self.r_cut.deriv(r);
        let (f, fx, fy) = self.planar(x, y, r);
        if f > 700.0 {
            return Ok(());
        }
        let e = (-f).exp();
        let (dx_r, dy_r) = if r == 0.0 { (0.0, 0.0) } else { (x / r, y / r) };
        out[0] = -e * fx * zc * rc + e * dzc * dz_dr * dx_r * rc + e * zc * drc * dx_r;
        out[1] = -e * fy * zc * rc + e * dzc * dz_dr * dy_r * rc + e * zc * drc * dy_r;
        out[2] = e * dzc * zc.signum().abs() * rc; // d/dz only through z_cut
        out[2] = e * dzc * rc;
        Ok(())
    }

    fn name(&self) -> String {
        if self.twist.is_some() {
            "elliptic(twisted)".into()
        } else {
            "elliptic".into()
        }
    }
}

/// The conjugate pair: F with elliptical level sets and H = F o phi for the
/// limit time-one map phi. Both are smooth; they are topologically conjugate
/// through phi.
pub struct ConjugatePair {
    pub ham_f: Arc<Hamiltonian>,
    pub ham_h: Arc<Hamiltonian>,
    pub family: Arc<RotationFamily>,
}

pub fn conjugate_fields_example(
    family: &Arc<RotationFamily>,
    z_plateau: f64,
    z_support: f64,
    r_plateau: f64,
    r_support: f64,
) -> Result<ConjugatePair> {
    if z_support > family.cutoff.invariance {
        return Err(Error::BadParameter(format!(
            "reference support |z| <= {z_support} leaks outside the invariant slab (u = {})",
            family.cutoff.invariance
        )));
    }
    let z_cut = Plateau::new(z_plateau, z_support);
    let r_cut = Plateau::new(r_plateau, r_support);
    let ham_f = Hamiltonian::closed_form(
        family.chart.clone(),
        Arc::new(EllipticHam {
            z_cut,
            r_cut,
            twist: None,
        }),
        (0.0, 1.0),
        None,
    );
    let ham_h = Hamiltonian::closed_form(
        family.chart.clone(),
        Arc::new(EllipticHam {
            z_cut,
            r_cut,
            twist: Some(family.state.clone()),
        }),
        (0.0, 1.0),
        None,
    );
    Ok(ConjugatePair {
        ham_f,
        ham_h,
        family: family.clone(),
    })
}

impl ConjugatePair {
    /// sup over seeds and times of d(phi_H^t(x), phi^{-1}(phi_F^t(phi(x)))).
    pub fn conjugacy_residual(
        &self,
        seeds: &[Vec<f64>],
        times: &[f64],
        step: f64,
    ) -> Result<f64> {
        let chart = &self.family.chart;
        let flow_h = crate::flow::integrate_flow(
            crate::ham::contact_vector_field(self.ham_h.clone()),
            None,
            step,
        )?;
        let flow_f = crate::flow::integrate_flow(
            crate::ham::contact_vector_field(self.ham_f.clone()),
            None,
            step,
        )?;
        let phi = self.family.limit_time_one();
        let mut worst = 0.0f64;
        for seed in seeds {
            let lhs = flow_h.iso.eval_many(times, seed)?;
            let image = phi.apply(seed)?;
            let rhs_mid = flow_f.iso.eval_many(times, &image)?;
            for (l, m) in lhs.iter().zip(&rhs_mid) {
                let rhs = phi.invert(&m.point)?;
                worst = worst.max(chart.distance(&l.point, &rhs));
            }
        }
        Ok(worst)
    }

    /// H equals F after the limit map, pointwise by construction.
    pub fn definition_residual(&self, seeds: &[Vec<f64>]) -> Result<f64> {
        let phi = self.family.limit_time_one();
        let mut worst = 0.0f64;
        for seed in seeds {
            let lhs = self.ham_h.eval(0.0, seed)?;
            let rhs = self.ham_f.eval(0.0, &phi.apply(seed)?)?;
            worst = worst.max((lhs - rhs).abs());
        }
        Ok(worst)
    }
}

/// Points on the level set f = c of the elliptical profile, as radii per
/// angle; the semi-axis ratio r(pi/2) / r(0) is 4.
pub fn elliptic_level_radius(c: f64, theta: f64) -> f64 {
    (4.0 / (c * (1.0 + 15.0 * theta.cos().powi(2)))).sqrt()
}
