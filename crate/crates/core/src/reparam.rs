//! Reparameterization of isotopies in time: interval rescaling, boundary
//! flattening, loop profiles, and constant-speed reparameterization.
//!
//! A reparameterization function zeta maps its interval into [0,1]; the
//! reparameterized Hamiltonian is H^zeta(t,x) = zeta'(t) H(zeta(t), x) and the
//! reparameterized flow is phi_H^{zeta(t)}, so endpoint maps are preserved
//! whenever zeta fixes the endpoint values.

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::ham::Hamiltonian;
use crate::metrics::{ham_norm, norm_profile, NormKind};
use crate::smooth::step;
use std::sync::Arc;

/// Monotone C^1 cubic interpolant (Fritsch-Carlson limited tangents).
#[derive(Debug, Clone)]
pub struct MonotoneSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

impl MonotoneSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len());
        let n = xs.len();
        let mut d = vec![0.0; n - 1];
        let mut h = vec![0.0; n - 1];
        for k in 0..n - 1 {
            h[k] = xs[k + 1] - xs[k];
            d[k] = (ys[k + 1] - ys[k]) / h[k];
        }
        let mut ms = vec![0.0; n];
        ms[0] = endpoint_tangent(h[0], h.get(1).copied().unwrap_or(h[0]), d[0], d.get(1).copied().unwrap_or(d[0]));
        ms[n - 1] = endpoint_tangent(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            d[n - 2],
            if n >= 3 { d[n - 3] } else { d[n - 2] },
        );
        for k in 1..n - 1 {
            if d[k - 1] * d[k] <= 0.0 {
                ms[k] = 0.0;
            } else {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                ms[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
            }
        }
        MonotoneSpline { xs, ys, ms }
    }

    fn bracket(&self, x: f64) -> usize {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n - 2] {
            return n - 2;
        }
        // uniform-ish fast path then local scan
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn value(&self, x: f64) -> f64 {
        let k = self.bracket(x);
        let h = self.xs[k + 1] - self.xs[k];
        let u = ((x - self.xs[k]) / h).clamp(0.0, 1.0);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.ms[k] * h, self.ms[k + 1] * h);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * m1
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let k = self.bracket(x);
        let h = self.xs[k + 1] - self.xs[k];
        let u = ((x - self.xs[k]) / h).clamp(0.0, 1.0);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.ms[k], self.ms[k + 1]);
        let u2 = u * u;
        ((6.0 * u2 - 6.0 * u) * y0 + (-6.0 * u2 + 6.0 * u) * y1) / h
            + (3.0 * u2 - 4.0 * u + 1.0) * m0
            + (3.0 * u2 - 2.0 * u) * m1
    }

    /// Invert a strictly increasing spline by bisection.
    pub fn invert(&self, y: f64) -> f64 {
        let mut lo = self.xs[0];
        let mut hi = *self.xs.last().unwrap();
        if y <= self.value(lo) {
            return lo;
        }
        if y >= self.value(hi) {
            return hi;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn endpoint_tangent(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if (d0 - d1).signum() != 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[derive(Debug, Clone)]
enum ZetaKind {
    /// zeta_{a,b}: the linear map [a,b] -> [0,1]. Identity when (a,b) = (0,1).
    Linear { a: f64, b: f64 },
    /// zeta(t) = s t on [0,1].
    Scale { s: f64 },
    /// Smooth plateau-integral profile on [0,1]: zeta' = 0 on
    /// [0, delta/2] and [1 - delta/2, 1], and zeta' = 1/norm in the middle.
    Flat {
        delta: f64,
        norm: f64,
        table: Arc<MonotoneSpline>,
    },
    /// Monotone spline through sampled values (constant-speed inversions).
    Spline(Arc<MonotoneSpline>),
    /// height * sin^2(pi t): a loop profile with zero net progress.
    SineLoop { height: f64 },
}

/// A time reparameterization with value and derivative access.
#[derive(Debug, Clone)]
pub struct ReparamFn {
    interval: (f64, f64),
    kind: ZetaKind,
    pub monotone: bool,
    pub boundary_flat: Option<f64>,
    pub linear: bool,
}

impl ReparamFn {
    pub fn identity() -> Self {
        ReparamFn::linear_map(0.0, 1.0)
    }

    /// The unique increasing linear map [a,b] -> [0,1].
    pub fn linear_map(a: f64, b: f64) -> Self {
        assert!(a < b, "linear reparameterization needs a < b");
        ReparamFn {
            interval: (a, b),
            kind: ZetaKind::Linear { a, b },
            monotone: true,
            boundary_flat: None,
            linear: true,
        }
    }

    /// zeta(t) = s t on [0,1] (time-s truncation of the isotopy).
    pub fn scale(s: f64) -> Self {
        ReparamFn {
            interval: (0.0, 1.0),
            kind: ZetaKind::Scale { s },
            monotone: s >= 0.0,
            boundary_flat: None,
            linear: true,
        }
    }

    /// Loop profile: ends where it starts, net progress zero.
    pub fn sine_loop(height: f64) -> Self {
        ReparamFn {
            interval: (0.0, 1.0),
            kind: ZetaKind::SineLoop { height },
            monotone: false,
            boundary_flat: None,
            linear: false,
        }
    }

    /// Boundary-flat profile with transition width `delta` on each side.
    pub fn boundary_flat(delta: f64) -> Self {
        assert!((0.0..0.5).contains(&delta) && delta > 0.0);
        let psi = move |s: f64| -> f64 {
            step((s - 0.5 * delta) / (0.5 * delta)) * step(((1.0 - s) - 0.5 * delta) / (0.5 * delta))
        };
        // cumulative integral on a fine fixed table
        let n = 4096usize;
        let mut xs = Vec::with_capacity(n + 1);
        let mut ys = Vec::with_capacity(n + 1);
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        xs.push(0.0);
        ys.push(0.0);
        for i in 0..n {
            let a = i as f64 * h;
            // Simpson on each cell
            acc += h / 6.0 * (psi(a) + 4.0 * psi(a + 0.5 * h) + psi(a + h));
            xs.push(a + h);
            ys.push(acc);
        }
        let norm = acc;
        for y in ys.iter_mut() {
            *y /= norm;
        }
        *ys.last_mut().unwrap() = 1.0;
        ReparamFn {
            interval: (0.0, 1.0),
            kind: ZetaKind::Flat {
                delta,
                norm,
                table: Arc::new(MonotoneSpline::new(xs, ys)),
            },
            monotone: true,
            boundary_flat: Some(0.5 * delta),
            linear: false,
        }
    }

    pub fn from_spline(interval: (f64, f64), spline: MonotoneSpline, monotone: bool) -> Self {
        ReparamFn {
            interval,
            kind: ZetaKind::Spline(Arc::new(spline)),
            monotone,
            boundary_flat: None,
            linear: false,
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn value(&self, t: f64) -> f64 {
        match &self.kind {
            ZetaKind::Linear { a, b } => ((t - a) / (b - a)).clamp(0.0, 1.0),
            ZetaKind::Scale { s } => s * t,
            ZetaKind::Flat { table, .. } => table.value(t.clamp(0.0, 1.0)).clamp(0.0, 1.0),
            ZetaKind::Spline(sp) => sp.value(t),
            ZetaKind::SineLoop { height } => {
                let s = (std::f64::consts::PI * t).sin();
                height * s * s
            }
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match &self.kind {
            ZetaKind::Linear { a, b } => 1.0 / (b - a),
            ZetaKind::Scale { s } => *s,
            ZetaKind::Flat { delta, norm, .. } => {
                let s = t.clamp(0.0, 1.0);
                let psi = step((s - 0.5 * delta) / (0.5 * delta))
                    * step(((1.0 - s) - 0.5 * delta) / (0.5 * delta));
                psi / norm
            }
            ZetaKind::Spline(sp) => sp.deriv(t),
            ZetaKind::SineLoop { height } => {
                let p = std::f64::consts::PI;
                height * p * (2.0 * p * t).sin()
            }
        }
    }

    /// Endpoint values must land in {0, 1} for monotone reparameterizations.
    pub fn check_endpoints(&self) -> Result<()> {
        let (a, b) = self.interval;
        for v in [self.value(a), self.value(b)] {
            if v.abs() > 1e-9 && (v - 1.0).abs() > 1e-9 {
                return Err(Error::BadParameter(format!(
                    "reparameterization endpoint value {v} not in {{0, 1}}"
                )));
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            ZetaKind::Linear { a, b } => {
                if *a == 0.0 && *b == 1.0 {
                    "identity".into()
                } else {
                    format!("linear({a},{b})")
                }
            }
            ZetaKind::Scale { s } => format!("scale({s})"),
            ZetaKind::Flat { delta, .. } => format!("flat({delta})"),
            ZetaKind::Spline(_) => "constspeed".into(),
            ZetaKind::SineLoop { height } => format!("sineloop({height})"),
        }
    }
}

/// H^zeta as a new Hamiltonian. The generated flow is phi_H^{zeta(t)} and the
/// conformal factor is h_{zeta(t)}; both identities are exact at evaluator
/// level and tested on the flow side.
pub fn reparameterize(ham: &Arc<Hamiltonian>, zeta: ReparamFn) -> Arc<Hamiltonian> {
    Hamiltonian::reparam(ham.clone(), zeta)
}

/// Linear rescale of the time interval to [a, b].
pub fn rescale_interval(ham: &Arc<Hamiltonian>, a: f64, b: f64) -> Result<Arc<Hamiltonian>> {
    if a >= b {
        return Err(Error::BadParameter(format!(
            "rescale_interval needs a < b, got [{a}, {b}]"
        )));
    }
    Ok(Hamiltonian::reparam(ham.clone(), ReparamFn::linear_map(a, b)))
}

/// Result of [`boundary_flatten`].
pub struct Flattened {
    pub ham: Arc<Hamiltonian>,
    pub zeta: ReparamFn,
    /// Measured |H - H^zeta| in the time-integrated norm.
    pub delta_1inf: f64,
    /// Measured sup-norm inflation.
    pub linf_inflation: f64,
}

/// Reparameterize so the Hamiltonian vanishes near both endpoints while the
/// time-integrated norm is preserved and the sup norm inflates by less than
/// the requested epsilon. The transition width is the largest that meets the
/// budget, found by bisection.
pub fn boundary_flatten(
    ham: &Arc<Hamiltonian>,
    epsilon: f64,
    spec: &GridSpec,
) -> Result<Flattened> {
    if epsilon <= 0.0 {
        return Err(Error::BadParameter("epsilon must be positive".into()));
    }
    let (a, b) = ham.interval;
    if (a, b) != (0.0, 1.0) {
        return Err(Error::BadParameter(
            "boundary_flatten expects the unit time interval".into(),
        ));
    }

    // Already boundary flat? Accept the identity with all deltas zero.
    let probe = norm_profile(ham, &[0.0, 1e-3, 1.0 - 1e-3, 1.0], spec)?;
    if probe.iter().all(|v| *v < 1e-12) {
        return Ok(Flattened {
            ham: ham.clone(),
            zeta: ReparamFn::identity(),
            delta_1inf: 0.0,
            linf_inflation: 0.0,
        });
    }

    let linf_before = ham_norm(ham, NormKind::LInf, spec)?.value;
    // The transition zones of the flat profile are too narrow for a uniform
    // time rule; measure with a partition graded to the profile.
    let measure = |delta: f64| -> Result<(f64, f64)> {
        let zeta = ReparamFn::boundary_flat(delta);
        let hz = reparameterize(ham, zeta);
        let diff = Hamiltonian::lincomb(vec![(1.0, ham.clone()), (-1.0, hz.clone())])?;
        let breaks = flat_breakpoints(delta);
        let seg = (spec.time_knots / 4).max(16);
        let d = crate::metrics::ham_norm_graded(&diff, &breaks, seg, spec)?;
        let mut linf_after = f64::MIN;
        for w in breaks.windows(2) {
            let ts = crate::grid::time_knots(w[0], w[1], seg);
            for v in norm_profile(&hz, &ts, spec)? {
                linf_after = linf_after.max(v);
            }
        }
        Ok((d, linf_after - linf_before))
    };

    let mut lo = 1e-3; // narrowest transition we allow
    let (d_lo, infl_lo) = measure(lo)?;
    if d_lo >= epsilon || infl_lo >= epsilon {
        return Err(Error::SmallnessUnachievable {
            requested: epsilon,
            achievable: d_lo.max(infl_lo),
        });
    }
    let mut hi = 0.45;
    let ok_hi = {
        let (d, i) = measure(hi)?;
        d < epsilon && i < epsilon
    };
    if !ok_hi {
        for _ in 0..24 {
            let mid = 0.5 * (lo + hi);
            let (d, i) = measure(mid)?;
            if d < epsilon && i < epsilon {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    } else {
        lo = hi;
    }

    let zeta = ReparamFn::boundary_flat(lo);
    let hz = reparameterize(ham, zeta.clone());
    let (d, infl) = measure(lo)?;
    Ok(Flattened {
        delta_1inf: d,
        linf_inflation: infl,
        ham: hz,
        zeta,
    })
}

/// Quadrature breakpoints graded to a boundary-flat profile with transition
/// span `delta` on each side.
pub fn flat_breakpoints(delta: f64) -> Vec<f64> {
    vec![0.0, 0.5 * delta, delta, 1.0 - delta, 1.0 - 0.5 * delta, 1.0]
}

/// Result of [`constant_speed`].
#[derive(Debug)]
pub struct ConstantSpeed {
    pub ham: Arc<Hamiltonian>,
    pub zeta: ReparamFn,
    /// max_t / min_t of the reparameterized speed profile.
    pub speed_ratio: f64,
}

/// Reparameterize a regular isotopy so its per-time norm is (nearly)
/// constant: invert the normalized cumulative speed, then smooth the inverse
/// with a monotone C^1 spline. The deviation budget is 1%, split between
/// quadrature and inversion; the construction grid doubles until the
/// measured ratio meets the inversion half-budget, since the inverse map's
/// curvature scales like the inverse fourth power of the slowest speed.
pub fn constant_speed(
    ham: &Arc<Hamiltonian>,
    spec: &GridSpec,
    knots: usize,
) -> Result<ConstantSpeed> {
    let mut n = knots.max(256);
    let mut best: Option<ConstantSpeed> = None;
    loop {
        let cs = constant_speed_at(ham, spec, n)?;
        let good_enough = cs.speed_ratio <= 1.005;
        if best.as_ref().map_or(true, |b| cs.speed_ratio < b.speed_ratio) {
            best = Some(cs);
        }
        if good_enough || n >= 4096 {
            return Ok(best.unwrap());
        }
        n *= 2;
    }
}

fn constant_speed_at(ham: &Arc<Hamiltonian>, spec: &GridSpec, n: usize) -> Result<ConstantSpeed> {
    let (a, b) = ham.interval;
    // pass 1: uniform speed profile, for the knot grading
    let ts: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let speeds = norm_profile(ham, &ts, spec)?;
    for (i, &s) in speeds.iter().enumerate() {
        if s <= 0.0 {
            return Err(Error::VanishingSpeed {
                t: ts[i],
                value: s,
            });
        }
    }

    // The inverse map's curvature scales like speed^{-4}, so grade the
    // sample knots with density proportional to 1/speed: the spline error
    // then stays uniform along the profile.
    let mut wcum = vec![0.0; n + 1];
    for i in 0..n {
        wcum[i + 1] =
            wcum[i] + 0.5 * (1.0 / speeds[i] + 1.0 / speeds[i + 1]) * (ts[i + 1] - ts[i]);
    }
    let wtotal = wcum[n];
    let mut graded = Vec::with_capacity(n + 1);
    {
        let mut seg = 0usize;
        for j in 0..=n {
            let level = wtotal * j as f64 / n as f64;
            while seg + 1 < n && wcum[seg + 1] < level {
                seg += 1;
            }
            let span = wcum[seg + 1] - wcum[seg];
            let frac = if span > 0.0 {
                ((level - wcum[seg]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
            graded.push(ts[seg] + frac * (ts[seg + 1] - ts[seg]));
        }
        graded[0] = a;
        graded[n] = b;
    }

    // pass 2: speeds on the graded knots, cumulative progress eta there
    let gspeeds = norm_profile(ham, &graded, spec)?;
    let mut cum = vec![0.0; n + 1];
    for i in 0..n {
        cum[i + 1] = cum[i] + 0.5 * (gspeeds[i] + gspeeds[i + 1]) * (graded[i + 1] - graded[i]);
    }
    let total = cum[n];
    for c in cum.iter_mut() {
        *c /= total;
    }
    cum[n] = 1.0;

    // the pairs (eta(t_i), t_i) are inverse samples already: spline them
    let inv_xs: Vec<f64> = cum.iter().map(|u| a + (b - a) * u).collect();
    let norm_ys: Vec<f64> = graded.iter().map(|v| (v - a) / (b - a)).collect();
    let spline = MonotoneSpline::new(inv_xs, norm_ys);
    let zeta = ReparamFn::from_spline((a, b), spline, true);

    // The base Hamiltonian lives on [a,b]; express it on [0,1] first so the
    // value map zeta: [a,b] -> [0,1] composes with it.
    let base01 = if (a, b) == (0.0, 1.0) {
        ham.clone()
    } else {
        Hamiltonian::reparam(ham.clone(), ReparamFn::linear_map(0.0, 1.0))
    };
    let reparam = Hamiltonian::reparam(base01, zeta.clone());

    let check_ts: Vec<f64> = (0..=200)
        .map(|i| a + (b - a) * i as f64 / 200.0)
        .collect();
    let prof = norm_profile(&reparam, &check_ts, spec)?;
    let maxv = prof.iter().cloned().fold(f64::MIN, f64::max);
    let minv = prof.iter().cloned().fold(f64::MAX, f64::min);
    Ok(ConstantSpeed {
        ham: reparam,
        zeta,
        speed_ratio: if minv > 0.0 { maxv / minv } else { f64::INFINITY },
    })
}
