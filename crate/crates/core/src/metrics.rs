//! Norms, distances and energies.
//!
//! The per-time norm of a function is its oscillation plus the absolute
//! volume-weighted mean, |H_t| = osc(H_t) + |c(H_t)|. Time aggregation gives
//! the integrated norm (time integral) and the sup norm (time maximum).
//! Oscillations and C0 distances reduce over nested vertex grids so refining
//! a grid can only grow them; means use midpoint quadrature on cell centers.
//! All reductions run in fixed index order, so reports are bit-reproducible
//! for identical grid specs.

use crate::error::{Error, Result};
use crate::flow::FlowMap;
use crate::grid::{simpson, time_knots, vertex_grid, weighted_center_grid, GridSpec};
use crate::ham::Hamiltonian;
use crate::system::ContactDynamicalSystem;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NormKind {
    /// osc + |mean| of the time slice at `t`.
    OscMean { t: f64 },
    /// Integral over time of the slice norms.
    L1Inf,
    /// Maximum over time of the slice norms.
    LInf,
}

impl NormKind {
    pub fn tag(&self) -> String {
        match self {
            NormKind::OscMean { t } => format!("osc_mean(t={t})"),
            NormKind::L1Inf => "L1inf".into(),
            NormKind::LInf => "Linf".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub value: f64,
    pub kind: String,
    pub grid: GridSpec,
    pub grid_hash: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub c0: f64,
    pub conformal: f64,
    pub ham: f64,
    pub total: f64,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyEstimate {
    pub upper_bound: f64,
    pub witness: usize,
    pub candidate_count: usize,
}

/// Slice norms |H_t| for each requested time, sharing one pass over the
/// spatial grids per point (group-law evaluators walk each trajectory once).
pub fn norm_profile(ham: &Arc<Hamiltonian>, ts: &[f64], spec: &GridSpec) -> Result<Vec<f64>> {
    let chart = &ham.chart;
    let vgrid = vertex_grid(chart, spec.per_axis);
    let cgrid = weighted_center_grid(chart, spec.per_axis);
    let nt = ts.len();
    let mut maxs = vec![f64::MIN; nt];
    let mut mins = vec![f64::MAX; nt];
    for p in &vgrid {
        let vals = ham.eval_sweep(ts, p)?;
        for (k, v) in vals.into_iter().enumerate() {
            if v > maxs[k] {
                maxs[k] = v;
            }
            if v < mins[k] {
                mins[k] = v;
            }
        }
    }
    let mut means = vec![0.0; nt];
    let mut wtotal = 0.0;
    for (p, w) in &cgrid {
        let vals = ham.eval_sweep(ts, p)?;
        for (k, v) in vals.into_iter().enumerate() {
            means[k] += w * v;
        }
        wtotal += w;
    }
    Ok((0..nt)
        .map(|k| (maxs[k] - mins[k]) + (means[k] / wtotal).abs())
        .collect())
}

/// Time-integrated norm with a graded partition: composite Simpson on each
/// segment between consecutive breakpoints. Used where the integrand has
/// known narrow transition zones (boundary-flat reparameterizations) that a
/// uniform rule cannot resolve.
pub fn ham_norm_graded(
    ham: &Arc<Hamiltonian>,
    breakpoints: &[f64],
    per_segment: usize,
    spec: &GridSpec,
) -> Result<f64> {
    let mut total = 0.0;
    for seg in breakpoints.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if !(b > a) {
            continue;
        }
        let (ts, ws) = simpson(a, b, per_segment.max(2));
        let prof = norm_profile(ham, &ts, spec)?;
        total += prof.iter().zip(&ws).map(|(v, w)| v * w).sum::<f64>();
    }
    Ok(total)
}

/// Boundary threshold for the support-coverage check.
const SUPPORT_LEAK_TOL: f64 = 1e-7;

/// On Darboux charts every Hamiltonian is compactly supported inside the
/// box; a nonzero value on the boundary shell means the grid misses part of
/// the support and the norm would be wrong.
fn check_support_coverage(ham: &Arc<Hamiltonian>) -> Result<()> {
    let chart = &ham.chart;
    let crate::chart::ChartKind::DarbouxPolar { n } = chart.kind else {
        return Ok(());
    };
    let iv = &chart.domain.intervals;
    let r_max = iv[0][1];
    let [zlo, zhi] = iv[2 * n];
    let (a, b) = ham.interval;
    let t_mid = 0.5 * (a + b);
    let mut probes = Vec::new();
    for k in 0..4 {
        let th = std::f64::consts::FRAC_PI_2 * k as f64;
        let mut d = vec![0.0; chart.dim()];
        d[0] = r_max;
        d[n] = th;
        probes.push(d.clone());
        d[2 * n] = zlo;
        probes.push(d.clone());
        d[2 * n] = zhi;
        probes.push(d);
    }
    for display in probes {
        let w = chart.to_working(&display);
        let v = ham.eval(t_mid, &w)?;
        if v.abs() > SUPPORT_LEAK_TOL {
            return Err(Error::GridMissesSupport { value: v, point: display });
        }
    }
    Ok(())
}

/// Norm of a Hamiltonian: per-time slice norm aggregated by `kind`.
pub fn ham_norm(ham: &Arc<Hamiltonian>, kind: NormKind, spec: &GridSpec) -> Result<NormReport> {
    check_support_coverage(ham)?;
    let (a, b) = ham.interval;
    let value = match kind {
        NormKind::OscMean { t } => norm_profile(ham, &[t], spec)?[0],
        NormKind::LInf => {
            let ts = time_knots(a, b, spec.time_knots);
            norm_profile(ham, &ts, spec)?
                .into_iter()
                .fold(f64::MIN, f64::max)
        }
        NormKind::L1Inf => {
            let (ts, ws) = simpson(a, b, (spec.time_knots / 2).max(1));
            let prof = norm_profile(ham, &ts, spec)?;
            prof.iter().zip(&ws).map(|(v, w)| v * w).sum()
        }
    };
    Ok(NormReport {
        value,
        kind: kind.tag(),
        grid: *spec,
        grid_hash: spec.hash(),
    })
}

/// C0 distance between two flows: sup over grid points and time knots of the
/// chart distance between images; the symmetric variant adds the same for
/// the inverse maps.
pub fn c0_distance(a: &FlowMap, b: &FlowMap, spec: &GridSpec, symmetric: bool) -> Result<f64> {
    if !Arc::ptr_eq(&a.chart, &b.chart) {
        return Err(Error::ChartMismatch);
    }
    let chart = &a.chart;
    let (lo, hi) = a.interval();
    let ts = time_knots(lo, hi, spec.time_knots);
    let grid = vertex_grid(chart, spec.per_axis);
    let mut worst = 0.0f64;
    for p in &grid {
        let sa = a.iso.eval_many(&ts, p)?;
        let sb = b.iso.eval_many(&ts, p)?;
        for (x, y) in sa.iter().zip(&sb) {
            worst = worst.max(chart.distance(&x.point, &y.point));
        }
    }
    if symmetric {
        for p in &grid {
            for &t in &ts {
                let x = a.inverse(t, p)?;
                let y = b.inverse(t, p)?;
                worst = worst.max(chart.distance(&x.point, &y.point));
            }
        }
    }
    Ok(worst)
}

/// Sup over grid points and knots of |h - f| for two conformal factors.
pub fn conformal_distance(a: &FlowMap, b: &FlowMap, spec: &GridSpec) -> Result<f64> {
    let chart = &a.chart;
    let (lo, hi) = a.interval();
    let ts = time_knots(lo, hi, spec.time_knots);
    let grid = vertex_grid(chart, spec.per_axis);
    let mut worst = 0.0f64;
    for p in &grid {
        let sa = a.iso.eval_many(&ts, p)?;
        let sb = b.iso.eval_many(&ts, p)?;
        for (x, y) in sa.iter().zip(&sb) {
            worst = worst.max((x.conformal - y.conformal).abs());
        }
    }
    Ok(worst)
}

/// The contact distance: C0 distance of the isotopies (symmetric variant),
/// plus the sup distance of conformal factors, plus the Hamiltonian norm of
/// the difference.
pub fn contact_distance(
    a: &ContactDynamicalSystem,
    b: &ContactDynamicalSystem,
    kind: NormKind,
    spec: &GridSpec,
) -> Result<MetricReport> {
    if !Arc::ptr_eq(&a.chart(), &b.chart()) {
        return Err(Error::ChartMismatch);
    }
    let c0 = c0_distance(&a.flow, &b.flow, spec, true)?;
    let conformal = conformal_distance(&a.flow, &b.flow, spec)?;
    let diff = Hamiltonian::lincomb(vec![(1.0, a.ham.clone()), (-1.0, b.ham.clone())])?;
    let ham = ham_norm(&diff, kind, spec)?.value;
    Ok(MetricReport {
        c0,
        conformal,
        ham,
        total: c0 + conformal + ham,
        grid: *spec,
    })
}

/// Upper bound for the energy of a time-one map: the minimum Hamiltonian norm
/// over candidate systems whose time-one map matches the target on the grid.
/// The infimum over all generating systems is not computable, so the result
/// is explicitly an upper bound with a witness.
pub fn energy_upper_bound(
    target: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    candidates: &[ContactDynamicalSystem],
    kind: NormKind,
    spec: &GridSpec,
    match_tol: f64,
) -> Result<EnergyEstimate> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let chart = candidates[0].chart();
    let grid = vertex_grid(&chart, spec.per_axis);
    let mut best: Option<(usize, f64)> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        let (_, hi) = cand.flow.interval();
        let mut worst = 0.0f64;
        for p in &grid {
            let img = cand.flow.forward(hi, p)?;
            let want = target(p)?;
            worst = worst.max(chart.distance(&img.point, &want));
        }
        if worst > match_tol {
            return Err(Error::CandidateMismatch {
                index: idx,
                distance: worst,
                tol: match_tol,
            });
        }
        let norm = ham_norm(&cand.ham, kind, spec)?.value;
        if best.map_or(true, |(_, v)| norm < v) {
            best = Some((idx, norm));
        }
    }
    let (witness, upper_bound) = best.unwrap();
    Ok(EnergyEstimate {
        upper_bound,
        witness,
        candidate_count: candidates.len(),
    })
}

/// True when the time-one image of K's sample grid clears K by more than one
/// grid cell in every coordinate (the margin guards against discretization
/// false positives).
pub fn displacement_check(
    flow: &FlowMap,
    k_box: &crate::chart::DomainBox,
    spec: &GridSpec,
) -> Result<bool> {
    let chart = &flow.chart;
    if k_box.dim() != chart.dim() {
        return Err(Error::BadParameter("displacement box arity mismatch".into()));
    }
    for iv in &k_box.intervals {
        if !(iv[0] < iv[1]) {
            return Err(Error::BadParameter("degenerate displacement box".into()));
        }
    }
    // sample K on its own vertex grid
    let n = spec.per_axis;
    let dim = chart.dim();
    let mut cells = vec![0.0; dim];
    for (a, iv) in k_box.intervals.iter().enumerate() {
        cells[a] = (iv[1] - iv[0]) / n as f64;
    }
    let mut samples = Vec::new();
    let mut idx = vec![0usize; dim];
    'outer: loop {
        let display: Vec<f64> = (0..dim)
            .map(|a| k_box.intervals[a][0] + cells[a] * idx[a] as f64)
            .collect();
        samples.push(display);
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] <= n {
                break;
            }
            idx[a] = 0;
            a += 1;
            if a == dim {
                break 'outer;
            }
        }
    }
    let (_, hi) = flow.interval();
    for display in &samples {
        let w = chart.to_working(display);
        let img = flow.forward(hi, &w)?;
        let img_display = chart.to_display(&img.point);
        // inside K inflated by one cell?
        let mut inside = true;
        for a in 0..dim {
            let lo = k_box.intervals[a][0] - cells[a];
            let hi_b = k_box.intervals[a][1] + cells[a];
            let v = img_display[a];
            let contained = if chart.domain.periodic[a] {
                // compare on the circle
                let span = chart.domain.intervals[a][1] - chart.domain.intervals[a][0];
                let mut d = (v - lo).rem_euclid(span);
                if d < 0.0 {
                    d += span;
                }
                d <= (hi_b - lo)
            } else {
                v >= lo && v <= hi_b
            };
            if !contained {
                inside = false;
                break;
            }
        }
        if inside {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Empirical energy-capacity envelope: min over a displacing family of
/// |H| e^{|h|}, the quantity bounded below by the displacement constant.
pub fn energy_capacity_envelope(
    family: &[ContactDynamicalSystem],
    kind: NormKind,
    spec: &GridSpec,
) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut min_val = f64::MAX;
    for sys in family {
        let norm = ham_norm(&sys.ham, kind, spec)?.value;
        let habs = sys.conformal_sup(spec)?;
        min_val = min_val.min(norm * habs.exp());
    }
    Ok(min_val)
}
