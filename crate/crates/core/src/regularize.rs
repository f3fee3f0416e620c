//! Regularization of contact isotopies: build small loops so that the
//! difference isotopy has a Hamiltonian that never vanishes identically in t.
//!
//! The loop family is a multi-parameter variation of the constant loop: for
//! each symplectic pair a time-periodic generator with zero time mean, whose
//! time-eps maps compose into an exact loop for every parameter vector. The
//! parameter sweep scores candidates with the first-variation Hamiltonian
//! (the derivative of the family at eps = 0); the winner is re-verified with
//! the exact loop Hamiltonian on a four-times finer time grid.

use crate::chart::{ChartKind, ChartRef};
use crate::error::{Error, Result};
use crate::flow::{FlowMap, FlowSample, Isotopy};
use crate::grid::{time_knots, vertex_grid, weighted_center_grid, GridSpec};
use crate::ham::{
    contact_vector_field, ContactVectorField, HamImpl, Hamiltonian, TimeProfile, MAX_DIM,
};
use crate::metrics::norm_profile;
use crate::smooth::RadialBump;
use std::f64::consts::TAU;
use std::sync::Arc;

/// Steps per unit parameter in the exponential-map integrations.
const EXP_STEPS_PER_UNIT: f64 = 64.0;
/// Minimum step count for one exponential map.
const EXP_MIN_STEPS: usize = 4;
/// Time step for the centered derivative defining the exact loop Hamiltonian.
const LOOP_FD_T: f64 = 1e-4;

/// One coordinate-pair generator: (cx(t) dx_j + cy(t) dy_j) cut off around p.
/// With `integrated` the coefficients are the running time integrals, giving
/// the autonomous potential whose time-eps map is one loop factor.
#[derive(Debug, Clone)]
struct LoopCoordHam {
    p: Vec<f64>,
    pair: usize,
    sign: f64,
    bump: RadialBump,
    integrated: bool,
    wrap: bool,
}

impl LoopCoordHam {
    fn coeffs(&self, t: f64) -> (f64, f64) {
        let w = TAU * t;
        if self.integrated {
            (-self.sign * w.sin() / TAU, (w.cos() - 1.0) / TAU)
        } else {
            (-self.sign * w.cos(), -w.sin())
        }
    }

    fn displacement(&self, w: &[f64], out: &mut [f64]) -> f64 {
        let mut d2 = 0.0;
        for i in 0..w.len() {
            let raw = w[i] - self.p[i];
            out[i] = if self.wrap {
                crate::chart::wrap_signed(raw)
            } else {
                raw
            };
            d2 += out[i] * out[i];
        }
        d2
    }
}

impl HamImpl for LoopCoordHam {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
        let (cx, cy) = self.coeffs(t);
        let mut delta = [0.0f64; MAX_DIM];
        let d2 = self.displacement(w, &mut delta[..w.len()]);
        let beta = self.bump.value_r2(d2);
        if beta == 0.0 {
            return Ok(0.0);
        }
        let dx = delta[2 * self.pair];
        let dy = delta[2 * self.pair + 1];
        Ok((cx * dx + cy * dy) * beta)
    }

    fn grad(&self, t: f64, w: &[f64], out: &mut [f64]) -> Result<()> {
        let (cx, cy) = self.coeffs(t);
        let mut delta = [0.0f64; MAX_DIM];
        let d2 = self.displacement(w, &mut delta[..w.len()]);
        let beta = self.bump.value_r2(d2);
        out[..w.len()].iter_mut().for_each(|g| *g = 0.0);
        if beta == 0.0 {
            return Ok(());
        }
        let dx = delta[2 * self.pair];
        let dy = delta[2 * self.pair + 1];
        let linear = cx * dx + cy * dy;
        let dbeta = self.bump.deriv_r2(d2);
        for i in 0..w.len() {
            out[i] = linear * dbeta * 2.0 * delta[i];
        }
        out[2 * self.pair] += cx * beta;
        out[2 * self.pair + 1] += cy * beta;
        Ok(())
    }

    fn name(&self) -> String {
        format!(
            "{}gen(pair={}, sign={})",
            if self.integrated { "int_" } else { "" },
            self.pair,
            self.sign
        )
    }
}

/// A 2k-parameter variation of the constant loop around a base point.
#[derive(Debug, Clone)]
pub struct LoopVariation {
    pub chart: ChartRef,
    pub base_point: Vec<f64>,
    pub k: usize,
    pub cutoff_radius: f64,
    /// The generators G^1 .. G^{2k} (time-periodic, zero time mean).
    pub generators: Vec<Arc<Hamiltonian>>,
    /// The autonomous potentials whose time-eps maps are the loop factors.
    potentials: Vec<ContactVectorField>,
}

/// Build the variation: k pairs of generators with dG_t^j(p) prescribed on
/// the coordinate pair directions, cut off inside `cutoff_radius`.
pub fn build_variation(
    chart: ChartRef,
    base_point: Vec<f64>,
    k: usize,
    cutoff_radius: f64,
) -> Result<LoopVariation> {
    let pairs = chart.pairs();
    if k == 0 || k > pairs {
        return Err(Error::BadParameter(format!(
            "variation needs 1 <= k <= {pairs}, got {k}"
        )));
    }
    if base_point.len() != chart.dim() {
        return Err(Error::BadParameter("base point arity mismatch".into()));
    }
    if !chart.contains_working(&base_point) {
        return Err(Error::OutOfDomain {
            point: base_point.clone(),
        });
    }
    // the cutoff ball must stay inside the domain box
    if let ChartKind::DarbouxPolar { n } = chart.kind {
        let disp = chart.to_display(&base_point);
        for i in 0..n {
            let hi = chart.domain.intervals[i][1];
            if disp[i] + cutoff_radius > hi {
                return Err(Error::BadParameter(format!(
                    "cutoff ball (radius {cutoff_radius}) exits the domain on radial axis {i}"
                )));
            }
        }
        let [zlo, zhi] = chart.domain.intervals[2 * n];
        if disp[2 * n] - cutoff_radius < zlo || disp[2 * n] + cutoff_radius > zhi {
            return Err(Error::BadParameter(
                "cutoff ball exits the domain in z".into(),
            ));
        }
    }
    let wrap = matches!(chart.kind, ChartKind::Torus3);
    let bump = RadialBump::new(cutoff_radius);
    let mut generators = Vec::new();
    let mut potentials = Vec::new();
    // the generators are 1-periodic in t; a padded interval lets the loop
    // Hamiltonian's time stencil probe past the endpoints
    let padded = (-1.0, 2.0);
    for sign in [1.0, -1.0] {
        for pair in 0..k {
            let gen = LoopCoordHam {
                p: base_point.clone(),
                pair,
                sign,
                bump,
                integrated: false,
                wrap,
            };
            generators.push(Hamiltonian::closed_form(
                chart.clone(),
                Arc::new(gen),
                padded,
                None,
            ));
            let pot = LoopCoordHam {
                p: base_point.clone(),
                pair,
                sign,
                bump,
                integrated: true,
                wrap,
            };
            potentials.push(contact_vector_field(Hamiltonian::closed_form(
                chart.clone(),
                Arc::new(pot),
                padded,
                None,
            )));
        }
    }
    Ok(LoopVariation {
        chart,
        base_point,
        k,
        cutoff_radius,
        generators,
        potentials,
    })
}

impl LoopVariation {
    /// Max over sample points of |d G^j(p) + gamma_j(t)| where gamma_j is the
    /// prescribed rotating covector; checked by finite differences.
    pub fn generator_direction_residual(&self, ts: &[f64]) -> Result<f64> {
        let dim = self.chart.dim();
        let mut worst = 0.0f64;
        for (idx, g) in self.generators.iter().enumerate() {
            let sign = if idx < self.k { 1.0 } else { -1.0 };
            let pair = idx % self.k;
            for &t in ts {
                let fd = 1e-6;
                let mut grad = vec![0.0; dim];
                let mut probe = self.base_point.clone();
                for i in 0..dim {
                    probe[i] = self.base_point[i] + fd;
                    let vp = g.eval(t, &probe)?;
                    probe[i] = self.base_point[i] - fd;
                    let vm = g.eval(t, &probe)?;
                    probe[i] = self.base_point[i];
                    grad[i] = (vp - vm) / (2.0 * fd);
                }
                // expected: dG_t(p) = -gamma(t) with gamma = sign cos u + sin v
                let w = TAU * t;
                let mut expect = vec![0.0; dim];
                expect[2 * pair] = -sign * w.cos();
                expect[2 * pair + 1] = -w.sin();
                for i in 0..dim {
                    worst = worst.max((grad[i] - expect[i]).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Max over sample points of the time quadrature |int_0^1 G^j dt|.
    pub fn zero_mean_residual(&self, samples: &[Vec<f64>]) -> Result<f64> {
        let (ts, ws) = crate::grid::simpson(0.0, 1.0, 64);
        let mut worst = 0.0f64;
        for g in &self.generators {
            for p in samples {
                let vals = g.eval_sweep(&ts, p)?;
                let integral: f64 = vals.iter().zip(&ws).map(|(v, w)| v * w).sum();
                worst = worst.max(integral.abs());
            }
        }
        Ok(worst)
    }

    /// The loop isotopy at a parameter vector.
    pub fn loop_isotopy(&self, eps: &[f64]) -> Result<Arc<LoopIsotopy>> {
        if eps.len() != 2 * self.k {
            return Err(Error::BadParameter(format!(
                "parameter vector needs {} entries",
                2 * self.k
            )));
        }
        Ok(Arc::new(LoopIsotopy {
            chart: self.chart.clone(),
            potentials: self.potentials.clone(),
            eps: eps.to_vec(),
        }))
    }
}

/// The loop phi_{t, eps}: composition of the time-eps_j maps of the
/// autonomous potentials, evaluated factor by factor. An exact loop for
/// every eps: at t in {0, 1} every potential vanishes.
#[derive(Debug)]
pub struct LoopIsotopy {
    chart: ChartRef,
    potentials: Vec<ContactVectorField>,
    eps: Vec<f64>,
}

impl LoopIsotopy {
    /// Integrate the autonomous field of potential `j` frozen at family time
    /// t for parameter duration `dur`, accumulating the conformal factor.
    fn exp_map(&self, j: usize, t: f64, dur: f64, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let dim = x.len();
        let steps = ((dur.abs() * EXP_STEPS_PER_UNIT).ceil() as usize).max(EXP_MIN_STEPS);
        let h = dur / steps as f64;
        let field = &self.potentials[j];
        let mut state = [0.0f64; MAX_DIM + 1];
        state[..dim].copy_from_slice(x);
        let mut k1 = [0.0f64; MAX_DIM + 1];
        let mut k2 = [0.0f64; MAX_DIM + 1];
        let mut k3 = [0.0f64; MAX_DIM + 1];
        let mut k4 = [0.0f64; MAX_DIM + 1];
        let mut tmp = [0.0f64; MAX_DIM + 1];
        let deriv = |s: &[f64], k: &mut [f64]| -> Result<()> {
            let mu = field.eval(t, s, &mut k[..dim])?;
            k[dim] = mu;
            Ok(())
        };
        for _ in 0..steps {
            deriv(&state[..dim].to_vec(), &mut k1)?;
            for i in 0..=dim {
                tmp[i] = state[i] + 0.5 * h * k1[i];
            }
            deriv(&tmp[..dim].to_vec(), &mut k2)?;
            for i in 0..=dim {
                tmp[i] = state[i] + 0.5 * h * k2[i];
            }
            deriv(&tmp[..dim].to_vec(), &mut k3)?;
            for i in 0..=dim {
                tmp[i] = state[i] + h * k3[i];
            }
            deriv(&tmp[..dim].to_vec(), &mut k4)?;
            for i in 0..=dim {
                state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        Ok((state[..dim].to_vec(), state[dim]))
    }
}

impl Isotopy for LoopIsotopy {
    fn chart(&self) -> &ChartRef {
        &self.chart
    }
    fn interval(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn eval(&self, t: f64, x: &[f64]) -> Result<FlowSample> {
        // apply the last factor first
        let mut cur = x.to_vec();
        let mut conf = 0.0;
        for j in (0..self.potentials.len()).rev() {
            let (next, h) = self.exp_map(j, t, self.eps[j], &cur)?;
            cur = next;
            conf += h;
        }
        Ok(FlowSample {
            point: cur,
            conformal: conf,
        })
    }
    fn eval_inverse(&self, t: f64, y: &[f64]) -> Result<FlowSample> {
        let mut cur = y.to_vec();
        let mut conf = 0.0;
        for j in 0..self.potentials.len() {
            let (next, h) = self.exp_map(j, t, -self.eps[j], &cur)?;
            cur = next;
            conf += h;
        }
        Ok(FlowSample {
            point: cur,
            conformal: conf,
        })
    }
}

/// Exact Hamiltonian of a loop: alpha of the time derivative of the family,
/// with the derivative taken by a centered fourth-order stencil in t.
#[derive(Debug)]
pub struct LoopHam {
    pub iso: Arc<LoopIsotopy>,
}

impl HamImpl for LoopHam {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
        let dim = w.len();
        let back = self.iso.eval_inverse(t, w)?;
        let tt = |dt: f64| -> Result<Vec<f64>> { Ok(self.iso.eval(t + dt, &back.point)?.point) };
        let pp = tt(2.0 * LOOP_FD_T)?;
        let p1 = tt(LOOP_FD_T)?;
        let m1 = tt(-LOOP_FD_T)?;
        let mm = tt(-2.0 * LOOP_FD_T)?;
        let mut a = vec![0.0; dim];
        self.iso.chart.form_coeffs(w, &mut a);
        let mut val = 0.0;
        for i in 0..dim {
            let v = (-pp[i] + 8.0 * p1[i] - 8.0 * m1[i] + mm[i]) / (12.0 * LOOP_FD_T);
            val += a[i] * v;
        }
        Ok(val)
    }
    fn name(&self) -> String {
        "loop".into()
    }
}

/// Outcome of [`regularize_isotopy`].
#[derive(Debug)]
pub struct Regularized {
    /// The exact loop Hamiltonian F at the chosen parameter.
    pub loop_ham: Arc<Hamiltonian>,
    /// The loop as a flow map.
    pub loop_flow: FlowMap,
    pub eps_star: Vec<f64>,
    /// min_t |(H - F)_t| on the verification grid (exact loop Hamiltonian).
    pub margin: f64,
    /// The margin seen by the lattice sweep (first-variation proxy).
    pub margin_search: f64,
    /// Time-integrated norm of the loop Hamiltonian.
    pub loop_norm_1inf: f64,
    /// C0 size of the loop: sup over samples and knots of d(phi_t(x), x).
    pub loop_c0: f64,
}

/// Sweep a deterministic lattice of parameter vectors (11 per axis) for one
/// with min_t |(H - F_eps)_t| > 0, preferring larger margins; re-verify the
/// winner with the exact loop Hamiltonian on a 4x finer time grid.
pub fn regularize_isotopy(
    ham: &Arc<Hamiltonian>,
    variation: &LoopVariation,
    eps_box: f64,
    spec: &GridSpec,
    search_knots: usize,
) -> Result<Regularized> {
    if !Arc::ptr_eq(&ham.chart, &variation.chart) {
        return Err(Error::ChartMismatch);
    }
    let (a, b) = ham.interval;
    let ts = time_knots(a, b, search_knots);
    let two_k = 2 * variation.k;

    // Value matrices over (grid point x knot) for the input and each
    // generator; every lattice candidate is then scored arithmetically.
    let vgrid = vertex_grid(&ham.chart, spec.per_axis);
    let cgrid = weighted_center_grid(&ham.chart, spec.per_axis);
    let sweep_matrix = |h: &Arc<Hamiltonian>| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let vm = vgrid
            .iter()
            .map(|p| h.eval_sweep(&ts, p))
            .collect::<Result<Vec<_>>>()?;
        let cm = cgrid
            .iter()
            .map(|(p, _)| h.eval_sweep(&ts, p))
            .collect::<Result<Vec<_>>>()?;
        Ok((vm, cm))
    };
    let (h_v, h_c) = sweep_matrix(ham)?;
    let mut gen_v = Vec::new();
    let mut gen_c = Vec::new();
    for g in &variation.generators {
        let (gv, gc) = sweep_matrix(g)?;
        gen_v.push(gv);
        gen_c.push(gc);
    }
    let wtotal: f64 = cgrid.iter().map(|(_, w)| w).sum();

    let proxy_margin = |eps: &[f64]| -> f64 {
        let mut margin = f64::MAX;
        for (k, _) in ts.iter().enumerate() {
            let mut maxv = f64::MIN;
            let mut minv = f64::MAX;
            for (p, row) in h_v.iter().enumerate() {
                let mut v = row[k];
                for (j, &e) in eps.iter().enumerate() {
                    if e != 0.0 {
                        v -= e * gen_v[j][p][k];
                    }
                }
                maxv = maxv.max(v);
                minv = minv.min(v);
            }
            let mut mean = 0.0;
            for (p, row) in h_c.iter().enumerate() {
                let mut v = row[k];
                for (j, &e) in eps.iter().enumerate() {
                    if e != 0.0 {
                        v -= e * gen_c[j][p][k];
                    }
                }
                mean += cgrid[p].1 * v;
            }
            margin = margin.min((maxv - minv) + (mean / wtotal).abs());
        }
        margin
    };

    // eps = 0 first: an already-regular isotopy needs no loop
    let margin0 = proxy_margin(&vec![0.0; two_k]);
    let (eps_star, margin_search) = if margin0 > 0.0 {
        (vec![0.0; two_k], margin0)
    } else {
        let per_axis = 11usize;
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut idx = vec![0usize; two_k];
        'lattice: loop {
            let eps: Vec<f64> = idx
                .iter()
                .map(|&i| -eps_box + 2.0 * eps_box * i as f64 / (per_axis - 1) as f64)
                .collect();
            if eps.iter().any(|e| e.abs() > 1e-15) {
                let m = proxy_margin(&eps);
                if m > 0.0 && best.as_ref().map_or(true, |(_, bm)| m > *bm) {
                    best = Some((eps, m));
                }
            }
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
                if axis == two_k {
                    break 'lattice;
                }
            }
        }
        match best {
            Some((eps, m)) => (eps, m),
            None => {
                return Err(Error::NoRegularCandidate {
                    best_eps: vec![0.0; two_k],
                    best_margin: margin0,
                })
            }
        }
    };
    finish(ham, variation, eps_star, margin_search, spec, &ts)
}

fn finish(
    ham: &Arc<Hamiltonian>,
    variation: &LoopVariation,
    eps_star: Vec<f64>,
    margin_search: f64,
    spec: &GridSpec,
    search_ts: &[f64],
) -> Result<Regularized> {
    let iso = variation.loop_isotopy(&eps_star)?;
    let loop_ham = Hamiltonian::composite(
        variation.chart.clone(),
        Arc::new(LoopHam { iso: iso.clone() }),
        ham.interval,
        None,
    );

    // post-hoc margin with the exact loop Hamiltonian, 4x finer in time,
    // spatially on a reduced grid (the margin is an inequality with slack)
    let (a, b) = ham.interval;
    let fine_ts = time_knots(a, b, 4 * (search_ts.len() - 1));
    let verify_spec = GridSpec::new(spec.per_axis.min(6), spec.time_knots);
    let margin = if eps_star.iter().all(|e| *e == 0.0) {
        let prof = norm_profile(ham, &fine_ts, &verify_spec)?;
        prof.into_iter().fold(f64::MAX, f64::min)
    } else {
        let diff = Hamiltonian::lincomb(vec![(1.0, ham.clone()), (-1.0, loop_ham.clone())])?;
        let prof = norm_profile(&diff, &fine_ts, &verify_spec)?;
        prof.into_iter().fold(f64::MAX, f64::min)
    };
    if margin <= 0.0 {
        return Err(Error::NoRegularCandidate {
            best_eps: eps_star,
            best_margin: margin,
        });
    }

    let loop_prof = norm_profile(&loop_ham, search_ts, &verify_spec)?;
    let loop_norm_1inf = {
        // trapezoid on the search knots
        let mut acc = 0.0;
        for i in 0..search_ts.len() - 1 {
            acc += 0.5 * (loop_prof[i] + loop_prof[i + 1]) * (search_ts[i + 1] - search_ts[i]);
        }
        acc
    };

    let mut loop_c0 = 0.0f64;
    let samples = vertex_grid(&variation.chart, 4);
    for p in &samples {
        for &t in &[0.25, 0.5, 0.75] {
            let s = iso.eval(t, p)?;
            loop_c0 = loop_c0.max(variation.chart.distance(&s.point, p));
        }
    }

    Ok(Regularized {
        loop_flow: FlowMap::from_isotopy(iso, 1.0 / EXP_STEPS_PER_UNIT, 16),
        loop_ham,
        eps_star,
        margin,
        margin_search,
        loop_norm_1inf,
        loop_c0,
    })
}

/// Basic-variant regularization: a small mean-zero time function f with
/// finitely many crossings of t -> H(t, p), located by bisection and kept
/// away from the forbidden set.
#[derive(Debug, Clone)]
pub struct BasicRegularization {
    /// f(t) = amp_cos cos(2 pi t) + amp_sin sin(2 pi t).
    pub profile: TimeProfile,
    pub zeros: Vec<f64>,
    pub min_distance_to_forbidden: f64,
}

pub fn regularize_basic(
    ham: &Arc<Hamiltonian>,
    p: &[f64],
    forbidden: &[f64],
    amplitude: f64,
) -> Result<BasicRegularization> {
    let samples = 2048usize;
    let trace: Vec<f64> = (0..=samples)
        .map(|i| ham.eval(i as f64 / samples as f64, p))
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, f64, Vec<f64>, f64)> = None;
    for ia in -2i32..=2 {
        for ib in -2i32..=2 {
            if ia == 0 && ib == 0 {
                continue;
            }
            let ac = amplitude * ia as f64 / 2.0;
            let asn = amplitude * ib as f64 / 2.0;
            let g = |t: f64, ht: f64| -> f64 {
                ht - (ac * (TAU * t).cos() + asn * (TAU * t).sin())
            };
            // locate sign changes, refine by bisection
            let mut zeros = Vec::new();
            let mut degenerate = false;
            for i in 0..samples {
                let t0 = i as f64 / samples as f64;
                let t1 = (i + 1) as f64 / samples as f64;
                let g0 = g(t0, trace[i]);
                let g1 = g(t1, trace[i + 1]);
                if g0 == 0.0 {
                    degenerate = true;
                    break;
                }
                if g0 * g1 < 0.0 {
                    let mut lo = t0;
                    let mut hi = t1;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let gm = g(mid, ham.eval(mid, p)?);
                        if g0 * gm <= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    zeros.push(0.5 * (lo + hi));
                }
            }
            if degenerate || zeros.len() > 64 {
                continue;
            }
            let min_dist = zeros
                .iter()
                .map(|z| {
                    forbidden
                        .iter()
                        .map(|f| circle_dist(*z, *f))
                        .fold(f64::MAX, f64::min)
                })
                .fold(f64::MAX, f64::min);
            let min_dist = if zeros.is_empty() { f64::MAX } else { min_dist };
            if best
                .as_ref()
                .map_or(true, |(_, _, _, bd)| min_dist > *bd)
            {
                best = Some((ac, asn, zeros, min_dist));
            }
        }
    }
    let (ac, asn, zeros, min_dist) = best.expect("lattice always has a candidate");
    Ok(BasicRegularization {
        profile: TimeProfile::Trig {
            mean: 0.0,
            cos_amp: ac,
            sin_amp: asn,
            freq: 1.0,
        },
        zeros,
        min_distance_to_forbidden: min_dist,
    })
}

fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// On the torus, basic generators are Reeb-invariant, so any two of them have
/// covectors proportional to dz at every point: all 2x2 minors of the pair of
/// gradients vanish. Returns the largest minor over the time knots.
pub fn torus_basic_obstruction(
    g1: &Arc<Hamiltonian>,
    g2: &Arc<Hamiltonian>,
    p: &[f64],
    ts: &[f64],
) -> Result<f64> {
    let dim = p.len();
    let mut worst = 0.0f64;
    let mut grad1 = vec![0.0; dim];
    let mut grad2 = vec![0.0; dim];
    for &t in ts {
        g1.eval_with_grad(t, p, &mut grad1)?;
        g2.eval_with_grad(t, p, &mut grad2)?;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let minor = grad1[i] * grad2[j] - grad1[j] * grad2[i];
                worst = worst.max(minor.abs());
            }
        }
    }
    Ok(worst)
}

/// Verify the zero-mean quadrature invariant for generators on sample points
/// drawn from the weighted grid (used by the acceptance harness too).
pub fn zero_mean_samples(chart: &ChartRef, count: usize) -> Vec<Vec<f64>> {
    weighted_center_grid(chart, 4)
        .into_iter()
        .map(|(p, _)| p)
        .take(count)
        .collect()
}
