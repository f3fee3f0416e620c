//! Time-dependent Hamiltonians and the contact vector fields they generate.
//!
//! A Hamiltonian H determines its field X through
//!     alpha(X) = H,    iota(X) d alpha = (R.H) alpha - dH,
//! and the Reeb-direction derivative mu = dH(R) is the conformal rate picked
//! up by the flow. On the two builtin charts the restriction of d alpha to
//! ker alpha has a constant-coefficient closed-form inverse, which `field`
//! uses directly; charts with a rescaled form fall back to a small
//! least-squares solve per point.

use crate::chart::{ChartKind, ChartRef, DomainBox};
use crate::error::{Error, Result};
use crate::linalg;
use crate::reparam::ReparamFn;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Hard cap on chart dimension so hot paths can use stack buffers.
pub const MAX_DIM: usize = 15;

/// Finite-difference step for gradients of evaluator-only Hamiltonians.
pub const FD_STEP: f64 = 1e-4;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Evaluator backing a Hamiltonian. `grad` defaults to a centered
/// fourth-order stencil on `value`; closed-form families override it.
pub trait HamImpl: Send + Sync + std::fmt::Debug {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64>;

    fn grad(&self, t: f64, w: &[f64], out: &mut [f64]) -> Result<()> {
        let mut probe = [0.0f64; MAX_DIM];
        probe[..w.len()].copy_from_slice(w);
        for i in 0..w.len() {
            let x0 = w[i];
            probe[i] = x0 + 2.0 * FD_STEP;
            let fpp = self.value(t, &probe[..w.len()])?;
            probe[i] = x0 + FD_STEP;
            let fp = self.value(t, &probe[..w.len()])?;
            probe[i] = x0 - FD_STEP;
            let fm = self.value(t, &probe[..w.len()])?;
            probe[i] = x0 - 2.0 * FD_STEP;
            let fmm = self.value(t, &probe[..w.len()])?;
            probe[i] = x0;
            out[i] = (-fpp + 8.0 * fp - 8.0 * fm + fmm) / (12.0 * FD_STEP);
        }
        Ok(())
    }

    /// Evaluate at many times for one point. Group-law evaluators override
    /// this to walk each trajectory once.
    fn sweep(&self, ts: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        ts.iter().map(|&t| self.value(t, w)).collect()
    }

    fn name(&self) -> String;
}

#[derive(Debug, Clone)]
pub enum HamKind {
    /// Named closed-form family with exact gradients.
    ClosedForm(Arc<dyn HamImpl>),
    /// Group-law expression evaluated lazily against constituent flows.
    Composite(Arc<dyn HamImpl>),
    /// Sampled on a time x space grid; cubic in space, linear in time.
    GridSampled(Arc<GridHam>),
    /// zeta'(t) H(zeta(t), x).
    Reparam {
        base: Arc<Hamiltonian>,
        zeta: ReparamFn,
    },
    /// Pointwise linear combination over one chart.
    LinComb(Vec<(f64, Arc<Hamiltonian>)>),
    /// Piecewise in time over abutting intervals (boundary-flat pieces).
    Concat(Vec<Arc<Hamiltonian>>),
}

#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub chart: ChartRef,
    pub kind: HamKind,
    pub interval: (f64, f64),
    /// Display-coordinate box containing the support (required on Darboux
    /// charts, where every Hamiltonian is compactly supported).
    pub support: Option<DomainBox>,
    id: u64,
}

impl Hamiltonian {
    pub fn closed_form(
        chart: ChartRef,
        imp: Arc<dyn HamImpl>,
        interval: (f64, f64),
        support: Option<DomainBox>,
    ) -> Arc<Self> {
        Arc::new(Hamiltonian {
            chart,
            kind: HamKind::ClosedForm(imp),
            interval,
            support,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        })
    }

    pub fn composite(
        chart: ChartRef,
        imp: Arc<dyn HamImpl>,
        interval: (f64, f64),
        support: Option<DomainBox>,
    ) -> Arc<Self> {
        Arc::new(Hamiltonian {
            chart,
            kind: HamKind::Composite(imp),
            interval,
            support,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        })
    }

    pub fn reparam(base: Arc<Hamiltonian>, zeta: ReparamFn) -> Arc<Self> {
        Arc::new(Hamiltonian {
            chart: base.chart.clone(),
            support: base.support.clone(),
            interval: zeta.interval(),
            kind: HamKind::Reparam { base, zeta },
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        })
    }

    pub fn lincomb(terms: Vec<(f64, Arc<Hamiltonian>)>) -> Result<Arc<Self>> {
        let first = terms.first().ok_or(Error::EmptySampleSet)?;
        let chart = first.1.chart.clone();
        let interval = first.1.interval;
        if terms.iter().any(|(_, h)| !Arc::ptr_eq(&h.chart, &chart)) {
            return Err(Error::ChartMismatch);
        }
        let support = terms.iter().find_map(|(_, h)| h.support.clone());
        Ok(Arc::new(Hamiltonian {
            chart,
            kind: HamKind::LinComb(terms),
            interval,
            support,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        }))
    }

    /// Concatenate Hamiltonians over abutting time intervals.
    pub fn concat(pieces: Vec<Arc<Hamiltonian>>) -> Result<Arc<Self>> {
        let first = pieces.first().ok_or(Error::EmptySampleSet)?;
        let chart = first.chart.clone();
        let mut hi = first.interval.0;
        for p in &pieces {
            if !Arc::ptr_eq(&p.chart, &chart) {
                return Err(Error::ChartMismatch);
            }
            if (p.interval.0 - hi).abs() > 1e-12 {
                return Err(Error::BadParameter(format!(
                    "concat pieces must abut: expected start {hi}, got {}",
                    p.interval.0
                )));
            }
            hi = p.interval.1;
        }
        let interval = (first.interval.0, hi);
        let support = pieces.iter().find_map(|p| p.support.clone());
        Ok(Arc::new(Hamiltonian {
            chart,
            kind: HamKind::Concat(pieces),
            interval,
            support,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        }))
    }

    pub fn grid_sampled(chart: ChartRef, data: GridHam) -> Arc<Self> {
        Arc::new(Hamiltonian {
            chart,
            interval: (data.ts[0], *data.ts.last().unwrap()),
            support: None,
            kind: HamKind::GridSampled(Arc::new(data)),
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let (a, b) = self.interval;
        if t < a - 1e-9 || t > b + 1e-9 {
            return Err(Error::TimeOutOfRange { t, lo: a, hi: b });
        }
        Ok(())
    }

    fn outside_support(&self, w: &[f64]) -> bool {
        match &self.support {
            Some(b) => !b.contains(&self.chart.to_display(w)),
            None => false,
        }
    }

    pub fn eval(&self, t: f64, w: &[f64]) -> Result<f64> {
        self.check_time(t)?;
        if self.outside_support(w) {
            return Ok(0.0);
        }
        self.eval_unchecked(t, w)
    }

    fn eval_unchecked(&self, t: f64, w: &[f64]) -> Result<f64> {
        match &self.kind {
            HamKind::ClosedForm(f) | HamKind::Composite(f) => f.value(t, w),
            HamKind::GridSampled(g) => Ok(g.value(t, w, &self.chart)),
            HamKind::Reparam { base, zeta } => {
                Ok(zeta.deriv(t) * base.eval(zeta.value(t), w)?)
            }
            HamKind::LinComb(terms) => {
                let mut s = 0.0;
                for (c, h) in terms {
                    s += c * h.eval(t, w)?;
                }
                Ok(s)
            }
            HamKind::Concat(_) => self.concat_piece(t)?.eval(t, w),
        }
    }

    fn concat_piece(&self, t: f64) -> Result<&Arc<Hamiltonian>> {
        let HamKind::Concat(pieces) = &self.kind else {
            unreachable!()
        };
        for p in pieces {
            if t <= p.interval.1 + 1e-12 {
                return Ok(p);
            }
        }
        Ok(pieces.last().unwrap())
    }

    /// Value and spatial gradient together (the field solve needs both).
    pub fn eval_with_grad(&self, t: f64, w: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_time(t)?;
        if self.outside_support(w) {
            grad[..w.len()].iter_mut().for_each(|g| *g = 0.0);
            return Ok(0.0);
        }
        match &self.kind {
            HamKind::ClosedForm(f) | HamKind::Composite(f) => {
                f.grad(t, w, grad)?;
                f.value(t, w)
            }
            HamKind::GridSampled(g) => Ok(g.value_grad(t, w, &self.chart, grad)),
            HamKind::Reparam { base, zeta } => {
                let s = zeta.deriv(t);
                let v = base.eval_with_grad(zeta.value(t), w, grad)?;
                grad[..w.len()].iter_mut().for_each(|g| *g *= s);
                Ok(s * v)
            }
            HamKind::LinComb(terms) => {
                let mut total = 0.0;
                let mut acc = [0.0f64; MAX_DIM];
                let mut part = [0.0f64; MAX_DIM];
                for (c, h) in terms {
                    total += c * h.eval_with_grad(t, w, &mut part[..w.len()])?;
                    for i in 0..w.len() {
                        acc[i] += c * part[i];
                    }
                }
                grad[..w.len()].copy_from_slice(&acc[..w.len()]);
                Ok(total)
            }
            HamKind::Concat(_) => self.concat_piece(t)?.eval_with_grad(t, w, grad),
        }
    }

    /// Evaluate at many times for a fixed point, exploiting trajectory reuse
    /// where the kind allows it.
    pub fn eval_sweep(&self, ts: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        if self.outside_support(w) {
            return Ok(vec![0.0; ts.len()]);
        }
        match &self.kind {
            HamKind::ClosedForm(f) | HamKind::Composite(f) => f.sweep(ts, w),
            HamKind::Reparam { base, zeta } => {
                let mapped: Vec<f64> = ts.iter().map(|&t| zeta.value(t)).collect();
                let vals = base.eval_sweep(&mapped, w)?;
                Ok(ts
                    .iter()
                    .zip(vals)
                    .map(|(&t, v)| zeta.deriv(t) * v)
                    .collect())
            }
            HamKind::LinComb(terms) => {
                let mut acc = vec![0.0; ts.len()];
                for (c, h) in terms {
                    for (a, v) in acc.iter_mut().zip(h.eval_sweep(ts, w)?) {
                        *a += c * v;
                    }
                }
                Ok(acc)
            }
            _ => ts.iter().map(|&t| self.eval(t, w)).collect(),
        }
    }

    /// Directional derivative of H_t along the Reeb field at w.
    pub fn reeb_derivative(&self, t: f64, w: &[f64]) -> Result<f64> {
        let mut g = [0.0f64; MAX_DIM];
        self.eval_with_grad(t, w, &mut g[..w.len()])?;
        let mut r = [0.0f64; MAX_DIM];
        self.chart.reeb(w, &mut r[..w.len()]);
        Ok((0..w.len()).map(|i| g[i] * r[i]).sum())
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            HamKind::ClosedForm(f) => f.name(),
            HamKind::Composite(f) => f.name(),
            HamKind::GridSampled(_) => "grid".into(),
            HamKind::Reparam { base, zeta } => {
                format!("reparam({}, {})", base.describe(), zeta.describe())
            }
            HamKind::LinComb(terms) => {
                let parts: Vec<String> = terms
                    .iter()
                    .map(|(c, h)| format!("{c}*{}", h.describe()))
                    .collect();
                parts.join(" + ")
            }
            HamKind::Concat(pieces) => format!("concat[{}]", pieces.len()),
        }
    }
}

/// The contact vector field of a Hamiltonian, with its conformal rate
/// mu = dH(R).
#[derive(Debug, Clone)]
pub struct ContactVectorField {
    pub chart: ChartRef,
    pub ham: Arc<Hamiltonian>,
}

/// Solve the defining relations for X given H at one point.
pub fn contact_vector_field(ham: Arc<Hamiltonian>) -> ContactVectorField {
    ContactVectorField {
        chart: ham.chart.clone(),
        ham,
    }
}

impl ContactVectorField {
    /// Evaluate the field into `out`; returns mu(t, w).
    pub fn eval(&self, t: f64, w: &[f64], out: &mut [f64]) -> Result<f64> {
        let dim = w.len();
        let mut g = [0.0f64; MAX_DIM];
        let h = self.ham.eval_with_grad(t, w, &mut g[..dim])?;
        if self.chart.form_scale.is_some() {
            return self.eval_scaled(w, h, &g[..dim], out);
        }
        match self.chart.kind {
            ChartKind::DarbouxPolar { n } => {
                let hz = g[2 * n];
                let mut radial = 0.0;
                for i in 0..n {
                    let x = w[2 * i];
                    let y = w[2 * i + 1];
                    let gx = g[2 * i];
                    let gy = g[2 * i + 1];
                    out[2 * i] = 0.5 * hz * x - gy;
                    out[2 * i + 1] = 0.5 * hz * y + gx;
                    radial += x * gx + y * gy;
                }
                out[2 * n] = h - 0.5 * radial;
                Ok(hz)
            }
            ChartKind::Torus3 => {
                let z = w[2];
                let (sz, cz) = z.sin_cos();
                let mu = g[0] * cz - g[1] * sz;
                out[0] = h * cz - g[2] * sz;
                out[1] = -h * sz - g[2] * cz;
                out[2] = g[0] * sz + g[1] * cz;
                Ok(mu)
            }
        }
    }

    /// Generic pointwise solve for charts carrying a rescaled form:
    /// stack iota(X) d alpha' = mu' alpha' - dH with alpha'(X) = H and solve
    /// the normal equations of the (dim+1) x dim system.
    fn eval_scaled(&self, w: &[f64], h: f64, g: &[f64], out: &mut [f64]) -> Result<f64> {
        let dim = w.len();
        let mut a = vec![0.0; dim];
        self.chart.form_coeffs(w, &mut a);
        let mut m = vec![0.0; dim * dim];
        self.chart.dform_matrix(w, &mut m);
        let mut r = vec![0.0; dim];
        self.chart.reeb(w, &mut r);
        let mu: f64 = (0..dim).map(|i| g[i] * r[i]).sum();

        // rows 0..dim: sum_i X_i M[i][j] = mu a_j - g_j ; row dim: a . X = H
        let rows = dim + 1;
        let mut mat = vec![0.0; rows * dim];
        let mut rhs = vec![0.0; rows];
        for j in 0..dim {
            for i in 0..dim {
                mat[j * dim + i] = m[i * dim + j];
            }
            rhs[j] = mu * a[j] - g[j];
        }
        for i in 0..dim {
            mat[dim * dim + i] = a[i];
        }
        rhs[dim] = h;

        let mut ata = vec![0.0; dim * dim];
        let mut atb = vec![0.0; dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut s = 0.0;
                for k in 0..rows {
                    s += mat[k * dim + i] * mat[k * dim + j];
                }
                ata[i * dim + j] = s;
            }
            let mut s = 0.0;
            for k in 0..rows {
                s += mat[k * dim + i] * rhs[k];
            }
            atb[i] = s;
        }
        let x = linalg::solve(&ata, &atb, dim)
            .ok_or_else(|| Error::BadParameter("singular contact solve".into()))?;
        out[..dim].copy_from_slice(&x);
        Ok(mu)
    }

    pub fn mu(&self, t: f64, w: &[f64]) -> Result<f64> {
        self.ham.reeb_derivative(t, w)
    }
}

/// Poisson bracket {H, F} = -alpha([X_H, X_F]) via a finite-difference Lie
/// bracket of the two fields.
pub fn poisson_bracket(h: &Arc<Hamiltonian>, f: &Arc<Hamiltonian>, t: f64, w: &[f64]) -> Result<f64> {
    if !Arc::ptr_eq(&h.chart, &f.chart) {
        return Err(Error::ChartMismatch);
    }
    let dim = w.len();
    let xh = contact_vector_field(h.clone());
    let xf = contact_vector_field(f.clone());
    let mut vh = [0.0f64; MAX_DIM];
    let mut vf = [0.0f64; MAX_DIM];
    xh.eval(t, w, &mut vh[..dim])?;
    xf.eval(t, w, &mut vf[..dim])?;

    // [X, Y] = DY . X - DX . Y with fourth-order directional differences.
    let dir_diff = |field: &ContactVectorField, v: &[f64], out: &mut [f64]| -> Result<()> {
        let scale = v.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-12);
        let hstep = FD_STEP / scale;
        let mut probe = [0.0f64; MAX_DIM];
        let mut fpp = [0.0f64; MAX_DIM];
        let mut fp = [0.0f64; MAX_DIM];
        let mut fm = [0.0f64; MAX_DIM];
        let mut fmm = [0.0f64; MAX_DIM];
        for (buf, mult) in [
            (&mut fpp, 2.0),
            (&mut fp, 1.0),
            (&mut fm, -1.0),
            (&mut fmm, -2.0),
        ] {
            for i in 0..dim {
                probe[i] = w[i] + mult * hstep * v[i];
            }
            field.eval(t, &probe[..dim], &mut buf[..dim])?;
        }
        for i in 0..dim {
            out[i] = (-fpp[i] + 8.0 * fp[i] - 8.0 * fm[i] + fmm[i]) / (12.0 * hstep);
        }
        Ok(())
    };

    let mut dxf_xh = [0.0f64; MAX_DIM];
    let mut dxh_xf = [0.0f64; MAX_DIM];
    dir_diff(&xf, &vh[..dim], &mut dxf_xh)?;
    dir_diff(&xh, &vf[..dim], &mut dxh_xf)?;

    let mut bracket = [0.0f64; MAX_DIM];
    for i in 0..dim {
        bracket[i] = dxf_xh[i] - dxh_xf[i];
    }
    let mut a = vec![0.0; dim];
    h.chart.form_coeffs(w, &mut a);
    Ok(-(0..dim).map(|i| a[i] * bracket[i]).sum::<f64>())
}

// ---------------------------------------------------------------------------
// builtin closed-form families
// ---------------------------------------------------------------------------

/// Time amplitude profiles for the builtins.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeProfile {
    One,
    /// Polynomial in t.
    Poly(Vec<f64>),
    /// mean + c cos(2 pi f t) + s sin(2 pi f t)
    Trig {
        mean: f64,
        cos_amp: f64,
        sin_amp: f64,
        freq: f64,
    },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeProfile::One => 1.0,
            TimeProfile::Poly(c) => {
                let mut acc = 0.0;
                for &ck in c.iter().rev() {
                    acc = acc * t + ck;
                }
                acc
            }
            TimeProfile::Trig {
                mean,
                cos_amp,
                sin_amp,
                freq,
            } => {
                let w = std::f64::consts::TAU * freq * t;
                mean + cos_amp * w.cos() + sin_amp * w.sin()
            }
        }
    }
}

/// H identically equal to a constant (c = 1 gives the Reeb flow).
#[derive(Debug)]
pub struct ConstantHam(pub f64);

impl HamImpl for ConstantHam {
    fn value(&self, _t: f64, _w: &[f64]) -> Result<f64> {
        Ok(self.0)
    }
    fn grad(&self, _t: f64, _w: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|g| *g = 0.0);
        Ok(())
    }
    fn name(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// One Fourier mode on the torus: amp cos(kx x + ky y + kz z + phase).
#[derive(Debug, Clone, Copy)]
pub struct TorusMode {
    pub amp: f64,
    pub kx: i32,
    pub ky: i32,
    pub kz: i32,
    pub phase: f64,
}

/// Trigonometric polynomial on the torus with a time amplitude. Basic
/// (Reeb-invariant) exactly when every mode has kx = ky = 0.
#[derive(Debug)]
pub struct TorusTrigHam {
    pub modes: Vec<TorusMode>,
    pub time: TimeProfile,
}

impl HamImpl for TorusTrigHam {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
        let a = self.time.value(t);
        let mut s = 0.0;
        for m in &self.modes {
            s += m.amp
                * (m.kx as f64 * w[0] + m.ky as f64 * w[1] + m.kz as f64 * w[2] + m.phase).cos();
        }
        Ok(a * s)
    }
    fn grad(&self, t: f64, w: &[f64], out: &mut [f64]) -> Result<()> {
        let a = self.time.value(t);
        out.iter_mut().for_each(|g| *g = 0.0);
        for m in &self.modes {
            let arg = m.kx as f64 * w[0] + m.ky as f64 * w[1] + m.kz as f64 * w[2] + m.phase;
            let d = -a * m.amp * arg.sin();
            out[0] += d * m.kx as f64;
            out[1] += d * m.ky as f64;
            out[2] += d * m.kz as f64;
        }
        Ok(())
    }
    fn name(&self) -> String {
        format!("torus_trig[{}]", self.modes.len())
    }
}

/// Compactly supported polynomial bump (1 - |w-c|^2/R^2)^6 times a time
/// profile. C^5 across the support boundary and polynomial inside, which
/// keeps field evaluations cheap.
#[derive(Debug)]
pub struct BumpHam {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amp: f64,
    pub time: TimeProfile,
    pub wrap: bool,
}

impl BumpHam {
    #[inline]
    fn u(&self, w: &[f64], d: &mut [f64; MAX_DIM]) -> f64 {
        let mut u = 0.0;
        for i in 0..w.len() {
            let raw = w[i] - self.center[i];
            let di = if self.wrap {
                crate::chart::wrap_signed(raw)
            } else {
                raw
            };
            d[i] = di;
            u += di * di;
        }
        u / (self.radius * self.radius)
    }
}

impl HamImpl for BumpHam {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
        let mut d = [0.0f64; MAX_DIM];
        let u = self.u(w, &mut d);
        if u >= 1.0 {
            return Ok(0.0);
        }
        let p = 1.0 - u;
        Ok(self.amp * self.time.value(t) * p.powi(6))
    }
    fn grad(&self, t: f64, w: &[f64], out: &mut [f64]) -> Result<()> {
        let mut d = [0.0f64; MAX_DIM];
        let u = self.u(w, &mut d);
        if u >= 1.0 {
            out[..w.len()].iter_mut().for_each(|g| *g = 0.0);
            return Ok(());
        }
        let p = 1.0 - u;
        let c = -12.0 * self.amp * self.time.value(t) * p.powi(5) / (self.radius * self.radius);
        for i in 0..w.len() {
            out[i] = c * d[i];
        }
        Ok(())
    }
    fn name(&self) -> String {
        format!("bump(amp={}, r={})", self.amp, self.radius)
    }
}

/// H depending on z only (Darboux charts), polynomial coefficients.
#[derive(Debug)]
pub struct ZPolyHam {
    pub coeffs: Vec<f64>,
    pub time: TimeProfile,
}

impl HamImpl for ZPolyHam {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
        let z = w[w.len() - 1];
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        Ok(self.time.value(t) * acc)
    }
    fn grad(&self, t: f64, w: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|g| *g = 0.0);
        let z = w[w.len() - 1];
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            let _ = k;
            acc = acc * z + c * k as f64;
        }
        out[w.len() - 1] = self.time.value(t) * acc;
        Ok(())
    }
    fn name(&self) -> String {
        "zpoly".into()
    }
}

// ---------------------------------------------------------------------------
// grid-sampled Hamiltonians
// ---------------------------------------------------------------------------

/// Values on a display-coordinate tensor grid; cubic (Catmull-Rom) in each
/// spatial axis, linear between time knots. The linear-in-time rule keeps the
/// time integral of the norm well defined without inventing smoothness.
#[derive(Debug, Clone)]
pub struct GridHam {
    pub ts: Vec<f64>,
    /// Per-axis sample positions in display coordinates.
    pub axes: Vec<Vec<f64>>,
    pub periodic: Vec<bool>,
    /// values[k][flat spatial index], row-major over axes.
    pub values: Vec<Vec<f64>>,
}

impl GridHam {
    /// Sample an existing Hamiltonian onto a grid (explicit materialization).
    pub fn materialize(
        ham: &Hamiltonian,
        ts: Vec<f64>,
        axes: Vec<Vec<f64>>,
        periodic: Vec<bool>,
    ) -> Result<Self> {
        let dim = axes.len();
        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].len();
        }
        let total: usize = axes.iter().map(|a| a.len()).product();
        let mut values = Vec::with_capacity(ts.len());
        for &t in &ts {
            let mut slab = vec![0.0; total];
            for (flat, v) in slab.iter_mut().enumerate() {
                let mut rem = flat;
                let mut display = vec![0.0; dim];
                for a in 0..dim {
                    let i = rem / strides[a];
                    rem %= strides[a];
                    display[a] = axes[a][i];
                }
                *v = ham.eval(t, &ham.chart.to_working(&display))?;
            }
            values.push(slab);
        }
        Ok(GridHam {
            ts,
            axes,
            periodic,
            values,
        })
    }

    fn value(&self, t: f64, w: &[f64], chart: &ChartRef) -> f64 {
        let display = chart.to_display(w);
        let (k, frac) = self.time_bracket(t);
        let a = self.interp_space(&self.values[k], &display);
        if frac == 0.0 {
            return a;
        }
        let b = self.interp_space(&self.values[k + 1], &display);
        a + frac * (b - a)
    }

    fn value_grad(&self, t: f64, w: &[f64], chart: &ChartRef, grad: &mut [f64]) -> f64 {
        // Gradient in working coordinates by centered differences on the
        // interpolant; the interpolant is piecewise cubic so this is cheap.
        let v = self.value(t, w, chart);
        let mut probe = w.to_vec();
        for i in 0..w.len() {
            let x0 = w[i];
            probe[i] = x0 + FD_STEP;
            let vp = self.value(t, &probe, chart);
            probe[i] = x0 - FD_STEP;
            let vm = self.value(t, &probe, chart);
            probe[i] = x0;
            grad[i] = (vp - vm) / (2.0 * FD_STEP);
        }
        v
    }

    fn time_bracket(&self, t: f64) -> (usize, f64) {
        let n = self.ts.len();
        if t <= self.ts[0] {
            return (0, 0.0);
        }
        if t >= self.ts[n - 1] {
            return (n - 2, 1.0);
        }
        let mut k = 0;
        while self.ts[k + 1] < t {
            k += 1;
        }
        let span = self.ts[k + 1] - self.ts[k];
        (k, (t - self.ts[k]) / span)
    }

    fn interp_space(&self, slab: &[f64], display: &[f64]) -> f64 {
        let dim = self.axes.len();
        let mut strides = vec![1usize; dim];
        for a in (0..dim - 1).rev() {
            strides[a] = strides[a + 1] * self.axes[a + 1].len();
        }
        self.interp_axis(slab, display, 0, 0, &strides)
    }

    fn interp_axis(
        &self,
        slab: &[f64],
        display: &[f64],
        axis: usize,
        offset: usize,
        strides: &[usize],
    ) -> f64 {
        let ax = &self.axes[axis];
        let n = ax.len();
        let h = ax[1] - ax[0];
        let pos = (display[axis] - ax[0]) / h;
        let (i1, u) = if self.periodic[axis] {
            let p = pos.rem_euclid(n as f64);
            (p.floor() as usize % n, p.fract())
        } else {
            let p = pos.clamp(0.0, (n - 1) as f64 - 1e-12);
            (p.floor() as usize, p.fract())
        };
        let idx = |i: isize| -> usize {
            if self.periodic[axis] {
                (i.rem_euclid(n as isize)) as usize
            } else {
                i.clamp(0, n as isize - 1) as usize
            }
        };
        let fetch = |i: isize| -> f64 {
            let o = offset + idx(i) * strides[axis];
            if axis + 1 == self.axes.len() {
                slab[o]
            } else {
                self.interp_axis(slab, display, axis + 1, o, strides)
            }
        };
        let i1 = i1 as isize;
        let (f0, f1, f2, f3) = (fetch(i1 - 1), fetch(i1), fetch(i1 + 1), fetch(i1 + 2));
        catmull_rom(f0, f1, f2, f3, u)
    }
}

#[inline]
fn catmull_rom(f0: f64, f1: f64, f2: f64, f3: f64, u: f64) -> f64 {
    let a = -0.5 * f0 + 1.5 * f1 - 1.5 * f2 + 0.5 * f3;
    let b = f0 - 2.5 * f1 + 2.0 * f2 - 0.5 * f3;
    let c = 0.5 * (f2 - f0);
    ((a * u + b) * u + c) * u + f1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::grid::vertex_grid;

    const GRID_RESIDUAL_TOL: f64 = 1e-6;

    fn torus_unit() -> (ChartRef, Arc<Hamiltonian>) {
        let chart = Chart::torus3().unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(ConstantHam(1.0)),
            (0.0, 1.0),
            None,
        );
        (chart, h)
    }

    #[test]
    fn unit_hamiltonian_gives_reeb_field() {
        let (chart, h) = torus_unit();
        let x = contact_vector_field(h);
        let mut out = [0.0; 3];
        for p in vertex_grid(&chart, 5) {
            let mu = x.eval(0.3, &p, &mut out).unwrap();
            let mut r = [0.0; 3];
            chart.reeb(&p, &mut r);
            for i in 0..3 {
                assert!((out[i] - r[i]).abs() < 1e-12);
            }
            assert_eq!(mu, 0.0);
        }
    }

    fn field_residuals(chart: &ChartRef, h: &Arc<Hamiltonian>, t: f64, w: &[f64]) -> (f64, f64) {
        let dim = chart.dim();
        let x = contact_vector_field(h.clone());
        let mut v = [0.0f64; MAX_DIM];
        let mu = x.eval(t, w, &mut v[..dim]).unwrap();

        let mut a = vec![0.0; dim];
        chart.form_coeffs(w, &mut a);
        let alpha_x: f64 = (0..dim).map(|i| a[i] * v[i]).sum();
        let hval = h.eval(t, w).unwrap();

        // finite-difference dH as the oracle (independent of eval_with_grad)
        let mut dh = vec![0.0; dim];
        let mut probe = w.to_vec();
        let fd = 1e-5;
        for i in 0..dim {
            probe[i] = w[i] + fd;
            let vp = h.eval(t, &probe).unwrap();
            probe[i] = w[i] - fd;
            let vm = h.eval(t, &probe).unwrap();
            probe[i] = w[i];
            dh[i] = (vp - vm) / (2.0 * fd);
        }
        let mut m = vec![0.0; dim * dim];
        chart.dform_matrix(w, &mut m);
        let mut worst = 0.0f64;
        for j in 0..dim {
            let mut lhs = 0.0;
            for i in 0..dim {
                lhs += v[i] * m[i * dim + j];
            }
            let rhs = mu * a[j] - dh[j];
            worst = worst.max((lhs - rhs).abs());
        }
        ((alpha_x - hval).abs(), worst)
    }

    #[test]
    fn bump_field_satisfies_defining_relations() {
        // residual check on a 20^3-ish interior sample
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(BumpHam {
                center: vec![0.15, -0.1, 0.2],
                radius: 0.5,
                amp: 0.7,
                time: TimeProfile::Trig {
                    mean: 0.8,
                    cos_amp: 0.2,
                    sin_amp: 0.0,
                    freq: 1.0,
                },
                wrap: false,
            }),
            (0.0, 1.0),
            None,
        );
        let mut worst = (0.0f64, 0.0f64);
        for p in vertex_grid(&chart, 20) {
            let (r1, r2) = field_residuals(&chart, &h, 0.37, &p);
            worst.0 = worst.0.max(r1);
            worst.1 = worst.1.max(r2);
        }
        assert!(worst.0 <= GRID_RESIDUAL_TOL, "alpha(X)-H: {}", worst.0);
        assert!(worst.1 <= GRID_RESIDUAL_TOL, "iota(X)da residual: {}", worst.1);
    }

    #[test]
    fn torus_field_satisfies_defining_relations() {
        let chart = Chart::torus3().unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(TorusTrigHam {
                modes: vec![
                    TorusMode {
                        amp: 0.4,
                        kx: 1,
                        ky: 0,
                        kz: 1,
                        phase: 0.3,
                    },
                    TorusMode {
                        amp: 0.2,
                        kx: 0,
                        ky: 2,
                        kz: 0,
                        phase: -0.5,
                    },
                ],
                time: TimeProfile::One,
            }),
            (0.0, 1.0),
            None,
        );
        let mut worst = (0.0f64, 0.0f64);
        for p in vertex_grid(&chart, 12) {
            let (r1, r2) = field_residuals(&chart, &h, 0.61, &p);
            worst.0 = worst.0.max(r1);
            worst.1 = worst.1.max(r2);
        }
        assert!(worst.0 <= GRID_RESIDUAL_TOL && worst.1 <= GRID_RESIDUAL_TOL);
    }

    #[test]
    fn reeb_derivative_matches_finite_difference() {
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(BumpHam {
                center: vec![0.2, 0.1, 0.0],
                radius: 0.45,
                amp: 0.5,
                time: TimeProfile::One,
                wrap: false,
            }),
            (0.0, 1.0),
            None,
        );
        let w = [0.25, 0.05, 0.1];
        let mu = h.reeb_derivative(0.0, &w).unwrap();
        // centered difference along R = d/dz with step 1e-5
        let fd = 1e-5;
        let vp = h.eval(0.0, &[w[0], w[1], w[2] + fd]).unwrap();
        let vm = h.eval(0.0, &[w[0], w[1], w[2] - fd]).unwrap();
        assert!((mu - (vp - vm) / (2.0 * fd)).abs() < 1e-6);
    }

    #[test]
    fn basic_torus_hamiltonian_has_zero_reeb_derivative() {
        let chart = Chart::torus3().unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(TorusTrigHam {
                modes: vec![TorusMode {
                    amp: 0.8,
                    kx: 0,
                    ky: 0,
                    kz: 1,
                    phase: 0.2,
                }],
                time: TimeProfile::One,
            }),
            (0.0, 1.0),
            None,
        );
        for p in vertex_grid(&chart, 6) {
            assert!(h.reeb_derivative(0.4, &p).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn z_only_hamiltonian_reeb_derivative_is_dz() {
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        // H = z^2 - 0.3 z
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(ZPolyHam {
                coeffs: vec![0.0, -0.3, 1.0],
                time: TimeProfile::One,
            }),
            (0.0, 1.0),
            None,
        );
        let w = [0.3, 0.2, 0.4];
        let expect = 2.0 * 0.4 - 0.3;
        assert!((h.reeb_derivative(0.0, &w).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn bracket_is_antisymmetric_and_vanishes_on_diagonal() {
        let chart = Chart::torus3().unwrap();
        let mk = |amp: f64, kx: i32, kz: i32| {
            Hamiltonian::closed_form(
                chart.clone(),
                Arc::new(TorusTrigHam {
                    modes: vec![TorusMode {
                        amp,
                        kx,
                        ky: 0,
                        kz,
                        phase: 0.1,
                    }],
                    time: TimeProfile::One,
                }),
                (0.0, 1.0),
                None,
            )
        };
        let h = mk(0.5, 1, 1);
        let f = mk(0.3, 0, 2);
        for p in [[0.4, 1.2, 2.0], [3.0, 0.2, 5.1]] {
            let hh = poisson_bracket(&h, &h, 0.2, &p).unwrap();
            assert!(hh.abs() < 1e-7, "{{H,H}} = {hh}");
            let hf = poisson_bracket(&h, &f, 0.2, &p).unwrap();
            let fh = poisson_bracket(&f, &h, 0.2, &p).unwrap();
            assert!((hf + fh).abs() < 1e-7);
        }
    }

    /// Two-parameter family oracle: for phi_{s,t} = phi_A^s o phi_B^t with A
    /// autonomous, the t-direction generator is H_{s,t} = (e^{a_s} B_t) o
    /// (phi_A^s)^{-1} and the s-direction generator is A, so
    /// d/ds H_{s,t} = -{H_{s,t}, A}.
    #[test]
    fn bracket_matches_two_parameter_family_derivative() {
        use crate::flow::{integrate_flow, Isotopy};
        let chart = Chart::torus3().unwrap();
        let a_ham = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(TorusTrigHam {
                modes: vec![TorusMode {
                    amp: 0.4,
                    kx: 1,
                    ky: 0,
                    kz: 1,
                    phase: 0.2,
                }],
                time: TimeProfile::One,
            }),
            (0.0, 1.0),
            None,
        );
        let b_ham = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(TorusTrigHam {
                modes: vec![TorusMode {
                    amp: 0.3,
                    kx: 0,
                    ky: 1,
                    kz: 1,
                    phase: -0.4,
                }],
                time: TimeProfile::One,
            }),
            (0.0, 1.0),
            None,
        );
        let flow_a = integrate_flow(contact_vector_field(a_ham.clone()), None, 1e-3).unwrap();

        // H_{s,t} as a Hamiltonian in (t, x) at frozen s
        #[derive(Debug)]
        struct SliceHam {
            iso: std::sync::Arc<dyn Isotopy>,
            b: Arc<Hamiltonian>,
            s: f64,
        }
        impl HamImpl for SliceHam {
            fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
                let back = self.iso.eval_inverse(self.s, w)?;
                // conformal of the inverse is -a_s at the preimage
                Ok((-back.conformal).exp() * self.b.eval(t, &back.point)?)
            }
            fn name(&self) -> String {
                "slice".into()
            }
        }
        let slice = |s: f64| {
            Hamiltonian::composite(
                chart.clone(),
                Arc::new(SliceHam {
                    iso: flow_a.iso.clone(),
                    b: b_ham.clone(),
                    s,
                }),
                (0.0, 1.0),
                None,
            )
        };

        let (s, t) = (0.4, 0.3);
        let ds = 1e-4;
        for p in [[0.5, 1.2, 2.0], [3.1, 0.4, 5.0]] {
            let plus = slice(s + ds).eval(t, &p).unwrap();
            let minus = slice(s - ds).eval(t, &p).unwrap();
            let dh_ds = (plus - minus) / (2.0 * ds);
            let bracket = poisson_bracket(&slice(s), &a_ham, t, &p).unwrap();
            // d/ds H = d/dt F - {H, F} with F = A autonomous
            let residual = (dh_ds + bracket).abs();
            assert!(residual <= 1e-4, "family identity residual {residual}");
        }
    }

    #[test]
    fn lincomb_field_is_linear() {
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        let mk = |cx: f64, amp: f64| {
            Hamiltonian::closed_form(
                chart.clone(),
                Arc::new(BumpHam {
                    center: vec![cx, 0.0, 0.1],
                    radius: 0.4,
                    amp,
                    time: TimeProfile::One,
                    wrap: false,
                }),
                (0.0, 1.0),
                None,
            )
        };
        let h = mk(0.1, 0.6);
        let f = mk(-0.15, 0.4);
        let combo = Hamiltonian::lincomb(vec![(2.0, h.clone()), (-0.5, f.clone())]).unwrap();
        let xh = contact_vector_field(h);
        let xf = contact_vector_field(f);
        let xc = contact_vector_field(combo);
        let w = [0.05, 0.02, 0.08];
        let (mut a, mut b, mut c) = ([0.0; 3], [0.0; 3], [0.0; 3]);
        xh.eval(0.0, &w, &mut a).unwrap();
        xf.eval(0.0, &w, &mut b).unwrap();
        xc.eval(0.0, &w, &mut c).unwrap();
        for i in 0..3 {
            assert!((c[i] - (2.0 * a[i] - 0.5 * b[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_sampled_reproduces_smooth_values() {
        let chart = Chart::torus3().unwrap();
        let h = Hamiltonian::closed_form(
            chart.clone(),
            Arc::new(TorusTrigHam {
                modes: vec![TorusMode {
                    amp: 0.5,
                    kx: 1,
                    ky: 1,
                    kz: 0,
                    phase: 0.0,
                }],
                time: TimeProfile::Poly(vec![0.0, 1.0]), // H linear in t
            }),
            (0.0, 1.0),
            None,
        );
        let n = 24;
        let axes: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..n)
                    .map(|i| std::f64::consts::TAU * i as f64 / n as f64)
                    .collect()
            })
            .collect();
        let ts: Vec<f64> = (0..=4).map(|k| k as f64 / 4.0).collect();
        let g = GridHam::materialize(&h, ts, axes, vec![true; 3]).unwrap();
        let gh = Hamiltonian::grid_sampled(chart.clone(), g);
        // off-knot time (linear in t is reproduced exactly by the time rule)
        let p = [1.234, 2.345, 0.456];
        let exact = h.eval(0.375, &p).unwrap();
        let interp = gh.eval(0.375, &p).unwrap();
        assert!((exact - interp).abs() < 2e-4, "err {}", (exact - interp).abs());
    }

    #[test]
    fn out_of_interval_evaluation_errors() {
        let (_, h) = torus_unit();
        assert!(matches!(
            h.eval(1.5, &[0.0, 0.0, 0.0]),
            Err(Error::TimeOutOfRange { .. })
        ));
    }
}
