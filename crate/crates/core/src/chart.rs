//! Explicit contact coordinate charts.
//!
//! Two charts are built in: the Darboux model on R^(2n+1) with the form
//! alpha = dz + 1/2 sum (x_i dy_i - y_i dx_i), and the three-torus with
//! alpha = cos z dx - sin z dy. Both may carry an optional conformal rescale
//! e^f alpha with f a named builtin.
//!
//! Darboux charts keep two coordinate systems. All evaluation (forms, fields,
//! flows, distances) happens in Cartesian *working* coordinates, which stay
//! regular across the polar axis. Domain boxes, grids and reported points use
//! polar *display* coordinates (r_1..r_n, theta_1..theta_n, z). On the torus
//! the two coincide.

use crate::error::{Error, Result};

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartKind {
    /// R^(2n+1) in the polar Darboux model; `n` pairs of symplectic directions.
    DarbouxPolar { n: usize },
    /// T^3 with the rotating-plane contact form.
    Torus3,
}

/// Named conformal rescales f for the housed form e^f alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FormScale {
    /// f = c everywhere.
    Constant(f64),
    /// f = amp * sin(z).
    ZWave(f64),
}

impl FormScale {
    pub fn value(&self, working: &[f64]) -> f64 {
        match *self {
            FormScale::Constant(c) => c,
            FormScale::ZWave(amp) => amp * working[working.len() - 1].sin(),
        }
    }

    /// Gradient in working coordinates.
    pub fn grad(&self, working: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match *self {
            FormScale::Constant(_) => {}
            FormScale::ZWave(amp) => {
                let z = working[working.len() - 1];
                out[working.len() - 1] = amp * z.cos();
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            FormScale::Constant(c) => format!("constant({c})"),
            FormScale::ZWave(a) => format!("zwave({a})"),
        }
    }
}

/// Axis-aligned domain box in display coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub intervals: Vec<[f64; 2]>,
    pub periodic: Vec<bool>,
}

impl DomainBox {
    pub fn new(intervals: Vec<[f64; 2]>, periodic: Vec<bool>) -> Result<Self> {
        if intervals.len() != periodic.len() {
            return Err(Error::BadParameter(
                "interval/periodic arity mismatch".into(),
            ));
        }
        for (axis, iv) in intervals.iter().enumerate() {
            if !(iv[0] < iv[1]) || !iv[0].is_finite() || !iv[1].is_finite() {
                return Err(Error::DegenerateDomain {
                    axis,
                    lo: iv[0],
                    hi: iv[1],
                });
            }
        }
        Ok(DomainBox {
            intervals,
            periodic,
        })
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn contains(&self, display: &[f64]) -> bool {
        display.iter().enumerate().all(|(i, &v)| {
            if self.periodic[i] {
                return true;
            }
            let [lo, hi] = self.intervals[i];
            // slack absorbs coordinate-conversion roundoff on the boundary
            let pad = 1e-9 * (hi - lo).max(1.0);
            v >= lo - pad && v <= hi + pad
        })
    }
}

/// A point paired with a tangent vector of matching arity.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTangentPair {
    pub point: Vec<f64>,
    pub vector: Vec<f64>,
}

impl PointTangentPair {
    pub fn new(point: Vec<f64>, vector: Vec<f64>) -> Result<Self> {
        if point.len() != vector.len() {
            return Err(Error::BadParameter(format!(
                "point arity {} != vector arity {}",
                point.len(),
                vector.len()
            )));
        }
        Ok(PointTangentPair { point, vector })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub kind: ChartKind,
    pub domain: DomainBox,
    pub form_scale: Option<FormScale>,
}

pub type ChartRef = Arc<Chart>;

/// Construct a chart after validating the domain against the kind.
pub fn make_chart(
    kind: ChartKind,
    domain: DomainBox,
    form_scale: Option<FormScale>,
) -> Result<ChartRef> {
    match kind {
        ChartKind::DarbouxPolar { n } => {
            if n == 0 {
                return Err(Error::BadParameter("DarbouxPolar needs n >= 1".into()));
            }
            if domain.dim() != 2 * n + 1 {
                return Err(Error::BadParameter(format!(
                    "DarbouxPolar(n={n}) needs a {}-interval box, got {}",
                    2 * n + 1,
                    domain.dim()
                )));
            }
            for i in 0..n {
                if domain.intervals[i][0] < 0.0 {
                    return Err(Error::BadParameter(format!(
                        "radial axis {i} has negative lower bound"
                    )));
                }
            }
        }
        ChartKind::Torus3 => {
            if domain.dim() != 3 {
                return Err(Error::BadParameter("Torus3 needs a 3-interval box".into()));
            }
        }
    }
    Ok(Arc::new(Chart {
        kind,
        domain,
        form_scale,
    }))
}

impl Chart {
    /// Full Darboux box r_i in [0, r_max], z in [-z_max, z_max].
    pub fn darboux(n: usize, r_max: f64, z_max: f64) -> Result<ChartRef> {
        let mut intervals = Vec::new();
        let mut periodic = Vec::new();
        for _ in 0..n {
            intervals.push([0.0, r_max]);
            periodic.push(false);
        }
        for _ in 0..n {
            intervals.push([0.0, TAU]);
            periodic.push(true);
        }
        intervals.push([-z_max, z_max]);
        periodic.push(false);
        make_chart(
            ChartKind::DarbouxPolar { n },
            DomainBox::new(intervals, periodic)?,
            None,
        )
    }

    /// The full three-torus.
    pub fn torus3() -> Result<ChartRef> {
        make_chart(
            ChartKind::Torus3,
            DomainBox::new(vec![[0.0, TAU]; 3], vec![true; 3])?,
            None,
        )
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ChartKind::DarbouxPolar { n } => 2 * n + 1,
            ChartKind::Torus3 => 3,
        }
    }

    pub fn pairs(&self) -> usize {
        match self.kind {
            ChartKind::DarbouxPolar { n } => n,
            ChartKind::Torus3 => 1,
        }
    }

    /// Display -> working coordinates (polar to Cartesian on Darboux charts).
    pub fn to_working(&self, display: &[f64]) -> Vec<f64> {
        match self.kind {
            ChartKind::DarbouxPolar { n } => {
                let mut w = vec![0.0; 2 * n + 1];
                for i in 0..n {
                    let r = display[i];
                    let th = display[n + i];
                    w[2 * i] = r * th.cos();
                    w[2 * i + 1] = r * th.sin();
                }
                w[2 * n] = display[2 * n];
                w
            }
            ChartKind::Torus3 => display.to_vec(),
        }
    }

    /// Working -> display coordinates; angles wrapped into [0, 2 pi).
    pub fn to_display(&self, working: &[f64]) -> Vec<f64> {
        match self.kind {
            ChartKind::DarbouxPolar { n } => {
                let mut d = vec![0.0; 2 * n + 1];
                for i in 0..n {
                    let x = working[2 * i];
                    let y = working[2 * i + 1];
                    d[i] = x.hypot(y);
                    d[n + i] = wrap_angle(y.atan2(x));
                }
                d[2 * n] = working[2 * n];
                d
            }
            ChartKind::Torus3 => working.iter().map(|&v| wrap_angle(v)).collect(),
        }
    }

    /// Whether a working-coordinate point lies in the domain box.
    /// Avoids the angle computation: periodic axes are always inside.
    pub fn contains_working(&self, working: &[f64]) -> bool {
        match self.kind {
            ChartKind::DarbouxPolar { n } => {
                for i in 0..n {
                    let r = working[2 * i].hypot(working[2 * i + 1]);
                    let [lo, hi] = self.domain.intervals[i];
                    let pad = 1e-9 * (hi - lo).max(1.0);
                    if r < lo - pad || r > hi + pad {
                        return false;
                    }
                }
                let z = working[2 * n];
                let [lo, hi] = self.domain.intervals[2 * n];
                let pad = 1e-9 * (hi - lo).max(1.0);
                z >= lo - pad && z <= hi + pad
            }
            ChartKind::Torus3 => true,
        }
    }

    /// Coefficients of the housed form e^f alpha in the working basis.
    pub fn form_coeffs(&self, working: &[f64], out: &mut [f64]) {
        match self.kind {
            ChartKind::DarbouxPolar { n } => {
                for i in 0..n {
                    out[2 * i] = -0.5 * working[2 * i + 1];
                    out[2 * i + 1] = 0.5 * working[2 * i];
                }
                out[2 * n] = 1.0;
            }
            ChartKind::Torus3 => {
                let z = working[2];
                out[0] = z.cos();
                out[1] = -z.sin();
                out[2] = 0.0;
            }
        }
        if let Some(fs) = &self.form_scale {
            let s = fs.value(working).exp();
            out.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Entries of d(e^f alpha) as the antisymmetric matrix
    /// M[i][j] = d(e^f alpha)(e_i, e_j), row-major.
    pub fn dform_matrix(&self, working: &[f64], out: &mut [f64]) {
        let dim = self.dim();
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kind {
            ChartKind::DarbouxPolar { n } => {
                for i in 0..n {
                    out[(2 * i) * dim + 2 * i + 1] = 1.0;
                    out[(2 * i + 1) * dim + 2 * i] = -1.0;
                }
            }
            ChartKind::Torus3 => {
                let z = working[2];
                out[2 * dim] = -z.sin(); // d alpha(e_z, e_x)
                out[2] = z.sin();
                out[2 * dim + 1] = -z.cos(); // d alpha(e_z, e_y)
                out[dim + 2] = z.cos();
            }
        }
        if let Some(fs) = &self.form_scale {
            // d(e^f a) = e^f (df ^ a + da)
            let s = fs.value(working).exp();
            let mut df = vec![0.0; dim];
            fs.grad(working, &mut df);
            let mut a = vec![0.0; dim];
            self.unscaled_form_coeffs(working, &mut a);
            for i in 0..dim {
                for j in 0..dim {
                    out[i * dim + j] = s * (df[i] * a[j] - df[j] * a[i] + out[i * dim + j]);
                }
            }
        }
    }

    fn unscaled_form_coeffs(&self, working: &[f64], out: &mut [f64]) {
        match self.kind {
            ChartKind::DarbouxPolar { n } => {
                for i in 0..n {
                    out[2 * i] = -0.5 * working[2 * i + 1];
                    out[2 * i + 1] = 0.5 * working[2 * i];
                }
                out[2 * n] = 1.0;
            }
            ChartKind::Torus3 => {
                let z = working[2];
                out[0] = z.cos();
                out[1] = -z.sin();
                out[2] = 0.0;
            }
        }
    }

    /// Evaluate the housed form on a tangent vector.
    pub fn eval_form(&self, pair: &PointTangentPair) -> f64 {
        let mut a = vec![0.0; self.dim()];
        self.form_coeffs(&pair.point, &mut a);
        a.iter().zip(&pair.vector).map(|(c, v)| c * v).sum()
    }

    /// The Reeb field of the housed form, in working coordinates.
    pub fn reeb(&self, working: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kind {
            ChartKind::DarbouxPolar { n } => {
                out[2 * n] = 1.0;
            }
            ChartKind::Torus3 => {
                let z = working[2];
                out[0] = z.cos();
                out[1] = -z.sin();
            }
        }
        if let Some(fs) = &self.form_scale {
            // For alpha' = e^f alpha the Reeb field is e^{-f} (R + V) with
            // V in ker alpha solving d alpha(V, w) = df(w) for w in ker alpha.
            let dim = self.dim();
            let mut df = vec![0.0; dim];
            fs.grad(working, &mut df);
            let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
            match self.kind {
                ChartKind::DarbouxPolar { n } => {
                    for i in 0..n {
                        let x = working[2 * i];
                        let y = working[2 * i + 1];
                        // u_i = e_x + (y/2) e_z, v_i = e_y - (x/2) e_z
                        let df_u = df[2 * i] + 0.5 * y * df[2 * n];
                        let df_v = df[2 * i + 1] - 0.5 * x * df[2 * n];
                        let p = df_v;
                        let q = -df_u;
                        out[2 * i] += p;
                        out[2 * i + 1] += q;
                        out[2 * n] += p * 0.5 * y - q * 0.5 * x;
                    }
                }
                ChartKind::Torus3 => {
                    let z = working[2];
                    let w1 = [z.sin(), z.cos(), 0.0];
                    let w2 = [0.0, 0.0, 1.0];
                    let p = dot(&df, &w2);
                    let q = -dot(&df, &w1);
                    for k in 0..3 {
                        out[k] += p * w1[k] + q * w2[k];
                    }
                }
            }
            let s = (-fs.value(working)).exp();
            out.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Density of alpha ^ (d alpha)^n with respect to the display coordinate
    /// measure. Strictly positive on the interior away from the polar locus.
    pub fn volume_density(&self, display: &[f64]) -> Result<f64> {
        if display.len() != self.dim() {
            return Err(Error::BadParameter("point arity mismatch".into()));
        }
        if !self.domain.contains(display) {
            return Err(Error::OutOfDomain {
                point: display.to_vec(),
            });
        }
        let base = match self.kind {
            ChartKind::DarbouxPolar { n } => {
                let mut fact = 1.0;
                for k in 2..=n {
                    fact *= k as f64;
                }
                let radii: f64 = display[..n].iter().product();
                fact * radii
            }
            ChartKind::Torus3 => 1.0,
        };
        let scale = match &self.form_scale {
            Some(fs) => {
                let w = self.to_working(display);
                ((self.pairs() as f64 + 1.0) * fs.value(&w)).exp()
            }
            None => 1.0,
        };
        Ok(base * scale)
    }

    /// Distance between working-coordinate points: Euclidean on Darboux
    /// charts, flat quotient metric on the torus.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            ChartKind::DarbouxPolar { .. } => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            ChartKind::Torus3 => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = wrap_signed(x - y);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Wrap an angle into [0, 2 pi).
pub fn wrap_angle(a: f64) -> f64 {
    let mut v = a % TAU;
    if v < 0.0 {
        v += TAU;
    }
    v
}

/// Wrap a difference into [-pi, pi).
pub fn wrap_signed(a: f64) -> f64 {
    let mut v = a % TAU;
    if v < -std::f64::consts::PI {
        v += TAU;
    } else if v >= std::f64::consts::PI {
        v -= TAU;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLOSED_FORM_TOL: f64 = 1e-9;

    fn grid3(chart: &Chart, per_axis: usize) -> Vec<Vec<f64>> {
        // Interior vertex grid in display coordinates, polar locus excluded.
        let mut pts = Vec::new();
        let iv = &chart.domain.intervals;
        for i in 1..per_axis {
            for j in 0..per_axis {
                for k in 1..per_axis {
                    let f = |t: usize, axis: usize| {
                        iv[axis][0] + (iv[axis][1] - iv[axis][0]) * t as f64 / per_axis as f64
                    };
                    pts.push(vec![f(i, 0), f(j, 1), f(k, 2)]);
                }
            }
        }
        pts
    }

    fn reeb_residuals(chart: &Chart, working: &[f64]) -> (f64, f64) {
        let dim = chart.dim();
        let mut r = vec![0.0; dim];
        chart.reeb(working, &mut r);
        let mut a = vec![0.0; dim];
        chart.form_coeffs(working, &mut a);
        let alpha_r: f64 = a.iter().zip(&r).map(|(c, v)| c * v).sum();
        let mut m = vec![0.0; dim * dim];
        chart.dform_matrix(working, &mut m);
        // (iota_R d alpha)(e_j) = sum_i R_i M[i][j]
        let mut worst = 0.0f64;
        for j in 0..dim {
            let mut s = 0.0;
            for i in 0..dim {
                s += r[i] * m[i * dim + j];
            }
            worst = worst.max(s.abs());
        }
        ((alpha_r - 1.0).abs(), worst)
    }

    #[test]
    fn darboux_reeb_is_vertical() {
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        let mut r = vec![0.0; 3];
        chart.reeb(&[0.3, -0.2, 0.5], &mut r);
        assert_eq!(r, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn torus_reeb_residuals_on_grid() {
        // Derived check before trusting the closed form: 32^3 display grid.
        let chart = Chart::torus3().unwrap();
        let mut worst = (0.0f64, 0.0f64);
        let m = 32;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let p = [
                        TAU * i as f64 / m as f64,
                        TAU * j as f64 / m as f64,
                        TAU * k as f64 / m as f64,
                    ];
                    let (a, b) = reeb_residuals(&chart, &p);
                    worst.0 = worst.0.max(a);
                    worst.1 = worst.1.max(b);
                }
            }
        }
        assert!(worst.0 <= CLOSED_FORM_TOL, "alpha(R)-1: {}", worst.0);
        assert!(worst.1 <= CLOSED_FORM_TOL, "iota(R) d alpha: {}", worst.1);
    }

    #[test]
    fn scaled_form_reeb_residuals() {
        for chart in [
            make_chart(
                ChartKind::Torus3,
                DomainBox::new(vec![[0.0, TAU]; 3], vec![true; 3]).unwrap(),
                Some(FormScale::ZWave(0.4)),
            )
            .unwrap(),
            make_chart(
                ChartKind::DarbouxPolar { n: 1 },
                DomainBox::new(
                    vec![[0.0, 1.0], [0.0, TAU], [-1.0, 1.0]],
                    vec![false, true, false],
                )
                .unwrap(),
                Some(FormScale::ZWave(0.3)),
            )
            .unwrap(),
        ] {
            let mut worst = (0.0f64, 0.0f64);
            for d in grid3(&chart, 9) {
                let w = chart.to_working(&d);
                let (a, b) = reeb_residuals(&chart, &w);
                worst.0 = worst.0.max(a);
                worst.1 = worst.1.max(b);
            }
            assert!(worst.0 <= 1e-6 && worst.1 <= 1e-6, "residuals {worst:?}");
        }
    }

    /// Test-only exterior algebra: evaluate w1 ^ w2 ^ ... on the coordinate
    /// basis by summing over permutations, as an independent oracle for the
    /// volume density.
    fn wedge_density(chart: &Chart, working: &[f64]) -> f64 {
        let dim = chart.dim();
        let n = chart.pairs();
        let mut a = vec![0.0; dim];
        chart.form_coeffs(working, &mut a);
        let mut m = vec![0.0; dim * dim];
        chart.dform_matrix(working, &mut m);
        let mut idx: Vec<usize> = (0..dim).collect();
        let mut total = 0.0;
        permute(&mut idx, 0, &mut |perm, sign| {
            let mut term = a[perm[0]];
            for k in 0..n {
                term *= m[perm[1 + 2 * k] * dim + perm[2 + 2 * k]];
            }
            total += sign * term;
        });
        total / 2f64.powi(n as i32)
    }

    fn permute(idx: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize], f64)) {
        if k == idx.len() {
            // parity by counting inversions
            let mut inv = 0;
            for i in 0..idx.len() {
                for j in (i + 1)..idx.len() {
                    if idx[i] > idx[j] {
                        inv += 1;
                    }
                }
            }
            f(idx, if inv % 2 == 0 { 1.0 } else { -1.0 });
            return;
        }
        for i in k..idx.len() {
            idx.swap(k, i);
            permute(idx, k + 1, f);
            idx.swap(k, i);
        }
    }

    #[test]
    fn volume_density_matches_wedge_oracle() {
        // Darboux n=1: display density r; n=2: 2 r1 r2; torus: 1.
        let c1 = Chart::darboux(1, 1.0, 1.0).unwrap();
        let d = vec![0.37, 1.1, -0.2];
        let v = c1.volume_density(&d).unwrap();
        assert!((v - 0.37).abs() < 1e-14);
        let w = c1.to_working(&d);
        // working density = n! (Cartesian), display adds the polar Jacobian
        assert!((wedge_density(&c1, &w) - 1.0).abs() < 1e-12);

        let c2 = Chart::darboux(2, 1.0, 1.0).unwrap();
        let d2 = vec![0.3, 0.5, 0.4, 2.0, 0.1];
        assert_eq!(c2.dim(), 5);
        let v2 = c2.volume_density(&d2).unwrap();
        assert!((v2 - 2.0 * 0.3 * 0.5).abs() < 1e-14, "{v2}");
        let w2 = c2.to_working(&d2);
        assert!((wedge_density(&c2, &w2) - 2.0).abs() < 1e-12);

        let t = Chart::torus3().unwrap();
        let vt = t.volume_density(&[0.3, 4.0, 2.2]).unwrap();
        assert!((vt - 1.0).abs() < 1e-14);
        assert!((wedge_density(&t, &[0.3, 4.0, 2.2]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_is_z_translation_invariant() {
        let c = Chart::darboux(1, 1.0, 1.0).unwrap();
        let a = c.volume_density(&[0.4, 0.7, -0.3]).unwrap();
        let b = c.volume_density(&[0.4, 0.7, 0.6]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn make_chart_rejects_bad_input() {
        assert!(Chart::darboux(0, 1.0, 1.0).is_err());
        let bad = DomainBox::new(vec![[0.0, 0.0], [0.0, TAU], [-1.0, 1.0]], vec![false; 3]);
        assert!(bad.is_err());
        let neg = DomainBox::new(
            vec![[-0.5, 1.0], [0.0, TAU], [-1.0, 1.0]],
            vec![false, true, false],
        )
        .unwrap();
        assert!(make_chart(ChartKind::DarbouxPolar { n: 1 }, neg, None).is_err());
    }

    #[test]
    fn volume_density_rejects_outside_points() {
        let c = Chart::darboux(1, 1.0, 1.0).unwrap();
        assert!(matches!(
            c.volume_density(&[1.5, 0.0, 0.0]),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn coordinate_round_trip() {
        let c = Chart::darboux(2, 1.0, 1.0).unwrap();
        let d = vec![0.3, 0.8, 1.2, 5.9, -0.4];
        let d2 = c.to_display(&c.to_working(&d));
        for (x, y) in d.iter().zip(&d2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_distance_wraps() {
        let t = Chart::torus3().unwrap();
        let d = t.distance(&[0.05, 0.0, 0.0], &[TAU - 0.05, 0.0, 0.0]);
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn darboux_form_in_polar_directions() {
        // alpha = dz + (1/2) r^2 d theta: on the polar basis vectors,
        // alpha(d/dz) = 1 and alpha(d/d theta) = r^2 / 2
        let c = Chart::darboux(1, 1.0, 1.0).unwrap();
        let display = [0.6, 1.1, -0.3];
        let w = c.to_working(&display);
        let dz = PointTangentPair::new(w.clone(), vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(c.eval_form(&dz), 1.0);
        // d/d theta in working coordinates is (-y, x, 0)
        let dtheta = PointTangentPair::new(w.clone(), vec![-w[1], w[0], 0.0]).unwrap();
        let expect = 0.5 * display[0] * display[0];
        assert!((c.eval_form(&dtheta) - expect).abs() < 1e-14);
    }

    #[test]
    fn torus_form_on_coordinate_directions() {
        // alpha = cos z dx - sin z dy
        let c = Chart::torus3().unwrap();
        let p = vec![0.4, 1.0, 0.9];
        let dx = PointTangentPair::new(p.clone(), vec![1.0, 0.0, 0.0]).unwrap();
        let dy = PointTangentPair::new(p.clone(), vec![0.0, 1.0, 0.0]).unwrap();
        assert!((c.eval_form(&dx) - 0.9f64.cos()).abs() < 1e-15);
        assert!((c.eval_form(&dy) + 0.9f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn tangent_pair_arity_checked() {
        assert!(PointTangentPair::new(vec![0.0; 3], vec![0.0; 2]).is_err());
        let c = Chart::torus3().unwrap();
        let p = PointTangentPair::new(vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]).unwrap();
        assert!((c.eval_form(&p) - 1.0).abs() < 1e-15); // alpha(e_x) = cos 0 = 1
    }
}
