//! Contact dynamical systems: the triple of an isotopy, its Hamiltonian and
//! its conformal factor, with the group operations realized both on
//! Hamiltonians (as lazy composite evaluators) and on flows (as algebraic
//! combinators over the operand flows).
//!
//! The group identities make the algebraic flow the exact integral of the
//! composite Hamiltonian, so systems built by `compose`, `invert`,
//! `conjugate` and `group_difference` carry the algebraic flow and the
//! `AlgebraicComposition` provenance tag. `direct_flow_check` provides the
//! independent route: it re-integrates the composite Hamiltonian's vector
//! field from scratch and reports the sup distance between the two flows
//! and their conformal factors.

use crate::chart::{ChartKind, ChartRef};
use crate::error::{Error, Result};
use crate::flow::{
    integrate_flow, ComposedIsotopy, ConjugatedIsotopy, DirectFlow, FlowMap, IdentityMap,
    InverseIsotopy, Isotopy, PointMap, ReparamIsotopy, TimeSlice,
};
use crate::grid::{time_knots, vertex_grid, GridSpec};
use crate::ham::{contact_vector_field, ConstantHam, HamImpl, Hamiltonian};
use crate::reparam::ReparamFn;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    DirectIntegration,
    AlgebraicComposition,
}

/// The central triple (Phi, H, h); h is read off the flow samples.
#[derive(Debug, Clone)]
pub struct ContactDynamicalSystem {
    pub ham: Arc<Hamiltonian>,
    pub flow: FlowMap,
    pub provenance: Provenance,
    pub identity_based: bool,
}

impl ContactDynamicalSystem {
    /// Integrate a Hamiltonian into a system (direct provenance).
    pub fn from_ham(ham: Arc<Hamiltonian>, step: f64) -> Result<Self> {
        let flow = integrate_flow(contact_vector_field(ham.clone()), None, step)?;
        Ok(ContactDynamicalSystem {
            ham,
            flow,
            provenance: Provenance::DirectIntegration,
            identity_based: true,
        })
    }

    /// Integrate from a non-identity time-zero map.
    pub fn from_ham_based(
        ham: Arc<Hamiltonian>,
        base: Arc<dyn PointMap>,
        step: f64,
    ) -> Result<Self> {
        let flow = integrate_flow(contact_vector_field(ham.clone()), Some(base), step)?;
        Ok(ContactDynamicalSystem {
            ham,
            flow,
            provenance: Provenance::DirectIntegration,
            identity_based: false,
        })
    }

    /// The identity system (id, 0, 0).
    pub fn identity(chart: ChartRef) -> Result<Self> {
        let ham = Hamiltonian::closed_form(chart, Arc::new(ConstantHam(0.0)), (0.0, 1.0), None);
        ContactDynamicalSystem::from_ham(ham, 1e-2)
    }

    pub fn chart(&self) -> ChartRef {
        self.ham.chart.clone()
    }

    pub fn conformal(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.flow.forward(t, x)?.conformal)
    }

    /// Sup of |h| over the vertex grid and the time knots.
    pub fn conformal_sup(&self, spec: &GridSpec) -> Result<f64> {
        let chart = self.chart();
        let (a, b) = self.flow.interval();
        let ts = time_knots(a, b, spec.time_knots);
        let mut worst = 0.0f64;
        for p in vertex_grid(&chart, spec.per_axis) {
            for s in self.flow.iso.eval_many(&ts, &p)? {
                worst = worst.max(s.conformal.abs());
            }
        }
        Ok(worst)
    }

    /// The time-one map frozen as a point map.
    pub fn time_one(&self) -> Arc<dyn PointMap> {
        Arc::new(TimeSlice {
            iso: self.flow.iso.clone(),
            t: self.flow.interval().1,
        })
    }

    fn require_identity_based(&self) -> Result<()> {
        if !self.identity_based {
            return Err(Error::BadParameter(
                "operation requires an identity-based system".into(),
            ));
        }
        Ok(())
    }
}

fn same_chart(a: &ContactDynamicalSystem, b: &ContactDynamicalSystem) -> Result<()> {
    if !Arc::ptr_eq(&a.ham.chart, &b.ham.chart) {
        return Err(Error::ChartMismatch);
    }
    if a.ham.interval != b.ham.interval {
        return Err(Error::BadParameter(
            "operands must share the time interval".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// composite Hamiltonian evaluators
// ---------------------------------------------------------------------------

/// (H # F)_t(x) = H_t(x) + e^{h_t(y)} F_t(y) with y = (phi_H^t)^{-1}(x).
#[derive(Debug)]
struct ComposeHam {
    ham_a: Arc<Hamiltonian>,
    iso_a: Arc<dyn Isotopy>,
    ham_b: Arc<Hamiltonian>,
}

impl HamImpl for ComposeHam {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
        let back = self.iso_a.eval_inverse(t, w)?;
        let h_at_y = -back.conformal;
        Ok(self.ham_a.eval(t, w)? + h_at_y.exp() * self.ham_b.eval(t, &back.point)?)
    }
    fn name(&self) -> String {
        format!("({} # {})", self.ham_a.describe(), self.ham_b.describe())
    }
}

/// Inverse Hamiltonian: -e^{-h_t(x)} H_t(phi_H^t(x)).
#[derive(Debug)]
struct InvertHam {
    ham_a: Arc<Hamiltonian>,
    iso_a: Arc<dyn Isotopy>,
}

impl HamImpl for InvertHam {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
        let s = self.iso_a.eval(t, w)?;
        Ok(-(-s.conformal).exp() * self.ham_a.eval(t, &s.point)?)
    }
    fn sweep(&self, ts: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let samples = self.iso_a.eval_many(ts, w)?;
        ts.iter()
            .zip(samples)
            .map(|(&t, s)| Ok(-(-s.conformal).exp() * self.ham_a.eval(t, &s.point)?))
            .collect()
    }
    fn name(&self) -> String {
        format!("inv({})", self.ham_a.describe())
    }
}

/// Difference Hamiltonian: e^{-h_t(x)} (F_t - H_t)(phi_H^t(x)), generating
/// Phi_H^{-1} o Phi_F.
#[derive(Debug)]
struct DiffHam {
    ham_a: Arc<Hamiltonian>,
    iso_a: Arc<dyn Isotopy>,
    ham_b: Arc<Hamiltonian>,
}

impl HamImpl for DiffHam {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
        let s = self.iso_a.eval(t, w)?;
        let diff = self.ham_b.eval(t, &s.point)? - self.ham_a.eval(t, &s.point)?;
        Ok((-s.conformal).exp() * diff)
    }
    fn sweep(&self, ts: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let samples = self.iso_a.eval_many(ts, w)?;
        ts.iter()
            .zip(samples)
            .map(|(&t, s)| {
                let diff = self.ham_b.eval(t, &s.point)? - self.ham_a.eval(t, &s.point)?;
                Ok((-s.conformal).exp() * diff)
            })
            .collect()
    }
    fn name(&self) -> String {
        format!(
            "diff({}, {})",
            self.ham_a.describe(),
            self.ham_b.describe()
        )
    }
}

/// Conjugated Hamiltonian e^{-g} (H o psi).
#[derive(Debug)]
struct ConjHam {
    ham: Arc<Hamiltonian>,
    psi: Arc<dyn PointMap>,
}

impl HamImpl for ConjHam {
    fn value(&self, t: f64, w: &[f64]) -> Result<f64> {
        let img = self.psi.apply(w)?;
        let g = self.psi.conformal(w)?;
        Ok((-g).exp() * self.ham.eval(t, &img)?)
    }
    fn sweep(&self, ts: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let img = self.psi.apply(w)?;
        let g = (-self.psi.conformal(w)?).exp();
        Ok(self
            .ham
            .eval_sweep(ts, &img)?
            .into_iter()
            .map(|v| g * v)
            .collect())
    }
    fn name(&self) -> String {
        format!("conj({})", self.ham.describe())
    }
}

// ---------------------------------------------------------------------------
// group operations
// ---------------------------------------------------------------------------

/// Composition without the identity-based requirement; the synthesis
/// pipeline composes loops with transition stages based at earlier time-one
/// maps. The Hamiltonian formula holds for based isotopies all the same.
pub(crate) fn compose_general(
    a: &ContactDynamicalSystem,
    b: &ContactDynamicalSystem,
) -> Result<ContactDynamicalSystem> {
    same_chart(a, b)?;
    let ham = Hamiltonian::composite(
        a.chart(),
        Arc::new(ComposeHam {
            ham_a: a.ham.clone(),
            iso_a: a.flow.iso.clone(),
            ham_b: b.ham.clone(),
        }),
        a.ham.interval,
        None,
    );
    let iso = Arc::new(ComposedIsotopy {
        a: a.flow.iso.clone(),
        b: b.flow.iso.clone(),
    });
    Ok(ContactDynamicalSystem {
        flow: FlowMap::from_isotopy(iso, a.flow.step.min(b.flow.step), a.flow.knots.len() - 1),
        ham,
        provenance: Provenance::AlgebraicComposition,
        identity_based: a.identity_based && b.identity_based,
    })
}

/// Composition: flow Phi_H o Phi_F, Hamiltonian H # F.
pub fn compose(
    a: &ContactDynamicalSystem,
    b: &ContactDynamicalSystem,
) -> Result<ContactDynamicalSystem> {
    same_chart(a, b)?;
    a.require_identity_based()?;
    b.require_identity_based()?;
    let ham = Hamiltonian::composite(
        a.chart(),
        Arc::new(ComposeHam {
            ham_a: a.ham.clone(),
            iso_a: a.flow.iso.clone(),
            ham_b: b.ham.clone(),
        }),
        a.ham.interval,
        None,
    );
    let iso = Arc::new(ComposedIsotopy {
        a: a.flow.iso.clone(),
        b: b.flow.iso.clone(),
    });
    Ok(ContactDynamicalSystem {
        flow: FlowMap::from_isotopy(iso, a.flow.step.min(b.flow.step), a.flow.knots.len() - 1),
        ham,
        provenance: Provenance::AlgebraicComposition,
        identity_based: true,
    })
}

/// Inverse system: flow Phi_H^{-1}.
pub fn invert(a: &ContactDynamicalSystem) -> Result<ContactDynamicalSystem> {
    a.require_identity_based()?;
    let ham = Hamiltonian::composite(
        a.chart(),
        Arc::new(InvertHam {
            ham_a: a.ham.clone(),
            iso_a: a.flow.iso.clone(),
        }),
        a.ham.interval,
        None,
    );
    let iso = Arc::new(InverseIsotopy {
        a: a.flow.iso.clone(),
    });
    Ok(ContactDynamicalSystem {
        flow: FlowMap::from_isotopy(iso, a.flow.step, a.flow.knots.len() - 1),
        ham,
        provenance: Provenance::AlgebraicComposition,
        identity_based: true,
    })
}

/// The quotient system Phi_H^{-1} o Phi_F with its displayed Hamiltonian and
/// conformal factor.
pub fn group_difference(
    a: &ContactDynamicalSystem,
    b: &ContactDynamicalSystem,
) -> Result<ContactDynamicalSystem> {
    same_chart(a, b)?;
    a.require_identity_based()?;
    b.require_identity_based()?;
    let ham = Hamiltonian::composite(
        a.chart(),
        Arc::new(DiffHam {
            ham_a: a.ham.clone(),
            iso_a: a.flow.iso.clone(),
            ham_b: b.ham.clone(),
        }),
        a.ham.interval,
        None,
    );
    let iso = Arc::new(ComposedIsotopy {
        a: Arc::new(InverseIsotopy {
            a: a.flow.iso.clone(),
        }),
        b: b.flow.iso.clone(),
    });
    Ok(ContactDynamicalSystem {
        flow: FlowMap::from_isotopy(iso, a.flow.step.min(b.flow.step), a.flow.knots.len() - 1),
        ham,
        provenance: Provenance::AlgebraicComposition,
        identity_based: true,
    })
}

/// Conjugation by an automorphism: flow psi^{-1} o Phi o psi, Hamiltonian
/// e^{-g} (H o psi), conformal factor by the transformation law.
pub fn conjugate(
    a: &ContactDynamicalSystem,
    psi: &Automorphism,
) -> Result<ContactDynamicalSystem> {
    let ham = Hamiltonian::composite(
        a.chart(),
        Arc::new(ConjHam {
            ham: a.ham.clone(),
            psi: psi.map.clone(),
        }),
        a.ham.interval,
        None,
    );
    let iso = Arc::new(ConjugatedIsotopy {
        base: a.flow.iso.clone(),
        psi: psi.map.clone(),
    });
    Ok(ContactDynamicalSystem {
        flow: FlowMap::from_isotopy(iso, a.flow.step, a.flow.knots.len() - 1),
        ham,
        provenance: Provenance::AlgebraicComposition,
        identity_based: a.identity_based,
    })
}

/// Reparameterized system: flow phi_H^{zeta(t)}, Hamiltonian H^zeta,
/// conformal factor h_{zeta(t)}.
pub fn reparam_system(a: &ContactDynamicalSystem, zeta: ReparamFn) -> ContactDynamicalSystem {
    let ham = Hamiltonian::reparam(a.ham.clone(), zeta.clone());
    let iso = Arc::new(ReparamIsotopy {
        base: a.flow.iso.clone(),
        zeta,
    });
    ContactDynamicalSystem {
        flow: FlowMap::from_isotopy(iso, a.flow.step, a.flow.knots.len() - 1),
        ham,
        provenance: Provenance::AlgebraicComposition,
        identity_based: a.identity_based,
    }
}

// ---------------------------------------------------------------------------
// automorphisms
// ---------------------------------------------------------------------------

/// An automorphism of the contact structure: an invertible point map with a
/// conformal factor.
#[derive(Debug, Clone)]
pub struct Automorphism {
    pub chart: ChartRef,
    pub map: Arc<dyn PointMap>,
    pub smooth: bool,
}

impl Automorphism {
    pub fn identity(chart: ChartRef) -> Self {
        Automorphism {
            chart,
            map: Arc::new(IdentityMap),
            smooth: true,
        }
    }

    /// Coordinate translation. Contact only along the Reeb-symmetric
    /// directions: z on Darboux charts, (x, y) on the torus.
    pub fn translation(chart: ChartRef, offset: Vec<f64>) -> Result<Self> {
        let dim = chart.dim();
        if offset.len() != dim {
            return Err(Error::BadParameter("translation arity mismatch".into()));
        }
        match chart.kind {
            ChartKind::DarbouxPolar { .. } => {
                if offset[..dim - 1].iter().any(|v| *v != 0.0) {
                    return Err(Error::BadParameter(
                        "only z-translations preserve the Darboux form".into(),
                    ));
                }
            }
            ChartKind::Torus3 => {
                if offset[2] != 0.0 {
                    return Err(Error::BadParameter(
                        "only (x, y)-translations preserve the torus form".into(),
                    ));
                }
            }
        }
        Ok(Automorphism {
            chart,
            map: Arc::new(Translation { offset }),
            smooth: true,
        })
    }

    /// Anisotropic contact scaling (x, y, z) -> (l x, l y, l^2 z) on Darboux
    /// charts; pulls the form back to l^2 alpha, so g = 2 ln l.
    pub fn scaling(chart: ChartRef, lambda: f64) -> Result<Self> {
        if !matches!(chart.kind, ChartKind::DarbouxPolar { .. }) {
            return Err(Error::BadParameter(
                "contact scaling lives on Darboux charts".into(),
            ));
        }
        if !(lambda > 0.0) {
            return Err(Error::BadParameter("scaling factor must be positive".into()));
        }
        Ok(Automorphism {
            chart,
            map: Arc::new(ContactScaling { lambda }),
            smooth: true,
        })
    }

    /// The time-one map of a smooth system.
    pub fn time_one(sys: &ContactDynamicalSystem) -> Self {
        Automorphism {
            chart: sys.chart(),
            map: sys.time_one(),
            smooth: true,
        }
    }

    pub fn from_map(chart: ChartRef, map: Arc<dyn PointMap>, smooth: bool) -> Self {
        Automorphism { chart, map, smooth }
    }

    /// Sup over sample points of |alpha(d psi(R)) - e^g|: the Reeb-direction
    /// derivative of an automorphism equals the exponential of its conformal
    /// factor.
    pub fn reeb_direction_residual(&self, samples: &[Vec<f64>]) -> Result<f64> {
        let chart = &self.chart;
        let dim = chart.dim();
        let mut worst = 0.0f64;
        let eps = 1e-5;
        for x in samples {
            let mut r = vec![0.0; dim];
            chart.reeb(x, &mut r);
            let xp: Vec<f64> = (0..dim).map(|i| x[i] + eps * r[i]).collect();
            let xm: Vec<f64> = (0..dim).map(|i| x[i] - eps * r[i]).collect();
            let ip = self.map.apply(&xp)?;
            let im = self.map.apply(&xm)?;
            let img = self.map.apply(x)?;
            let mut a_img = vec![0.0; dim];
            chart.form_coeffs(&img, &mut a_img);
            let mut val = 0.0;
            for j in 0..dim {
                val += a_img[j] * (ip[j] - im[j]) / (2.0 * eps);
            }
            let g = self.map.conformal(x)?;
            worst = worst.max((val - g.exp()).abs());
        }
        Ok(worst)
    }
}

#[derive(Debug)]
struct Translation {
    offset: Vec<f64>,
}

impl PointMap for Translation {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.iter().zip(&self.offset).map(|(a, b)| a + b).collect())
    }
    fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(y.iter().zip(&self.offset).map(|(a, b)| a - b).collect())
    }
    fn conformal(&self, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

#[derive(Debug)]
struct ContactScaling {
    lambda: f64,
}

impl PointMap for ContactScaling {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        let dim = x.len();
        for v in out[..dim - 1].iter_mut() {
            *v *= self.lambda;
        }
        out[dim - 1] *= self.lambda * self.lambda;
        Ok(out)
    }
    fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = y.to_vec();
        let dim = y.len();
        for v in out[..dim - 1].iter_mut() {
            *v /= self.lambda;
        }
        out[dim - 1] /= self.lambda * self.lambda;
        Ok(out)
    }
    fn conformal(&self, _x: &[f64]) -> Result<f64> {
        Ok(2.0 * self.lambda.ln())
    }
}

// ---------------------------------------------------------------------------
// cross-checks
// ---------------------------------------------------------------------------

/// Outcome of re-integrating a system's Hamiltonian from scratch and
/// comparing against its stored flow.
#[derive(Debug, Clone, Copy)]
pub struct FlowCheck {
    pub point_sup: f64,
    pub conformal_sup: f64,
}

/// Independent route: integrate the system's Hamiltonian field directly
/// (finite differences through any composite evaluators) and measure the sup
/// distance to the stored flow over `points` at `knots` times.
pub fn direct_flow_check(
    sys: &ContactDynamicalSystem,
    points: &[Vec<f64>],
    knots: usize,
    step: f64,
) -> Result<FlowCheck> {
    let chart = sys.chart();
    let field = contact_vector_field(sys.ham.clone());
    let base: Option<Arc<dyn PointMap>> = if sys.identity_based {
        None
    } else {
        let (a, _) = sys.flow.interval();
        Some(Arc::new(FrozenStart {
            iso: sys.flow.iso.clone(),
            t: a,
        }))
    };
    let direct = DirectFlow::new(field, base, step)?;
    let (a, b) = sys.flow.interval();
    let ts = time_knots(a, b, knots);
    let mut check = FlowCheck {
        point_sup: 0.0,
        conformal_sup: 0.0,
    };
    for p in points {
        let re = direct.eval_many(&ts, p)?;
        let stored = sys.flow.iso.eval_many(&ts, p)?;
        for (x, y) in re.iter().zip(&stored) {
            check.point_sup = check.point_sup.max(chart.distance(&x.point, &y.point));
            check.conformal_sup = check
                .conformal_sup
                .max((x.conformal - y.conformal).abs());
        }
    }
    Ok(check)
}

/// The time-a map of an isotopy used as an integration base.
#[derive(Debug)]
struct FrozenStart {
    iso: Arc<dyn Isotopy>,
    t: f64,
}

impl PointMap for FrozenStart {
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

/// Empirical uniqueness diagnostic: perturb the Hamiltonian by `delta` times
/// a reference bump, re-integrate, and report the flow distance per unit of
/// Hamiltonian distance. Logged, never asserted against a fixed constant.
pub fn uniqueness_diagnostic(
    base: &ContactDynamicalSystem,
    bump: &Arc<Hamiltonian>,
    deltas: &[f64],
    spec: &GridSpec,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for &d in deltas {
        let perturbed =
            Hamiltonian::lincomb(vec![(1.0, base.ham.clone()), (d, bump.clone())])?;
        let sys = ContactDynamicalSystem::from_ham(perturbed, base.flow.step)?;
        let dist = crate::metrics::c0_distance(&base.flow, &sys.flow, spec, true)?;
        out.push((d, dist));
    }
    Ok(out)
}

/// Default sample sample of a flow pair used in unit tests and quick checks.
pub const CROSS_CHECK_STEP: f64 = 5e-3;
