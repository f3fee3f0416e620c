//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with its headline measurements and wall time. Run with
//! `cargo test --test acceptance -- --nocapture`.

use contact_dynamics::chart::{Chart, ChartRef, DomainBox};
use contact_dynamics::flow::{conformal_factor, integrate_flow};
use contact_dynamics::grid::{seeded_cloud, time_knots, vertex_grid, GridSpec};
use contact_dynamics::ham::{
    contact_vector_field, BumpHam, ConstantHam, Hamiltonian, TimeProfile, TorusMode, TorusTrigHam,
};
use contact_dynamics::mainlemma::{
    synthesize, PipelineParams, Schedule, SynthesisInput, SynthesisMode,
};
use contact_dynamics::metrics::{
    displacement_check, energy_capacity_envelope, energy_upper_bound, ham_norm, ham_norm_graded,
    NormKind,
};
use contact_dynamics::nonsmooth::{
    conjugate_fields_example, lipschitz_certificate_scan, truncation_sequence_diagnostics,
    RhoProfile, RotationFamily,
};
use contact_dynamics::regularize::{build_variation, regularize_isotopy, torus_basic_obstruction};
use contact_dynamics::reparam::{boundary_flatten, constant_speed, flat_breakpoints};
use contact_dynamics::smooth::{Plateau, SplitMix64};
use contact_dynamics::system::{
    compose, direct_flow_check, group_difference, invert, ContactDynamicalSystem, Provenance,
};
use contact_dynamics::Result;
use std::f64::consts::TAU;
use std::sync::Arc;
use std::time::Instant;

struct Criterion {
    name: &'static str,
    budget_s: f64,
    started: Instant,
}

impl Criterion {
    fn start(name: &'static str, budget_s: f64) -> Self {
        Criterion {
            name,
            budget_s,
            started: Instant::now(),
        }
    }

    fn finish(self, detail: String) {
        let elapsed = self.started.elapsed().as_secs_f64();
        println!(
            "acceptance {}: PASS ({elapsed:.1}s of {:.0}s budget) -- {detail}",
            self.name, self.budget_s
        );
        assert!(
            elapsed <= self.budget_s,
            "{} exceeded its runtime budget: {elapsed:.1}s > {:.0}s",
            self.name,
            self.budget_s
        );
    }
}

fn darboux_bump(
    chart: &ChartRef,
    center: [f64; 3],
    radius: f64,
    amp: f64,
    time: TimeProfile,
) -> Arc<Hamiltonian> {
    Hamiltonian::closed_form(
        chart.clone(),
        Arc::new(BumpHam {
            center: center.to_vec(),
            radius,
            amp,
            time,
            wrap: false,
        }),
        (0.0, 1.0),
        None,
    )
}

fn torus_waves(chart: &ChartRef, modes: Vec<TorusMode>, time: TimeProfile) -> Arc<Hamiltonian> {
    Hamiltonian::closed_form(
        chart.clone(),
        Arc::new(TorusTrigHam { modes, time }),
        (0.0, 1.0),
        None,
    )
}

/// Vertex grid restricted to points a safe margin inside the box, so that
/// Jacobian probe points stay in the domain.
fn interior_grid(chart: &ChartRef, per_axis: usize, margin: f64) -> Vec<Vec<f64>> {
    vertex_grid(chart, per_axis)
        .into_iter()
        .filter(|w| {
            let d = chart.to_display(w);
            d.iter().enumerate().all(|(axis, v)| {
                chart.domain.periodic[axis] || {
                    let [lo, hi] = chart.domain.intervals[axis];
                    (lo == 0.0 || *v >= lo + margin) && *v <= hi - margin
                }
            })
        })
        .collect()
}

fn rotation_family() -> Arc<RotationFamily> {
    Arc::new(
        RotationFamily::new(
            Chart::darboux(1, 2.5, 4.0).unwrap(),
            RhoProfile {
                exponent: 1.0,
                r_inner: 0.2,
                r_outer: 0.8,
                truncations: vec![0.15, 0.08, 0.04],
            },
            Plateau::new(2.0, 3.0),
        )
        .unwrap(),
    )
}

// ---------------------------------------------------------------------------
// 1. pullback identity suite
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_pullback_identity() {
    let c = Criterion::start("1 pullback identity", 60.0);
    let run = || -> Result<String> {
        let mut systems: Vec<(Arc<Hamiltonian>, Vec<Vec<f64>>)> = Vec::new();

        let d1 = Chart::darboux(1, 1.2, 1.2).unwrap();
        let grid1 = interior_grid(&d1, 11, 1e-3); // probes must stay inside
        assert!(grid1.len() >= 1000, "{} points", grid1.len());
        for (cx, amp, tp) in [
            (0.2, 0.6, TimeProfile::One),
            (
                -0.25,
                0.45,
                TimeProfile::Trig {
                    mean: 1.0,
                    cos_amp: 0.4,
                    sin_amp: 0.0,
                    freq: 1.0,
                },
            ),
            (0.0, 0.7, TimeProfile::Poly(vec![0.5, 1.0])),
            (
                0.3,
                0.5,
                TimeProfile::Trig {
                    mean: 0.8,
                    cos_amp: 0.0,
                    sin_amp: 0.5,
                    freq: 2.0,
                },
            ),
        ] {
            systems.push((
                darboux_bump(&d1, [cx, 0.1, 0.0], 0.45, amp, tp),
                grid1.clone(),
            ));
        }

        let d2 = Chart::darboux(2, 1.0, 1.0).unwrap();
        let grid2 = interior_grid(&d2, 5, 1e-3); // 1600 points
        assert!(grid2.len() >= 1000, "{} points", grid2.len());
        for amp in [0.4, 0.55] {
            let h = Hamiltonian::closed_form(
                d2.clone(),
                Arc::new(BumpHam {
                    center: vec![0.2, 0.0, -0.1, 0.15, 0.0],
                    radius: 0.5,
                    amp,
                    time: TimeProfile::One,
                    wrap: false,
                }),
                (0.0, 1.0),
                None,
            );
            systems.push((h, grid2.clone()));
        }

        let t3 = Chart::torus3().unwrap();
        let grid3 = vertex_grid(&t3, 10); // 1000 points
        let m = |amp, kx, ky, kz, phase| TorusMode {
            amp,
            kx,
            ky,
            kz,
            phase,
        };
        for modes in [
            vec![m(0.7, 0, 0, 1, 0.0)],                       // basic
            vec![m(0.4, 0, 0, 2, 0.4), m(0.2, 0, 0, 1, 1.0)], // basic
            vec![m(0.5, 1, 0, 1, 0.2)],
            vec![m(0.8, 1, 2, 1, 0.2), m(0.2, 0, 1, 1, 0.5)],
        ] {
            systems.push((torus_waves(&t3, modes, TimeProfile::One), grid3.clone()));
        }
        assert!(systems.len() >= 10);

        let mut worst = 0.0f64;
        for (ham, grid) in &systems {
            let fm = integrate_flow(contact_vector_field(ham.clone()), None, 1e-3)?;
            let conf = conformal_factor(ham, &fm)?;
            let res = contact_dynamics::flow::pullback_residual(&fm, &conf, 1.0, grid)?;
            assert!(res <= 1e-5, "pullback residual {res} for {}", ham.describe());
            worst = worst.max(res);
        }

        // halving the step improves the residual by >= 8x, measured where the
        // integrator error dominates the probe floor (a generic mode: basic
        // Hamiltonians keep z invariant and integrate exactly)
        let (ham, grid) = &systems[8];
        let sub: Vec<Vec<f64>> = grid.iter().step_by(16).cloned().collect();
        let res_at = |step: f64| -> Result<f64> {
            let fm = integrate_flow(contact_vector_field(ham.clone()), None, step)?;
            let conf = conformal_factor(ham, &fm)?;
            contact_dynamics::flow::pullback_residual(&fm, &conf, 1.0, &sub)
        };
        let coarse = res_at(0.05)?;
        let fine = res_at(0.025)?;
        assert!(
            coarse / fine >= 8.0,
            "expected fourth-order drop: {coarse:.3e} -> {fine:.3e}"
        );
        Ok(format!(
            "10 systems, worst residual {worst:.2e} (tol 1e-5), halving ratio {:.1}",
            coarse / fine
        ))
    };
    c.finish(run().unwrap());
}

// ---------------------------------------------------------------------------
// 2. group-law oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_group_laws() {
    let c = Criterion::start("2 group-law oracle equivalence", 120.0);
    let run = || -> Result<String> {
        let chart = Chart::torus3().unwrap();
        let grid = vertex_grid(&chart, 10); // 1000 points
        let mut rng = SplitMix64::new(4242);
        let mut pair = |step: f64| -> Result<(ContactDynamicalSystem, ContactDynamicalSystem)> {
            let mk = |rng: &mut SplitMix64, amp: f64| -> Result<ContactDynamicalSystem> {
                let h = Hamiltonian::closed_form(
                    chart.clone(),
                    Arc::new(BumpHam {
                        center: vec![
                            rng.range(0.0, TAU),
                            rng.range(0.0, TAU),
                            rng.range(0.0, TAU),
                        ],
                        radius: rng.range(1.2, 1.8),
                        amp,
                        time: TimeProfile::Trig {
                            mean: 1.0,
                            cos_amp: rng.range(-0.3, 0.3),
                            sin_amp: rng.range(-0.3, 0.3),
                            freq: 1.0,
                        },
                        wrap: true,
                    }),
                    (0.0, 1.0),
                    None,
                );
                ContactDynamicalSystem::from_ham(h, step)
            };
            let amp_a = rng.range(0.2, 0.4);
            let a = mk(&mut rng, amp_a)?;
            let amp_b = rng.range(0.2, 0.4);
            let b = mk(&mut rng, amp_b)?;
            Ok((a, b))
        };

        let mut worst_flow = 0.0f64;
        let mut worst_conf = 0.0f64;
        for _ in 0..5 {
            let (a, b) = pair(4e-2)?;
            for sys in [
                compose(&a, &b)?,
                invert(&a)?,
                group_difference(&a, &b)?,
            ] {
                assert_eq!(sys.provenance, Provenance::AlgebraicComposition);
                let check = direct_flow_check(&sys, &grid, 2, 5e-2)?;
                assert!(
                    check.point_sup <= 1e-5,
                    "direct vs algebraic flow: {:.3e}",
                    check.point_sup
                );
                assert!(
                    check.conformal_sup <= 1e-5,
                    "direct vs algebraic conformal factor: {:.3e}",
                    check.conformal_sup
                );
                worst_flow = worst_flow.max(check.point_sup);
                worst_conf = worst_conf.max(check.conformal_sup);
            }
        }

        // cancellation: H # inverse(H) vanishes
        let (a, _) = pair(2e-3)?;
        let cancel = compose(&a, &invert(&a)?)?;
        let mut worst_cancel = 0.0f64;
        for p in seeded_cloud(&chart, 64, 99, 0.0) {
            for t in [0.1, 0.5, 0.9] {
                worst_cancel = worst_cancel.max(cancel.ham.eval(t, &p)?.abs());
            }
        }
        assert!(worst_cancel <= 1e-6, "cancellation residual {worst_cancel:.3e}");
        Ok(format!(
            "5 pairs x 3 operations on 1000-point grids: flow sup {worst_flow:.2e}, conformal sup {worst_conf:.2e} (tol 1e-5); cancellation {worst_cancel:.2e} (tol 1e-6)"
        ))
    };
    c.finish(run().unwrap());
}

// ---------------------------------------------------------------------------
// 3. norm identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_norm_identities() {
    let c = Criterion::start("3 norm identities", 10.0);
    let run = || -> Result<String> {
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        let h = darboux_bump(
            &chart,
            [0.2, 0.1, 0.0],
            0.4,
            0.8,
            TimeProfile::Trig {
                mean: 1.0,
                cos_amp: 0.4,
                sin_amp: 0.2,
                freq: 1.0,
            },
        );
        let spec = GridSpec::new(10, 128);
        let l1_before = ham_norm(&h, NormKind::L1Inf, &spec)?.value;
        let eps = 0.01 * l1_before;
        let flat = boundary_flatten(&h, eps, &spec)?;
        assert!(flat.linf_inflation < eps, "sup-norm inflation {}", flat.linf_inflation);
        let width = 2.0 * flat.zeta.boundary_flat.unwrap();
        let l1_after = ham_norm_graded(&flat.ham, &flat_breakpoints(width), 64, &spec)?;
        let preservation = (l1_after - l1_before).abs();
        assert!(
            preservation < 1e-6,
            "integrated norm must be preserved: drift {preservation:.3e}"
        );

        // interval rescaling identities, relative 1e-9
        let mut worst_rel = 0.0f64;
        for (a, b) in [(0.0, 0.5), (0.25, 0.75), (0.0, 0.25)] {
            let resc = contact_dynamics::rescale_interval(&h, a, b)?;
            let linf = ham_norm(&h, NormKind::LInf, &spec)?.value;
            let linf_r = ham_norm(&resc, NormKind::LInf, &spec)?.value;
            let expect = linf / (b - a);
            worst_rel = worst_rel.max(((linf_r - expect) / expect).abs());
            let l1 = ham_norm(&h, NormKind::L1Inf, &spec)?.value;
            let l1_r = ham_norm(&resc, NormKind::L1Inf, &spec)?.value;
            worst_rel = worst_rel.max(((l1_r - l1) / l1).abs());
        }
        assert!(worst_rel <= 1e-9, "rescaling identity drift {worst_rel:.3e}");
        Ok(format!(
            "flatten preserves the integrated norm to {preservation:.2e} (tol 1e-6), inflation {:.2e} < eps {eps:.2e}; rescale identities within {worst_rel:.2e} relative (tol 1e-9)",
            flat.linf_inflation
        ))
    };
    c.finish(run().unwrap());
}

// ---------------------------------------------------------------------------
// 4. constant-speed reparameterization
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_constant_speed() {
    let c = Criterion::start("4 constant-speed reparameterization", 60.0);
    let run = || -> Result<String> {
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        // the speed profile needs temporal shape, not spatial resolution
        let spec = GridSpec::new(5, 64);
        let profiles = [
            TimeProfile::Poly(vec![1.0, 1.0]),              // speed 1+t
            TimeProfile::Poly(vec![1.0, -4.0, 4.0]),        // vanishes at 1/2
            TimeProfile::Trig {
                mean: 1.0,
                cos_amp: 0.0,
                sin_amp: 0.9,
                freq: 1.0,
            },
            TimeProfile::Poly(vec![0.2, 0.0, 0.0, 1.0]),    // 0.2 + t^3
            TimeProfile::Trig {
                mean: 1.0,
                cos_amp: -0.95,
                sin_amp: 0.0,
                freq: 1.0,
            },                                               // near-zero at t=0
        ];
        let p = chart.to_working(&[0.45, 0.8, 0.0]);
        let variation = build_variation(chart.clone(), p, 1, 0.3)?;
        let mut worst_ratio = 1.0f64;
        for time in profiles {
            let h = darboux_bump(&chart, [0.2, 0.1, 0.0], 0.4, 0.8, time);
            // regularize first; skip the loop when the input is already regular
            let reg = regularize_isotopy(&h, &variation, 0.02, &spec, 100)?;
            let g = if reg.eps_star.iter().all(|e| *e == 0.0) {
                ContactDynamicalSystem::from_ham(h.clone(), 5e-3)?
            } else {
                let loop_sys = ContactDynamicalSystem {
                    ham: reg.loop_ham.clone(),
                    flow: reg.loop_flow.clone(),
                    provenance: Provenance::AlgebraicComposition,
                    identity_based: true,
                };
                compose(&loop_sys, &ContactDynamicalSystem::from_ham(h.clone(), 5e-3)?)?
            };
            let cs = constant_speed(&g.ham, &spec, 200)?;
            assert!(
                cs.speed_ratio <= 1.01,
                "speed ratio {} exceeds 1.01",
                cs.speed_ratio
            );
            worst_ratio = worst_ratio.max(cs.speed_ratio);
        }
        Ok(format!(
            "5 irregular-speed inputs: worst max/min speed ratio {worst_ratio:.5} (tol 1.01) over 200 knots"
        ))
    };
    c.finish(run().unwrap());
}

// ---------------------------------------------------------------------------
// 5. regularization
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_regularization() {
    let c = Criterion::start("5 regularization", 60.0);
    let run = || -> Result<String> {
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        let spec = GridSpec::new(8, 64);
        // vanishes identically at t = 1/2
        let h = darboux_bump(
            &chart,
            [0.2, 0.1, 0.0],
            0.4,
            0.8,
            TimeProfile::Poly(vec![1.0, -4.0, 4.0]),
        );
        let p = chart.to_working(&[0.45, 0.8, 0.0]);
        let variation = build_variation(chart.clone(), p, 1, 0.3)?;
        let reg = regularize_isotopy(&h, &variation, 0.02, &spec, 100)?;
        assert!(reg.margin > 0.0, "margin {}", reg.margin);
        let hnorm = ham_norm(&h, NormKind::L1Inf, &spec)?.value;
        assert!(
            reg.loop_norm_1inf < 0.05 * hnorm,
            "loop norm {} vs 5% of {hnorm}",
            reg.loop_norm_1inf
        );

        // the torus obstruction: basic generators have proportional covectors
        let t3 = Chart::torus3().unwrap();
        let g1 = torus_waves(
            &t3,
            vec![TorusMode {
                amp: 0.7,
                kx: 0,
                ky: 0,
                kz: 1,
                phase: 0.0,
            }],
            TimeProfile::Trig {
                mean: 0.0,
                cos_amp: 1.0,
                sin_amp: 0.0,
                freq: 1.0,
            },
        );
        let g2 = torus_waves(
            &t3,
            vec![TorusMode {
                amp: 0.4,
                kx: 0,
                ky: 0,
                kz: 2,
                phase: 0.9,
            }],
            TimeProfile::Trig {
                mean: 0.0,
                cos_amp: 0.0,
                sin_amp: 1.0,
                freq: 1.0,
            },
        );
        let ts = time_knots(0.0, 1.0, 24);
        let minor = torus_basic_obstruction(&g1, &g2, &[1.0, 2.0, 0.7], &ts)?;
        assert!(minor <= 1e-9, "minors must vanish: {minor:.3e}");
        Ok(format!(
            "margin {:.3e} > 0 with loop norm {:.3e} < 5% of {hnorm:.3e}; torus minors {minor:.1e}",
            reg.margin, reg.loop_norm_1inf
        ))
    };
    c.finish(run().unwrap());
}

// ---------------------------------------------------------------------------
// 6. synthesis pipeline at depth 3
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_synthesis_pipeline() {
    let c = Criterion::start("6 synthesis pipeline depth 3", 300.0);
    let run = || -> Result<String> {
        let chart = Chart::darboux(1, 1.2, 1.2).unwrap();
        let h = darboux_bump(
            &chart,
            [0.45, 0.0, 0.0],
            0.32,
            0.5,
            TimeProfile::Trig {
                mean: 1.0,
                cos_amp: 0.3,
                sin_amp: 0.0,
                freq: 1.0,
            },
        );
        let sys = ContactDynamicalSystem::from_ham(h, 5e-3)?;
        let params = PipelineParams::darboux_default(&chart);
        let eps = 0.3;
        let out = synthesize(
            SynthesisInput::Single(sys),
            &Schedule::default(),
            SynthesisMode::NearIdentity,
            eps,
            &params,
        )?;
        let tr = out.trace;
        assert!(
            tr.time_one_error <= 3.0 * tr.integrator_tolerance,
            "time-one map drift {} vs 3x tolerance {}",
            tr.time_one_error,
            3.0 * tr.integrator_tolerance
        );
        assert!(
            tr.final_norm_inf < tr.input_norm_1inf + eps,
            "sup-norm bound: {} vs {}",
            tr.final_norm_inf,
            tr.input_norm_1inf + eps
        );
        for r in &tr.stages {
            assert!(r.transition_norm_1inf < r.transition_bound);
            assert!(r.l_norm_inf <= r.l_bound);
            assert!(r.m_norm_inf <= r.m_bound);
            assert!(
                r.n_norm_inf <= r.n_bound,
                "stage {} slot norm {} vs 2^(1-i) = {}",
                r.index,
                r.n_norm_inf,
                r.n_bound
            );
            assert!((r.n_bound - 0.5f64.powi(r.index as i32 - 1)).abs() < 1e-15);
        }
        for row in &tr.chain {
            assert!(row.pass, "chain inequality {row:?}");
        }
        assert!(tr.knot_continuity <= 1e-9);
        Ok(format!(
            "time-one drift {:.2e} (3x tol {:.2e}); sup norm {:.4} < {:.4}; {} stage records all within bounds",
            tr.time_one_error,
            3.0 * tr.integrator_tolerance,
            tr.final_norm_inf,
            tr.input_norm_1inf + eps,
            tr.stages.len()
        ))
    };
    c.finish(run().unwrap());
}

// ---------------------------------------------------------------------------
// 7. closed form versus integration for the rotation family
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_closed_form_vs_integration() {
    let c = Criterion::start("7 rotation family closed form vs integration", 120.0);
    let run = || -> Result<String> {
        let family = rotation_family();
        let chart = &family.chart;
        let ham = family.hamiltonian(Some(0));
        let fm = integrate_flow(contact_vector_field(ham), None, 1e-4)?;
        let mut rng = SplitMix64::new(71);
        let mut worst = 0.0f64;
        let u0 = family.invariance_trunc[0];
        let mut seeds = Vec::new();
        for _ in 0..1000 {
            let r = rng.range(0.05, 1.0);
            let th = rng.range(0.0, TAU);
            let z = rng.range(-0.9 * u0, 0.9 * u0);
            seeds.push(chart.to_working(&[r, th, z]));
        }
        for seed in &seeds {
            let direct = fm.iso.eval_many(&[0.5, 1.0], seed)?;
            for (t, s) in [0.5, 1.0].iter().zip(direct) {
                let closed = family.closed_form_working(Some(0), *t, seed)?;
                worst = worst.max(chart.distance(&s.point, &closed));
            }
        }
        assert!(worst <= 1e-6, "closed form vs integration: {worst:.3e}");

        // radii are untouched bit-exactly by the polar closed form
        for i in 0..200 {
            let r = 0.01 + 0.99 * i as f64 / 200.0;
            let p = [r, 1.3, 0.2];
            let img = family.closed_form_polar(Some(0), 1.0, &p)?;
            assert_eq!(img[0].to_bits(), p[0].to_bits(), "radius changed at r={r}");
        }

        // truncation diagnostics: stabilization, radial bounds, gap bounds
        let mut diag_seeds = Vec::new();
        for _ in 0..120 {
            let r = rng.range(0.02, 0.9);
            let th = rng.range(0.0, TAU);
            diag_seeds.push(chart.to_working(&[r, th, rng.range(-1.0, 1.0)]));
        }
        let d = truncation_sequence_diagnostics(&family, &diag_seeds, 1e-3)?;
        for row in &d.rows {
            assert!(row.sup_ham_diff <= row.ham_diff_bound + 1e-12);
            assert_eq!(
                row.stabilized_sup, 0.0,
                "flows must be identical beyond radius {}",
                row.stabilized_radius
            );
        }
        assert!(d.radial_ratio_max <= d.radial_bound.exp());
        assert!(d.radial_ratio_min >= (-d.radial_bound).exp());
        for w in d.invariance_widths.windows(2) {
            assert!(w[0] >= w[1], "invariant slabs must be nested");
        }
        assert!(*d.invariance_widths.last().unwrap() >= d.invariance_limit);
        Ok(format!(
            "flow match {worst:.2e} (tol 1e-6) on 1000 seeds; radii bit-exact; {} truncation pairs stabilized exactly, radial ratio in [{:.3}, {:.3}] within e^[-b,b] = [{:.3}, {:.3}]",
            d.rows.len(),
            d.radial_ratio_min,
            d.radial_ratio_max,
            (-d.radial_bound).exp(),
            d.radial_bound.exp()
        ))
    };
    c.finish(run().unwrap());
}

// ---------------------------------------------------------------------------
// 8. non-Lipschitz certificate
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_certificate() {
    let c = Criterion::start("8 non-Lipschitz certificate", 30.0);
    let run = || -> Result<String> {
        let family = rotation_family();
        let mut count = 0u64;
        let mut prev_quotient = 0.0f64;
        let mut min_margin = f64::MAX;
        let mut smallest = f64::MAX;
        let total = lipschitz_certificate_scan(&family, 0.5, u64::MAX, |row| {
            count += 1;
            assert!(row.gap_ok, "gap condition at k={}", row.k);
            assert!(
                row.quotient > row.bound,
                "quotient {} <= bound {} at k={}",
                row.quotient,
                row.bound,
                row.k
            );
            assert!(
                row.quotient > prev_quotient,
                "quotient must grow at k={}",
                row.k
            );
            prev_quotient = row.quotient;
            min_margin = min_margin.min(row.quotient / row.bound);
            smallest = smallest.min(row.s_k);
        })?;
        assert_eq!(count, total);
        assert!(smallest >= 1e-8, "float floor respected");
        Ok(format!(
            "{count} usable indices down to radius {smallest:.2e}; quotients strictly increasing, min quotient/bound margin {min_margin:.2}"
        ))
    };
    c.finish(run().unwrap());
}

// ---------------------------------------------------------------------------
// 9. conjugate fields example
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_conjugate_fields() {
    let c = Criterion::start("9 conjugate fields", 120.0);
    let run = || -> Result<String> {
        let family = rotation_family();
        let pair = conjugate_fields_example(&family, 0.4, 0.8, 1.2, 1.8)?;
        let chart = &family.chart;
        let mut rng = SplitMix64::new(31);
        let mut seeds = Vec::new();
        for _ in 0..1000 {
            let r = rng.range(0.4, 1.5);
            let th = rng.range(0.0, TAU);
            seeds.push(chart.to_working(&[r, th, rng.range(-0.3, 0.3)]));
        }
        let times: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        let res = pair.conjugacy_residual(&seeds, &times, 1e-3)?;
        assert!(res <= 1e-4, "conjugacy residual {res:.3e}");

        // level sets of the quadratic exponent are 4:1 ellipses
        let mut worst_ratio = 0.0f64;
        for &cval in &[0.25, 0.5, 1.0, 2.0, 4.0] {
            let ratio = contact_dynamics::nonsmooth::elliptic_level_radius(
                cval,
                std::f64::consts::FRAC_PI_2,
            ) / contact_dynamics::nonsmooth::elliptic_level_radius(cval, 0.0);
            worst_ratio = worst_ratio.max((ratio - 4.0).abs());
        }
        assert!(worst_ratio <= 1e-12);
        Ok(format!(
            "conjugacy residual {res:.2e} (tol 1e-4) over 1000 seeds x 10 times; level-set axis ratio 4 within {worst_ratio:.1e}"
        ))
    };
    c.finish(run().unwrap());
}

// ---------------------------------------------------------------------------
// 10. energy properties
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_energy() {
    let c = Criterion::start("10 energy properties", 120.0);
    let run = || -> Result<String> {
        // the identity has zero energy: the zero system witnesses the bound
        let t3 = Chart::torus3().unwrap();
        let zero = ContactDynamicalSystem::from_ham(
            Hamiltonian::closed_form(t3.clone(), Arc::new(ConstantHam(0.0)), (0.0, 1.0), None),
            1e-2,
        )?;
        let est = energy_upper_bound(
            &|p: &[f64]| Ok(p.to_vec()),
            &[zero],
            NormKind::L1Inf,
            &GridSpec::new(6, 8),
            1e-9,
        )?;
        assert_eq!(est.upper_bound, 0.0);

        // the rotation flow displaces an annular sector
        let mk_family = |a: f64| -> Result<Arc<RotationFamily>> {
            Ok(Arc::new(RotationFamily::new(
                Chart::darboux(1, 2.5, 4.0).unwrap(),
                RhoProfile {
                    exponent: a,
                    r_inner: 0.2,
                    r_outer: 0.8,
                    truncations: vec![0.15],
                },
                Plateau::new(2.0, 3.0),
            )?))
        };
        let sector = DomainBox::new(
            vec![[0.25, 0.4], [0.0, std::f64::consts::FRAC_PI_2], [-0.05, 0.05]],
            vec![false, false, false],
        )?;
        let mut displacing = Vec::new();
        for a in [0.8, 0.9, 1.0, 1.1, 1.2] {
            let fam = mk_family(a)?;
            let sys = ContactDynamicalSystem::from_ham(fam.hamiltonian(Some(0)), 2e-3)?;
            let disp = displacement_check(&sys.flow, &sector, &GridSpec::new(5, 4))?;
            assert!(disp, "exponent {a} flow must displace the sector");
            displacing.push(sys);
        }

        // empirical displacement-energy floor; the vertex grids nest under
        // doubling, so one refinement must not lower the floor by over 5%
        let coarse = energy_capacity_envelope(&displacing, NormKind::L1Inf, &GridSpec::new(12, 16))?;
        let fine = energy_capacity_envelope(&displacing, NormKind::L1Inf, &GridSpec::new(24, 16))?;
        assert!(coarse > 0.0 && fine > 0.0);
        let decrease = (coarse - fine) / coarse;
        assert!(
            decrease <= 0.05,
            "floor decreased by {:.1}% under refinement",
            100.0 * decrease
        );
        Ok(format!(
            "identity energy bound 0; 5 displacing systems; energy floor {coarse:.4} -> {fine:.4} under refinement (decrease {:.2}% <= 5%)",
            100.0 * decrease.max(0.0)
        ))
    };
    c.finish(run().unwrap());
}
