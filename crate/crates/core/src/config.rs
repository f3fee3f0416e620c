//! Configuration: a single structured-text file with named sections.
//! Charts, Hamiltonians, systems, reparameterizations and automorphisms are
//! addressed by name or by expression strings; this module parses, resolves
//! names, and builds the objects.

use crate::chart::{make_chart, Chart, ChartKind, ChartRef, DomainBox, FormScale};
use crate::error::{Error, ParseError, Result};
use crate::expr::{parse_expr, Args, Expr};

use crate::ham::{
    BumpHam, ConstantHam, Hamiltonian, TimeProfile, TorusMode, TorusTrigHam, ZPolyHam,
};
use crate::nonsmooth::{RhoProfile, RotationFamily};
use crate::reparam::ReparamFn;
use crate::smooth::Plateau;
use crate::system::{
    compose, conjugate, group_difference, invert, reparam_system, Automorphism,
    ContactDynamicalSystem,
};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSection {
    pub kind: String,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default)]
    pub z_max: Option<f64>,
    /// Full box as [lo, hi] pairs in display coordinates (overrides
    /// r_max/z_max when given).
    #[serde(default)]
    pub r#box: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub form_scale: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_space")]
    pub space: usize,
    #[serde(default = "default_knots")]
    pub time_knots: usize,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_space() -> usize {
    10
}
fn default_knots() -> usize {
    64
}
fn default_step() -> f64 {
    1e-3
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            space: default_space(),
            time_knots: default_knots(),
            step: default_step(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Option<String>,
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub out: Option<String>,
    /// Extra numeric knobs (depth, eps, a, delta, kmax, k, eps_box ...).
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub mode: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub chart: ChartSection,
    #[serde(default)]
    pub grids: GridSection,
    #[serde(default)]
    pub hamiltonians: BTreeMap<String, String>,
    #[serde(default)]
    pub systems: BTreeMap<String, String>,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

/// Parse the config text; TOML syntax errors carry line/column.
pub fn load_config(text: &str) -> Result<ConfigFile> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| {
        let (line, col) = e
            .span()
            .map(|s| position_of(text, s.start))
            .unwrap_or((0, 0));
        Error::Parse(ParseError {
            line,
            col,
            message: e.message().to_string(),
        })
    })?;
    for (k, v) in &cfg.experiment.tolerances {
        if !(*v > 0.0) {
            return Err(Error::Config(format!("tolerance `{k}` must be positive")));
        }
    }
    Ok(cfg)
}

fn position_of(text: &str, byte: usize) -> (usize, usize) {
    let mut line = 1;
    let mut col = 1;
    for (i, c) in text.char_indices() {
        if i >= byte {
            break;
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

/// Build the chart from its section.
pub fn build_chart(section: &ChartSection) -> Result<ChartRef> {
    let form_scale = match &section.form_scale {
        None => None,
        Some(text) => Some(parse_form_scale(text)?),
    };
    match section.kind.as_str() {
        "darboux" => {
            let n = section.n.unwrap_or(1);
            if let Some(bx) = &section.r#box {
                let dim = 2 * n + 1;
                if bx.len() != dim {
                    return Err(Error::Config(format!(
                        "darboux box needs {dim} intervals, got {}",
                        bx.len()
                    )));
                }
                let mut periodic = vec![false; dim];
                for p in periodic.iter_mut().take(2 * n).skip(n) {
                    *p = true;
                }
                make_chart(
                    ChartKind::DarbouxPolar { n },
                    DomainBox::new(bx.clone(), periodic)?,
                    form_scale,
                )
            } else {
                let r = section.r_max.unwrap_or(1.0);
                let z = section.z_max.unwrap_or(1.0);
                let base = Chart::darboux(n, r, z)?;
                make_chart(base.kind, base.domain.clone(), form_scale)
            }
        }
        "torus3" => {
            let base = Chart::torus3()?;
            make_chart(base.kind, base.domain.clone(), form_scale)
        }
        other => Err(Error::Config(format!("unknown chart kind `{other}`"))),
    }
}

pub fn parse_form_scale(text: &str) -> Result<FormScale> {
    let expr = parse_expr(text)?;
    let Expr::Call { name, args } = &expr else {
        return Err(Error::Config(format!("form scale `{text}` must be a call")));
    };
    let a = Args {
        call: name,
        args,
    };
    match name.as_str() {
        "constant" => Ok(FormScale::Constant(a.number("value", 0).map_err(Error::Parse)?)),
        "zwave" => Ok(FormScale::ZWave(a.number("amp", 0).map_err(Error::Parse)?)),
        other => Err(Error::Unresolved(format!("form scale `{other}`"))),
    }
}

/// Resolved configuration: chart, named Hamiltonians and systems, grids.
pub struct Resolved {
    pub chart: ChartRef,
    pub grids: GridSection,
    pub hamiltonians: BTreeMap<String, Arc<Hamiltonian>>,
    pub systems: BTreeMap<String, ContactDynamicalSystem>,
    pub experiment: ExperimentSection,
}

pub fn resolve(cfg: &ConfigFile) -> Result<Resolved> {
    let chart = build_chart(&cfg.chart)?;
    let mut hams = BTreeMap::new();
    for (name, text) in &cfg.hamiltonians {
        let expr = parse_expr(text)?;
        let ham = build_hamiltonian(&chart, &expr, &hams)
            .map_err(|e| annotate(e, &format!("hamiltonians.{name}")))?;
        hams.insert(name.clone(), ham);
    }
    // systems may reference each other by name; resolve to a fixpoint so
    // definition order does not matter
    let mut systems = BTreeMap::new();
    let mut pending: Vec<(String, Expr)> = cfg
        .systems
        .iter()
        .map(|(name, text)| Ok((name.clone(), parse_expr(text)?)))
        .collect::<Result<_>>()?;
    while !pending.is_empty() {
        let mut next = Vec::new();
        let mut progress = false;
        let mut first_unresolved = None;
        for (name, expr) in pending {
            match build_system(&chart, &expr, &hams, &systems, &cfg.grids) {
                Ok(sys) => {
                    systems.insert(name, sys);
                    progress = true;
                }
                Err(Error::Unresolved(what)) => {
                    if first_unresolved.is_none() {
                        first_unresolved =
                            Some(annotate(Error::Unresolved(what), &format!("systems.{name}")));
                    }
                    next.push((name, expr));
                }
                Err(e) => return Err(annotate(e, &format!("systems.{name}"))),
            }
        }
        if !progress {
            return Err(first_unresolved.unwrap());
        }
        pending = next;
    }
    for target in &cfg.experiment.targets {
        if !systems.contains_key(target) && !hams.contains_key(target) {
            return Err(Error::Unresolved(target.clone()));
        }
    }
    Ok(Resolved {
        chart,
        grids: cfg.grids,
        hamiltonians: hams,
        systems,
        experiment: cfg.experiment.clone(),
    })
}

fn annotate(e: Error, ctx: &str) -> Error {
    match e {
        Error::Unresolved(what) => Error::Unresolved(format!("{what} (in {ctx})")),
        Error::Config(msg) => Error::Config(format!("{msg} (in {ctx})")),
        other => other,
    }
}

fn time_profile(expr: Option<&Expr>) -> Result<TimeProfile> {
    match expr {
        None => Ok(TimeProfile::One),
        Some(Expr::Call { name, args }) => {
            let a = Args {
                call: name,
                args,
            };
            match name.as_str() {
                "one" => Ok(TimeProfile::One),
                "poly" => {
                    let coeffs = a.list("coeffs", 0).map_err(Error::Parse)?;
                    Ok(TimeProfile::Poly(coeffs))
                }
                "trig" => Ok(TimeProfile::Trig {
                    mean: a.number_or("mean", 0, 0.0).map_err(Error::Parse)?,
                    cos_amp: a.number_or("cos", 1, 0.0).map_err(Error::Parse)?,
                    sin_amp: a.number_or("sin", 2, 0.0).map_err(Error::Parse)?,
                    freq: a.number_or("freq", 3, 1.0).map_err(Error::Parse)?,
                }),
                other => Err(Error::Unresolved(format!("time profile `{other}`"))),
            }
        }
        Some(_) => Err(Error::Config("time profile must be a call".into())),
    }
}

/// Builtin closed-form Hamiltonians addressable by name + parameters.
pub fn build_hamiltonian(
    chart: &ChartRef,
    expr: &Expr,
    named: &BTreeMap<String, Arc<Hamiltonian>>,
) -> Result<Arc<Hamiltonian>> {
    match expr {
        Expr::Ident(name) => named
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Unresolved(name.clone())),
        Expr::Call { name, args } => {
            let a = Args {
                call: name,
                args,
            };
            match name.as_str() {
                "constant" => {
                    let c = a.number("value", 0).map_err(Error::Parse)?;
                    Ok(Hamiltonian::closed_form(
                        chart.clone(),
                        Arc::new(ConstantHam(c)),
                        (0.0, 1.0),
                        None,
                    ))
                }
                "reeb" => Ok(Hamiltonian::closed_form(
                    chart.clone(),
                    Arc::new(ConstantHam(a.number_or("speed", 0, 1.0).map_err(Error::Parse)?)),
                    (0.0, 1.0),
                    None,
                )),
                "bump" => {
                    let center_display = a.list("center", usize::MAX).map_err(Error::Parse)?;
                    if center_display.len() != chart.dim() {
                        return Err(Error::Config(format!(
                            "bump center needs {} coordinates",
                            chart.dim()
                        )));
                    }
                    let time = time_profile(a.named("time"))?;
                    Ok(Hamiltonian::closed_form(
                        chart.clone(),
                        Arc::new(BumpHam {
                            center: chart.to_working(&center_display),
                            radius: a.number("radius", usize::MAX).map_err(Error::Parse)?,
                            amp: a.number("amp", usize::MAX).map_err(Error::Parse)?,
                            time,
                            wrap: matches!(chart.kind, ChartKind::Torus3),
                        }),
                        (0.0, 1.0),
                        None,
                    ))
                }
                "waves" => {
                    if !matches!(chart.kind, ChartKind::Torus3) {
                        return Err(Error::Config("waves live on the torus chart".into()));
                    }
                    let Some(Expr::List(rows)) = a.named("modes") else {
                        return Err(Error::Config("waves needs modes=[[...]]".into()));
                    };
                    let mut modes = Vec::new();
                    for row in rows {
                        let vals = row
                            .as_list()
                            .ok_or_else(|| Error::Config("each mode is a list".into()))?;
                        if vals.len() != 5 {
                            return Err(Error::Config(
                                "mode rows are [amp, kx, ky, kz, phase]".into(),
                            ));
                        }
                        modes.push(TorusMode {
                            amp: vals[0],
                            kx: vals[1] as i32,
                            ky: vals[2] as i32,
                            kz: vals[3] as i32,
                            phase: vals[4],
                        });
                    }
                    let time = time_profile(a.named("time"))?;
                    Ok(Hamiltonian::closed_form(
                        chart.clone(),
                        Arc::new(TorusTrigHam { modes, time }),
                        (0.0, 1.0),
                        None,
                    ))
                }
                "zpoly" => {
                    let coeffs = a.list("coeffs", 0).map_err(Error::Parse)?;
                    let time = time_profile(a.named("time"))?;
                    Ok(Hamiltonian::closed_form(
                        chart.clone(),
                        Arc::new(ZPolyHam { coeffs, time }),
                        (0.0, 1.0),
                        None,
                    ))
                }
                "rotation" => {
                    let family = rotation_family(chart, &a)?;
                    let trunc = a.named("eps").map(|_| 0usize);
                    Ok(family.hamiltonian(trunc))
                }
                other => Err(Error::Unresolved(format!("hamiltonian builtin `{other}`"))),
            }
        }
        _ => Err(Error::Config(
            "expected a Hamiltonian name or builtin call".into(),
        )),
    }
}

/// The rotation family by exponent and cutoff parameters.
pub fn rotation_family(chart: &ChartRef, a: &Args) -> Result<Arc<RotationFamily>> {
    let exponent = a.number_or("a", usize::MAX, 1.0).map_err(Error::Parse)?;
    let r_inner = a.number_or("inner", usize::MAX, 0.2).map_err(Error::Parse)?;
    let r_outer = a.number_or("outer", usize::MAX, 0.8).map_err(Error::Parse)?;
    let plateau = a
        .number_or("plateau", usize::MAX, 2.0)
        .map_err(Error::Parse)?;
    let support = a
        .number_or("support", usize::MAX, 3.0)
        .map_err(Error::Parse)?;
    let truncations = match a.named("eps") {
        Some(Expr::Number(v)) => vec![*v],
        Some(e) => e
            .as_list()
            .ok_or_else(|| Error::Config("rotation eps must be a number or list".into()))?,
        None => vec![],
    };
    Ok(Arc::new(RotationFamily::new(
        chart.clone(),
        RhoProfile {
            exponent,
            r_inner,
            r_outer,
            truncations,
        },
        Plateau::new(plateau, support),
    )?))
}

fn build_reparam(expr: &Expr) -> Result<ReparamFn> {
    match expr {
        Expr::Ident(name) if name == "identity" => Ok(ReparamFn::identity()),
        Expr::Ident(name) if name == "constspeed" => Err(Error::Config(
            "constspeed needs a target system; use constant_speed on the Hamiltonian".into(),
        )),
        Expr::Call { name, args } => {
            let a = Args {
                call: name,
                args,
            };
            match name.as_str() {
                "linear" => {
                    let lo = a.number("a", 0).map_err(Error::Parse)?;
                    let hi = a.number("b", 1).map_err(Error::Parse)?;
                    if lo >= hi {
                        return Err(Error::Config("linear(a, b) needs a < b".into()));
                    }
                    Ok(ReparamFn::linear_map(lo, hi))
                }
                "scale" => Ok(ReparamFn::scale(a.number("s", 0).map_err(Error::Parse)?)),
                "flat" => {
                    let delta = a.number("delta", 0).map_err(Error::Parse)?;
                    if !(delta > 0.0 && delta < 0.5) {
                        return Err(Error::Config("flat(delta) needs 0 < delta < 1/2".into()));
                    }
                    Ok(ReparamFn::boundary_flat(delta))
                }
                "sineloop" => Ok(ReparamFn::sine_loop(
                    a.number("height", 0).map_err(Error::Parse)?,
                )),
                other => Err(Error::Unresolved(format!("reparameterization `{other}`"))),
            }
        }
        _ => Err(Error::Config("expected a reparameterization".into())),
    }
}

fn build_automorphism(chart: &ChartRef, expr: &Expr, systems: &BTreeMap<String, ContactDynamicalSystem>) -> Result<Automorphism> {
    match expr {
        Expr::Ident(name) if name == "identity" => Ok(Automorphism::identity(chart.clone())),
        Expr::Ident(name) => {
            let sys = systems
                .get(name)
                .ok_or_else(|| Error::Unresolved(name.clone()))?;
            Ok(Automorphism::time_one(sys))
        }
        Expr::Call { name, args } => {
            let a = Args {
                call: name,
                args,
            };
            match name.as_str() {
                "translate" => {
                    let mut offset = vec![0.0; chart.dim()];
                    if let Ok(dz) = a.number("dz", usize::MAX) {
                        offset[chart.dim() - 1] = dz;
                    }
                    if let Ok(dx) = a.number("dx", usize::MAX) {
                        offset[0] = dx;
                    }
                    if let Ok(dy) = a.number("dy", usize::MAX) {
                        offset[1] = dy;
                    }
                    Automorphism::translation(chart.clone(), offset)
                }
                "scale" => Automorphism::scaling(
                    chart.clone(),
                    a.number("lambda", 0).map_err(Error::Parse)?,
                ),
                "timeone" => {
                    let Some(Expr::Ident(sys_name)) = a.positional(0) else {
                        return Err(Error::Config("timeone(<system name>)".into()));
                    };
                    let sys = systems
                        .get(sys_name)
                        .ok_or_else(|| Error::Unresolved(sys_name.clone()))?;
                    Ok(Automorphism::time_one(sys))
                }
                other => Err(Error::Unresolved(format!("automorphism `{other}`"))),
            }
        }
        _ => Err(Error::Config("expected an automorphism".into())),
    }
}

/// System expressions over named builtins: sys(H), identity(), inv, conj,
/// diff, reparam, and `*` for composition.
pub fn build_system(
    chart: &ChartRef,
    expr: &Expr,
    hams: &BTreeMap<String, Arc<Hamiltonian>>,
    systems: &BTreeMap<String, ContactDynamicalSystem>,
    grids: &GridSection,
) -> Result<ContactDynamicalSystem> {
    match expr {
        Expr::Ident(name) => systems
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Unresolved(name.clone())),
        Expr::Compose(a, b) => {
            let sa = build_system(chart, a, hams, systems, grids)?;
            let sb = build_system(chart, b, hams, systems, grids)?;
            compose(&sa, &sb)
        }
        Expr::Call { name, args } => {
            let a = Args {
                call: name,
                args,
            };
            match name.as_str() {
                "sys" => {
                    let Some(inner) = a.positional(0) else {
                        return Err(Error::Config("sys(<hamiltonian>)".into()));
                    };
                    let ham = build_hamiltonian(chart, inner, hams)?;
                    ContactDynamicalSystem::from_ham(ham, grids.step)
                }
                "identity" => ContactDynamicalSystem::identity(chart.clone()),
                "inv" => {
                    let Some(inner) = a.positional(0) else {
                        return Err(Error::Config("inv(<system>)".into()));
                    };
                    invert(&build_system(chart, inner, hams, systems, grids)?)
                }
                "diff" => {
                    let (Some(x), Some(y)) = (a.positional(0), a.positional(1)) else {
                        return Err(Error::Config("diff(<system>, <system>)".into()));
                    };
                    group_difference(
                        &build_system(chart, x, hams, systems, grids)?,
                        &build_system(chart, y, hams, systems, grids)?,
                    )
                }
                "conj" => {
                    let (Some(x), Some(y)) = (a.positional(0), a.positional(1)) else {
                        return Err(Error::Config("conj(<system>, <automorphism>)".into()));
                    };
                    let sys = build_system(chart, x, hams, systems, grids)?;
                    let aut = build_automorphism(chart, y, systems)?;
                    conjugate(&sys, &aut)
                }
                "reparam" => {
                    let (Some(x), Some(z)) = (a.positional(0), a.positional(1)) else {
                        return Err(Error::Config("reparam(<system>, <zeta>)".into()));
                    };
                    let sys = build_system(chart, x, hams, systems, grids)?;
                    let zeta = build_reparam(z)?;
                    Ok(reparam_system(&sys, zeta))
                }
                _ => {
                    // allow bare Hamiltonian builtins as implicit sys(...)
                    let ham = build_hamiltonian(chart, expr, hams)?;
                    ContactDynamicalSystem::from_ham(ham, grids.step)
                }
            }
        }
        _ => Err(Error::Config("expected a system expression".into())),
    }
}

/// Parse a standalone chart descriptor block (the `[chart]` section of a
/// config, or the bare fields) and build the chart.
pub fn parse_chart_descriptor(text: &str) -> Result<ChartRef> {
    #[derive(Deserialize)]
    struct Wrapper {
        chart: ChartSection,
    }
    let section: ChartSection = match toml::from_str::<Wrapper>(text) {
        Ok(w) => w.chart,
        Err(_) => toml::from_str(text).map_err(|e| {
            let (line, col) = e
                .span()
                .map(|s| position_of(text, s.start))
                .unwrap_or((0, 0));
            Error::Parse(ParseError {
                line,
                col,
                message: e.message().to_string(),
            })
        })?,
    };
    build_chart(&section)
}

/// Serialize a chart back to its config block.
pub fn chart_descriptor(chart: &Chart) -> ChartSection {
    match chart.kind {
        ChartKind::DarbouxPolar { n } => ChartSection {
            kind: "darboux".into(),
            n: Some(n),
            r_max: None,
            z_max: None,
            r#box: Some(chart.domain.intervals.clone()),
            form_scale: chart.form_scale.as_ref().map(|f| f.name()),
        },
        ChartKind::Torus3 => ChartSection {
            kind: "torus3".into(),
            n: None,
            r_max: None,
            z_max: None,
            r#box: None,
            form_scale: chart.form_scale.as_ref().map(|f| f.name()),
        },
    }
}
