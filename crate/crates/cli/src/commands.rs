use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use killing_core::exec::Strategy;
use killing_core::geodesic::{
    integrate_ensemble, monitor_kt, monitor_ky, random_initial_conditions, Drift, GeodesicTrace,
};
use killing_core::geometry::{classify, exterior_derivative};
use killing_core::killing::{
    build_kt_basis, build_ky_basis, kt_dim, kt_oracle_dim, kt_residual, ky_dim, ky_oracle_dim, ky_residual,
    max_abs_over, KT_DIM_FORMULA, KT_DIM_PRINTED,
};
use killing_core::riemannian::{build_ckt_basis, codifferential, conformal_residual, decompose};
use killing_core::tensor::TensorField;

use crate::spec::{Manifold, ManifoldSpec};
use crate::tensor_file::{encode, Element, Kind, TensorFile};

const GEODESICS: usize = 10;
const DURATION: f64 = 1.0;
const STEP: f64 = 1e-3;

/// Overrides shared by the spec-driven commands.
pub struct Common {
    pub spec: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub points: Option<usize>,
}

struct Loaded {
    manifold: Manifold,
    seed: u64,
    tol: f64,
    points: Vec<Vec<f64>>,
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<Loaded> {
        let manifold = ManifoldSpec::load(&self.spec)?.build()?;
        let seed = self.seed.unwrap_or(manifold.spec.seed);
        let tol = self.tol.unwrap_or(manifold.spec.tolerance);
        ensure!(tol > 0.0, "--tol must be positive");
        let count = self.points.unwrap_or(manifold.spec.sample_count);
        ensure!(count > 0, "--points must be positive");
        let points = manifold.points(count, seed);
        Ok(Loaded {
            manifold,
            seed,
            tol,
            points,
            out: self.out.clone(),
        })
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ClassifyOutput {
    spec: String,
    n: usize,
    equiaffine: bool,
    ricci_flat: bool,
    projectively_flat: bool,
    equiprojective: bool,
    residuals: Residuals,
    tolerance: f64,
    seed: u64,
    points_used: usize,
    points_skipped: usize,
}

#[derive(Serialize)]
struct Residuals {
    volume: f64,
    ricci_asymmetry: f64,
    ricci: f64,
    weyl: f64,
    cotton: f64,
}

pub fn cmd_classify(common: &Common) -> Result<bool> {
    let cx = common.load()?;
    let r = classify(&cx.manifold.structure, &cx.points, cx.tol)?;
    emit(
        &ClassifyOutput {
            spec: cx.manifold.spec.name.clone(),
            n: cx.manifold.n(),
            equiaffine: r.equiaffine,
            ricci_flat: r.ricci_flat,
            projectively_flat: r.projectively_flat,
            equiprojective: r.equiprojective,
            residuals: Residuals {
                volume: r.residuals.volume,
                ricci_asymmetry: r.residuals.ricci_asymmetry,
                ricci: r.residuals.ricci,
                weyl: r.residuals.weyl,
                cotton: r.residuals.cotton,
            },
            tolerance: r.tolerance,
            seed: cx.seed,
            points_used: r.points_used,
            points_skipped: r.points_skipped,
        },
        cx.out.as_deref(),
    )?;
    Ok(true)
}

/// PDE residual of one field for the given kind.
fn residual(cx: &Loaded, kind: Kind, field: &TensorField) -> Result<f64> {
    let gamma = &cx.manifold.structure.connection;
    Ok(match kind {
        Kind::Ky => ky_residual(field, gamma, &cx.points)?,
        Kind::Kt => kt_residual(field, gamma, &cx.points)?,
        Kind::Ckt => conformal_residual(field, &cx.manifold.model()?, &cx.points)?,
    })
}

pub fn cmd_basis(common: &Common, kind: Kind, p: usize) -> Result<bool> {
    let cx = common.load()?;
    let n = cx.manifold.n();
    let (psi, elements): (_, Vec<(String, TensorField)>) = match kind {
        Kind::Ky => {
            let psi = cx.manifold.psi()?;
            let b = build_ky_basis(n, p, &psi)?;
            (
                psi,
                b.elements
                    .into_iter()
                    .map(|e| (e.provenance.to_string(), e.field))
                    .collect(),
            )
        }
        Kind::Kt => {
            let psi = cx.manifold.psi()?;
            let b = build_kt_basis(n, p, &psi)?;
            (
                psi,
                b.elements
                    .into_iter()
                    .map(|e| (e.provenance.to_string(), e.field))
                    .collect(),
            )
        }
        Kind::Ckt => {
            let model = cx.manifold.model()?;
            let b = build_ckt_basis(&model, p)?;
            (
                model.psi.clone(),
                b.into_iter().map(|e| (e.provenance.to_string(), e.field)).collect(),
            )
        }
    };
    let mut worst = 0.0_f64;
    for (_, f) in &elements {
        worst = worst.max(residual(&cx, kind, f)?);
    }
    let file = TensorFile {
        n,
        p,
        kind,
        psi: Some(psi.to_string()),
        elements: elements
            .iter()
            .map(|(provenance, f)| Element {
                provenance: provenance.clone(),
                components: encode(f, kind),
            })
            .collect(),
        residual_max: Some(worst),
    };
    emit(&file, cx.out.as_deref())?;
    Ok(worst <= cx.tol)
}

fn check_header(file: &TensorFile, n: usize, kind: Option<Kind>, p: Option<usize>) -> Result<()> {
    ensure!(file.n == n, "tensor file has n = {}, spec has n = {n}", file.n);
    if let Some(k) = kind {
        ensure!(
            k == file.kind,
            "--kind {k:?} disagrees with the tensor file ({:?})",
            file.kind
        );
    }
    if let Some(p) = p {
        ensure!(p == file.p, "--p {p} disagrees with the tensor file (p = {})", file.p);
    }
    ensure!(!file.elements.is_empty(), "tensor file has no elements");
    Ok(())
}

#[derive(Serialize)]
struct VerifyElement {
    provenance: String,
    residual: f64,
    drift: Option<f64>,
    passed: bool,
}

#[derive(Serialize)]
struct VerifyOutput {
    spec: String,
    kind: Kind,
    p: usize,
    tolerance: f64,
    drift_tolerance: f64,
    seed: u64,
    points: usize,
    geodesics: usize,
    step: f64,
    duration: f64,
    elements: Vec<VerifyElement>,
    passed: bool,
}

pub struct VerifyArgs {
    pub tensor: PathBuf,
    pub kind: Option<Kind>,
    pub p: Option<usize>,
    pub drift_tol: f64,
    pub csv: Option<PathBuf>,
}

fn traces(cx: &Loaded, frames: usize) -> Result<Vec<GeodesicTrace>> {
    let domain = &cx.manifold.domain;
    let speed = 0.25
        * domain
            .bounds()
            .iter()
            .map(|(lo, hi)| hi - lo)
            .fold(f64::INFINITY, f64::min);
    let starts = random_initial_conditions(domain, GEODESICS, cx.seed, speed, frames);
    Ok(integrate_ensemble(
        &cx.manifold.structure.connection,
        &starts,
        DURATION,
        STEP,
        Some(domain),
        Strategy::default(),
    )?)
}

pub fn cmd_verify(common: &Common, args: &VerifyArgs) -> Result<bool> {
    let cx = common.load()?;
    ensure!(args.drift_tol > 0.0, "--drift-tol must be positive");
    let file = TensorFile::load(&args.tensor)?;
    check_header(&file, cx.manifold.n(), args.kind, args.p)?;
    let fields = file.fields()?;
    let traces = match file.kind {
        Kind::Ky | Kind::Kt => traces(&cx, file.p.saturating_sub(1))?,
        // conformal Killing forms carry no first integral along geodesics
        Kind::Ckt => Vec::new(),
    };
    let mut elements = Vec::new();
    let mut monitors = Vec::new();
    for (provenance, field) in &fields {
        let r = residual(&cx, file.kind, field)?;
        let drift = match file.kind {
            Kind::Ky | Kind::Kt => {
                let mut worst = 0.0_f64;
                for (k, t) in traces.iter().enumerate() {
                    let d: Drift = if file.kind == Kind::Ky {
                        monitor_ky(field, t)?
                    } else {
                        monitor_kt(field, t)?
                    };
                    worst = worst.max(d.relative);
                    if k == 0 {
                        monitors.push((provenance.clone(), d.series));
                    }
                }
                Some(worst)
            }
            Kind::Ckt => None,
        };
        let passed = r <= cx.tol && drift.is_none_or(|d| d <= args.drift_tol);
        elements.push(VerifyElement {
            provenance: provenance.clone(),
            residual: r,
            drift,
            passed,
        });
    }
    if let Some(path) = &args.csv {
        let Some(first) = traces.first() else {
            bail!("--csv needs a ky or kt tensor file");
        };
        let mut trace = first.clone();
        for (name, series) in monitors {
            trace.add_monitor(name, series);
        }
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        fs::write(path, buf).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let passed = elements.iter().all(|e| e.passed);
    emit(
        &VerifyOutput {
            spec: cx.manifold.spec.name.clone(),
            kind: file.kind,
            p: file.p,
            tolerance: cx.tol,
            drift_tolerance: args.drift_tol,
            seed: cx.seed,
            points: cx.points.len(),
            geodesics: traces.len(),
            step: STEP,
            duration: DURATION,
            elements,
            passed,
        },
        cx.out.as_deref(),
    )?;
    Ok(passed)
}

#[derive(Serialize)]
struct DimsRow {
    n: usize,
    p: usize,
    ky_closed: Option<u128>,
    ky_oracle: Option<usize>,
    kt_closed: u128,
    kt_oracle: usize,
    matches: bool,
}

#[derive(Serialize)]
struct DimsOutput {
    ky_formula: &'static str,
    kt_formula: &'static str,
    kt_formula_printed: &'static str,
    rows: Vec<DimsRow>,
    all_match: bool,
}

pub fn cmd_dims(n_max: usize, p_max: usize, text: bool, out: Option<&Path>) -> Result<bool> {
    ensure!(n_max >= 2, "--n-max must be at least 2");
    ensure!(p_max >= 1, "--p-max must be at least 1");
    let mut rows = Vec::new();
    for n in 2..=n_max {
        for p in 1..=p_max {
            let (ky_closed, ky_oracle) = if p < n {
                (Some(ky_dim(n, p)?), Some(ky_oracle_dim(n, p)?))
            } else {
                (None, None)
            };
            let kt_closed = kt_dim(n, p)?;
            let kt_oracle = kt_oracle_dim(n, p)?;
            let matches = ky_closed == ky_oracle.map(|v| v as u128) && kt_closed == kt_oracle as u128;
            rows.push(DimsRow {
                n,
                p,
                ky_closed,
                ky_oracle,
                kt_closed,
                kt_oracle,
                matches,
            });
        }
    }
    let all_match = rows.iter().all(|r| r.matches);
    let output = DimsOutput {
        ky_formula: "(n+1)! / ((p+1)! (n-p)!)",
        kt_formula: KT_DIM_FORMULA,
        kt_formula_printed: KT_DIM_PRINTED,
        rows,
        all_match,
    };
    if text {
        let mut s = format!(
            "ky: {}\nkt: {}\nkt (as printed): {}\n",
            output.ky_formula, output.kt_formula, output.kt_formula_printed
        );
        s.push_str(&format!(
            "{:>3} {:>3} {:>10} {:>10} {:>10} {:>10}  ok\n",
            "n", "p", "ky", "ky_oracle", "kt", "kt_oracle"
        ));
        let show = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        for r in &output.rows {
            s.push_str(&format!(
                "{:>3} {:>3} {:>10} {:>10} {:>10} {:>10}  {}\n",
                r.n,
                r.p,
                show(r.ky_closed.map(|v| v.to_string())),
                show(r.ky_oracle.map(|v| v.to_string())),
                r.kt_closed,
                r.kt_oracle,
                if r.matches { "yes" } else { "NO" }
            ));
        }
        match out {
            Some(path) => fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))?,
            None => io::stdout().write_all(s.as_bytes())?,
        }
    } else {
        emit(&output, out)?;
    }
    Ok(all_match)
}

#[derive(Serialize)]
struct Coefficient {
    provenance: String,
    value: f64,
}

#[derive(Serialize)]
struct DecomposeElement {
    provenance: String,
    killing_yano: Vec<Coefficient>,
    closed: Vec<Coefficient>,
    relative_residual: f64,
    is_conformal_killing: bool,
    /// max |d*ω| of the Killing-Yano part
    codifferential_max: f64,
    /// max |dθ| of the closed part
    exterior_derivative_max: f64,
}

#[derive(Serialize)]
struct DecomposeOutput {
    spec: String,
    n: usize,
    p: usize,
    curvature: f64,
    tolerance: f64,
    seed: u64,
    points: usize,
    elements: Vec<DecomposeElement>,
    passed: bool,
}

pub fn cmd_decompose(common: &Common, tensor: &Path, p: Option<usize>) -> Result<bool> {
    let cx = common.load()?;
    let model = cx.manifold.model()?;
    let file = TensorFile::load(tensor)?;
    check_header(&file, cx.manifold.n(), None, p)?;
    ensure!(file.kind != Kind::Kt, "decompose takes skew forms (kind ky or ckt)");
    let mut elements = Vec::new();
    for (provenance, field) in file.fields()? {
        let d = decompose(&field, &model, &cx.points, cx.tol)?;
        let (mut ky, mut closed) = (Vec::new(), Vec::new());
        for (prov, value) in d.coefficients {
            let c = Coefficient {
                provenance: prov.to_string(),
                value,
            };
            if prov.is_closed() {
                closed.push(c);
            } else {
                ky.push(c);
            }
        }
        let co = codifferential(&d.killing_yano, &model)?;
        let codifferential_max = max_abs_over(co.components(), &cx.points, Strategy::default())?;
        let ext = exterior_derivative(&d.closed);
        let exterior_derivative_max = max_abs_over(ext.components(), &cx.points, Strategy::default())?;
        elements.push(DecomposeElement {
            provenance,
            killing_yano: ky,
            closed,
            relative_residual: d.relative_residual,
            is_conformal_killing: d.is_conformal_killing,
            codifferential_max,
            exterior_derivative_max,
        });
    }
    let passed = elements.iter().all(|e| e.is_conformal_killing);
    emit(
        &DecomposeOutput {
            spec: cx.manifold.spec.name.clone(),
            n: cx.manifold.n(),
            p: file.p,
            curvature: model.curvature_f64(),
            tolerance: cx.tol,
            seed: cx.seed,
            points: cx.points.len(),
            elements,
            passed,
        },
        cx.out.as_deref(),
    )?;
    Ok(passed)
}
