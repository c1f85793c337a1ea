//! Manifold spec files: flat JSON with expression strings.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::Deserialize;

use killing_core::geometry::{levi_civita, projective_connection_from_psi, AffineConnection, EquiaffineStructure};
use killing_core::riemannian::{beltrami_model, ConstantCurvatureModel};
use killing_core::sampling::DomainBox;
use killing_core::tensor::TensorField;
use killing_core::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpecKind {
    PsiGenerated,
    Metric,
    Connection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub name: String,
    pub n: usize,
    pub kind: SpecKind,
    #[serde(default)]
    pub psi: Option<String>,
    /// `"i,j"` (1-based) to `g_ij`; the other triangle is filled by symmetry.
    #[serde(default)]
    pub metric: Option<BTreeMap<String, String>>,
    /// `"k,i,j"` (1-based) to `Γ^k_ij`; `(i,j)` and `(j,i)` must agree.
    #[serde(default)]
    pub connection: Option<BTreeMap<String, String>>,
    /// Volume density for `connection` specs; defaults to 1.
    #[serde(default)]
    pub eta: Option<String>,
    pub domain: Vec<[f64; 2]>,
    #[serde(default)]
    pub curvature: Option<f64>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_sample_count() -> usize {
    64
}

fn default_tolerance() -> f64 {
    1e-9
}

/// A parsed spec with its structure built.
pub struct Manifold {
    pub spec: ManifoldSpec,
    pub domain: DomainBox,
    pub structure: EquiaffineStructure,
}

pub fn parse_index(key: &str, n: usize, len: usize) -> Result<Vec<usize>> {
    let idx: Vec<usize> = key
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("index `{key}` is not a comma-separated list of integers"))?;
    ensure!(idx.len() == len, "index `{key}` should have {len} entries");
    ensure!(
        idx.iter().all(|&i| (1..=n).contains(&i)),
        "index `{key}` out of range 1..={n}"
    );
    Ok(idx.into_iter().map(|i| i - 1).collect())
}

fn parse_expr(text: &str, n: usize, what: &str) -> Result<ScalarField> {
    ScalarField::parse(text, n).with_context(|| format!("cannot parse {what} `{text}`"))
}

impl ManifoldSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read spec {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid spec {}", path.display()))
    }

    pub fn build(self) -> Result<Manifold> {
        let n = self.n;
        ensure!(n >= 1, "n must be positive");
        ensure!(
            self.domain.len() == n,
            "domain has {} intervals, n = {n}",
            self.domain.len()
        );
        ensure!(self.sample_count > 0, "sample_count must be positive");
        ensure!(self.tolerance > 0.0, "tolerance must be positive");
        if let Some(c) = self.curvature {
            ensure!(c != 0.0 && c.is_finite(), "curvature must be finite and nonzero");
        }
        let domain = DomainBox::new(self.domain.iter().map(|b| (b[0], b[1])).collect())?;
        let structure = match self.kind {
            SpecKind::PsiGenerated => {
                let text = self.psi.as_deref().context("psi-generated spec needs `psi`")?;
                projective_connection_from_psi(&parse_expr(text, n, "psi")?)
            }
            SpecKind::Metric => {
                let comps = self.metric.as_ref().context("metric spec needs `metric`")?;
                let g = symmetric_metric(comps, n)?;
                let lc = levi_civita(&g)?;
                EquiaffineStructure {
                    connection: lc.connection,
                    eta: lc.determinant.sqrt(),
                    psi: None,
                }
            }
            SpecKind::Connection => {
                let comps = self.connection.as_ref().context("connection spec needs `connection`")?;
                let eta = match &self.eta {
                    Some(t) => parse_expr(t, n, "eta")?,
                    None => ScalarField::one(n),
                };
                EquiaffineStructure {
                    connection: symmetric_connection(comps, n)?,
                    eta,
                    psi: None,
                }
            }
        };
        Ok(Manifold {
            spec: self,
            domain,
            structure,
        })
    }
}

fn symmetric_metric(comps: &BTreeMap<String, String>, n: usize) -> Result<TensorField> {
    let mut table = vec![vec![None; n]; n];
    for (key, text) in comps {
        let idx = parse_index(key, n, 2)?;
        let (i, j) = (idx[0].min(idx[1]), idx[0].max(idx[1]));
        if table[i][j].replace(text.as_str()).is_some_and(|old| old != text) {
            bail!(
                "metric component ({},{}) given twice with different values",
                i + 1,
                j + 1
            );
        }
    }
    let mut fields = vec![vec![ScalarField::zero(n); n]; n];
    for i in 0..n {
        for j in i..n {
            if let Some(t) = table[i][j] {
                let f = parse_expr(t, n, "metric component")?;
                fields[i][j] = f.clone();
                fields[j][i] = f;
            }
        }
    }
    Ok(TensorField::from_fn(n, 2, |idx| fields[idx[0]][idx[1]].clone()))
}

fn symmetric_connection(comps: &BTreeMap<String, String>, n: usize) -> Result<AffineConnection> {
    let mut table: BTreeMap<(usize, usize, usize), &str> = BTreeMap::new();
    for (key, text) in comps {
        let idx = parse_index(key, n, 3)?;
        let (k, i, j) = (idx[0], idx[1].min(idx[2]), idx[1].max(idx[2]));
        if let Some(old) = table.insert((k, i, j), text.as_str()) {
            if old != text {
                bail!(
                    "Γ^{}_({},{}) given with two values: the connection must be torsion free",
                    k + 1,
                    i + 1,
                    j + 1
                );
            }
        }
    }
    let mut parsed = BTreeMap::new();
    for (&key, text) in &table {
        parsed.insert(key, parse_expr(text, n, "connection component")?);
    }
    Ok(AffineConnection::new(n, |k, i, j| {
        parsed.get(&(k, i, j)).cloned().unwrap_or_else(|| ScalarField::zero(n))
    }))
}

impl Manifold {
    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        self.domain.halton_points(count, seed)
    }

    /// Gauge `ψ` with `Γ = Γ(ψ)`: the spec's own for psi-generated specs,
    /// otherwise the Beltrami gauge when a curvature is given.
    pub fn psi(&self) -> Result<ScalarField> {
        if let Some(psi) = &self.structure.psi {
            return Ok(psi.clone());
        }
        if self.spec.curvature.is_some() {
            return Ok(self.model()?.psi);
        }
        bail!("Killing-Yano and Killing bases need a psi-generated spec or a `curvature`")
    }

    /// The Beltrami model of the spec's curvature. Its connection must agree
    /// with the spec's at the sample points.
    pub fn model(&self) -> Result<ConstantCurvatureModel> {
        let c = self
            .spec
            .curvature
            .context("this command needs `curvature` in the spec")?;
        let model = beltrami_model(self.n(), c)?;
        let mut worst = 0.0_f64;
        for x in self.points(self.spec.sample_count, self.spec.seed) {
            let a = self.structure.connection.evaluate(&x)?;
            let b = model.connection().evaluate(&x)?;
            worst = a.iter().zip(&b).fold(worst, |m, (s, t)| m.max((s - t).abs()));
        }
        ensure!(
            worst <= 1e-8,
            "spec `{}` is not the Beltrami chart of curvature {c} (connection differs by {worst:.3e})",
            self.spec.name
        );
        Ok(model)
    }
}
