//! Basis/tensor JSON: `{n, p, kind, psi, elements: [{provenance,
//! components}], residual_max}` with components keyed by 1-based canonical
//! index tuples.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use killing_core::tensor::{canonical_tuples, sort_with_sign, IndexMode, TensorField};
use killing_core::ScalarField;

use crate::spec::parse_index;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Killing-Yano forms
    Ky,
    /// Killing tensors
    Kt,
    /// conformal Killing forms
    Ckt,
}

impl Kind {
    fn mode(self) -> IndexMode {
        match self {
            Kind::Kt => IndexMode::NonDecreasing,
            Kind::Ky | Kind::Ckt => IndexMode::StrictlyIncreasing,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Element {
    pub provenance: String,
    pub components: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorFile {
    pub n: usize,
    pub p: usize,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<String>,
    pub elements: Vec<Element>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_max: Option<f64>,
}

fn key(idx: &[usize]) -> String {
    idx.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
}

/// Nonzero canonical components of `t` as expression text.
pub fn encode(t: &TensorField, kind: Kind) -> BTreeMap<String, String> {
    canonical_tuples(t.dim(), t.rank(), kind.mode())
        .into_iter()
        .filter_map(|idx| {
            let c = t.component(&idx);
            (!c.is_zero()).then(|| (key(&idx), c.to_string()))
        })
        .collect()
}

/// Rebuilds the full tensor from canonical (or permuted) components,
/// filling the rest by symmetry or antisymmetry.
pub fn decode(components: &BTreeMap<String, String>, n: usize, p: usize, kind: Kind) -> Result<TensorField> {
    let mut canon: BTreeMap<Vec<usize>, ScalarField> = BTreeMap::new();
    for (k, text) in components {
        let idx = parse_index(k, n, p)?;
        let (sorted, sign) = sort_with_sign(&idx);
        let field = ScalarField::parse(text, n).with_context(|| format!("cannot parse component {k}: `{text}`"))?;
        let field = match kind {
            Kind::Kt => field,
            Kind::Ky | Kind::Ckt => {
                ensure!(sign != 0, "component {k} of a form has a repeated index");
                if sign < 0 {
                    -field
                } else {
                    field
                }
            }
        };
        if let Some(old) = canon.insert(sorted, field.clone()) {
            ensure!(
                old.to_string() == field.to_string(),
                "component {k} conflicts with another entry for the same canonical index"
            );
        }
    }
    Ok(TensorField::from_fn(n, p, |idx| {
        let (sorted, sign) = sort_with_sign(idx);
        let Some(c) = canon.get(&sorted) else {
            return ScalarField::zero(n);
        };
        match kind {
            Kind::Kt => c.clone(),
            Kind::Ky | Kind::Ckt => match sign {
                0 => ScalarField::zero(n),
                1 => c.clone(),
                _ => -c,
            },
        }
    }))
}

impl TensorFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read tensor file {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid tensor file {}", path.display()))
    }

    pub fn fields(&self) -> Result<Vec<(String, TensorField)>> {
        self.elements
            .iter()
            .map(|e| Ok((e.provenance.clone(), decode(&e.components, self.n, self.p, self.kind)?)))
            .collect()
    }
}
