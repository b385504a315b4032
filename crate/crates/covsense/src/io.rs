//! Scenario files: JSON documents holding either a classical-quantum
//! scenario or a unitary family with its warden channel.
//!
//! Complex matrices are arrays of rows, each row an array of `[re, im]`
//! pairs. The innocent symbol of a cq scenario is named by `innocent` and is
//! moved to index 0 on load.

use serde::{Deserialize, Serialize};

use crate::geometry::KrausChannel;
use crate::qmat::{c, CMatrix, CVector, DensityOperator};
use crate::scenario::CqScenario;
use crate::unitary_strategy::UnitaryScenario;
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "1.0";

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;
pub type JsonVector = Vec<[f64; 2]>;

/// Optional analysis settings carried alongside a scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    /// Distribution over the non-innocent symbols, in file order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqBody {
    pub params: Vec<String>,
    pub alphabet: Vec<String>,
    pub innocent: String,
    pub dim_bob: usize,
    pub dim_willie: usize,
    /// bob[θ][u]
    pub bob: Vec<Vec<JsonMatrix>>,
    /// willie[θ][u]
    pub willie: Vec<Vec<JsonMatrix>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelBody {
    pub dim_out: usize,
    pub kraus: Vec<JsonMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitaryBody {
    pub params: Vec<String>,
    pub dim: usize,
    pub unitaries: Vec<JsonMatrix>,
    pub willie: ChannelBody,
    pub innocent: JsonVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScenarioBody {
    Cq(CqBody),
    Unitary(UnitaryBody),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema_version: String,
    #[serde(flatten)]
    pub body: ScenarioBody,
    #[serde(default)]
    pub options: AnalysisOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    Cq(CqScenario),
    Unitary(UnitaryScenario),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioDocument {
    pub scenario: Scenario,
    pub options: AnalysisOptions,
}

fn matrix(m: &JsonMatrix, rows: usize, cols: usize, field: &str) -> Result<CMatrix> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse(format!("{field}: expected a {rows}x{cols} matrix")));
    }
    if m.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Parse(format!("{field}: non-finite entry")));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| c(m[i][j][0], m[i][j][1])))
}

fn state(m: &JsonMatrix, d: usize, field: &str) -> Result<DensityOperator> {
    DensityOperator::new(matrix(m, d, d, field)?).map_err(|e| Error::Parse(format!("{field}: {e}")))
}

pub fn matrix_to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn vector_to_json(v: &CVector) -> JsonVector {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn table(
    rows: &[Vec<JsonMatrix>],
    order: &[usize],
    d: usize,
    name: &str,
    n_params: usize,
) -> Result<Vec<Vec<DensityOperator>>> {
    if rows.len() != n_params {
        return Err(Error::Parse(format!("{name}: expected {n_params} rows, one per parameter")));
    }
    rows.iter()
        .enumerate()
        .map(|(t, row)| {
            if row.len() != order.len() {
                return Err(Error::Parse(format!(
                    "{name}[{t}]: expected {} states, one per symbol",
                    order.len()
                )));
            }
            order
                .iter()
                .map(|&u| state(&row[u], d, &format!("{name}[{t}][{u}]")))
                .collect()
        })
        .collect()
}

impl ScenarioFile {
    pub fn into_document(self) -> Result<ScenarioDocument> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "schema_version: unsupported {:?} (expected {SCHEMA_VERSION:?})",
                self.schema_version
            )));
        }
        let scenario = match &self.body {
            ScenarioBody::Cq(b) => {
                let innocent = b
                    .alphabet
                    .iter()
                    .position(|a| *a == b.innocent)
                    .ok_or_else(|| Error::Parse(format!("innocent: {:?} is not in the alphabet", b.innocent)))?;
                let order: Vec<usize> = std::iter::once(innocent)
                    .chain((0..b.alphabet.len()).filter(|&u| u != innocent))
                    .collect();
                let bob = table(&b.bob, &order, b.dim_bob, "bob", b.params.len())?;
                let willie = table(&b.willie, &order, b.dim_willie, "willie", b.params.len())?;
                let alphabet = order.iter().map(|&u| b.alphabet[u].clone()).collect();
                Scenario::Cq(
                    CqScenario::new(b.params.clone(), alphabet, bob, willie)
                        .map_err(|e| Error::Parse(e.to_string()))?,
                )
            }
            ScenarioBody::Unitary(b) => {
                let unitaries = b
                    .unitaries
                    .iter()
                    .enumerate()
                    .map(|(i, m)| matrix(m, b.dim, b.dim, &format!("unitaries[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                let kraus = b
                    .willie
                    .kraus
                    .iter()
                    .enumerate()
                    .map(|(i, m)| matrix(m, b.willie.dim_out, b.dim, &format!("willie.kraus[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                let channel = KrausChannel::new(kraus).map_err(|e| Error::Parse(format!("willie: {e}")))?;
                if b.innocent.len() != b.dim {
                    return Err(Error::Parse(format!("innocent: expected {} amplitudes", b.dim)));
                }
                let innocent = CVector::from_iterator(b.dim, b.innocent.iter().map(|z| c(z[0], z[1])));
                Scenario::Unitary(
                    UnitaryScenario::new(b.params.clone(), unitaries, channel, innocent)
                        .map_err(|e| Error::Parse(e.to_string()))?,
                )
            }
        };
        Ok(ScenarioDocument {
            scenario,
            options: self.options,
        })
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioDocument> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_document()
}

pub fn load_scenario(path: &std::path::Path) -> Result<ScenarioDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn to_file(doc: &ScenarioDocument) -> ScenarioFile {
    let body = match &doc.scenario {
        Scenario::Cq(s) => {
            let grid = |f: &dyn Fn(usize, usize) -> CMatrix| -> Vec<Vec<JsonMatrix>> {
                (0..s.n_params())
                    .map(|t| (0..s.n_symbols()).map(|u| matrix_to_json(&f(t, u))).collect())
                    .collect()
            };
            ScenarioBody::Cq(CqBody {
                params: s.params().to_vec(),
                alphabet: s.alphabet().to_vec(),
                innocent: s.alphabet()[0].clone(),
                dim_bob: s.dim_bob(),
                dim_willie: s.dim_willie(),
                bob: grid(&|t, u| s.bob(t, u).matrix().clone()),
                willie: grid(&|t, u| s.willie(t, u).matrix().clone()),
            })
        }
        Scenario::Unitary(s) => ScenarioBody::Unitary(UnitaryBody {
            params: s.params().to_vec(),
            dim: s.dim(),
            unitaries: (0..s.n_params()).map(|t| matrix_to_json(s.unitary(t))).collect(),
            willie: ChannelBody {
                dim_out: s.willie().dim_out(),
                kraus: s.willie().kraus().iter().map(matrix_to_json).collect(),
            },
            innocent: vector_to_json(s.innocent()),
        }),
    };
    ScenarioFile {
        schema_version: SCHEMA_VERSION.into(),
        body,
        options: doc.options.clone(),
    }
}

pub fn emit_scenario(doc: &ScenarioDocument) -> String {
    serde_json::to_string_pretty(&to_file(doc)).expect("scenario serialises")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
      "schema_version": "1.0",
      "kind": "cq",
      "params": ["a", "b"],
      "alphabet": ["x", "idle"],
      "innocent": "idle",
      "dim_bob": 1,
      "dim_willie": 1,
      "bob": [[[[[1, 0]]], [[[1, 0]]]], [[[[1, 0]]], [[[1, 0]]]]],
      "willie": [[[[[1, 0]]], [[[1, 0]]]], [[[[1, 0]]], [[[1, 0]]]]],
      "options": {"n": 4}
    }"#;

    #[test]
    fn innocent_symbol_moves_first() {
        let doc = parse_scenario(SMALL).unwrap();
        match &doc.scenario {
            Scenario::Cq(s) => assert_eq!(s.alphabet(), ["idle".to_string(), "x".to_string()]),
            _ => panic!("wrong kind"),
        }
        assert_eq!(doc.options.n, Some(4));
        let again = parse_scenario(&emit_scenario(&doc)).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad = SMALL.replace("\"innocent\": \"idle\"", "\"innocent\": \"nope\"");
        let e = parse_scenario(&bad).unwrap_err();
        assert!(e.to_string().contains("innocent"));
        let bad = SMALL.replace("\"dim_bob\": 1", "\"dim_bob\": 2");
        let e = parse_scenario(&bad).unwrap_err();
        assert!(e.to_string().contains("bob[0][1]"), "{e}");
        let e = parse_scenario("{\"schema_version\": \"1.0\",\n \"kind\": 3}").unwrap_err();
        assert!(matches!(e, Error::Parse(_)));
        let bad = SMALL.replace("\"n\": 4", "\"bogus\": 4");
        assert!(parse_scenario(&bad).is_err());
    }
}
