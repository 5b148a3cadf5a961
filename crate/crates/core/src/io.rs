//! JSON file formats for models, architectures, certificates and gains, plus
//! CSV helpers.
//!
//! Numbers are written in the shortest form that parses back to the same
//! `f64`, so write-then-read is exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certify::{validate_certificate, Certificate, ValidationReport};
use crate::compose::{Architecture, Side};
use crate::error::{Error, Result};
use crate::models::{Activation, ActivationKind, Esn, GenericRnn, HuRnn, ShallowNnarx, Vector};
use crate::numerics::{from_rows, to_rows, DenseMatrix, SymmetricMatrix};
use crate::synthesize::Synthesis;

pub const FORMAT_VERSION: u32 = 1;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationSpec {
    pub kind: String,
    /// Overrides the nominal Lipschitz constant; only larger values are accepted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounded: Option<bool>,
}

impl ActivationSpec {
    pub fn from_activation(a: &Activation) -> Result<Self> {
        if let ActivationKind::Custom { name, .. } = a.kind() {
            return Err(Error::InvalidInput(format!(
                "custom activation '{name}' cannot be written to a file"
            )));
        }
        let nominal = nominal(a.kind().name())?;
        Ok(Self {
            kind: a.kind().name().to_string(),
            lipschitz: (a.lipschitz() != nominal.lipschitz()).then_some(a.lipschitz()),
            bounded: None,
        })
    }

    pub fn to_activation(&self) -> Result<Activation> {
        let base = nominal(&self.kind)?;
        if let Some(b) = self.bounded {
            if b != base.bounded() {
                return Err(Error::Parse(format!(
                    "activation '{}' has bounded = {}",
                    self.kind,
                    base.bounded()
                )));
            }
        }
        match self.lipschitz {
            None => Ok(base),
            Some(l) if l.is_finite() && l >= base.lipschitz() && !base.is_identity() => {
                Ok(base.with_lipschitz(l))
            }
            Some(l) if base.is_identity() && l == 1.0 => Ok(base),
            Some(l) => Err(Error::Parse(format!(
                "lipschitz {l} for '{}' is below its true constant {} or not allowed",
                self.kind,
                base.lipschitz()
            ))),
        }
    }
}

fn nominal(kind: &str) -> Result<Activation> {
    match kind {
        "identity" => Ok(Activation::identity()),
        "tanh" => Ok(Activation::tanh()),
        "sigmoid" => Ok(Activation::sigmoid()),
        "relu" => Ok(Activation::relu()),
        other => Err(Error::Parse(format!(
            "unknown activation kind '{other}' (expected identity, tanh, sigmoid or relu)"
        ))),
    }
}

fn acts_to_specs(acts: &[Activation]) -> Result<Vec<ActivationSpec>> {
    acts.iter().map(ActivationSpec::from_activation).collect()
}

fn specs_to_acts(specs: &[ActivationSpec]) -> Result<Vec<Activation>> {
    specs.iter().map(ActivationSpec::to_activation).collect()
}

fn mat(name: &str, rows: &Rows) -> Result<DenseMatrix> {
    from_rows(rows).map_err(|e| Error::Parse(format!("field '{name}': {e}")))
}

fn mat_sized(name: &str, rows: &Rows, ncols: usize) -> Result<DenseMatrix> {
    if rows.is_empty() {
        return Ok(DenseMatrix::zeros(0, ncols));
    }
    mat(name, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Generic {
        a: Rows,
        b: Rows,
        c: Rows,
        d: Rows,
        activations: Vec<ActivationSpec>,
    },
    Esn {
        w_x: Rows,
        w_u: Rows,
        w_y: Rows,
        w_out1: Rows,
        w_out2: Rows,
        activations: Vec<ActivationSpec>,
    },
    Nnarx {
        w_0: Rows,
        b_0: Vec<f64>,
        w_phi: Rows,
        w_u: Rows,
        b: Vec<f64>,
        lags: usize,
        activations: Vec<ActivationSpec>,
    },
    Hu {
        e: Rows,
        o: Rows,
        a_hat: Rows,
        s: Vec<f64>,
        activations: Vec<ActivationSpec>,
    },
}

/// A model in one of the supported parameterizations.
#[derive(Debug, Clone)]
pub enum Model {
    Generic(GenericRnn),
    Esn(Esn),
    Nnarx(ShallowNnarx),
    Hu(HuRnn),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Generic(_) => "generic",
            Model::Esn(_) => "esn",
            Model::Nnarx(_) => "nnarx",
            Model::Hu(_) => "hu",
        }
    }

    pub fn to_generic(&self) -> Result<GenericRnn> {
        match self {
            Model::Generic(g) => Ok(g.clone()),
            Model::Esn(e) => e.to_generic(),
            Model::Nnarx(n) => n.to_generic(),
            Model::Hu(h) => h.to_generic(),
        }
    }
}

impl ModelSpec {
    pub fn from_model(model: &Model) -> Result<Self> {
        Ok(match model {
            Model::Generic(g) => ModelSpec::Generic {
                a: to_rows(&g.a),
                b: to_rows(&g.b),
                c: to_rows(&g.c),
                d: to_rows(&g.d),
                activations: acts_to_specs(&g.activations)?,
            },
            Model::Esn(e) => ModelSpec::Esn {
                w_x: to_rows(&e.w_x),
                w_u: to_rows(&e.w_u),
                w_y: to_rows(&e.w_y),
                w_out1: to_rows(&e.w_out1),
                w_out2: to_rows(&e.w_out2),
                activations: acts_to_specs(&e.activations)?,
            },
            Model::Nnarx(n) => ModelSpec::Nnarx {
                w_0: to_rows(&n.w_0),
                b_0: n.b_0.iter().copied().collect(),
                w_phi: to_rows(&n.w_phi),
                w_u: to_rows(&n.w_u),
                b: n.b.iter().copied().collect(),
                lags: n.lags,
                activations: acts_to_specs(&n.activations)?,
            },
            Model::Hu(h) => ModelSpec::Hu {
                e: to_rows(&h.e),
                o: to_rows(&h.o),
                a_hat: to_rows(&h.a_hat),
                s: h.s.iter().copied().collect(),
                activations: acts_to_specs(&h.activations)?,
            },
        })
    }

    pub fn generic(g: &GenericRnn) -> Result<Self> {
        Self::from_model(&Model::Generic(g.clone()))
    }

    /// Builds and validates the model.
    pub fn to_model(&self) -> Result<Model> {
        Ok(match self {
            ModelSpec::Generic {
                a,
                b,
                c,
                d,
                activations,
            } => {
                let a = mat("a", a)?;
                let n = a.ncols();
                let b = mat_sized("b", b, 0)?;
                let c = mat_sized("c", c, n)?;
                let d = mat_sized("d", d, b.ncols())?;
                let g = GenericRnn::new(a, b, c, d, specs_to_acts(activations)?)?;
                Model::Generic(g)
            }
            ModelSpec::Esn {
                w_x,
                w_u,
                w_y,
                w_out1,
                w_out2,
                activations,
            } => {
                let e = Esn {
                    w_x: mat("w_x", w_x)?,
                    w_u: mat("w_u", w_u)?,
                    w_y: mat("w_y", w_y)?,
                    w_out1: mat("w_out1", w_out1)?,
                    w_out2: mat("w_out2", w_out2)?,
                    activations: specs_to_acts(activations)?,
                };
                e.to_generic()?;
                Model::Esn(e)
            }
            ModelSpec::Nnarx {
                w_0,
                b_0,
                w_phi,
                w_u,
                b,
                lags,
                activations,
            } => {
                let n = ShallowNnarx {
                    w_0: mat("w_0", w_0)?,
                    b_0: Vector::from_vec(b_0.clone()),
                    w_phi: mat("w_phi", w_phi)?,
                    w_u: mat("w_u", w_u)?,
                    b: Vector::from_vec(b.clone()),
                    lags: *lags,
                    activations: specs_to_acts(activations)?,
                };
                n.to_generic()?;
                Model::Nnarx(n)
            }
            ModelSpec::Hu {
                e,
                o,
                a_hat,
                s,
                activations,
            } => {
                let h = HuRnn {
                    e: mat("e", e)?,
                    o: mat("o", o)?,
                    a_hat: mat("a_hat", a_hat)?,
                    s: Vector::from_vec(s.clone()),
                    activations: specs_to_acts(activations)?,
                };
                h.to_generic()?;
                Model::Hu(h)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub model: ModelSpec,
}

impl ModelFile {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            version: FORMAT_VERSION,
            model,
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model files always serialize");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn check_version(found: u32, what: &str) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "{what} has format version {found}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        Error::Parse(format!(
            "{what}: line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn parse_model_file(text: &str) -> Result<ModelFile> {
    let file: ModelFile = parse(text, "model file")?;
    check_version(file.version, "model file")?;
    Ok(file)
}

pub fn read_model_file(path: &Path) -> Result<ModelFile> {
    parse_model_file(&read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub version: u32,
    pub toolkit_version: String,
    pub model_hash: String,
    pub n: usize,
    /// Row-major lower triangle of `P`.
    pub p_lower: Vec<f64>,
    pub margin: f64,
    pub lyapunov_gap: f64,
}

impl CertificateFile {
    pub fn new(model: &ModelFile, cert: &Certificate) -> Self {
        Self {
            version: FORMAT_VERSION,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            model_hash: model.hash(),
            n: cert.p.n(),
            p_lower: cert.p.lower().to_vec(),
            margin: cert.margin,
            lyapunov_gap: cert.lyapunov_gap,
        }
    }

    pub fn p(&self) -> Result<SymmetricMatrix> {
        SymmetricMatrix::from_lower(self.n, self.p_lower.clone())
    }

    /// Re-validates against `model`; the hash must match.
    pub fn revalidate(&self, model: &ModelFile) -> Result<ValidationReport> {
        if self.model_hash != model.hash() {
            return Err(Error::InvalidInput(
                "certificate was issued for a different model".into(),
            ));
        }
        validate_certificate(&model.model.to_model()?.to_generic()?, &self.p()?)
    }
}

pub fn parse_certificate_file(text: &str) -> Result<CertificateFile> {
    let file: CertificateFile = parse(text, "certificate file")?;
    check_version(file.version, "certificate file")?;
    Ok(file)
}

pub fn read_certificate_file(path: &Path) -> Result<CertificateFile> {
    parse_certificate_file(&read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ArchitectureSpec {
    StateFeedback {
        plant: ModelSpec,
    },
    EsnOutputFeedback {
        plant: ModelSpec,
        w_x: Rows,
        w_e: Rows,
        w_y: Rows,
        activations: Vec<ActivationSpec>,
    },
    NnarxOutputFeedback {
        plant: ModelSpec,
        w_0: Rows,
        lags: usize,
        activations: Vec<ActivationSpec>,
    },
    StateFeedbackIntegrator {
        plant: ModelSpec,
    },
    EsnIntegrator {
        plant: ModelSpec,
        w_x: Rows,
        w_uv: Rows,
        w_ux: Rows,
        w_y: Rows,
        activations: Vec<ActivationSpec>,
    },
}

impl ArchitectureSpec {
    pub fn to_architecture(&self) -> Result<Architecture> {
        let plant = |p: &ModelSpec| p.to_model()?.to_generic();
        Ok(match self {
            ArchitectureSpec::StateFeedback { plant: p } => {
                Architecture::StateFeedback { plant: plant(p)? }
            }
            ArchitectureSpec::EsnOutputFeedback {
                plant: p,
                w_x,
                w_e,
                w_y,
                activations,
            } => Architecture::EsnOutputFeedback {
                plant: plant(p)?,
                w_x: mat("w_x", w_x)?,
                w_e: mat("w_e", w_e)?,
                w_y: mat("w_y", w_y)?,
                activations: specs_to_acts(activations)?,
            },
            ArchitectureSpec::NnarxOutputFeedback {
                plant: p,
                w_0,
                lags,
                activations,
            } => Architecture::NnarxOutputFeedback {
                plant: plant(p)?,
                w_0: mat("w_0", w_0)?,
                lags: *lags,
                activations: specs_to_acts(activations)?,
            },
            ArchitectureSpec::StateFeedbackIntegrator { plant: p } => {
                Architecture::StateFeedbackIntegrator { plant: plant(p)? }
            }
            ArchitectureSpec::EsnIntegrator {
                plant: p,
                w_x,
                w_uv,
                w_ux,
                w_y,
                activations,
            } => Architecture::EsnIntegrator {
                plant: plant(p)?,
                w_x: mat("w_x", w_x)?,
                w_uv: mat("w_uv", w_uv)?,
                w_ux: mat("w_ux", w_ux)?,
                w_y: mat("w_y", w_y)?,
                activations: specs_to_acts(activations)?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureFile {
    pub version: u32,
    pub architecture: ArchitectureSpec,
}

pub fn parse_architecture_file(text: &str) -> Result<ArchitectureFile> {
    let file: ArchitectureFile = parse(text, "architecture file")?;
    check_version(file.version, "architecture file")?;
    Ok(file)
}

pub fn read_architecture_file(path: &Path) -> Result<ArchitectureFile> {
    parse_architecture_file(&read_text(path)?)
}

/// A candidate `P` (and `H` for synthesis) supplied by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessFile {
    pub p: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Rows>,
}

impl WitnessFile {
    pub fn p(&self) -> Result<DenseMatrix> {
        mat("p", &self.p)
    }

    pub fn h(&self) -> Result<Option<DenseMatrix>> {
        self.h.as_ref().map(|h| mat("h", h)).transpose()
    }
}

pub fn read_witness_file(path: &Path) -> Result<WitnessFile> {
    parse(&read_text(path)?, "witness file")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    pub version: u32,
    pub architecture: String,
    pub side: String,
    pub j: Rows,
    pub gains: BTreeMap<String, Rows>,
    /// The closed loop, usable directly as a model file.
    pub closed_loop: ModelFile,
}

impl GainsFile {
    pub fn new(arch: &Architecture, side: Side, synthesis: &Synthesis) -> Result<Self> {
        Ok(Self {
            version: FORMAT_VERSION,
            architecture: arch.name().to_string(),
            side: match side {
                Side::Right => "right".into(),
                Side::Left => "left".into(),
            },
            j: to_rows(&synthesis.j),
            gains: synthesis
                .gains
                .blocks
                .iter()
                .map(|(name, m)| (name.clone(), to_rows(m)))
                .collect(),
            closed_loop: ModelFile::new(ModelSpec::generic(&synthesis.closed_loop)?),
        })
    }
}

/// Formats `v` with 12 significant digits.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.11e}")
    }
}

/// Writes a CSV file with a header row.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| format_sig(v)))
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Reads a numeric CSV with a header row.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(String::from)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("{}: data row {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok((header, rows))
}
