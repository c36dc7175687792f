//! On-disk artifact schemas and their JSON encoding.
//!
//! Designs and models are stored as JSON with every float written with 17
//! significant digits, so write → read → write is byte-identical and the
//! parsed values are bit-exact.

use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use funkrig::design::DesignMeta;
use funkrig::gp::FitDiagnostics;
use funkrig::{BSplineBasis, Design, FunctionalCurve, GpModel, GpParams, KernelFamily, RunPoint};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Pretty JSON with floats at 17 significant digits.
struct SigDigits17<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for SigDigits17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serialize to the canonical artifact encoding.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    let formatter = SigDigits17 {
        inner: PrettyFormatter::new(),
    };
    let mut ser = Serializer::with_formatter(&mut out, formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Io(format!("serialization failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &std::path::Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Io(format!("cannot parse {}: {e}", path.display())))
}

pub fn write_bytes(path: &std::path::Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Design files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignFile {
    pub schema_version: u32,
    pub n: usize,
    pub d_s: usize,
    pub d_f: usize,
    #[serde(rename = "K")]
    pub num_basis: usize,
    pub m: usize,
    pub q: f64,
    pub seed: u64,
    pub criterion: f64,
    /// n rows of d_s scalar levels.
    pub scalars: Vec<Vec<f64>>,
    /// One n×K coefficient matrix per functional input.
    pub functionals: Vec<Vec<Vec<f64>>>,
}

impl DesignFile {
    pub fn from_design(design: &Design) -> Self {
        DesignFile {
            schema_version: SCHEMA_VERSION,
            n: design.num_runs(),
            d_s: design.num_scalars(),
            d_f: design.num_functionals(),
            num_basis: design.meta().num_basis,
            m: design.meta().order,
            q: design.meta().q,
            seed: design.meta().seed,
            criterion: design.criterion(),
            scalars: design.scalars().to_vec(),
            functionals: design
                .functionals()
                .iter()
                .map(|col| col.iter().map(|c| c.coeffs().to_vec()).collect())
                .collect(),
        }
    }

    pub fn to_design(&self) -> Result<Design, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Io(format!(
                "unsupported design schema version {}",
                self.schema_version
            )));
        }
        if self.scalars.len() != if self.d_s == 0 { 0 } else { self.n }
            || self.functionals.len() != self.d_f
        {
            return Err(CliError::Io("design file shape is inconsistent".into()));
        }
        let functionals = if self.d_f > 0 {
            let basis = Arc::new(BSplineBasis::new(self.num_basis, self.m)?);
            self.functionals
                .iter()
                .map(|col| {
                    col.iter()
                        .map(|coeffs| FunctionalCurve::new(basis.clone(), coeffs.clone()))
                        .collect::<funkrig::Result<Vec<_>>>()
                })
                .collect::<funkrig::Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Design::new(
            self.scalars.clone(),
            functionals,
            self.criterion,
            DesignMeta {
                q: self.q,
                seed: self.seed,
                num_basis: self.num_basis,
                order: self.m,
            },
        )?)
    }
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub log_likelihood: f64,
    pub starts: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub kernel: String,
    pub weighting: bool,
    pub mu: f64,
    pub sigma2: f64,
    pub theta_s: Vec<f64>,
    pub theta_f: Vec<f64>,
    pub omega: Option<Vec<[f64; 2]>>,
    pub nugget: f64,
    pub design: DesignFile,
    pub y: Vec<f64>,
    pub diagnostics: ModelDiagnostics,
}

impl ModelFile {
    pub fn from_model(model: &GpModel, design: DesignFile) -> Self {
        let params = model.params();
        let diag: &FitDiagnostics = model.diagnostics();
        ModelFile {
            schema_version: SCHEMA_VERSION,
            kernel: model.kernel().name().to_string(),
            weighting: params.omega.is_some(),
            mu: params.mu,
            sigma2: params.sigma2,
            theta_s: params.theta_s.clone(),
            theta_f: params.theta_f.clone(),
            omega: params
                .omega
                .as_ref()
                .map(|o| o.iter().map(|&(a, b)| [a, b]).collect()),
            nugget: params.nugget,
            design,
            y: model.train_outputs(),
            diagnostics: ModelDiagnostics {
                log_likelihood: diag.log_likelihood,
                starts: diag.starts,
                iterations: diag.evaluations,
            },
        }
    }

    /// Rebuild the model and verify the refactorized log-likelihood
    /// against the stored value.
    pub fn to_model(&self) -> Result<GpModel, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Io(format!(
                "unsupported model schema version {}",
                self.schema_version
            )));
        }
        let kernel = KernelFamily::parse(&self.kernel)?;
        if self.weighting != self.omega.is_some() {
            return Err(CliError::Io(
                "model file weighting flag disagrees with omega".into(),
            ));
        }
        let design = self.design.to_design()?;
        let points: Vec<RunPoint> = design.run_points();
        let params = GpParams {
            mu: self.mu,
            sigma2: self.sigma2,
            theta_s: self.theta_s.clone(),
            theta_f: self.theta_f.clone(),
            omega: self
                .omega
                .as_ref()
                .map(|o| o.iter().map(|p| (p[0], p[1])).collect()),
            nugget: self.nugget,
        };
        let model = GpModel::from_params(points, self.y.clone(), kernel, params)?;
        let ll = model.diagnostics().log_likelihood;
        let stored = self.diagnostics.log_likelihood;
        if (ll - stored).abs() > 1e-6 * stored.abs().max(1.0) {
            return Err(CliError::Numeric(format!(
                "stored log-likelihood {stored} not reproduced on load (got {ll})"
            )));
        }
        Ok(model)
    }
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// Minimal CSV writer: comma delimiter, '.' decimal separator, one header
/// row, locale-independent.
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Csv {
            buf: format!("{header}\n"),
        }
    }

    pub fn row(&mut self, fields: &[CsvField]) {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            match f {
                CsvField::Uint(v) => self.buf.push_str(&v.to_string()),
                CsvField::Float(v) => self.buf.push_str(&format!("{v}")),
                CsvField::Str(s) => self.buf.push_str(s),
            }
        }
        self.buf.push('\n');
    }

    pub fn write(&self, path: &std::path::Path) -> Result<(), CliError> {
        write_bytes(path, self.buf.as_bytes())
    }
}

pub enum CsvField<'a> {
    Uint(u64),
    Float(f64),
    Str(&'a str),
}

/// FNV-1a fingerprint of one run's inputs, for the eval CSV.
pub fn input_hash(point: &RunPoint) -> String {
    let mut canonical = String::new();
    for x in point.scalars() {
        canonical.push_str(&format!("{x:.16e};"));
    }
    for curve in point.curves() {
        for c in curve.coeffs() {
            canonical.push_str(&format!("{c:.16e};"));
        }
    }
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}
