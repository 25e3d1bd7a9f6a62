use std::path::Path;

use semistable_core::levy::{AnyModel, AtomicSpec, ClosedFormModel, ClosedFormSpec, LevyExponent, SemistableModel};
use semistable_core::spectral::{decompose, ExponentMatrix, SpectralDecomposition, DEFAULT_TOL_CLUSTER};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A model file after parsing, before validation.
#[derive(Debug, Clone)]
pub enum Parsed {
    Atomic(SemistableModel),
    ClosedForm(ClosedFormModel),
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub parsed: Parsed,
    pub hash: String,
    pub kind: &'static str,
}

fn parse_as<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Parse(format!(
            "field `{path}` (line {}, column {}): {inner}",
            inner.line(),
            inner.column()
        ))
    })
}

pub fn load(path: &Path) -> Result<LoadedModel, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Parse(format!("model file is not UTF-8: {e}")))?;
    let hash = hex::encode(Sha256::digest(&bytes));
    let probe: serde_json::Value = parse_as(text)?;
    let has_kind = probe.as_object().is_some_and(|o| o.contains_key("kind"));
    let (parsed, kind) = if has_kind {
        let spec: ClosedFormSpec = parse_as(text)?;
        let kind = match spec {
            ClosedFormSpec::SymmetricStable { .. } => "symmetric_stable",
            ClosedFormSpec::Brownian { .. } => "brownian",
            ClosedFormSpec::DensityExample { .. } => "density_example",
        };
        (
            Parsed::ClosedForm(ClosedFormModel::from_spec(&spec).map_err(CliError::Validation)?),
            kind,
        )
    } else {
        let spec: AtomicSpec = parse_as(text)?;
        (
            Parsed::Atomic(SemistableModel::from_spec(&spec).map_err(CliError::Validation)?),
            "atomic",
        )
    };
    Ok(LoadedModel { parsed, hash, kind })
}

impl LoadedModel {
    pub fn validated(&self) -> Result<AnyModel, CliError> {
        match &self.parsed {
            Parsed::Atomic(m) => Ok(AnyModel::Atomic(
                m.clone().into_validated().map_err(CliError::Validation)?,
            )),
            Parsed::ClosedForm(m) => Ok(AnyModel::ClosedForm(m.clone())),
        }
    }

    pub fn atomic(&self) -> Result<&SemistableModel, CliError> {
        match &self.parsed {
            Parsed::Atomic(m) => Ok(m),
            Parsed::ClosedForm(_) => Err(CliError::Usage(format!(
                "this command needs an atomic model, got {}",
                self.kind
            ))),
        }
    }

    pub fn exponent(&self) -> Result<ExponentMatrix, CliError> {
        let e = match &self.parsed {
            Parsed::Atomic(m) => Some(m.e.clone()),
            Parsed::ClosedForm(m) => m.exponent(),
        };
        e.ok_or_else(|| CliError::Usage(format!("a {} model has no scaling exponent", self.kind)))
    }
}

/// Decomposition of `E` (range side) and of `E*` (frequency side).
pub fn decompositions(e: &ExponentMatrix) -> Result<(SpectralDecomposition, SpectralDecomposition), CliError> {
    let range = decompose(e, DEFAULT_TOL_CLUSTER).map_err(CliError::Validation)?;
    let freq = decompose(&e.adjoint(), DEFAULT_TOL_CLUSTER).map_err(CliError::Validation)?;
    Ok((range, freq))
}
