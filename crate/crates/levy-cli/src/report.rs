//! Artifact plumbing: JSON and CSV writers plus the per-run manifest.
//! Reports are plain data structs so the on-disk schema is explicit, and
//! every write is deterministic -- same inputs, same bytes -- which is what
//! makes `--seed`-pinned runs diffable.

use anyhow::{Context, Result};
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// An `f64` that serializes as a JSON number when finite and as the strings
/// `"inf"` / `"-inf"` / `"NaN"` otherwise (standard JSON has no non-finite
/// numbers, and silently mapping them to `null` would hide the sign).
#[derive(Debug, Clone, Copy)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&self.0.to_string())
        }
    }
}

/// Run manifest: everything needed to reproduce the artifacts bit for bit.
/// Deliberately no timestamps -- two runs with the same configuration must
/// produce identical files.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub model: String,
    pub model_sha256: String,
    pub model_schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_rel_override: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer_tol_override: Option<f64>,
    pub levy_core_version: String,
    pub levy_cli_version: String,
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Output directory handle. Creating it is deferred to the first write so
/// that pure-failure runs leave nothing behind.
pub struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> Self {
        Outputs { dir }
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)
            .with_context(|| format!("cannot create output directory {}", self.dir.display()))?;
        let path = self.dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

pub fn vec_of(v: &nalgebra::DVector<f64>) -> Vec<f64> {
    v.iter().cloned().collect()
}

/// Short human rendering of a portfolio vector.
pub fn show_vec(v: &nalgebra::DVector<f64>) -> String {
    let body: Vec<String> = v.iter().map(|x| format!("{x:.8}")).collect();
    format!("[{}]", body.join(", "))
}

// --- per-command artifact schemas ---------------------------------------

#[derive(Debug, Serialize)]
pub struct ValidateReport {
    pub valid: bool,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct HalfspaceRow {
    pub normal: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Serialize)]
pub struct NuipReport {
    /// "holds" | "violated" | "undecidable"
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct GeometryReport {
    pub budget_halfspaces: Vec<HalfspaceRow>,
    pub null_basis: Vec<Vec<f64>>,
    pub recession_rays: Vec<Vec<f64>>,
    pub nuip: NuipReport,
    /// "true" | "false" | "unknown"
    pub projection_closed: String,
}

#[derive(Debug, Serialize)]
pub struct TransformReport {
    pub lambda: Vec<Vec<f64>>,
    /// Replacement portfolio per asset; None where the asset was kept.
    pub replacements: Vec<Option<Vec<f64>>>,
    pub constraints: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transformed_model_file: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub dim: usize,
    pub p: f64,
    pub consumption: bool,
    pub horizon: f64,
    pub x0: f64,
    pub pi_hat: Vec<f64>,
    pub g_star: Num,
    pub rate_a: Num,
    pub finite_value: bool,
    pub maximizer_attained: bool,
    pub location: String,
    pub directional_at_zero: Num,
    pub achieved_tol: f64,
    pub iterations: usize,
    /// ell(0) x0^p / p when the value is finite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility_at_start: Option<Num>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct QMeasureArtifact {
    pub q: f64,
    pub exists: bool,
    pub marginal: bool,
    pub directional_at_zero: Num,
    pub girsanov_continuous: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub martingale_residuals: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_under_q_file: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Estimate {
    pub mean: Num,
    pub std_error: Num,
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub policy_kind: String,
    pub policy: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub grid_points: usize,
    pub n_ruined: usize,
    pub utility: Estimate,
    /// Shadow-value combination; its mean equals ell(0) x0^p under the
    /// optimal policy.
    pub gamma: Estimate,
    /// Mean 1 for any admissible constant policy.
    pub normalized_power: Estimate,
    /// Candidate dual density at T; mean 1 iff the dual measure exists.
    pub z_terminal: Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form_utility: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_target: Option<Num>,
}

#[derive(Debug, Serialize)]
pub struct CheckRow {
    pub name: String,
    /// "pass" | "fail" | "skip"
    pub status: String,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub checks: Vec<CheckRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulateReport>,
}
