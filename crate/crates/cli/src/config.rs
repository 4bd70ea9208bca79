//! Resolves command-line values into library inputs.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use edgecut::reference::BUILTIN_MODELS;
use edgecut::{
    builtin_model, builtin_profile, validate_model, AdjustmentPolicy, BandwidthTrace, CostTable,
    HardwareProfile, ModelSpec,
};

fn read(path: &Path, what: &str) -> Result<String> {
    if !path.exists() {
        bail!("{what} file `{}` not found", path.display());
    }
    fs::read_to_string(path).with_context(|| format!("reading {what} file `{}`", path.display()))
}

/// A builtin model name or a TOML file.
pub fn load_model(arg: &str) -> Result<ModelSpec> {
    if BUILTIN_MODELS.contains(&arg.to_ascii_lowercase().as_str()) {
        return Ok(builtin_model(arg)?);
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!(
            "model file `{arg}` not found (builtin models: {})",
            BUILTIN_MODELS.join(", ")
        );
    }
    let text = read(path, "model")?;
    let spec = ModelSpec::from_toml_str(&text).with_context(|| format!("in model file `{arg}`"))?;
    let report = validate_model(&spec);
    if !report.is_ok() {
        bail!("model file `{arg}` is invalid:\n{report}");
    }
    Ok(spec)
}

/// A builtin profile name (A100, Orin, Thor) or a TOML file.
pub fn load_profile(arg: &str) -> Result<HardwareProfile> {
    let path = Path::new(arg);
    if path.extension().is_some() || path.exists() {
        let text = read(path, "hardware profile")?;
        return HardwareProfile::from_toml_str(&text).with_context(|| format!("in hardware profile `{arg}`"));
    }
    Ok(builtin_profile(arg)?)
}

pub fn load_cost_table(arg: Option<&Path>) -> Result<CostTable> {
    match arg {
        None => Ok(CostTable::default()),
        Some(path) => {
            let text = read(path, "cost table")?;
            CostTable::from_toml_str(&text).with_context(|| format!("in cost table `{}`", path.display()))
        }
    }
}

pub fn load_trace(path: &Path) -> Result<BandwidthTrace> {
    let text = read(path, "trace")?;
    let name = path
        .file_stem()
        .map_or("trace".into(), |s| s.to_string_lossy().into_owned());
    BandwidthTrace::from_csv_str(name, &text).with_context(|| format!("in trace file `{}`", path.display()))
}

pub fn load_policy(path: &Path) -> Result<AdjustmentPolicy> {
    let text = read(path, "policy document")?;
    AdjustmentPolicy::from_toml_str(&text).with_context(|| format!("in policy document `{}`", path.display()))
}

/// Where a command's output goes: a file under `--out`, or stdout.
pub struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    pub fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).with_context(|| format!("creating output directory `{}`", d.display()))?;
        }
        Ok(Output { dir })
    }

    /// Writes `body` to `<out>/<file>` when an output directory is set,
    /// otherwise prints it.
    pub fn emit(&self, file: &str, body: &str) -> Result<()> {
        match &self.dir {
            Some(d) => {
                let path = d.join(file);
                fs::write(&path, body).with_context(|| format!("writing `{}`", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
            None => print(body)?,
        }
        Ok(())
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
pub fn print(body: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(body.as_bytes()).and_then(|()| stdout.flush()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
