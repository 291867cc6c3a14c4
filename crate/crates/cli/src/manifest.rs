use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fdpctl_core::NoiseModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::commands::{run, CliError, CliResult, Output, EXIT_NUMERICAL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestOutput {
    pub role: String,
    /// `-` for stdout.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Record of one command run, sufficient to reproduce its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub params: Command,
    pub master_seed: Option<u64>,
    pub library_version: String,
    pub resolved_model: Option<NoiseModel>,
    pub outputs: Vec<ManifestOutput>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest_output(o: &Output) -> ManifestOutput {
    ManifestOutput {
        role: o.role.to_string(),
        path: o.path.as_ref().map_or_else(|| "-".to_string(), |p| p.display().to_string()),
        sha256: sha256_hex(&o.bytes),
        bytes: o.bytes.len(),
    }
}

fn manifest_flag(cmd: &Command) -> Option<&PathBuf> {
    match cmd {
        Command::Critvals(a) => a.manifest.as_ref(),
        Command::Apply(a) => a.manifest.as_ref(),
        Command::Simulate(a) => a.manifest.as_ref(),
        Command::Power(a) => a.manifest.as_ref(),
        Command::Replay(_) => None,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Runs `cmd`, writes its outputs and its manifest.
///
/// The manifest goes to `--manifest`, else next to the first file output as
/// `<output>.manifest.json`, else to stderr.
pub fn execute(cmd: &Command, workers: Option<usize>) -> CliResult<()> {
    let start = Instant::now();
    let result = run(cmd, workers)?;
    for o in &result.outputs {
        match &o.path {
            Some(p) => write_file(p, &o.bytes)?,
            None => {
                use std::io::Write;
                std::io::stdout().write_all(&o.bytes).map_err(|e| CliError::data(format!("stdout: {e}")))?;
            }
        }
    }
    for n in &result.notices {
        eprintln!("notice: {n}");
    }
    let manifest = RunManifest {
        command: cmd.name().to_string(),
        params: cmd.clone(),
        master_seed: result.master_seed,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        resolved_model: result.resolved_model,
        outputs: result.outputs.iter().map(manifest_output).collect(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let target = manifest_flag(cmd).cloned().or_else(|| {
        result.outputs.iter().find_map(|o| o.path.as_ref()).map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    });
    match target {
        Some(p) => write_file(&p, text.as_bytes()),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

/// Re-runs a manifest without writing outputs and compares checksums.
pub fn replay(path: &Path, workers: Option<usize>) -> CliResult<()> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("malformed manifest: {e}")))?;
    let result = run(&manifest.params, workers)?;
    let fresh: Vec<ManifestOutput> = result.outputs.iter().map(manifest_output).collect();
    let mut ok = fresh.len() == manifest.outputs.len();
    for (old, new) in manifest.outputs.iter().zip(&fresh) {
        let same = old.role == new.role && old.sha256 == new.sha256;
        ok &= same;
        println!("{} {} {}", if same { "match" } else { "MISMATCH" }, old.role, new.sha256);
    }
    if ok {
        Ok(())
    } else {
        Err(CliError { code: EXIT_NUMERICAL, message: "replayed outputs differ from the manifest".into() })
    }
}
