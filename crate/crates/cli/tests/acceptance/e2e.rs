use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_track")
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn check() -> Result<String, String> {
    let dir = fixture();
    let golden_transcript = read(&dir.join("transcript.txt"))?;
    let golden_minutes = read(&dir.join("minutes.txt"))?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for seed in 0..5 {
        let out = tmp.path().join(format!("run{seed}"));
        let status = Command::new(env!("CARGO_BIN_EXE_minuteman-replay"))
            .arg("--manifest")
            .arg(dir.join("manifest.toml"))
            .args(["--mode", "fast", "--seed", &seed.to_string(), "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!(
                "run {seed} exited with {}: {}",
                status.status,
                String::from_utf8_lossy(&status.stderr)
            ));
        }
        if read(&out.join("transcript.txt"))? != golden_transcript {
            return Err(format!(
                "run {seed}: transcript.txt differs from the golden file"
            ));
        }
        if read(&out.join("minutes.txt"))? != golden_minutes {
            return Err(format!(
                "run {seed}: minutes.txt differs from the golden file"
            ));
        }
    }
    Ok(format!(
        "5 runs byte-identical to golden files ({} transcript lines, {} minutes lines)",
        golden_transcript.lines().count(),
        golden_minutes.lines().count()
    ))
}
