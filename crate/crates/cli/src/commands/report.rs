use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use todlab_core::eval::Metrics;

fn load(dir: &Path) -> Option<Metrics> {
    let text = fs::read_to_string(dir.join("metrics.json")).ok()?;
    serde_json::from_str(&text).ok()
}

fn label(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Markdown table of run metrics; deltas are against the first run.
pub fn render(runs: &[(String, Option<Metrics>)]) -> String {
    let base = runs.first().and_then(|(_, m)| *m);
    let mut s = String::new();
    s.push_str("| run | inform | success | bleu | combined | delta |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|\n");
    for (name, m) in runs {
        match m {
            Some(m) => {
                let delta = base.map_or("n/a".to_string(), |b| format!("{:+.2}", m.combined - b.combined));
                let _ = writeln!(
                    s,
                    "| {name} | {:.2} | {:.2} | {:.2} | {:.2} | {delta} |",
                    m.inform, m.success, m.bleu, m.combined
                );
            }
            None => {
                let _ = writeln!(s, "| {name} | absent | absent | absent | absent | n/a |");
            }
        }
    }
    s
}

pub fn report(runs: &[std::path::PathBuf], out: Option<&Path>) -> Result<()> {
    let rows: Vec<(String, Option<Metrics>)> = runs.iter().map(|d| (label(d), load(d))).collect();
    let table = render(&rows);
    print!("{table}");
    if let Some(p) = out {
        fs::write(p, &table).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
