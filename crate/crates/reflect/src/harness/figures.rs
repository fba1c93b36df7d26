//! Figure-ready exports derived from previously written results.

use std::path::Path;

use crate::harness::runner::HarnessError;

/// Rebuilds plot-ready CSVs from a results directory:
/// - every `*_slopes.csv` feeds one combined `phase_diagram.csv` with the
///   growth exponent and regime label per beta;
/// - every `*_trace_*.csv` is re-emitted as `figure_<name>` capped at 10^4
///   rows.
///
/// Returns the files written. Errors if the directory holds neither input.
pub fn emit_reference_figures(results_dir: &Path) -> Result<Vec<String>, HarnessError> {
    let mut slope_files = Vec::new();
    let mut trace_files = Vec::new();
    for entry in std::fs::read_dir(results_dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with("_slopes.csv") {
            slope_files.push(name);
        } else if name.contains("_trace_") && name.ends_with(".csv")
            && !name.starts_with("figure_")
        {
            trace_files.push(name);
        }
    }
    slope_files.sort();
    trace_files.sort();
    if slope_files.is_empty() && trace_files.is_empty() {
        return Err(HarnessError::MissingArtifacts(format!(
            "no *_slopes.csv or *_trace_*.csv under {}",
            results_dir.display()
        )));
    }
    let mut written = Vec::new();
    if !slope_files.is_empty() {
        let mut out = String::from("beta,slope,stderr,regime,source\n");
        for name in &slope_files {
            let text = std::fs::read_to_string(results_dir.join(name))?;
            let mut lines = text.lines();
            let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
            let col = |key: &str| header.iter().position(|h| *h == key);
            let (Some(ib), Some(is), Some(ie), Some(ir)) = (
                col("beta"),
                col("slope"),
                col("stderr"),
                col("regime"),
            ) else {
                continue;
            };
            for line in lines {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() <= ir.max(ie).max(is).max(ib) {
                    continue;
                }
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    f[ib], f[is], f[ie], f[ir], name
                ));
            }
        }
        std::fs::write(results_dir.join("phase_diagram.csv"), out)?;
        written.push("phase_diagram.csv".to_string());
    }
    for name in &trace_files {
        let text = std::fs::read_to_string(results_dir.join(name))?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < 2 {
            continue;
        }
        let body = &lines[1..];
        let keep_every = body.len().div_ceil(10_000).max(1);
        let mut out = String::from(lines[0]);
        out.push('\n');
        for line in body.iter().step_by(keep_every) {
            out.push_str(line);
            out.push('\n');
        }
        let out_name = format!("figure_{name}");
        std::fs::write(results_dir.join(&out_name), out)?;
        written.push(out_name);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_phase_diagram_and_subsampled_trace() {
        let dir = std::env::temp_dir().join("reflect-figures-test");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(
            dir.join("scan_slopes.csv"),
            "beta,slope,stderr,regime,config_hash\n-0.5,1.34,0.02,no CLT,h\n0.5,1,0.01,CLT,h\n",
        )
        .unwrap();
        let mut trace = String::from("t,x,local_time,config_hash\n");
        for i in 0..25_000 {
            trace.push_str(&format!("{},{},0,h\n", i, i * 2));
        }
        std::fs::write(dir.join("run_trace_0.csv"), trace).unwrap();
        let written = emit_reference_figures(&dir).unwrap();
        assert!(written.contains(&"phase_diagram.csv".to_string()));
        let pd = std::fs::read_to_string(dir.join("phase_diagram.csv")).unwrap();
        assert!(pd.contains("-0.5,1.34,0.02,no CLT,scan_slopes.csv"));
        let fig = std::fs::read_to_string(dir.join("figure_run_trace_0.csv")).unwrap();
        let rows = fig.lines().count() - 1;
        assert!(rows <= 10_000, "rows = {rows}");
        assert!(rows >= 5_000);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = std::env::temp_dir().join("reflect-figures-empty");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let err = emit_reference_figures(&dir).unwrap_err();
        assert!(matches!(err, HarnessError::MissingArtifacts(_)));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
