//! Writing result bundles to disk.
//!
//! CSV files start with a `# spec_hash=<hash>` comment line, then a header
//! row. The trace CSV holds only deterministic columns so that reruns of the
//! same spec reproduce it byte for byte; wallclock goes to `timing.csv`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::experiment::{Analysis, GridResult, ResultBundle, Summary};
use crate::error::{Error, Result};
use crate::family::write_checkpoint;

pub const TRACE_FILE: &str = "trace.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MOMENTS_FILE: &str = "moments.csv";
pub const MARGINALS_FILE: &str = "marginals.csv";
pub const ORACLE_FILE: &str = "oracle.csv";
pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const LAMBDA_FILE: &str = "lambda.bin";
pub const GRID_FILE: &str = "grid.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn csv_text(hash: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut out = format!("# spec_hash={hash}\n{header}\n").into_bytes();
    for r in rows {
        out.extend_from_slice(r.as_bytes());
        out.push(b'\n');
    }
    out
}

/// `step,elbo` with 1-based steps; flagged steps read `NaN`.
pub fn trace_csv(hash: &str, elbo: &[f64]) -> Vec<u8> {
    csv_text(
        hash,
        "step,elbo",
        elbo.iter()
            .enumerate()
            .map(|(i, v)| format!("{},{v}", i + 1)),
    )
}

/// Writes every artifact of `bundle` into `dir` and returns the paths.
pub fn export_results(bundle: &ResultBundle, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let hash = &bundle.spec_hash;
    let trace = &bundle.trace;
    let mut written = vec![write_file(
        &dir.join(TRACE_FILE),
        &trace_csv(hash, &trace.elbo),
    )?];
    written.push(write_file(
        &dir.join(TIMING_FILE),
        &csv_text(
            hash,
            "step,wallclock_ms,elbo",
            trace
                .wallclock_ms
                .iter()
                .zip(&trace.elbo)
                .enumerate()
                .map(|(i, (t, e))| format!("{},{t},{e}", i + 1)),
        ),
    )?);
    let summary = serde_json::to_vec_pretty(&bundle.summary())?;
    written.push(write_file(&dir.join(SUMMARY_FILE), &summary)?);

    let mut bin = Vec::new();
    write_checkpoint(&mut bin, &bundle.family, &trace.final_lambda, hash)?;
    written.push(write_file(&dir.join(LAMBDA_FILE), &bin)?);
    for (step, lambda) in &trace.checkpoints {
        let mut bin = Vec::new();
        write_checkpoint(&mut bin, &bundle.family, lambda, hash)?;
        written.push(write_file(
            &dir.join(format!("lambda_{step:08}.bin")),
            &bin,
        )?);
    }

    written.extend(export_analysis(&bundle.analysis, hash, dir)?);
    Ok(written)
}

/// Moment table, marginal curves and reference comparisons as CSV.
pub fn export_analysis(
    analysis: &Analysis,
    hash: &str,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let mut written = vec![write_file(
        &dir.join(MOMENTS_FILE),
        &csv_text(
            hash,
            "coord,mean,sd,skew",
            analysis
                .moments
                .iter()
                .map(|r| format!("{},{},{},{}", r.coord, r.mean, r.sd, r.skew)),
        ),
    )?];
    written.push(write_file(
        &dir.join(MARGINALS_FILE),
        &csv_text(
            hash,
            "coord,theta,density",
            analysis.marginals.iter().flat_map(|c| {
                c.theta
                    .iter()
                    .zip(&c.density)
                    .map(move |(t, d)| format!("{},{t},{d}", c.coord))
            }),
        ),
    )?);
    if let Some(o) = &analysis.oracle {
        written.push(write_file(
            &dir.join(ORACLE_FILE),
            &csv_text(
                hash,
                "coord,oracle_mean,oracle_sd,oracle_skew,family_mean,family_sd,family_skew",
                o.oracle.iter().zip(&o.family).map(|(a, b)| {
                    format!(
                        "{},{},{},{},{},{},{}",
                        a.coord, a.mean, a.sd, a.skew, b.mean, b.sd, b.skew
                    )
                }),
            ),
        )?);
    }
    if let Some(r) = &analysis.importance {
        // the ESS applies to every row; repeating it keeps the file one table
        written.push(write_file(
            &dir.join(IMPORTANCE_FILE),
            &csv_text(
                hash,
                "coord,is_mean,is_sd,is_skew,ess,log_evidence,family_mean,family_sd,family_skew",
                analysis.moments.iter().map(|b| {
                    let i = b.coord;
                    format!(
                        "{i},{},{},{},{},{},{},{},{}",
                        r.mean[i], r.sd[i], r.skew[i], r.ess, r.log_evidence, b.mean, b.sd, b.skew
                    )
                }),
            ),
        )?);
    }
    Ok(written)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Summary> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&text)?)
}

/// Writes `grid.csv` and one ELBO-vs-wallclock CSV per entry
/// (`elbo_wallclock_<label or index>.csv`), plus each entry's full export in
/// a subdirectory named after its spec hash.
pub fn export_grid(grid: &GridResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let hashes: Vec<&str> = grid.bundles.iter().map(|b| b.spec_hash.as_str()).collect();
    let mut text = format!("# spec_hash={}\n", hashes.join(";")).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut text);
        w.write_record([
            "rank",
            "label",
            "family",
            "spec_hash",
            "n_params",
            "window_average",
            "minutes_per_1000_steps",
            "healthy",
        ])?;
        for (rank, r) in grid.rows.iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                r.label.map(|l| l.to_string()).unwrap_or_default(),
                r.family.clone(),
                r.spec_hash.clone(),
                r.n_params.to_string(),
                r.window_average.to_string(),
                r.minutes_per_1000_steps.to_string(),
                r.healthy.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir.join(GRID_FILE), e))?;
    }
    let mut written = vec![write_file(&dir.join(GRID_FILE), &text)?];
    for (i, b) in grid.bundles.iter().enumerate() {
        let tag = b
            .family
            .label()
            .map(|l| l.to_string())
            .unwrap_or_else(|| i.to_string());
        let mut out = Vec::new();
        writeln!(out, "# spec_hash={}", b.spec_hash).expect("write to memory");
        writeln!(out, "step,wallclock_ms,elbo").expect("write to memory");
        for (s, (t, e)) in b.trace.wallclock_ms.iter().zip(&b.trace.elbo).enumerate() {
            writeln!(out, "{},{t},{e}", s + 1).expect("write to memory");
        }
        written.push(write_file(
            &dir.join(format!("elbo_wallclock_{tag}.csv")),
            &out,
        )?);
        written.extend(export_results(b, dir.join(&b.spec_hash))?);
    }
    Ok(written)
}
