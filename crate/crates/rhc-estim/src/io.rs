//! Run artifacts: trajectory CSV serialization, gnuplot script emission,
//! the run manifest, and the machine-readable oracle report.
//!
//! Every writer here is deterministic — equal inputs produce byte-identical
//! files — so a reseeded rerun can be diffed against its predecessor.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimator::TrajectoryTable;
use crate::oracle::OracleReport;
use crate::scenario::{serialize_scenario, Scenario};

/// Full-precision float formatting: 17 significant digits, enough that
/// parsing the text recovers the exact bits.
fn full(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Column names for a trajectory with `n` states and `p` parameters:
/// `t,x1..xn,y1..yn,e_norm,theta_est_1..p,theta_true_1..p,V,F_norm,T_horizon`
/// plus a trailing `eta` when the run carried drive noise.
pub fn csv_header(n: usize, p: usize, with_noise: bool) -> String {
    let mut cols = Vec::with_capacity(2 * n + 2 * p + 6);
    cols.push("t".to_string());
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=n).map(|i| format!("y{i}")));
    cols.push("e_norm".to_string());
    cols.extend((1..=p).map(|i| format!("theta_est_{i}")));
    cols.extend((1..=p).map(|i| format!("theta_true_{i}")));
    cols.push("V".to_string());
    cols.push("F_norm".to_string());
    cols.push("T_horizon".to_string());
    if with_noise {
        cols.push("eta".to_string());
    }
    cols.join(",")
}

/// Render the table as CSV text. Refuses an empty table: an artifact with
/// no rows is always a caller bug.
pub fn trajectory_csv(table: &TrajectoryTable) -> Result<String> {
    if table.is_empty() {
        return Err(Error::Scenario(
            "trajectory table is empty; nothing to write".into(),
        ));
    }
    let n = table.state_dim();
    let p = table.param_dim();
    let mut out = csv_header(n, p, table.has_noise);
    out.push('\n');
    for row in &table.rows {
        let mut fields = Vec::with_capacity(2 * n + 2 * p + 6);
        fields.push(full(row.t));
        fields.extend(row.x.iter().map(|&v| full(v)));
        fields.extend(row.y.iter().map(|&v| full(v)));
        fields.push(full(row.e_norm));
        fields.extend(row.theta_est.iter().map(|&v| full(v)));
        fields.extend(row.theta_true.iter().map(|&v| full(v)));
        fields.push(full(row.lyapunov));
        fields.push(full(row.f_norm));
        fields.push(full(row.t_horizon));
        if table.has_noise {
            fields.push(full(row.eta.unwrap_or(0.0)));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Write the table to `path` as CSV.
pub fn write_trajectory_csv(table: &TrajectoryTable, path: &Path) -> Result<()> {
    let text = trajectory_csv(table)?;
    fs::write(path, text).map_err(io_err(path))
}

/// Geometry of a trajectory CSV, recovered from its header line.
struct CsvShape {
    n: usize,
    p: usize,
    with_noise: bool,
}

fn read_csv_shape(path: &Path) -> Result<CsvShape> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with('x')).count();
    let p = cols.iter().filter(|c| c.starts_with("theta_est_")).count();
    let with_noise = cols.last() == Some(&"eta");
    let expected = 2 * n + 2 * p + 5 + usize::from(with_noise);
    if n == 0 || p == 0 || cols.len() != expected {
        return Err(Error::Scenario(format!(
            "{} does not look like a trajectory CSV (header: {header:?})",
            path.display()
        )));
    }
    let rows = lines.filter(|l| !l.trim().is_empty()).count();
    if rows == 0 {
        return Err(Error::Scenario(format!(
            "{} has a header but no data rows; nothing to plot",
            path.display()
        )));
    }
    Ok(CsvShape { n, p, with_noise })
}

/// Write a gnuplot script next to the CSV rendering one drive-vs-response
/// overlay per state, one estimate-vs-true overlay per parameter, and a
/// disturbance panel when the CSV carries a noise column. Returns the
/// script path.
pub fn emit_plot_script(table_path: &Path, out_dir: &Path) -> Result<PathBuf> {
    let CsvShape { n, p, with_noise } = read_csv_shape(table_path)?;

    // Reference the CSV by bare name when it sits in the output directory,
    // so the artifact directory stays relocatable.
    let csv_ref = if table_path.parent() == Some(out_dir) {
        table_path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| table_path.display().to_string())
    } else {
        table_path.display().to_string()
    };
    let stem = Path::new(&csv_ref)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trajectory".to_string());

    let mut s = String::new();
    let _ = writeln!(s, "# Rendering script for {csv_ref}");
    let _ = writeln!(s, "# Usage: gnuplot <this file>  (run from the directory holding the CSV)");
    let _ = writeln!(s, "csv = \"{csv_ref}\"");
    let _ = writeln!(s, "set datafile separator \",\"");
    let _ = writeln!(s, "set terminal pngcairo size 960,420 enhanced");
    let _ = writeln!(s, "set grid");
    let _ = writeln!(s, "set xlabel \"t\"");

    // 1-based gnuplot column indices.
    let x_col = |i: usize| 1 + i;
    let y_col = |i: usize| 1 + n + i;
    let est_col = |i: usize| 2 + 2 * n + i;
    let true_col = |i: usize| 2 + 2 * n + p + i;
    let eta_col = 6 + 2 * n + 2 * p;

    for i in 1..=n {
        let _ = writeln!(s);
        let _ = writeln!(s, "set output \"{stem}_state_{i}.png\"");
        let _ = writeln!(s, "set ylabel \"state {i}\"");
        let _ = writeln!(
            s,
            "plot csv using 1:{} with lines lw 2 title \"drive x{i}\", \\\n     csv using 1:{} with lines lw 2 dashtype 2 title \"response y{i}\"",
            x_col(i),
            y_col(i)
        );
    }
    for i in 1..=p {
        let _ = writeln!(s);
        let _ = writeln!(s, "set output \"{stem}_param_{i}.png\"");
        let _ = writeln!(s, "set ylabel \"parameter {i}\"");
        let _ = writeln!(
            s,
            "plot csv using 1:{} with lines lw 2 title \"estimate\", \\\n     csv using 1:{} with lines lw 2 dashtype 2 title \"true\"",
            est_col(i),
            true_col(i)
        );
    }
    if with_noise {
        let _ = writeln!(s);
        let _ = writeln!(s, "set output \"{stem}_noise.png\"");
        let _ = writeln!(s, "set ylabel \"disturbance\"");
        let _ = writeln!(
            s,
            "plot csv using 1:{eta_col} with lines lw 1 title \"drive noise\""
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "unset output");

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let script_path = out_dir.join(format!("{stem}_plot.gp"));
    fs::write(&script_path, s).map_err(io_err(&script_path))?;
    Ok(script_path)
}

/// Provenance record for an output directory: tool version, effective seed,
/// and a full echo of the scenario that produced the artifacts.
pub fn run_manifest(scenario: &Scenario) -> String {
    let echo: toml::Table = toml::from_str(&serialize_scenario(scenario))
        .expect("serialized scenarios are valid TOML");
    let mut root = toml::Table::new();
    root.insert(
        "tool".into(),
        toml::Value::String(env!("CARGO_PKG_NAME").into()),
    );
    root.insert(
        "version".into(),
        toml::Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    root.insert("format".into(), toml::Value::Integer(1));
    let seed = i64::try_from(scenario.seed)
        .map(toml::Value::Integer)
        .unwrap_or_else(|_| toml::Value::String(scenario.seed.to_string()));
    root.insert("seed".into(), seed);
    root.insert("scenario".into(), toml::Value::Table(echo));
    toml::to_string_pretty(&root).expect("manifest serialization is infallible")
}

/// Paths of the three artifacts a completed run leaves behind.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub csv: PathBuf,
    pub plot_script: PathBuf,
    pub manifest: PathBuf,
}

/// Write the full artifact set — trajectory CSV, plot script, manifest —
/// into `out_dir`, creating it if needed.
pub fn write_run_artifacts(
    scenario: &Scenario,
    table: &TrajectoryTable,
    out_dir: &Path,
) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let csv = out_dir.join(format!("{}.csv", scenario.name));
    write_trajectory_csv(table, &csv)?;
    let plot_script = emit_plot_script(&csv, out_dir)?;
    let manifest = out_dir.join("manifest.toml");
    fs::write(&manifest, run_manifest(scenario)).map_err(io_err(&manifest))?;
    Ok(RunArtifacts {
        csv,
        plot_script,
        manifest,
    })
}

/// Machine-readable rendering of oracle reports:
/// `check,samples,measured,tolerance,passed`.
pub fn oracle_report_csv<'a>(reports: impl IntoIterator<Item = &'a OracleReport>) -> String {
    let mut out = String::from("check,samples,measured,tolerance,passed\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.name,
            r.samples,
            full(r.measured),
            full(r.tolerance),
            r.passed
        );
    }
    out
}
