//! Serialization of reports, fields, frames and traces.
//!
//! CSV numbers use 17 significant digits, so every value reads back exactly.
//! JSON uses the shortest representation that reads back exactly.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::{DirectorField, Layers, Layout};
use crate::harness::{SweepOutcome, SweepReport};
use crate::linalg::Vec3;
use crate::minimize::MinimizeReport;
use crate::surface::SurfaceGrid;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const REPORT_FILE: &str = "report.json";
pub const SWEEP_CSV_FILE: &str = "sweep.csv";
pub const CONFIG_ECHO_FILE: &str = "config.echo.json";
pub const VERSION_FILE: &str = "version.txt";
pub const FIELDS_DIR: &str = "fields";

/// Coordinates read back from a field file must match the grid to this.
const COORD_TOL: f64 = 1e-9;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_error(path: &str, e: csv::Error) -> Error {
    Error::Config { path: path.into(), message: e.to_string() }
}

fn to_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn report_to_json(report: &SweepReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str) -> Result<SweepReport> {
    serde_json::from_str(text).map_err(|e| Error::Config { path: REPORT_FILE.into(), message: e.to_string() })
}

/// One row per ε; cells of failed entries are left empty.
pub fn sweep_csv(report: &SweepReport) -> String {
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    to_csv(
        &["eps", "minE_eps", "minE_limit", "gap", "recovery_gap", "h1_dist"],
        report.entries.iter().map(|e| {
            vec![
                num(e.eps),
                opt(e.minimum.as_ref().map(|m| m.energy.total)),
                num(report.limit.energy.total),
                opt(e.gap),
                opt(e.recovery_gap),
                opt(e.h1_distance),
            ]
        }),
    )
}

/// Columns `u,v,ux,uy,uz` (surface) or `u,v,s,ux,uy,uz` (thin), in storage order.
pub fn field_csv(field: &DirectorField<f64>, grid: &SurfaceGrid<f64>) -> Result<String> {
    field.check_grid(grid)?;
    let n = field.n_nodes;
    let comps = |v: Vec3<f64>| [num(v.x()), num(v.y()), num(v.z())];
    Ok(match field.layout {
        Layout::Surface => to_csv(
            &["u", "v", "ux", "uy", "uz"],
            field.values.iter().zip(&grid.frames).map(|(&val, f)| {
                let mut row = vec![num(f.u), num(f.v)];
                row.extend(comps(val));
                row
            }),
        ),
        Layout::Thin { n_s } => {
            let layers = Layers::<f64>::new(n_s)?;
            to_csv(
                &["u", "v", "s", "ux", "uy", "uz"],
                field.values.iter().enumerate().map(|(i, &val)| {
                    let f = &grid.frames[i % n];
                    let mut row = vec![num(f.u), num(f.v), num(layers.s[i / n])];
                    row.extend(comps(val));
                    row
                }),
            )
        }
    })
}

/// Parses a field file written by [`field_csv`], checking its coordinates against `grid`.
pub fn parse_field_csv(text: &str, grid: &SurfaceGrid<f64>, source: &str) -> Result<DirectorField<f64>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(source, e))?.iter().map(str::to_string).collect();
    let thin = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["u", "v", "ux", "uy", "uz"] => false,
        ["u", "v", "s", "ux", "uy", "uz"] => true,
        _ => {
            return Err(Error::Config {
                path: source.into(),
                message: format!("unexpected columns {header:?}; expected u,v[,s],ux,uy,uz"),
            })
        }
    };
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(source, e))?;
        let row: Vec<f64> = rec
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config { path: format!("{source}: row {}", i + 1), message: e.to_string() })?;
        rows.push(row);
    }
    let n = grid.n_nodes();
    if n == 0 || rows.len() % n != 0 || (!thin && rows.len() != n) {
        return Err(Error::GridMismatch(format!("{source}: {} rows for a grid of {n} nodes", rows.len())));
    }
    let n_s = rows.len() / n;
    let layers = if thin { Some(Layers::<f64>::new(n_s)?) } else { None };
    let mut values = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let f = &grid.frames[i % n];
        let mut expected = vec![f.u, f.v];
        if let Some(l) = &layers {
            expected.push(l.s[i / n]);
        }
        if expected.iter().zip(row).any(|(a, b)| (a - b).abs() > COORD_TOL) {
            return Err(Error::GridMismatch(format!("{source}: row {} coordinates do not match the grid", i + 1)));
        }
        let k = expected.len();
        let v = Vec3::new(row[k], row[k + 1], row[k + 2]);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{source}: row {}", i + 1)));
        }
        values.push(v);
    }
    if thin {
        DirectorField::thin(n, n_s, values)
    } else {
        Ok(DirectorField::surface(values))
    }
}

pub fn read_field_csv(path: &Path, grid: &SurfaceGrid<f64>) -> Result<DirectorField<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_field_csv(&text, grid, &path.display().to_string())
}

/// Columns `u,v,x,y,z,t1x..t1z,t2x..t2z,nx..nz,k1,k2,w`.
pub fn frames_csv(grid: &SurfaceGrid<f64>) -> String {
    let header = [
        "u", "v", "x", "y", "z", "t1x", "t1y", "t1z", "t2x", "t2y", "t2z", "nx", "ny", "nz", "k1", "k2", "w",
    ];
    to_csv(
        &header,
        grid.frames.iter().map(|f| {
            let mut row = vec![num(f.u), num(f.v)];
            for v in [f.xi, f.tau1, f.tau2, f.normal] {
                row.extend(v.0.iter().map(|&c| num(c)));
            }
            row.extend([num(f.kappa1), num(f.kappa2), num(f.area_weight)]);
            row
        }),
    )
}

/// Columns `iteration,energy,grad_norm`.
pub fn trace_csv(report: &MinimizeReport<f64>) -> String {
    to_csv(
        &["iteration", "energy", "grad_norm"],
        report.trace.iter().map(|t| vec![t.iteration.to_string(), num(t.energy), num(t.gradient_norm)]),
    )
}

/// Writes `config.echo.json` and `version.txt` into `dir`.
pub fn write_run_header(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write_text(&dir.join(CONFIG_ECHO_FILE), &cfg.echo())?;
    write_text(&dir.join(VERSION_FILE), &format!("{VERSION}\n"))
}

/// File name of the thin minimizer for the `index`-th ε.
pub fn thin_field_name(index: usize) -> String {
    format!("thin_{index:02}.csv")
}

/// Writes the run header, `report.json`, `sweep.csv` and `fields/*.csv`; returns the written paths.
pub fn write_sweep(outcome: &SweepOutcome, cfg: &RunConfig, grid: &SurfaceGrid<f64>, dir: &Path) -> Result<Vec<PathBuf>> {
    write_run_header(cfg, dir)?;
    let mut written = vec![dir.join(CONFIG_ECHO_FILE), dir.join(VERSION_FILE)];
    let mut put = |path: PathBuf, contents: String| -> Result<()> {
        write_text(&path, &contents)?;
        written.push(path);
        Ok(())
    };
    put(dir.join(REPORT_FILE), report_to_json(&outcome.report))?;
    put(dir.join(SWEEP_CSV_FILE), sweep_csv(&outcome.report))?;
    let fields = dir.join(FIELDS_DIR);
    put(fields.join("limit.csv"), field_csv(&outcome.limit_field, grid)?)?;
    for (i, f) in outcome.thin_fields.iter().enumerate() {
        if let Some(f) = f {
            put(fields.join(thin_field_name(i)), field_csv(f, grid)?)?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SurfaceSpec;
    use crate::field::random_field;
    use crate::target::TargetManifold;

    #[test]
    fn fields_round_trip_exactly() {
        let grid = SurfaceSpec::sphere_band(6).build().unwrap();
        let target = TargetManifold::ellipsoid(1.2, 1.0, 0.7).unwrap();
        for layout in [Layout::Surface, Layout::Thin { n_s: 5 }] {
            let field = random_field(&grid, &target, layout, 4).unwrap();
            let text = field_csv(&field, &grid).unwrap();
            assert_eq!(text.lines().count(), 1 + field.values.len());
            assert_eq!(parse_field_csv(&text, &grid, "f").unwrap(), field);
        }
    }

    #[test]
    fn field_reader_rejects_mismatches() {
        let grid = SurfaceSpec::sphere_band(6).build().unwrap();
        let other = SurfaceSpec::sphere_band(8).build().unwrap();
        let target = TargetManifold::sphere(1.0).unwrap();
        let text = field_csv(&random_field(&grid, &target, Layout::Surface, 1).unwrap(), &grid).unwrap();
        assert!(matches!(parse_field_csv(&text, &other, "f"), Err(Error::GridMismatch(_))));
        let renamed = text.replacen("ux", "mx", 1);
        assert!(matches!(parse_field_csv(&renamed, &grid, "f"), Err(Error::Config { .. })));
        let garbled = text.replacen(",", ",x", 8);
        assert!(parse_field_csv(&garbled, &grid, "f").is_err());
    }

    #[test]
    fn frames_have_all_columns() {
        let grid = SurfaceSpec::sphere_band(4).build().unwrap();
        let text = frames_csv(&grid);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "u,v,x,y,z,t1x,t1y,t1z,t2x,t2y,t2z,nx,ny,nz,k1,k2,w");
        assert!(lines.all(|l| l.split(',').count() == 17));
        assert_eq!(text.lines().count(), 1 + grid.n_nodes());
    }

    #[test]
    fn numbers_keep_seventeen_digits() {
        let x = 0.1f64 + 0.2;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
        assert_eq!(num(x), "3.0000000000000004e-1");
    }
}
