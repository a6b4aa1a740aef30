//! CSV grid files. One row per node; a leading `# flavor=… mu=…` comment
//! marks files that also carry a certificate.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use bolza_core::adjoint::{Certificate, Flavor};
use bolza_core::problem::{Grid, GridTrajectory};

use crate::canonical::format_f64;

fn push_components(header: &mut Vec<String>, name: &str, n: usize) {
    for j in 1..=n {
        header.push(format!("{name}_{j}"));
    }
}

/// Node table: `t, x_j, dx_j, d2x_j` and, with a certificate,
/// `alpha_k, xstar_j, ustar_j, psistar_j`. Forward differences are left
/// empty where they run past the last node.
pub fn write_grid_csv(traj: &GridTrajectory, cert: Option<&Certificate>) -> String {
    let n = traj.n();
    let grid = traj.grid();
    let steps = grid.steps();
    let mut header = vec!["t".to_string()];
    push_components(&mut header, "x", n);
    push_components(&mut header, "dx", n);
    push_components(&mut header, "d2x", n);
    let mut out = String::new();
    if let Some(c) = cert {
        push_components(&mut header, "alpha", c.m());
        push_components(&mut header, "xstar", n);
        push_components(&mut header, "ustar", n);
        push_components(&mut header, "psistar", n);
        out.push_str(&format!("# flavor={} mu={}\n", c.flavor.as_str(), format_f64(c.mu)));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    let empty = vec![String::new(); n];
    for i in 0..=steps {
        let mut row = vec![format_f64(grid.t(i))];
        row.extend(traj.x(i).iter().map(|v| format_f64(*v)));
        let nums = |v: Vec<f64>| v.into_iter().map(format_f64).collect::<Vec<_>>();
        row.extend(if i < steps { nums(traj.delta(i).expect("node in range")) } else { empty.clone() });
        row.extend(if i + 1 < steps { nums(traj.delta2(i).expect("node in range")) } else { empty.clone() });
        if let Some(c) = cert {
            row.extend(c.alphas.iter().map(|a| format_f64(a[i])));
            for g in [&c.xstar, &c.ustar, &c.psistar] {
                row.extend(g.x(i).iter().map(|v| format_f64(*v)));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

struct Table {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn column(&self, name: &str) -> anyhow::Result<Vec<f64>> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("missing column {name:?}"))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let v = row[idx];
                if v.is_nan() {
                    bail!("column {name:?} row {r} is empty");
                }
                Ok(v)
            })
            .collect()
    }

    fn meta(&self, key: &str) -> anyhow::Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| anyhow!("missing metadata {key:?} in the leading comment line"))
    }

    fn grid(&self) -> anyhow::Result<Grid> {
        if self.rows.len() < 2 {
            bail!("grid file needs at least two rows");
        }
        let grid = Grid::new(self.rows.len() - 1)?;
        for (i, t) in self.column("t")?.into_iter().enumerate() {
            if (t - grid.t(i)).abs() > 1e-9 {
                bail!("row {i}: t = {t} is not on the uniform grid");
            }
        }
        Ok(grid)
    }

    fn traj(&self, grid: Grid, name: &str, n: usize) -> anyhow::Result<GridTrajectory> {
        let cols = (1..=n)
            .map(|j| self.column(&format!("{name}_{j}")))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(cols[0].len() * n);
        for i in 0..cols[0].len() {
            values.extend(cols.iter().map(|c| c[i]));
        }
        Ok(GridTrajectory::new(grid, n, values)?)
    }
}

fn read_table(text: &str) -> anyhow::Result<Table> {
    let mut meta = Vec::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        for pair in line.trim_start_matches('#').split_whitespace() {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| anyhow!("malformed metadata entry {pair:?}"))?;
            meta.push((k.to_string(), v.to_string()));
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|cell| {
                let cell = cell.trim();
                if cell.is_empty() {
                    Ok(f64::NAN)
                } else {
                    cell.parse::<f64>().with_context(|| format!("row {r}: bad number {cell:?}"))
                }
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { meta, header, rows })
}

fn load(path: &Path) -> anyhow::Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    read_table(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_trajectory(text: &str, n: usize) -> anyhow::Result<GridTrajectory> {
    let table = read_table(text)?;
    let grid = table.grid()?;
    table.traj(grid, "x", n)
}

pub fn read_trajectory(path: &Path, n: usize) -> anyhow::Result<GridTrajectory> {
    let table = load(path)?;
    let grid = table.grid()?;
    table.traj(grid, "x", n).with_context(|| format!("trajectory {}", path.display()))
}

pub fn parse_certificate(text: &str, n: usize, m: usize) -> anyhow::Result<Certificate> {
    certificate_from(&read_table(text)?, n, m)
}

pub fn read_certificate(path: &Path, n: usize, m: usize) -> anyhow::Result<Certificate> {
    certificate_from(&load(path)?, n, m).with_context(|| format!("certificate {}", path.display()))
}

fn certificate_from(table: &Table, n: usize, m: usize) -> anyhow::Result<Certificate> {
    let grid = table.grid()?;
    let flavor: Flavor = table.meta("flavor")?.parse()?;
    let mu: f64 = table.meta("mu")?.parse().context("mu")?;
    let alphas = (1..=m)
        .map(|k| table.column(&format!("alpha_{k}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Certificate::new(
        mu,
        table.traj(grid, "xstar", n)?,
        table.traj(grid, "ustar", n)?,
        table.traj(grid, "psistar", n)?,
        alphas,
        flavor,
    )?)
}
