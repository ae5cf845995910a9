//! Learning-curve CSV.
//!
//! Header, fixed: `iter,node_id,msd_w_db,msd_h_db,emse_db,msd_w_theory_db,msd_h_theory_db`.
//! Each iteration `i` (0-based, after the `i`-th update) has one row per node,
//! `node_id = 1..N`, followed by one `net` row holding `10·log₁₀` of the
//! network mean of the linear node values. Unknown values are empty fields.
//! Numbers use the shortest representation that parses back exactly.

use std::io::Write;
use std::path::Path;

use sdlms_core::estimators::Trajectory;

use crate::error::{HarnessError, Result};
use crate::metrics::{db, network_curve, Metric, MetricsSeries};

pub const HEADER: [&str; 7] = [
    "iter",
    "node_id",
    "msd_w_db",
    "msd_h_db",
    "emse_db",
    "msd_w_theory_db",
    "msd_h_theory_db",
];

pub const NET: &str = "net";

fn field(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn parse(x: &str) -> std::result::Result<f64, String> {
    if x.is_empty() {
        Ok(f64::NAN)
    } else {
        x.parse::<f64>().map_err(|e| format!("`{x}`: {e}"))
    }
}

/// Serializes a series to CSV text.
pub fn to_csv(series: &MetricsSeries) -> String {
    let t = &series.sim;
    let th = series.theory.as_ref();
    let n = t.nodes;
    let mut out = String::with_capacity(t.horizon * (n + 1) * 96);
    out.push_str(&HEADER.join(","));
    out.push('\n');
    let net = |tr: &Trajectory, m: Metric| network_curve(tr, m);
    let sim_net = [net(t, Metric::MsdW), net(t, Metric::MsdH), net(t, Metric::Emse)];
    let th_net = th.map(|th| [net(th, Metric::MsdW), net(th, Metric::MsdH)]);
    let theory_at = |m: Metric, i: usize, k: usize| match th {
        Some(th) if i < th.horizon => db(m.of(th)[th.index(i, k)]),
        _ => f64::NAN,
    };
    for i in 0..t.horizon {
        for k in 0..n {
            let idx = t.index(i, k);
            let row = [
                i.to_string(),
                (k + 1).to_string(),
                field(db(t.msd_w[idx])),
                field(db(t.msd_h[idx])),
                field(db(t.emse[idx])),
                field(theory_at(Metric::MsdW, i, k)),
                field(theory_at(Metric::MsdH, i, k)),
            ];
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let (tw, thh) = match &th_net {
            Some([w, h]) if i < w.len() => (db(w[i]), db(h[i])),
            _ => (f64::NAN, f64::NAN),
        };
        let row = [
            i.to_string(),
            NET.to_string(),
            field(db(sim_net[0][i])),
            field(db(sim_net[1][i])),
            field(db(sim_net[2][i])),
            field(tw),
            field(thh),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}

pub fn write_series(path: &Path, series: &MetricsSeries) -> Result<()> {
    write_text(path, &to_csv(series))
}

/// One parsed row, values in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub msd_w: f64,
    pub msd_h: f64,
    pub emse: f64,
    pub msd_w_theory: f64,
    pub msd_h_theory: f64,
}

/// A learning-curve CSV read back: node rows `[i][k]` and network rows `[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub nodes: usize,
    pub node_rows: Vec<Vec<CsvRow>>,
    pub net_rows: Vec<CsvRow>,
}

impl CurveTable {
    pub fn horizon(&self) -> usize {
        self.net_rows.len()
    }
}

pub fn read_curves(path: &Path) -> Result<CurveTable> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    let header = rdr.headers().map_err(|e| HarnessError::csv(path, e))?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(HarnessError::schema(format!(
            "{}: header `{}` differs from `{}`",
            path.display(),
            header.iter().collect::<Vec<_>>().join(","),
            HEADER.join(",")
        )));
    }
    let mut node_rows: Vec<Vec<CsvRow>> = Vec::new();
    let mut net_rows = Vec::new();
    let mut current: Vec<CsvRow> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::csv(path, e))?;
        let bad = |msg: String| HarnessError::schema(format!("{} row {}: {msg}", path.display(), line + 2));
        let iter: usize = rec[0].parse().map_err(|e| bad(format!("iter: {e}")))?;
        if iter != net_rows.len() {
            return Err(bad(format!("expected iteration {}, found {iter}", net_rows.len())));
        }
        let row = CsvRow {
            msd_w: parse(&rec[2]).map_err(bad)?,
            msd_h: parse(&rec[3]).map_err(bad)?,
            emse: parse(&rec[4]).map_err(bad)?,
            msd_w_theory: parse(&rec[5]).map_err(bad)?,
            msd_h_theory: parse(&rec[6]).map_err(bad)?,
        };
        if &rec[1] == NET {
            if let Some(first) = node_rows.first() {
                if first.len() != current.len() {
                    return Err(bad(format!("{} node rows, expected {}", current.len(), first.len())));
                }
            }
            node_rows.push(std::mem::take(&mut current));
            net_rows.push(row);
        } else {
            let id: usize = rec[1].parse().map_err(|e| bad(format!("node_id: {e}")))?;
            if id != current.len() + 1 {
                return Err(bad(format!("expected node {}, found {id}", current.len() + 1)));
            }
            current.push(row);
        }
    }
    if !current.is_empty() {
        return Err(HarnessError::schema(format!("{}: missing final net row", path.display())));
    }
    if net_rows.is_empty() {
        return Err(HarnessError::schema(format!("{}: no rows", path.display())));
    }
    Ok(CurveTable {
        nodes: node_rows[0].len(),
        node_rows,
        net_rows,
    })
}
