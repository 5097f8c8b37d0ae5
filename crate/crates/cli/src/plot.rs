//! Static SVG summary of a run directory.

use crate::error::CliError;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Files the plotter knows how to draw, in panel order.
pub const INPUTS: [&str; 8] = [
    "counts.csv",
    "bloch_diag.csv",
    "energies.csv",
    "histogram_final.csv",
    "transport.csv",
    "lyapunov.csv",
    "transport_summary.csv",
    "sweep_0_beta.csv",
];

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mark {
    Line,
    Points,
    Steps,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Option<Table>, CliError> {
        if !path.exists() {
            return Ok(None);
        }
        let bad = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
        let mut r = csv::Reader::from_path(path).map_err(bad)?;
        let header = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
        let rows = r.records().collect::<Result<_, _>>().map_err(bad)?;
        Ok(Some(Table { header, rows }))
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn num(&self, row: &csv::StringRecord, col: usize) -> f64 {
        row.get(col).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN)
    }

    fn xy(&self, x: &str, y: &str) -> Vec<(f64, f64)> {
        match (self.col(x), self.col(y)) {
            (Some(i), Some(j)) => self.rows.iter().map(|r| (self.num(r, i), self.num(r, j))).collect(),
            _ => Vec::new(),
        }
    }

    /// `(x, y)` grouped by the string value of `key`, groups in first-seen order.
    fn grouped(&self, key: &str, x: &str, y: &str) -> Vec<(String, Vec<(f64, f64)>)> {
        let (Some(k), Some(i), Some(j)) = (self.col(key), self.col(x), self.col(y)) else {
            return Vec::new();
        };
        let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for r in &self.rows {
            let label = r.get(k).unwrap_or("").to_string();
            let p = (self.num(r, i), self.num(r, j));
            match out.iter_mut().find(|(l, _)| *l == label) {
                Some((_, v)) => v.push(p),
                None => out.push((label, vec![p])),
            }
        }
        out
    }
}

fn series(label: &str, points: Vec<(f64, f64)>, mark: Mark) -> Series {
    Series { label: label.to_string(), points, mark }
}

fn panel(title: &str, x: &str, y: &str, series: Vec<Series>) -> Panel {
    Panel { title: title.into(), x_label: x.into(), y_label: y.into(), series }
}

fn panels_for(dir: &Path) -> Result<Vec<Panel>, CliError> {
    let mut out = Vec::new();
    if let Some(t) = Table::read(&dir.join("counts.csv"))? {
        let s = t
            .grouped("region", "t", "N")
            .into_iter()
            .filter(|(l, _)| l != "total")
            .map(|(l, p)| series(&l, p, Mark::Line))
            .collect();
        out.push(panel("Particle number", "t", "N", s));
    }
    if let Some(t) = Table::read(&dir.join("bloch_diag.csv"))? {
        let t_last = t.xy("t", "t").iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let (ti, ri, ki, rho, be) = (t.col("t"), t.col("region"), t.col("k"), t.col("rho"), t.col("be"));
        if let (Some(ti), Some(ri), Some(ki), Some(rho), Some(be)) = (ti, ri, ki, rho, be) {
            let mut groups: BTreeMap<String, (Vec<(f64, f64)>, Vec<(f64, f64)>)> = BTreeMap::new();
            for r in t.rows.iter().filter(|r| t.num(r, ti) == t_last) {
                let g = groups.entry(r.get(ri).unwrap_or("").to_string()).or_default();
                let k = t.num(r, ki);
                g.0.push((k, t.num(r, rho)));
                let b = t.num(r, be);
                if b.is_finite() {
                    g.1.push((k, b));
                }
            }
            let mut s = Vec::new();
            for (label, (pts, reference)) in groups {
                s.push(series(&label, pts, Mark::Points));
                if !reference.is_empty() {
                    s.push(series(&format!("{label} initial"), reference, Mark::Line));
                }
            }
            out.push(panel(&format!("Bloch occupations, t = {t_last}"), "k", "n_k", s));
        }
    }
    if let Some(t) = Table::read(&dir.join("energies.csv"))? {
        let s = vec![
            series("kinetic", t.xy("t", "E_K"), Mark::Line),
            series("potential", t.xy("t", "E_P"), Mark::Line),
            series("total", t.xy("t", "E"), Mark::Line),
        ];
        out.push(panel("Energy per site", "t", "E", s));
    }
    let hist = |name: &str| -> Result<Option<Vec<(f64, f64)>>, CliError> {
        Ok(Table::read(&dir.join(name))?.map(|t| t.xy("bin_lo", "count")))
    };
    if let Some(last) = hist("histogram_final.csv")? {
        let mut s = Vec::new();
        if let Some(first) = hist("histogram_initial.csv")? {
            s.push(series("initial", first, Mark::Steps));
        }
        s.push(series("final", last, Mark::Steps));
        out.push(panel("Energy histogram", "energy per site", "count", s));
    }
    if let Some(t) = Table::read(&dir.join("transport.csv"))? {
        let s = vec![series("N_L − N_R", t.xy("t", "dN"), Mark::Line), series("N_chain", t.xy("t", "N_chain"), Mark::Line)];
        out.push(panel("Transport", "t", "N", s));
    }
    if let Some(t) = Table::read(&dir.join("lyapunov.csv"))? {
        out.push(panel(
            "Lyapunov exponents",
            "energy per site",
            "λ",
            vec![series("trajectories", t.xy("energy", "lambda"), Mark::Points)],
        ));
    }
    if let Some(t) = Table::read(&dir.join("transport_summary.csv"))? {
        out.push(panel("Relaxation rate", "ε", "Γ", vec![series("Γ", t.xy("epsilon", "Gamma"), Mark::Points)]));
    }
    let mut sweeps: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("sweep_") && n.ends_with(".csv")))
        .collect();
    sweeps.sort();
    for path in sweeps {
        if let Some(t) = Table::read(&path)? {
            let name = path.file_stem().and_then(|n| n.to_str()).unwrap_or("sweep").to_string();
            let axis = name.split('_').nth(2).unwrap_or("value").to_string();
            out.push(panel(&name, &axis, "λ", vec![series("λ", t.xy("value", "lambda"), Mark::Points)]));
        }
    }
    Ok(out)
}

/// Draws up to four panels from `dir` into `dir/figure.svg`.
pub fn plot_dir(dir: &Path) -> Result<PathBuf, CliError> {
    if !dir.is_dir() {
        return Err(CliError::MissingInputs(vec![dir.display().to_string()]));
    }
    let panels = panels_for(dir)?;
    if panels.is_empty() {
        return Err(CliError::MissingInputs(INPUTS.iter().map(|s| s.to_string()).collect()));
    }
    let svg = render(&panels[..panels.len().min(4)]);
    let path = dir.join("figure.svg");
    std::fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Lays panels out on a 2×2 grid.
pub fn render(panels: &[Panel]) -> String {
    let cols = if panels.len() > 1 { 2 } else { 1 };
    let rows = panels.len().div_ceil(2).max(1);
    let (w, h) = (cols as f64 * PANEL_W, rows as f64 * PANEL_H);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        let (x0, y0) = ((i % 2) as f64 * PANEL_W, (i / 2) as f64 * PANEL_H);
        draw_panel(&mut s, p, x0, y0);
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(panel: &Panel) -> (f64, f64, f64, f64) {
    let pts = panel.series.iter().flat_map(|s| &s.points).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    (x0, x1, y0 - pad, y1 + pad)
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn draw_panel(s: &mut String, p: &Panel, ox: f64, oy: f64) {
    let (x0, x1, y0, y1) = bounds(p);
    let (pw, ph) = (PANEL_W - 1.5 * MARGIN, PANEL_H - 2.0 * MARGIN);
    let (left, top) = (ox + MARGIN, oy + MARGIN * 0.8);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="13">{}</text>"#, left, oy + 22.0, esc(&p.title));
    let _ = writeln!(s, r#"<rect x="{left:.1}" y="{top:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(xv), top + ph + 14.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 4.0, sy(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        top + ph + 30.0,
        esc(&p.x_label)
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, ox + 4.0, top - 6.0, esc(&p.y_label));
    for (i, ser) in p.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> =
            ser.points.iter().filter(|q| q.0.is_finite() && q.1.is_finite()).map(|&(x, y)| (sx(x), sy(y))).collect();
        match ser.mark {
            Mark::Line | Mark::Steps if !pts.is_empty() => {
                let mut d = String::new();
                for (j, (x, y)) in pts.iter().enumerate() {
                    if j == 0 {
                        let _ = write!(d, "M{x:.1},{y:.1}");
                    } else if ser.mark == Mark::Steps {
                        let _ = write!(d, "H{x:.1}V{y:.1}");
                    } else {
                        let _ = write!(d, "L{x:.1},{y:.1}");
                    }
                }
                let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.3"/>"#);
            }
            Mark::Points => {
                for (x, y) in &pts {
                    let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="2" fill="{color}"/>"#);
                }
            }
            _ => {}
        }
        let ly = top + 12.0 + 13.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{}</text>"#,
            left + pw - 6.0,
            esc(&ser.label)
        );
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic() {
        let p = panel("t", "x", "y", vec![series("a", vec![(0.0, 1.0), (1.0, 2.0)], Mark::Line)]);
        assert_eq!(render(std::slice::from_ref(&p)), render(&[p]));
    }

    #[test]
    fn ticks() {
        assert_eq!(tick(0.0), "0");
        assert_eq!(tick(2.5), "2.5");
        assert_eq!(tick(100.0), "100");
        assert_eq!(tick(1e-3), "1.0e-3");
    }

    #[test]
    fn empty_dir_lists_inputs() {
        let dir = tempfile::tempdir().unwrap();
        match plot_dir(dir.path()) {
            Err(CliError::MissingInputs(v)) => assert_eq!(v.len(), INPUTS.len()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
