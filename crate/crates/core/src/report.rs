//! Table I and figure emitters.
//!
//! Figures are plain SVG written by hand so that output is byte-stable.
//! Every SVG has a CSV companion holding exactly the plotted numbers; all
//! plotted values pass through [`round_to`] first, so the drawing and the
//! CSV agree.
//!
//! Box plots use linear-interpolation quartiles (`h = (n − 1)·q`) and
//! whiskers at the most extreme points within 1.5·IQR of the box.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::evaluate::OverheadLedger;
use crate::model::{Policy, SuiteCategory};
use crate::pipeline::BuildRecord;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{figure}: input lacks column `{column}`")]
    MissingColumn { figure: String, column: String },
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    BadValue { row: usize, column: String, value: String },
    #[error("{figure}: no data to plot")]
    NoData { figure: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Rounds half away from zero to `decimals` places; `-0` becomes `0`.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    let r = (x * f).round() / f;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Shortest decimal form of `round_to(x, decimals)`: 113, 0.5, 4.1, 0.
pub fn fmt_num(x: f64, decimals: i32) -> String {
    format!("{}", round_to(x, decimals))
}

/// A CSV file held as strings, addressed by column name.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read<R: Read>(reader: R) -> Result<Self, ReportError> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn from_path(path: &Path) -> Result<Self, ReportError> {
        let file = std::fs::File::open(path).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read(file)
    }

    pub fn column(&self, figure: &str, name: &str) -> Result<usize, ReportError> {
        self.header.iter().position(|h| h == name).ok_or_else(|| ReportError::MissingColumn {
            figure: figure.to_string(),
            column: name.to_string(),
        })
    }

    fn parsed<T: std::str::FromStr>(&self, figure: &str, name: &str) -> Result<Vec<T>, ReportError> {
        let c = self.column(figure, name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let v = row.get(c).map(String::as_str).unwrap_or("");
                v.parse().map_err(|_| ReportError::BadValue {
                    row: i + 1,
                    column: name.to_string(),
                    value: v.to_string(),
                })
            })
            .collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-policy means of `column`, in policy order.
fn policy_means(table: &CsvTable, figure: &str, column: &str) -> Result<BTreeMap<Policy, f64>, ReportError> {
    let policies: Vec<Policy> = table.parsed(figure, "policy")?;
    let values: Vec<f64> = table.parsed(figure, column)?;
    let mut groups: BTreeMap<Policy, Vec<f64>> = BTreeMap::new();
    for (p, v) in policies.into_iter().zip(values) {
        groups.entry(p).or_default().push(v);
    }
    Ok(groups.into_iter().map(|(p, v)| (p, mean(&v))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub policy: Policy,
    pub apfd_pct: String,
    pub tet: String,
    pub overhead: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table1 {
    pub rows: Vec<Table1Row>,
    pub warnings: Vec<String>,
}

impl Table1 {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,apfd_pct,tet_s,overhead_s\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.policy.label(), r.apfd_pct, r.tet, r.overhead);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<18} {:>8} {:>8} {:>12}\n", "Model", "APFD (%)", "TET (s)", "Overhead (s)");
        for r in &self.rows {
            let _ = writeln!(s, "{:<18} {:>8} {:>8} {:>12}", r.policy.label(), r.apfd_pct, r.tet, r.overhead);
        }
        s
    }
}

/// Mean APFD (percent, one decimal), TET and overhead total per policy.
/// Policies absent from the input produce a warning and no row.
pub fn emit_table1(metrics: &CsvTable) -> Result<Table1, ReportError> {
    const FIG: &str = "table1";
    let apfd = policy_means(metrics, FIG, "apfd")?;
    let tet = policy_means(metrics, FIG, "tet")?;
    let overhead = policy_means(metrics, FIG, "overhead_total")?;
    let mut table = Table1::default();
    for p in Policy::ALL {
        match apfd.get(&p) {
            Some(a) => table.rows.push(Table1Row {
                policy: p,
                apfd_pct: format!("{:.1}", round_to(a * 100.0, 1)),
                tet: fmt_num(tet[&p], 1),
                overhead: fmt_num(overhead[&p], 1),
            }),
            None => table.warnings.push(format!("no metrics for policy `{p}`; row omitted")),
        }
    }
    Ok(table)
}

/// Order statistic by linear interpolation between closest ranks.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub lower_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> BoxStats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
    BoxStats {
        lower_whisker: inside.first().copied().unwrap_or(q1),
        q1,
        median,
        q3,
        upper_whisker: inside.last().copied().unwrap_or(q3),
        outliers: v.into_iter().filter(|x| !(lo_fence..=hi_fence).contains(x)).collect(),
    }
}

/// Minimal SVG writer.
struct Svg {
    width: f64,
    height: f64,
    body: String,
}

const PALETTE: [&str; 4] = ["#8c8c8c", "#e6a23c", "#409eff", "#67c23a"];

impl Svg {
    fn new(width: f64, height: f64, title: &str) -> Self {
        let mut s = Self {
            width,
            height,
            body: String::new(),
        };
        s.text(width / 2.0, 20.0, title, "middle", 14);
        s
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#,
            round_to(x, 2),
            round_to(y, 2),
            round_to(w, 2),
            round_to(h, 2)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}"/>"#,
            round_to(x1, 2),
            round_to(y1, 2),
            round_to(x2, 2),
            round_to(y2, 2)
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{}" cy="{}" r="{r}" fill="{fill}"/>"#,
            round_to(x, 2),
            round_to(y, 2)
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", round_to(*x, 2), round_to(*y, 2)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="2"/>"#,
            pts.join(" ")
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: u32) {
        let escaped = s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="{anchor}" font-family="sans-serif" font-size="{size}">{escaped}</text>"#,
            round_to(x, 2),
            round_to(y, 2)
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// An SVG with the CSV of its plotted values.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub name: String,
    pub svg: String,
    pub csv: String,
}

const PLOT_LEFT: f64 = 60.0;
const PLOT_TOP: f64 = 40.0;
const PLOT_W: f64 = 440.0;
const PLOT_H: f64 = 260.0;

fn axes(svg: &mut Svg, y_max: f64, y_label: &str) {
    let bottom = PLOT_TOP + PLOT_H;
    svg.line(PLOT_LEFT, PLOT_TOP, PLOT_LEFT, bottom, "black");
    svg.line(PLOT_LEFT, bottom, PLOT_LEFT + PLOT_W, bottom, "black");
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = bottom - PLOT_H * k as f64 / 4.0;
        svg.line(PLOT_LEFT - 4.0, y, PLOT_LEFT, y, "black");
        svg.text(PLOT_LEFT - 6.0, y + 4.0, &fmt_num(v, 2), "end", 10);
    }
    svg.text(14.0, PLOT_TOP + PLOT_H / 2.0, y_label, "middle", 11);
}

fn y_of(v: f64, y_max: f64) -> f64 {
    PLOT_TOP + PLOT_H - if y_max > 0.0 { v / y_max * PLOT_H } else { 0.0 }
}

/// Headroom above the largest value, never zero.
fn nice_max(v: f64) -> f64 {
    if v <= 0.0 {
        1.0
    } else {
        v * 1.1
    }
}

fn bar_chart(name: &str, title: &str, y_label: &str, header: &str, bars: &[(String, f64)], palette: bool) -> Figure {
    let mut csv = format!("{header}\n");
    for (label, v) in bars {
        let _ = writeln!(csv, "{label},{}", fmt_num(*v, 4));
    }
    let y_max = nice_max(bars.iter().map(|b| b.1).fold(0.0, f64::max));
    let mut svg = Svg::new(PLOT_LEFT + PLOT_W + 20.0, PLOT_TOP + PLOT_H + 50.0, title);
    axes(&mut svg, y_max, y_label);
    let slot = PLOT_W / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let v = round_to(*v, 4);
        let x = PLOT_LEFT + slot * i as f64 + slot * 0.15;
        let y = y_of(v, y_max);
        let fill = if palette { PALETTE[i % PALETTE.len()] } else { "#409eff" };
        svg.rect(x, y, slot * 0.7, PLOT_TOP + PLOT_H - y, fill);
        svg.text(x + slot * 0.35, y - 4.0, &fmt_num(v, 4), "middle", 10);
        svg.text(x + slot * 0.35, PLOT_TOP + PLOT_H + 16.0, label, "middle", 10);
    }
    Figure {
        name: name.to_string(),
        svg: svg.finish(),
        csv,
    }
}

/// Mean APFD (percent) per policy.
pub fn fig1(metrics: &CsvTable) -> Result<Figure, ReportError> {
    let means = policy_means(metrics, "fig1", "apfd")?;
    if means.is_empty() {
        return Err(ReportError::NoData { figure: "fig1".into() });
    }
    let bars: Vec<(String, f64)> = means.iter().map(|(p, a)| (p.label().to_string(), a * 100.0)).collect();
    Ok(bar_chart("fig1_apfd", "APFD by policy", "APFD (%)", "policy,apfd_pct", &bars, true))
}

/// Faults per code class per build.
pub fn fig2(log: &[BuildRecord]) -> Result<Figure, ReportError> {
    if log.is_empty() {
        return Err(ReportError::NoData { figure: "fig2".into() });
    }
    let classes: Vec<&String> = log
        .iter()
        .flat_map(|b| b.class_faults.keys())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let max = log
        .iter()
        .flat_map(|b| b.class_faults.values())
        .copied()
        .max()
        .unwrap_or(0)
        .max(1);
    let mut csv = String::from("class,build,faults\n");
    let cell = 18.0;
    let left = 70.0;
    let top = 40.0;
    let mut svg = Svg::new(
        left + cell * log.len() as f64 + 20.0,
        top + cell * classes.len() as f64 + 40.0,
        "Faults per class and build",
    );
    for (r, class) in classes.iter().enumerate() {
        svg.text(left - 6.0, top + cell * r as f64 + cell * 0.7, class, "end", 10);
        for (c, b) in log.iter().enumerate() {
            let v = b.class_faults.get(*class).copied().unwrap_or(0);
            let _ = writeln!(csv, "{class},{},{v}", b.build_number);
            let shade = 255 - (v * 200 / max) as u8;
            svg.rect(
                left + cell * c as f64,
                top + cell * r as f64,
                cell - 1.0,
                cell - 1.0,
                &format!("rgb(255,{shade},{shade})"),
            );
        }
    }
    for (c, b) in log.iter().enumerate() {
        svg.text(
            left + cell * c as f64 + cell / 2.0,
            top + cell * classes.len() as f64 + 14.0,
            &b.build_number.to_string(),
            "middle",
            9,
        );
    }
    Ok(Figure {
        name: "fig2_heatmap".into(),
        svg: svg.finish(),
        csv,
    })
}

/// Mean TET against suite size, one line per policy.
pub fn fig3(metrics: &CsvTable) -> Result<Figure, ReportError> {
    const FIG: &str = "fig3";
    let policies: Vec<Policy> = metrics.parsed(FIG, "policy")?;
    let ns: Vec<usize> = metrics.parsed(FIG, "n")?;
    let tets: Vec<f64> = metrics.parsed(FIG, "tet")?;
    let mut groups: BTreeMap<(Policy, usize), Vec<f64>> = BTreeMap::new();
    for ((p, n), t) in policies.into_iter().zip(ns).zip(tets) {
        groups.entry((p, n)).or_default().push(t);
    }
    if groups.is_empty() {
        return Err(ReportError::NoData { figure: FIG.into() });
    }
    let points: BTreeMap<(Policy, usize), f64> =
        groups.into_iter().map(|(k, v)| (k, round_to(mean(&v), 4))).collect();
    let mut csv = String::from("policy,n,tet_mean\n");
    for ((p, n), t) in &points {
        let _ = writeln!(csv, "{},{n},{}", p.as_str(), fmt_num(*t, 4));
    }
    let n_min = points.keys().map(|k| k.1).min().unwrap_or(0) as f64;
    let n_max = points.keys().map(|k| k.1).max().unwrap_or(0) as f64;
    let y_max = nice_max(points.values().copied().fold(0.0, f64::max));
    let x_of = |n: usize| {
        if n_max > n_min {
            PLOT_LEFT + (n as f64 - n_min) / (n_max - n_min) * PLOT_W
        } else {
            PLOT_LEFT + PLOT_W / 2.0
        }
    };
    let mut svg = Svg::new(PLOT_LEFT + PLOT_W + 140.0, PLOT_TOP + PLOT_H + 50.0, "TET vs suite size");
    axes(&mut svg, y_max, "TET (s)");
    let sizes: std::collections::BTreeSet<usize> = points.keys().map(|k| k.1).collect();
    for n in &sizes {
        svg.text(x_of(*n), PLOT_TOP + PLOT_H + 16.0, &n.to_string(), "middle", 10);
    }
    for (i, p) in Policy::ALL.iter().enumerate() {
        let line: Vec<(f64, f64)> = points
            .iter()
            .filter(|(k, _)| k.0 == *p)
            .map(|(k, t)| (x_of(k.1), y_of(*t, y_max)))
            .collect();
        if line.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        svg.polyline(&line, color);
        for &(x, y) in &line {
            svg.circle(x, y, 3.0, color);
        }
        svg.text(PLOT_LEFT + PLOT_W + 10.0, PLOT_TOP + 16.0 * i as f64 + 10.0, p.label(), "start", 10);
        svg.rect(PLOT_LEFT + PLOT_W + 110.0, PLOT_TOP + 16.0 * i as f64, 10.0, 10.0, color);
    }
    Ok(Figure {
        name: "fig3_tet_vs_size".into(),
        svg: svg.finish(),
        csv,
    })
}

/// Mean overhead components of `policy`, plus their total.
pub fn fig4(metrics: &CsvTable, policy: Policy) -> Result<Figure, ReportError> {
    const FIG: &str = "fig4";
    let policies: Vec<Policy> = metrics.parsed(FIG, "policy")?;
    let keep: Vec<bool> = policies.iter().map(|&p| p == policy).collect();
    if !keep.iter().any(|&k| k) {
        return Err(ReportError::NoData { figure: FIG.into() });
    }
    let mut bars = Vec::new();
    let mut total = 0.0;
    for name in OverheadLedger::COMPONENTS {
        let col: Vec<f64> = metrics.parsed(FIG, &format!("overhead_{name}"))?;
        let sel: Vec<f64> = col.into_iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| v).collect();
        let v = round_to(mean(&sel), 4);
        total += v;
        bars.push((name.to_string(), v));
    }
    bars.push(("total".to_string(), round_to(total, 4)));
    Ok(bar_chart(
        "fig4_overhead",
        &format!("Overhead breakdown ({})", policy.label()),
        "seconds",
        "component,seconds",
        &bars,
        false,
    ))
}

/// APFD box plots per suite category and policy.
pub fn fig5(metrics: &CsvTable) -> Result<Figure, ReportError> {
    const FIG: &str = "fig5";
    let policies: Vec<Policy> = metrics.parsed(FIG, "policy")?;
    let cats: Vec<SuiteCategory> = metrics.parsed(FIG, "category")?;
    let apfd: Vec<f64> = metrics.parsed(FIG, "apfd")?;
    let mut groups: BTreeMap<(SuiteCategory, Policy), Vec<f64>> = BTreeMap::new();
    for ((p, c), a) in policies.into_iter().zip(cats).zip(apfd) {
        groups.entry((c, p)).or_default().push(round_to(a * 100.0, 4));
    }
    if groups.is_empty() {
        return Err(ReportError::NoData { figure: FIG.into() });
    }
    let mut csv = String::from("category,policy,lower_whisker,q1,median,q3,upper_whisker,outliers\n");
    let stats: Vec<((SuiteCategory, Policy), BoxStats)> = groups
        .iter()
        .map(|(k, v)| {
            let mut s = box_stats(v);
            for x in [&mut s.lower_whisker, &mut s.q1, &mut s.median, &mut s.q3, &mut s.upper_whisker] {
                *x = round_to(*x, 4);
            }
            (*k, s)
        })
        .collect();
    for ((c, p), s) in &stats {
        let outliers: Vec<String> = s.outliers.iter().map(|o| fmt_num(*o, 4)).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            c.as_str(),
            p.as_str(),
            fmt_num(s.lower_whisker, 4),
            fmt_num(s.q1, 4),
            fmt_num(s.median, 4),
            fmt_num(s.q3, 4),
            fmt_num(s.upper_whisker, 4),
            outliers.join(";")
        );
    }
    let y_max = 100.0;
    let mut svg = Svg::new(PLOT_LEFT + PLOT_W + 20.0, PLOT_TOP + PLOT_H + 50.0, "APFD by suite category");
    axes(&mut svg, y_max, "APFD (%)");
    let slot = PLOT_W / stats.len() as f64;
    for (i, ((c, p), s)) in stats.iter().enumerate() {
        let cx = PLOT_LEFT + slot * (i as f64 + 0.5);
        let w = slot * 0.6;
        let color = PALETTE[Policy::ALL.iter().position(|q| q == p).unwrap_or(0)];
        svg.line(cx, y_of(s.lower_whisker, y_max), cx, y_of(s.q1, y_max), "black");
        svg.line(cx, y_of(s.q3, y_max), cx, y_of(s.upper_whisker, y_max), "black");
        svg.rect(cx - w / 2.0, y_of(s.q3, y_max), w, y_of(s.q1, y_max) - y_of(s.q3, y_max), color);
        svg.line(cx - w / 2.0, y_of(s.median, y_max), cx + w / 2.0, y_of(s.median, y_max), "black");
        for &o in &s.outliers {
            svg.circle(cx, y_of(o, y_max), 2.0, "black");
        }
        svg.text(cx, PLOT_TOP + PLOT_H + 16.0, c.as_str(), "middle", 9);
        svg.text(cx, PLOT_TOP + PLOT_H + 28.0, p.label(), "middle", 8);
    }
    Ok(Figure {
        name: "fig5_apfd_boxplot".into(),
        svg: svg.finish(),
        csv,
    })
}

/// Builds every figure the inputs allow. Figures needing an absent input
/// are skipped with a warning.
pub fn emit_figures(metrics: Option<&CsvTable>, log: Option<&[BuildRecord]>) -> Result<(Vec<Figure>, Vec<String>), ReportError> {
    let mut figs = Vec::new();
    let mut warnings = Vec::new();
    match metrics {
        Some(m) => {
            figs.push(fig1(m)?);
            figs.push(fig3(m)?);
            match fig4(m, Policy::QuantumEnhanced) {
                Ok(f) => figs.push(f),
                Err(ReportError::NoData { .. }) => warnings.push("fig4: no quantum_enhanced rows; skipped".into()),
                Err(e) => return Err(e),
            }
            figs.push(fig5(m)?);
        }
        None => warnings.push("no metrics input; fig1, fig3, fig4, fig5 skipped".into()),
    }
    match log {
        Some(l) if !l.is_empty() => figs.push(fig2(l)?),
        _ => warnings.push("no pipeline log; fig2 skipped".into()),
    }
    Ok((figs, warnings))
}

pub fn write_figures(figs: &[Figure], out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();
    for f in figs {
        for (ext, body) in [("svg", &f.svg), ("csv", &f.csv)] {
            let path = out_dir.join(format!("{}.{ext}", f.name));
            std::fs::write(&path, body).map_err(io(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> CsvTable {
        CsvTable::read(text.as_bytes()).unwrap()
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(113.0, 1), "113");
        assert_eq!(fmt_num(0.5, 1), "0.5");
        assert_eq!(fmt_num(1.0 + 1.0 + 1.0 + 1.0 + 0.05 + 0.05, 1), "4.1");
        assert_eq!(fmt_num(-0.00001, 1), "0");
    }

    #[test]
    fn quartiles_of_one_to_five() {
        let s = box_stats(&[5.0, 3.0, 1.0, 2.0, 4.0]);
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        assert_eq!((s.lower_whisker, s.upper_whisker), (1.0, 5.0));
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn outlier_beyond_fence() {
        let s = box_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!(s.upper_whisker, 4.0);
    }

    #[test]
    fn table1_single_policy_and_empty() {
        let t = emit_table1(&table("policy,apfd,tet,overhead_total\ngreedy,0.5,10,0\n")).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.warnings.len(), 3);
        let t = emit_table1(&table("policy,apfd,tet,overhead_total\n")).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.warnings.len(), 4);
    }

    #[test]
    fn missing_column_named() {
        let err = fig1(&table("policy,tet\nrandom,1\n")).unwrap_err();
        match err {
            ReportError::MissingColumn { figure, column } => assert_eq!((figure.as_str(), column.as_str()), ("fig1", "apfd")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn fig4_bars_sum_to_total() {
        let mut text = String::from("policy,");
        text.push_str(&OverheadLedger::COMPONENTS.map(|c| format!("overhead_{c}")).join(","));
        text.push_str("\nquantum_enhanced,1,1,1,1,0.05,0.05\n");
        let f = fig4(&table(&text), Policy::QuantumEnhanced).unwrap();
        assert!(f.csv.ends_with("total,4.1\n"), "{}", f.csv);
    }

    #[test]
    fn report_is_deterministic() {
        let m = table("policy,category,n,apfd,tet\nrandom,small,40,0.5,10\nrandom,small,40,0.7,12\nml_only,medium,80,0.8,9\n");
        assert_eq!(fig5(&m).unwrap(), fig5(&m).unwrap());
        assert_eq!(fig3(&m).unwrap(), fig3(&m).unwrap());
    }
}
