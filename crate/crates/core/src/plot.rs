//! Static SVG line plots of result tables.
//!
//! Each group becomes one polyline through the median `y` at every distinct
//! `x`. Output bytes depend only on the table and the `PlotSpec`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::check::median;
use crate::error::{Error, Result};
use crate::table::{fmt_decimal, Table};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scale {
    #[default]
    Linear,
    LogX,
    LogY,
    LogLog,
}

impl Scale {
    fn log_x(self) -> bool {
        matches!(self, Scale::LogX | Scale::LogLog)
    }

    fn log_y(self) -> bool {
        matches!(self, Scale::LogY | Scale::LogLog)
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Scale::Linear),
            "log-x" => Ok(Scale::LogX),
            "log-y" => Ok(Scale::LogY),
            "log-log" => Ok(Scale::LogLog),
            _ => Err(Error::Config(format!("unknown scale {s:?}"))),
        }
    }
}

/// What to plot, written `x=n,y=gap,group=process,scale=log-log,out=gap.svg`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    pub group: Option<String>,
    pub scale: Scale,
    pub out: Option<PathBuf>,
}

impl FromStr for PlotSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mut x, mut y, mut group, mut scale, mut out) = (None, None, None, Scale::Linear, None);
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("plot spec: expected key=value, got {part:?}")))?;
            let v = v.trim().to_string();
            match k.trim() {
                "x" => x = Some(v),
                "y" => y = Some(v),
                "group" => group = Some(v),
                "scale" => scale = v.parse()?,
                "out" => out = Some(PathBuf::from(v)),
                other => return Err(Error::Config(format!("plot spec: unknown key {other:?}"))),
            }
        }
        Ok(Self {
            x: x.ok_or_else(|| Error::Config("plot spec needs x".into()))?,
            y: y.ok_or_else(|| Error::Config("plot spec needs y".into()))?,
            group,
            scale,
            out,
        })
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { lo, hi, log }
    }

    /// Position in `[0, 1]`.
    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let t: Vec<f64> = (self.lo.ceil() as i32..=self.hi.floor() as i32).map(|e| 10f64.powi(e)).collect();
            if t.len() >= 2 {
                return t;
            }
            return vec![10f64.powf(self.lo), 10f64.powf(self.hi)];
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut t = Vec::new();
        let mut v = (self.lo / step).ceil() * step;
        while v <= self.hi + 1e-9 * step {
            t.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
            v += step;
        }
        t
    }
}

fn label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.len() > 8 {
        format!("{v:.2e}")
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Series of `(x, median y)` per group, in first-seen group order.
pub fn series(table: &Table, spec: &PlotSpec) -> Result<Vec<(String, Vec<(f64, f64)>)>> {
    let xs = table.column_f64(&spec.x)?;
    let ys = table.column_f64(&spec.y)?;
    let groups = match &spec.group {
        Some(g) => table.column_text(g)?,
        None => vec![String::new(); table.len()],
    };
    let mut order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, u64), (f64, Vec<f64>)> = BTreeMap::new();
    for i in 0..table.len() {
        let (x, y) = (xs[i], ys[i]);
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        if (spec.scale.log_x() && x <= 0.0) || (spec.scale.log_y() && y <= 0.0) {
            return Err(Error::Parameter(format!("row {i}: non-positive value on a log axis")));
        }
        let gi = match order.iter().position(|g| *g == groups[i]) {
            Some(p) => p,
            None => {
                order.push(groups[i].clone());
                order.len() - 1
            }
        };
        // x keyed by its order-preserving bit image
        let key = x.to_bits() ^ if x.is_sign_negative() { u64::MAX } else { 1 << 63 };
        cells.entry((gi, key)).or_insert((x, Vec::new())).1.push(y);
    }
    let mut out: Vec<(String, Vec<(f64, f64)>)> = order.into_iter().map(|g| (g, Vec::new())).collect();
    for ((gi, _), (x, ys)) in cells {
        out[gi].1.push((x, median(&ys)));
    }
    Ok(out)
}

pub fn render_svg(table: &Table, spec: &PlotSpec) -> Result<String> {
    let series = series(table, spec)?;
    let all = || series.iter().flat_map(|(_, s)| s.iter());
    if all().next().is_none() {
        return Err(Error::Insufficient("no finite points to plot".into()));
    }
    let ax = Axis::new(all().map(|p| p.0), spec.scale.log_x());
    let ay = Axis::new(all().map(|p| p.1), spec.scale.log_y());
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + ax.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - ay.frac(y)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for t in ax.ticks() {
        let x = px(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP,
            TOP + ph,
            TOP + ph + 15.0,
            label(t)
        );
    }
    for t in ay.ticks() {
        let y = py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 5.0,
            y + 4.0,
            label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&spec.x)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&spec.y)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"><title>{}, {}</title></circle>"#,
                px(x),
                py(y),
                fmt_decimal(x),
                fmt_decimal(y)
            );
        }
        if !name.is_empty() {
            let ly = TOP + 10.0 + 16.0 * i as f64;
            let lx = LEFT + pw + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 16.0,
                lx + 20.0,
                ly + 4.0,
                escape(name)
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(table: &Table, spec: &PlotSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let svg = render_svg(table, spec)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Value;

    fn table() -> Table {
        let mut t = Table::new(["process", "n", "gap"]);
        for (p, g) in [("two-choice", 1.0), ("one-choice", 3.0)] {
            for (j, n) in [16usize, 64, 256, 1024].iter().enumerate() {
                for rep in 0..3 {
                    t.push_row(vec![p.into(), (*n).into(), (g * (j + 1) as f64 + rep as f64).into()]).unwrap();
                }
            }
        }
        t
    }

    #[test]
    fn spec_parse() {
        let s: PlotSpec = "x=n,y=gap,group=process,scale=log-log,out=a.svg".parse().unwrap();
        assert_eq!(s.scale, Scale::LogLog);
        assert_eq!(s.group.as_deref(), Some("process"));
        assert_eq!(s.out, Some(PathBuf::from("a.svg")));
        assert!("y=gap".parse::<PlotSpec>().is_err());
        assert!("x=n,y=gap,colour=red".parse::<PlotSpec>().is_err());
        assert!("x=n,y=gap,scale=cubic".parse::<PlotSpec>().is_err());
    }

    #[test]
    fn medians_per_x() {
        let spec: PlotSpec = "x=n,y=gap,group=process".parse().unwrap();
        let s = series(&table(), &spec).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].0, "two-choice");
        assert_eq!(s[0].1, vec![(16.0, 2.0), (64.0, 3.0), (256.0, 4.0), (1024.0, 5.0)]);
    }

    #[test]
    fn deterministic_and_self_contained() {
        let spec: PlotSpec = "x=n,y=gap,group=process,scale=log-log".parse().unwrap();
        let a = render_svg(&table(), &spec).unwrap();
        assert_eq!(a, render_svg(&table(), &spec).unwrap());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(!a.contains("href"));
        assert_eq!(a.matches("<polyline").count(), 2);
    }

    #[test]
    fn missing_column_and_log_of_zero() {
        let spec: PlotSpec = "x=n,y=height".parse().unwrap();
        assert!(render_svg(&table(), &spec).is_err());
        let mut t = Table::new(["x", "y"]);
        t.push_row(vec![Value::from(0.0), Value::from(1.0)]).unwrap();
        let spec: PlotSpec = "x=x,y=y,scale=log-x".parse().unwrap();
        assert!(render_svg(&t, &spec).is_err());
        assert!(render_svg(&Table::new(["x", "y"]), &"x=x,y=y".parse().unwrap()).is_err());
    }

    #[test]
    fn linear_ticks_cover_range() {
        let a = Axis::new([0.3, 7.9].into_iter(), false);
        let t = a.ticks();
        assert!(t.len() >= 3);
        assert!(t.iter().all(|v| *v >= 0.3 && *v <= 7.9));
    }
}
