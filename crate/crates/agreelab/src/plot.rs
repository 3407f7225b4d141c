//! Static SVG figures: line panels with error bars, strip plots and
//! heatmaps, laid out on a grid.

use std::fmt::Write;

use crate::io::Provenance;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 52.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 54.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub y: Vec<f64>,
    pub err: Option<Vec<f64>>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, color: &str, y: Vec<f64>) -> Series {
        Series {
            name: name.into(),
            color: color.into(),
            y,
            err: None,
            dashed: false,
        }
    }

    pub fn with_err(mut self, err: Vec<f64>) -> Series {
        self.err = Some(err);
        self
    }

    pub fn dashed(mut self) -> Series {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct StripPoint {
    pub value: f64,
    pub label: Option<String>,
    pub highlight: bool,
}

#[derive(Debug, Clone)]
pub enum Panel {
    Lines {
        title: String,
        x_labels: Vec<String>,
        series: Vec<Series>,
        y_range: Option<(f64, f64)>,
        hline: Option<f64>,
    },
    Strip {
        title: String,
        groups: Vec<(String, Vec<StripPoint>)>,
    },
    Heatmap {
        title: String,
        x_labels: Vec<String>,
        y_labels: Vec<String>,
        /// Row-major, `y_labels.len()` rows.
        values: Vec<Vec<f64>>,
        range: (f64, f64),
    },
}

#[derive(Debug, Clone)]
pub struct Figure {
    pub title: String,
    pub columns: usize,
    pub panels: Vec<Panel>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Figure {
    pub fn new(title: impl Into<String>, columns: usize) -> Figure {
        Figure {
            title: title.into(),
            columns: columns.max(1),
            panels: Vec::new(),
        }
    }

    pub fn push(&mut self, p: Panel) -> &mut Self {
        self.panels.push(p);
        self
    }

    pub fn render(&self, prov: &Provenance) -> String {
        let cols = self.columns.min(self.panels.len().max(1));
        let rows = self.panels.len().div_ceil(cols).max(1);
        let width = cols as f64 * PANEL_W;
        let height = rows as f64 * PANEL_H + 30.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
        );
        let _ = writeln!(
            s,
            "<!-- {} {} config={} seed={} -->",
            prov.tool, prov.version, prov.config_hash, prov.seed
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" font-size="15" text-anchor="middle">{}</text>"#,
            width / 2.0,
            esc(&self.title)
        );
        for (k, p) in self.panels.iter().enumerate() {
            let x0 = (k % cols) as f64 * PANEL_W;
            let y0 = 30.0 + (k / cols) as f64 * PANEL_H;
            let _ = writeln!(s, r#"<g transform="translate({x0},{y0})">"#);
            match p {
                Panel::Lines {
                    title,
                    x_labels,
                    series,
                    y_range,
                    hline,
                } => lines(&mut s, title, x_labels, series, *y_range, *hline),
                Panel::Strip { title, groups } => strip(&mut s, title, groups),
                Panel::Heatmap {
                    title,
                    x_labels,
                    y_labels,
                    values,
                    range,
                } => heatmap(&mut s, title, x_labels, y_labels, values, *range),
            }
            s.push_str("</g>\n");
        }
        s.push_str("</svg>\n");
        s
    }
}

struct Frame {
    lo: f64,
    hi: f64,
}

impl Frame {
    fn y(&self, v: f64) -> f64 {
        let h = PANEL_H - MARGIN_T - MARGIN_B;
        MARGIN_T + h * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

fn axes(s: &mut String, title: &str, f: &Frame) {
    let w = PANEL_W - MARGIN_L - MARGIN_R;
    let _ = writeln!(
        s,
        r#"<text x="{}" y="16" font-size="12" text-anchor="middle">{}</text>"#,
        MARGIN_L + w / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{w}" height="{}" fill="none" stroke="#444"/>"##,
        PANEL_H - MARGIN_T - MARGIN_B
    );
    for k in 0..=4 {
        let v = f.lo + (f.hi - f.lo) * k as f64 / 4.0;
        let y = f.y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{}" x2="{MARGIN_L}" y1="{y:.1}" y2="{y:.1}" stroke="#444"/><text x="{}" y="{:.1}" font-size="9" text-anchor="end">{v:.2}</text>"##,
            MARGIN_L - 4.0,
            MARGIN_L - 6.0,
            y + 3.0
        );
    }
}

fn lines(
    s: &mut String,
    title: &str,
    x_labels: &[String],
    series: &[Series],
    y_range: Option<(f64, f64)>,
    hline: Option<f64>,
) {
    let n = series.iter().map(|x| x.y.len()).max().unwrap_or(0).max(x_labels.len());
    let (lo, hi) = y_range.unwrap_or_else(|| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for se in series {
            for (t, &v) in se.y.iter().enumerate() {
                let e = se.err.as_ref().map_or(0.0, |e| e[t]);
                if v.is_finite() {
                    lo = lo.min(v - e);
                    hi = hi.max(v + e);
                }
            }
        }
        nice_range(lo, hi)
    });
    let f = Frame { lo, hi };
    axes(s, title, &f);
    let w = PANEL_W - MARGIN_L - MARGIN_R;
    let x = |t: usize| MARGIN_L + w * (t as f64 + 0.5) / n.max(1) as f64;
    for (t, lab) in x_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text transform="translate({:.1},{:.1}) rotate(-45)" font-size="9" text-anchor="end">{}</text>"#,
            x(t) + 3.0,
            PANEL_H - MARGIN_B + 12.0,
            esc(lab)
        );
    }
    if let Some(h) = hline {
        if h > lo && h < hi {
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN_L}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="3,3"/>"##,
                MARGIN_L + w,
                f.y(h),
                f.y(h)
            );
        }
    }
    for (k, se) in series.iter().enumerate() {
        let pts: Vec<String> = se
            .y
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(t, &v)| format!("{:.1},{:.1}", x(t), f.y(v.clamp(lo, hi))))
            .collect();
        let dash = if se.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.6"{dash}/>"#,
            pts.join(" "),
            se.color
        );
        if let Some(err) = &se.err {
            for (t, (&v, &e)) in se.y.iter().zip(err).enumerate() {
                if v.is_finite() && e.is_finite() {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{0:.1}" x2="{0:.1}" y1="{1:.1}" y2="{2:.1}" stroke="{3}" stroke-width="0.8"/>"#,
                        x(t),
                        f.y((v - e).clamp(lo, hi)),
                        f.y((v + e).clamp(lo, hi)),
                        se.color
                    );
                }
            }
        }
        let ly = MARGIN_T + 10.0 + 11.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" x2="{1}" y1="{ly}" y2="{ly}" stroke="{2}" stroke-width="2"{dash}/><text x="{3}" y="{4}" font-size="9">{5}</text>"#,
            MARGIN_L + 6.0,
            MARGIN_L + 20.0,
            se.color,
            MARGIN_L + 24.0,
            ly + 3.0,
            esc(&se.name)
        );
    }
}

fn strip(s: &mut String, title: &str, groups: &[(String, Vec<StripPoint>)]) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, pts) in groups {
        for p in pts {
            lo = lo.min(p.value);
            hi = hi.max(p.value);
        }
    }
    let (lo, hi) = nice_range(lo, hi);
    let f = Frame { lo, hi };
    axes(s, title, &f);
    let w = PANEL_W - MARGIN_L - MARGIN_R;
    let g = groups.len().max(1) as f64;
    for (k, (name, pts)) in groups.iter().enumerate() {
        let cx = MARGIN_L + w * (k as f64 + 0.5) / g;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            PANEL_H - MARGIN_B + 14.0,
            esc(name)
        );
        let color = PALETTE[k % PALETTE.len()];
        for (j, p) in pts.iter().enumerate() {
            // Deterministic horizontal jitter.
            let jitter = ((j * 37) % 17) as f64 / 16.0 - 0.5;
            let px = cx + jitter * 0.5 * w / g;
            let py = f.y(p.value);
            let (r, fill) = if p.highlight { (4.0, "#d62728") } else { (2.5, color) };
            let _ = writeln!(
                s,
                r#"<circle cx="{px:.1}" cy="{py:.1}" r="{r}" fill="{fill}" fill-opacity="0.8"/>"#
            );
            if let Some(l) = &p.label {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" font-size="9">{}</text>"#,
                    px + 5.0,
                    py + 3.0,
                    esc(l)
                );
            }
        }
    }
}

fn heatmap(
    s: &mut String,
    title: &str,
    x_labels: &[String],
    y_labels: &[String],
    values: &[Vec<f64>],
    range: (f64, f64),
) {
    let w = PANEL_W - MARGIN_L - MARGIN_R;
    let h = PANEL_H - MARGIN_T - MARGIN_B;
    let _ = writeln!(
        s,
        r#"<text x="{}" y="16" font-size="12" text-anchor="middle">{}</text>"#,
        MARGIN_L + w / 2.0,
        esc(title)
    );
    let nx = x_labels.len().max(1) as f64;
    let ny = y_labels.len().max(1) as f64;
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let u = ((v - range.0) / (range.1 - range.0)).clamp(0.0, 1.0);
            // Blue (low) through white to red (high).
            let (rr, gg, bb) = if u < 0.5 {
                let a = u / 0.5;
                (255.0 * a, 255.0 * a, 255.0)
            } else {
                let a = (1.0 - u) / 0.5;
                (255.0, 255.0 * a, 255.0 * a)
            };
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="rgb({},{},{})"><title>{v:.3}</title></rect>"#,
                MARGIN_L + w * c as f64 / nx,
                MARGIN_T + h * r as f64 / ny,
                w / nx + 0.5,
                h / ny + 0.5,
                rr as u8,
                gg as u8,
                bb as u8
            );
        }
    }
    for (c, lab) in x_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text transform="translate({:.1},{:.1}) rotate(-45)" font-size="9" text-anchor="end">{}</text>"#,
            MARGIN_L + w * (c as f64 + 0.5) / nx + 3.0,
            PANEL_H - MARGIN_B + 12.0,
            esc(lab)
        );
    }
    for (r, lab) in y_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{}</text>"#,
            MARGIN_L - 4.0,
            MARGIN_T + h * (r as f64 + 0.5) / ny + 3.0,
            esc(lab)
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_panel_kind() {
        let mut fig = Figure::new("t <x>", 2);
        fig.push(Panel::Lines {
            title: "a".into(),
            x_labels: vec!["the".into(), "boy".into()],
            series: vec![Series::new("SS", PALETTE[0], vec![0.0, 1.0]).with_err(vec![0.1, 0.1])],
            y_range: None,
            hline: Some(0.5),
        });
        fig.push(Panel::Strip {
            title: "b".into(),
            groups: vec![(
                "sing".into(),
                vec![StripPoint {
                    value: 1.0,
                    label: Some("L2-U1".into()),
                    highlight: true,
                }],
            )],
        });
        fig.push(Panel::Heatmap {
            title: "c".into(),
            x_labels: vec!["a".into()],
            y_labels: vec!["b".into()],
            values: vec![vec![0.3]],
            range: (0.0, 1.0),
        });
        let svg = fig.render(&Provenance::new("h", 1));
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("config=h seed=1"));
        assert!(svg.contains("t &lt;x&gt;"));
        assert_eq!(svg.matches("<g ").count(), 3);
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
