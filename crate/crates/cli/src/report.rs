//! Report plumbing: the κ-rule grammar, `#` header blocks with a content hash,
//! and a minimal SVG polyline writer.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

/// `κ(N) = coeff · N^power`.
///
/// Grammar: `<float>`, `N^<float>`, `<float>*N^<float>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaRule {
    pub coeff: f64,
    pub power: f64,
}

impl KappaRule {
    pub fn eval(&self, n: usize) -> f64 {
        if self.power == 0.0 {
            self.coeff
        } else {
            self.coeff * (n as f64).powf(self.power)
        }
    }
}

impl fmt::Display for KappaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.coeff, self.power) {
            (c, 0.0) => write!(f, "{c}"),
            (1.0, p) => write!(f, "N^{p}"),
            (c, p) => write!(f, "{c}*N^{p}"),
        }
    }
}

impl FromStr for KappaRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || format!("invalid kappa rule '{s}' (expected <float>, N^<float> or <float>*N^<float>)");
        let num = |x: &str| x.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
        let (coeff, rest) = match t.split_once('*') {
            Some((c, r)) => (num(c)?, Some(r)),
            None if t.starts_with('N') || t.starts_with('n') => (1.0, Some(t.as_str())),
            None => (num(&t)?, None),
        };
        let power = match rest {
            None => 0.0,
            Some(r) => {
                let p = r
                    .strip_prefix("N^")
                    .or_else(|| r.strip_prefix("n^"))
                    .ok_or_else(bad)?;
                num(p)?
            }
        };
        if coeff < 0.0 {
            return Err(format!("kappa must be nonnegative, got '{s}'"));
        }
        Ok(Self { coeff, power })
    }
}

/// `#`-prefixed header block. Entries keep insertion order; the content hash
/// covers every entry added before [`Header::render`].
#[derive(Debug, Clone, Default)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn new(command: &str) -> Self {
        let mut h = Self::default();
        h.push("command", command);
        h
    }

    pub fn push(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    /// Git-style content hash: SHA-256 of `blob <len>\0<key=value lines>`.
    pub fn content_hash(&self) -> String {
        let body: String = self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let mut hasher = Sha256::new();
        hasher.update(format!("blob {}\0", body.len()).as_bytes());
        hasher.update(body.as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "# input-hash: sha256:{}", self.content_hash());
        out
    }
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One labelled group of polylines sharing a colour.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub lines: Vec<Vec<(f64, f64)>>,
}

/// Plots every series into a `width × height` SVG with a frame and legend.
pub fn svg_polylines(title: &str, series: &[Series], width: f64, height: f64) -> String {
    let pts = series.iter().flat_map(|s| s.lines.iter().flatten());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let margin = 40.0;
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (width - 2.0 * margin);
    let sy = |y: f64| height - margin - (y - y0) / (y1 - y0) * (height - 2.0 * margin);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        width - 2.0 * margin,
        height - 2.0 * margin
    );
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            out,
            r##"<line x1="{margin}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#999" stroke-dasharray="4"/>"##,
            width - margin,
            y = sy(0.0)
        );
    }
    let _ = writeln!(out, r#"<text x="{margin}" y="24" font-size="14">{}</text>"#, escape(title));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for line in &s.lines {
            let coords: Vec<String> = line.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
                coords.join(" ")
            );
        }
        let ly = margin + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="12" fill="{color}">{}</text>"#,
            width - margin - 180.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
