//! Rectilinear characteristic maps, their text file format and the shipped
//! synthetic map set.
//!
//! File layout (whitespace separated, `#` starts a comment):
//!
//! ```text
//! ifpc-maps 1
//! [compressor]
//! speed    <n_c_cor grid, strictly increasing>
//! position <z_c grid, strictly increasing>
//! field pi_c
//! <one row per speed value, one column per position value>
//! field w_cor
//! ...
//! field eta
//! ...
//! [turbine]
//! speed    <n_t_cor grid>
//! position <w_t grid>
//! field w_cor
//! field work      # L_t/T_t4, J/(kg·K)
//! field eta
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "ifpc-maps";
pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on points per axis accepted by the parser.
pub const MAX_AXIS_POINTS: usize = 4096;

/// Scalar field on a rectilinear grid, bilinear between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major: `values[i * y.len() + j]` sits at `(x[i], y[j])`.
    pub values: Vec<f64>,
}

impl Grid2 {
    pub fn from_fn(x: &[f64], y: &[f64], f: impl Fn(f64, f64) -> f64) -> Self {
        let values = x
            .iter()
            .flat_map(|&xi| y.iter().map(move |&yj| (xi, yj)))
            .map(|(a, b)| f(a, b))
            .collect();
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            values,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.y.len() + j]
    }

    pub fn eval(&self, map: &'static str, axes: (&'static str, &'static str), x: f64, y: f64) -> Result<f64> {
        let i = cell(&self.x, x).ok_or(Error::MapExtrapolation { map, axis: axes.0, value: x })?;
        let j = cell(&self.y, y).ok_or(Error::MapExtrapolation { map, axis: axes.1, value: y })?;
        let tx = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
        let ty = (y - self.y[j]) / (self.y[j + 1] - self.y[j]);
        let v00 = self.at(i, j);
        let v01 = self.at(i, j + 1);
        let v10 = self.at(i + 1, j);
        let v11 = self.at(i + 1, j + 1);
        Ok((1.0 - tx) * ((1.0 - ty) * v00 + ty * v01) + tx * ((1.0 - ty) * v10 + ty * v11))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Index of the cell containing `v`, or `None` outside the axis.
fn cell(axis: &[f64], v: f64) -> Option<usize> {
    let n = axis.len();
    if !(v >= axis[0] && v <= axis[n - 1]) {
        return None;
    }
    let k = axis.partition_point(|&a| a <= v);
    Some(k.saturating_sub(1).min(n - 2))
}

/// Three fields sharing one (speed, position) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMap {
    /// Pressure ratio (compressor) or corrected flow (turbine).
    pub first: Grid2,
    /// Corrected flow (compressor) or corrected specific work `L_t/T_t4` (turbine).
    pub second: Grid2,
    pub eta: Grid2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicMaps {
    /// `π_c`, `W_a2,cor`, `η_c` over `(n_c,cor, z_c)`.
    pub compressor: ComponentMap,
    /// `W_g4,cor`, `L_t/T_t4`, `η_t` over `(n_t,cor, w_t)`.
    pub turbine: ComponentMap,
}

const COMPRESSOR_FIELDS: [&str; 3] = ["pi_c", "w_cor", "eta"];
const TURBINE_FIELDS: [&str; 3] = ["w_cor", "work", "eta"];

impl CharacteristicMaps {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_maps(&text, &path.display().to_string())
    }

    /// Structural checks shared by every map file.
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("compressor", &self.compressor), ("turbine", &self.turbine)] {
            if m.eta.min_value() <= 0.0 || m.eta.max_value() > 1.0 {
                return Err(Error::config(format!("maps.{name}.eta"), "efficiency must lie in (0, 1]"));
            }
            if m.first.min_value() <= 0.0 || m.second.min_value() < 0.0 {
                return Err(Error::config(format!("maps.{name}"), "flows, ratios and work must be nonnegative"));
            }
        }
        if self.compressor.second.min_value() <= 0.0 {
            return Err(Error::config("maps.compressor.w_cor", "corrected flow must be positive"));
        }
        Ok(())
    }

    /// Endpoint conventions relative to the engine's ranges.
    pub fn validate_against(&self, pi_c: (f64, f64), w_g4cor: (f64, f64)) -> Result<()> {
        self.validate()?;
        let pi = &self.compressor.first;
        let tol = 1e-9;
        if pi.min_value() < pi_c.0 - tol || pi.max_value() > pi_c.1 + tol {
            return Err(Error::config("maps.compressor.pi_c", "values outside [pi_c_min, pi_c_max]"));
        }
        let w = &self.turbine.first;
        if w.min_value() < w_g4cor.0 - tol || w.max_value() > w_g4cor.1 + tol {
            return Err(Error::config("maps.turbine.w_cor", "values outside [W_g4cor_min, W_g4cor_max]"));
        }
        Ok(())
    }

    /// Serialises to the text format; values use shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Characteristic maps: compressor over (n_c_cor, z_c), turbine over (n_t_cor, w_t).");
        let _ = writeln!(out, "{FORMAT_TAG} {FORMAT_VERSION}");
        for (section, m, names) in [
            ("compressor", &self.compressor, COMPRESSOR_FIELDS),
            ("turbine", &self.turbine, TURBINE_FIELDS),
        ] {
            let _ = writeln!(out, "[{section}]");
            write_row(&mut out, "speed", &m.first.x);
            write_row(&mut out, "position", &m.first.y);
            for (name, g) in names.iter().zip([&m.first, &m.second, &m.eta]) {
                let _ = writeln!(out, "field {name}");
                for row in g.values.chunks(g.y.len()) {
                    write_row(&mut out, "", row);
                }
            }
        }
        out
    }

    /// Smooth analytic maps with affine endpoint conventions, tabulated on
    /// the default grids.
    pub fn synthetic(spec: &SyntheticSpec) -> Self {
        let cs = linspace(0.2, 1.3, 111);
        let cz = linspace(0.0, 1.0, 101);
        let ts = linspace(0.2, 2.0, 91);
        let tw = linspace(0.0, 1.0, 101);

        let pi_of = |z: f64| spec.pi_c_min + z * (spec.pi_c_max - spec.pi_c_min);
        let surge = |n: f64| 1.0 + 2.0 * n * n;
        let s_of = |n: f64, z: f64| (pi_of(z) - surge(n)) / (surge(n) - 0.9);

        let compressor = ComponentMap {
            first: Grid2::from_fn(&cs, &cz, |_, z| pi_of(z)),
            second: Grid2::from_fn(&cs, &cz, |n, z| 0.12 * n * (-0.35 * s_of(n, z)).exp()),
            eta: Grid2::from_fn(&cs, &cz, |n, z| {
                let s = s_of(n, z);
                (0.76 - 0.25 * (n - 0.95).powi(2) - 0.06 * s * s).max(0.35)
            }),
        };

        let w_of = |w: f64| spec.w_min + w * (spec.w_max - spec.w_min);
        let eta_t = |n: f64, w: f64| 0.84 - 0.25 * (n - 1.0).powi(2) - 0.2 * (w - 0.5).powi(2);
        let expo = (spec.kappa - 1.0) / spec.kappa;
        let turbine = ComponentMap {
            first: Grid2::from_fn(&ts, &tw, |_, w| w_of(w)),
            second: Grid2::from_fn(&ts, &tw, |n, w| {
                let pi_t = 1.0 / (1.0 - (w_of(w) / spec.w_choke).powi(2)).sqrt();
                spec.c_p * eta_t(n, w) * (1.0 - pi_t.powf(-expo))
            }),
            eta: Grid2::from_fn(&ts, &tw, eta_t),
        };
        Self { compressor, turbine }
    }
}

/// Ranges and gas data the synthetic maps are built for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub pi_c_min: f64,
    pub pi_c_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Corrected flow at which the turbine chokes.
    pub w_choke: f64,
    pub c_p: f64,
    pub kappa: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            pi_c_min: 1.05,
            pi_c_max: 3.6,
            w_min: 0.04,
            w_max: 0.12,
            w_choke: 0.14,
            c_p: 1005.0,
            kappa: 1.4,
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn write_row(out: &mut String, label: &str, vals: &[f64]) {
    if !label.is_empty() {
        out.push_str(label);
        out.push(' ');
    }
    let body: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
    out.push_str(&body.join(" "));
    out.push('\n');
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    source: &'a str,
}

impl<'a> Lines<'a> {
    /// Next non-blank line with comments stripped, as `(line_no, tokens)`.
    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        loop {
            let (i, raw) = self.inner.next()?;
            let text = raw.split('#').next().unwrap_or("");
            let toks: Vec<&str> = text.split_whitespace().collect();
            if !toks.is_empty() {
                return Some((i + 1, toks));
            }
        }
    }

    fn expect(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        let last = self.inner.peek().map(|(i, _)| *i + 1).unwrap_or(0);
        self.next().ok_or_else(|| self.err(last, format!("unexpected end of file, expected {what}")))
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.source.to_string(),
            line,
            message: message.into(),
        }
    }
}

fn parse_numbers(lines: &Lines, line: usize, toks: &[&str]) -> Result<Vec<f64>> {
    toks.iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| lines.err(line, format!("invalid number `{t}`")))
        })
        .collect()
}

fn parse_axis(lines: &mut Lines, label: &str) -> Result<Vec<f64>> {
    let (ln, toks) = lines.expect(label)?;
    if toks[0] != label {
        return Err(lines.err(ln, format!("expected `{label}`, found `{}`", toks[0])));
    }
    let vals = parse_numbers(lines, ln, &toks[1..])?;
    if vals.len() < 2 || vals.len() > MAX_AXIS_POINTS {
        return Err(lines.err(ln, format!("axis `{label}` needs 2..={MAX_AXIS_POINTS} points")));
    }
    if vals.windows(2).any(|w| w[1] <= w[0]) {
        return Err(lines.err(ln, format!("axis `{label}` must be strictly increasing")));
    }
    Ok(vals)
}

fn parse_section(lines: &mut Lines, section: &str, fields: [&str; 3]) -> Result<ComponentMap> {
    let (ln, toks) = lines.expect("section header")?;
    let header = format!("[{section}]");
    if toks.len() != 1 || toks[0] != header {
        return Err(lines.err(ln, format!("expected `{header}`")));
    }
    let x = parse_axis(lines, "speed")?;
    let y = parse_axis(lines, "position")?;
    let mut grids = Vec::with_capacity(3);
    for name in fields {
        let (ln, toks) = lines.expect("field header")?;
        if toks.len() != 2 || toks[0] != "field" || toks[1] != name {
            return Err(lines.err(ln, format!("expected `field {name}`")));
        }
        let mut values = Vec::with_capacity(x.len() * y.len());
        for _ in 0..x.len() {
            let (ln, toks) = lines.expect("map row")?;
            let row = parse_numbers(lines, ln, &toks)?;
            if row.len() != y.len() {
                return Err(lines.err(ln, format!("row has {} values, expected {}", row.len(), y.len())));
            }
            values.extend(row);
        }
        grids.push(Grid2 {
            x: x.clone(),
            y: y.clone(),
            values,
        });
    }
    let eta = grids.pop().expect("three grids");
    let second = grids.pop().expect("three grids");
    let first = grids.pop().expect("three grids");
    Ok(ComponentMap { first, second, eta })
}

/// Parses the map text format. `source_name` labels error messages.
pub fn parse_maps(text: &str, source_name: &str) -> Result<CharacteristicMaps> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
        source: source_name,
    };
    let (ln, toks) = lines.expect("format header")?;
    if toks.len() != 2 || toks[0] != FORMAT_TAG {
        return Err(lines.err(ln, format!("expected `{FORMAT_TAG} <version>`")));
    }
    match toks[1].parse::<u32>() {
        Ok(FORMAT_VERSION) => {}
        _ => return Err(lines.err(ln, format!("unsupported map format version `{}`", toks[1]))),
    }
    let compressor = parse_section(&mut lines, "compressor", COMPRESSOR_FIELDS)?;
    let turbine = parse_section(&mut lines, "turbine", TURBINE_FIELDS)?;
    if let Some((ln, _)) = lines.next() {
        return Err(lines.err(ln, "trailing content after turbine section"));
    }
    Ok(CharacteristicMaps { compressor, turbine })
}
