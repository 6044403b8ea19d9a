//! Sectioned `key = value` run configuration.
//!
//! ```text
//! dim = 2
//! field = gaussian
//! potential = rotational:2
//!
//! [radial]
//! h_min = 1e-6
//! count = 160
//!
//! [mc]
//! seed = 7
//! ```
//!
//! A key inside `[section]` resolves to `section.key` when that is a known
//! key and to plain `key` otherwise, so `[quadrature] radius = 4` and a bare
//! `radius = 4` mean the same thing. Blank lines and lines starting with `#`
//! or `;` are ignored.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use magsob_core::kernels::KernelSpec;
use magsob_core::{BoxRule, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Usage(format!(
                "format must be csv or json, got `{other}`"
            ))),
        }
    }
}

impl Format {
    fn as_str(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Every setting a run can take. Unset values fall back to per-command
/// defaults; see [`RunConfig::merge`] for precedence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub dim: Option<usize>,
    pub field: Option<String>,
    pub potential: Option<String>,
    pub p: Option<f64>,
    pub kernel: Option<KernelSpec>,
    pub s_list: Option<Vec<f64>>,
    pub delta_list: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub radius: Option<f64>,
    pub nodes_per_dim: Option<usize>,
    pub rule: Option<BoxRule>,
    pub radial_h_min: Option<f64>,
    pub radial_h_max: Option<f64>,
    pub radial_count: Option<usize>,
    pub sphere_order: Option<usize>,
    pub mc_seed: Option<u64>,
    pub mc_count: Option<usize>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

pub const KEYS: &[&str] = &[
    "dim",
    "field",
    "potential",
    "p",
    "kernel",
    "s_list",
    "delta_list",
    "tol",
    "radius",
    "nodes_per_dim",
    "rule",
    "radial.h_min",
    "radial.h_max",
    "radial.count",
    "sphere.order",
    "mc.seed",
    "mc.count",
    "format",
    "out",
];

fn bad(key: &str, value: &str, why: &str) -> Error {
    Error::Usage(format!("`{key}`: {why} (got `{value}`)"))
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, "not a number"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let v = value
        .split(',')
        .map(|t| parse_num::<f64>(key, t.trim()))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(bad(key, value, "empty list"));
    }
    Ok(v)
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Sets one key from its textual value, with range checks.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "dim" => {
                let d: usize = parse_num(key, value)?;
                if !(1..=3).contains(&d) {
                    return Err(bad(key, value, "must be 1, 2 or 3"));
                }
                self.dim = Some(d);
            }
            "field" => self.field = Some(value.to_string()),
            "potential" => self.potential = Some(value.to_string()),
            "p" => {
                let p: f64 = parse_num(key, value)?;
                if !(p > 1.0 && p.is_finite()) {
                    return Err(bad(key, value, "must lie in (1, ∞)"));
                }
                self.p = Some(p);
            }
            "kernel" => self.kernel = Some(value.parse()?),
            "s_list" => {
                let v = parse_list(key, value)?;
                if v.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
                    return Err(bad(key, value, "values must lie in (0, 1)"));
                }
                self.s_list = Some(v);
            }
            "delta_list" => {
                let v = parse_list(key, value)?;
                if v.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                    return Err(bad(key, value, "values must be positive"));
                }
                self.delta_list = Some(v);
            }
            "tol" => {
                let t: f64 = parse_num(key, value)?;
                if !(t > 0.0 && t.is_finite()) {
                    return Err(bad(key, value, "must be positive"));
                }
                self.tol = Some(t);
            }
            "radius" => {
                let r: f64 = parse_num(key, value)?;
                if !(r > 0.0 && r.is_finite()) {
                    return Err(bad(key, value, "must be positive"));
                }
                self.radius = Some(r);
            }
            "nodes_per_dim" => {
                let n: usize = parse_num(key, value)?;
                if n == 0 || n > 100_000 {
                    return Err(bad(key, value, "must lie in 1..=100000"));
                }
                self.nodes_per_dim = Some(n);
            }
            "rule" => {
                self.rule = Some(
                    value
                        .parse()
                        .map_err(|_| bad(key, value, "gauss_legendre or trapezoid"))?,
                )
            }
            "radial.h_min" | "radial.h_max" => {
                let h: f64 = parse_num(key, value)?;
                if !(h > 0.0 && h.is_finite()) {
                    return Err(bad(key, value, "must be positive"));
                }
                if key == "radial.h_min" {
                    self.radial_h_min = Some(h);
                } else {
                    self.radial_h_max = Some(h);
                }
            }
            "radial.count" => {
                let n: usize = parse_num(key, value)?;
                if n < 2 {
                    return Err(bad(key, value, "must be at least 2"));
                }
                self.radial_count = Some(n);
            }
            "sphere.order" => {
                let n: usize = parse_num(key, value)?;
                if n == 0 {
                    return Err(bad(key, value, "must be positive"));
                }
                self.sphere_order = Some(n);
            }
            "mc.seed" => self.mc_seed = Some(parse_num(key, value)?),
            "mc.count" => {
                let n: usize = parse_num(key, value)?;
                if n < 2 {
                    return Err(bad(key, value, "must be at least 2"));
                }
                self.mc_count = Some(n);
            }
            "format" => self.format = Some(value.parse()?),
            "out" => {
                if value.is_empty() {
                    return Err(bad(key, value, "empty path"));
                }
                self.out = Some(PathBuf::from(value));
            }
            other => return Err(Error::Usage(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses the text of a config file.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| {
                    Error::Usage(format!("line {lineno}: malformed section header `{line}`"))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Usage(format!("line {lineno}: expected key = value, got `{line}`"))
            })?;
            let k = k.trim();
            let dotted = format!("{section}.{k}");
            let key = if !section.is_empty() && KEYS.contains(&dotted.as_str()) {
                dotted
            } else if KEYS.contains(&k) {
                k.to_string()
            } else {
                return Err(Error::Usage(format!("line {lineno}: unknown key `{k}`")));
            };
            cfg.set(&key, v).map_err(|e| match e {
                Error::Usage(m) => Error::Usage(format!("line {lineno}: {m}")),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    /// Overlays every value set in `other` onto `self`.
    pub fn merge(&mut self, other: RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => {$(if other.$f.is_some() { self.$f = other.$f; })*};
        }
        take!(
            dim,
            field,
            potential,
            p,
            kernel,
            s_list,
            delta_list,
            tol,
            radius,
            nodes_per_dim,
            rule,
            radial_h_min,
            radial_h_max,
            radial_count,
            sphere_order,
            mc_seed,
            mc_count,
            format,
            out
        );
    }

    /// Writes the set values back in config-file syntax.
    pub fn to_config_string(&self) -> String {
        let mut top = String::new();
        let line = |buf: &mut String, k: &str, v: String| {
            writeln!(buf, "{k} = {v}").unwrap();
        };
        if let Some(v) = self.dim {
            line(&mut top, "dim", v.to_string());
        }
        if let Some(v) = &self.field {
            line(&mut top, "field", v.clone());
        }
        if let Some(v) = &self.potential {
            line(&mut top, "potential", v.clone());
        }
        if let Some(v) = self.p {
            line(&mut top, "p", v.to_string());
        }
        if let Some(v) = &self.kernel {
            line(&mut top, "kernel", v.to_string());
        }
        if let Some(v) = &self.s_list {
            line(&mut top, "s_list", join(v));
        }
        if let Some(v) = &self.delta_list {
            line(&mut top, "delta_list", join(v));
        }
        if let Some(v) = self.tol {
            line(&mut top, "tol", v.to_string());
        }
        if let Some(v) = self.radius {
            line(&mut top, "radius", v.to_string());
        }
        if let Some(v) = self.nodes_per_dim {
            line(&mut top, "nodes_per_dim", v.to_string());
        }
        if let Some(v) = self.rule {
            line(&mut top, "rule", v.to_string());
        }
        if let Some(v) = self.format {
            line(&mut top, "format", v.as_str().to_string());
        }
        if let Some(v) = &self.out {
            line(&mut top, "out", v.display().to_string());
        }
        let mut radial = String::new();
        if let Some(v) = self.radial_h_min {
            line(&mut radial, "h_min", v.to_string());
        }
        if let Some(v) = self.radial_h_max {
            line(&mut radial, "h_max", v.to_string());
        }
        if let Some(v) = self.radial_count {
            line(&mut radial, "count", v.to_string());
        }
        let mut sphere = String::new();
        if let Some(v) = self.sphere_order {
            line(&mut sphere, "order", v.to_string());
        }
        let mut mc = String::new();
        if let Some(v) = self.mc_seed {
            line(&mut mc, "seed", v.to_string());
        }
        if let Some(v) = self.mc_count {
            line(&mut mc, "count", v.to_string());
        }
        let mut out = top;
        for (name, body) in [("radial", radial), ("sphere", sphere), ("mc", mc)] {
            if !body.is_empty() {
                write!(out, "\n[{name}]\n{body}").unwrap();
            }
        }
        out
    }
}

/// Reads and parses a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::parse_str(&text)
}
