//! Run configuration: defaults, `key = value` files and flag overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::curvature::FormulaVersion;
use crate::flow::{Scheme, SolverControls};
use crate::radial::{GridSpec, MetricFamily, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl FromStr for Formats {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut f = Formats {
            csv: false,
            json: false,
            svg: false,
        };
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            match item {
                "csv" => f.csv = true,
                "json" => f.json = true,
                "svg" => f.svg = true,
                other => return Err(format!("unknown output format `{other}` (expected csv, json, svg)")),
            }
        }
        if !(f.csv || f.json || f.svg) {
            return Err("at least one output format is required".into());
        }
        Ok(f)
    }
}

/// Values of a for a sweep: an explicit list or every integer 1..n−1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SweepA {
    Auto,
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n: usize,
    pub a: f64,
    pub c: f64,
    pub variant: Variant,
    pub formula: FormulaVersion,
    pub grid: GridSpec,
    pub controls: SolverControls,
    pub t_final: f64,
    /// Number of equally spaced λ₂ snapshots recorded by `flow`.
    pub snapshots: usize,
    pub out: PathBuf,
    pub formats: Formats,
    pub jobs: usize,
    pub seed: u64,
    pub oracle_points: usize,
    /// Whether `verify` attempts the bundle-extension check.
    pub extension_check: bool,
    pub sweep_c: Option<Vec<f64>>,
    pub sweep_n: Option<Vec<usize>>,
    pub sweep_a: Option<SweepA>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 2,
            a: 1.0,
            c: 1.0,
            variant: Variant::CorrectedGeneral,
            formula: FormulaVersion::Corrected,
            grid: GridSpec::default(),
            controls: SolverControls::default(),
            t_final: 1e-3,
            snapshots: 10,
            out: PathBuf::from("out"),
            formats: Formats {
                csv: true,
                json: true,
                svg: true,
            },
            jobs: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            seed: 42,
            oracle_points: 20,
            extension_check: true,
            sweep_c: None,
            sweep_n: None,
            sweep_a: None,
        }
    }
}

/// Keys accepted in configuration files, with their defaults, for `--help`.
pub const KEYS_HELP: &str = "\
Configuration file keys (flags override the file; `#` starts a comment):
  n = 2                 complex dimension
  a = 1                 exponent; an integer in [1, n-1] for bundle checks
  c = 1                 cone parameter (0 gives the degenerate family)
  variant = corrected-general | paper-n2
  formula = corrected | printed
  grid = -12:12:2401    or r_min / r_max / nodes separately
  dt_init = 1e-6, dt_max = 1e-5, newton_tol = 1e-9, newton_max_iter = 8
  scheme = implicit-euler | crank-nicolson
  t_final = 1e-3, snapshots = 10
  out = out, formats = csv,json,svg, jobs = <cpus>, seed = 42
  oracle_points = 20, extension_check = true
  sweep_c = 0.5,1,2     sweep_n = 2,3     sweep_a = auto | 1,2";

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| format!("invalid value `{value}` for `{key}`: {e}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

pub fn parse_grid(value: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = value.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("grid `{value}` must look like rmin:rmax:nodes"));
    }
    Ok(GridSpec {
        r_min: parse("grid", parts[0])?,
        r_max: parse("grid", parts[1])?,
        nodes: parse("grid", parts[2])?,
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("invalid value `{other}` for `{key}`: expected true or false")),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "n" => self.n = parse(key, value)?,
            "a" => self.a = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "variant" => self.variant = parse(key, value)?,
            "formula" => {
                self.formula = match value.trim() {
                    "corrected" => FormulaVersion::Corrected,
                    "printed" => FormulaVersion::Printed,
                    other => return Err(format!("invalid formula `{other}` (expected corrected or printed)")),
                }
            }
            "grid" => self.grid = parse_grid(value)?,
            "r_min" => self.grid.r_min = parse(key, value)?,
            "r_max" => self.grid.r_max = parse(key, value)?,
            "nodes" => self.grid.nodes = parse(key, value)?,
            "dt_init" => self.controls.dt_init = parse(key, value)?,
            "dt_max" => self.controls.dt_max = parse(key, value)?,
            "newton_tol" => self.controls.newton_tol = parse(key, value)?,
            "newton_max_iter" => self.controls.newton_max_iter = parse(key, value)?,
            "scheme" => {
                self.controls.scheme = match value.trim() {
                    "implicit-euler" => Scheme::ImplicitEuler,
                    "crank-nicolson" => Scheme::CrankNicolson,
                    other => return Err(format!("invalid scheme `{other}`")),
                }
            }
            "t_final" => self.t_final = parse(key, value)?,
            "snapshots" => self.snapshots = parse(key, value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            "formats" => self.formats = value.parse()?,
            "jobs" => self.jobs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "oracle_points" => self.oracle_points = parse(key, value)?,
            "extension_check" => self.extension_check = parse_bool(key, value)?,
            "sweep_c" => self.sweep_c = Some(parse_list(key, value)?),
            "sweep_n" => self.sweep_n = Some(parse_list(key, value)?),
            "sweep_a" => {
                self.sweep_a = Some(if value.trim() == "auto" {
                    SweepA::Auto
                } else {
                    SweepA::List(parse_list(key, value)?)
                })
            }
            other => return Err(format!("unknown configuration key `{other}`")),
        }
        Ok(())
    }

    /// Applies a `key = value` file on top of the current values.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), String> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{}: expected `key = value`", origin.display(), lineno + 1))?;
            self.set(key.trim(), value)
                .map_err(|e| format!("{}:{}: {e}", origin.display(), lineno + 1))?;
        }
        Ok(())
    }

    pub fn family(&self) -> crate::Result<MetricFamily> {
        MetricFamily::new(self.n, self.a, self.c, self.variant)
    }

    /// Checks every precondition the commands rely on.
    pub fn validate(&self) -> Result<(), String> {
        self.family().map_err(|e| e.to_string())?;
        self.grid.validate().map_err(|e| e.to_string())?;
        self.controls.validate().map_err(|e| e.to_string())?;
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(format!("t_final must be positive, got {}", self.t_final));
        }
        if self.snapshots == 0 {
            return Err("snapshots must be at least 1".into());
        }
        if self.jobs == 0 {
            return Err("jobs must be at least 1".into());
        }
        if self.oracle_points == 0 {
            return Err("oracle_points must be at least 1".into());
        }
        for (n, a, c) in self.sweep_tuples() {
            MetricFamily::new(n, a, c, self.variant).map_err(|e| format!("sweep tuple (n={n}, a={a}, c={c}): {e}"))?;
        }
        Ok(())
    }

    /// Parameter tuples of a sweep in lexicographic (n, a, c) order. Unset
    /// ranges fall back to the single configured value; a range set to an
    /// empty list yields no tuples.
    pub fn sweep_tuples(&self) -> Vec<(usize, f64, f64)> {
        let mut ns = self.sweep_n.clone().unwrap_or_else(|| vec![self.n]);
        ns.sort_unstable();
        ns.dedup();
        let mut cs = self.sweep_c.clone().unwrap_or_else(|| vec![self.c]);
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        let mut out = Vec::new();
        for n in ns {
            let mut a_values = match &self.sweep_a {
                None => vec![self.a],
                Some(SweepA::Auto) => (1..n).map(|k| k as f64).collect(),
                Some(SweepA::List(v)) => v.clone(),
            };
            a_values.sort_by(f64::total_cmp);
            a_values.dedup();
            for &a in &a_values {
                for &c in &cs {
                    out.push((n, a, c));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_comments() {
        let mut c = RunConfig::default();
        c.apply_text("# header\nn = 3   # dimension\na=2\ngrid = -8:8:801\nformats = csv\n\n", Path::new("x.cfg"))
            .unwrap();
        assert_eq!((c.n, c.a), (3, 2.0));
        assert_eq!(c.grid, GridSpec::new(-8.0, 8.0, 801).unwrap());
        assert!(c.formats.csv && !c.formats.json);
        c.validate().unwrap();
    }

    #[test]
    fn errors_name_the_line() {
        let mut c = RunConfig::default();
        let e = c.apply_text("n = 2\nbogus = 1\n", Path::new("x.cfg")).unwrap_err();
        assert!(e.contains("x.cfg:2") && e.contains("bogus"));
        assert!(c.apply_text("n 2", Path::new("y")).is_err());
    }

    #[test]
    fn validation_catches_bad_families() {
        let mut c = RunConfig::default();
        c.set("c", "-1").unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.set("grid", "-1:1:3").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn sweep_expansion() {
        let mut c = RunConfig::default();
        c.set("sweep_n", "3,2").unwrap();
        c.set("sweep_a", "auto").unwrap();
        assert_eq!(c.sweep_tuples(), vec![(2, 1.0, 1.0), (3, 1.0, 1.0), (3, 2.0, 1.0)]);
        let mut c = RunConfig::default();
        c.set("sweep_c", "4, 0.5, 2, 1").unwrap();
        assert_eq!(c.sweep_tuples().iter().map(|t| t.2).collect::<Vec<_>>(), vec![0.5, 1.0, 2.0, 4.0]);
        c.set("sweep_c", "").unwrap();
        assert!(c.sweep_tuples().is_empty());
    }

    #[test]
    fn formats_parse() {
        assert_eq!(
            "svg, csv".parse::<Formats>().unwrap(),
            Formats {
                csv: true,
                json: false,
                svg: true
            }
        );
        assert!("pdf".parse::<Formats>().is_err());
        assert!("".parse::<Formats>().is_err());
    }
}
