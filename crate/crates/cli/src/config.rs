//! Experiment configuration: a small TOML schema with angle and weight
//! expressions, canonical re-serialization and a content hash.
//!
//! Schema (all fields optional except `[[terms]]`):
//!
//! ```toml
//! name = "table2"
//! kind = "both"               # torus | flat | both
//! beta_source = "reference"   # reference (printed eigenvalues drive the
//!                             # time phases) | computed (solver values)
//! basis_size = 32
//! renormalize = false         # rescale weights to unit total probability
//! reference_table = "table2"  # optional: compare sweeps to a printed table
//!
//! [shape]
//! major_radius = 1.0
//! minor_radius = 0.5
//!
//! [[terms]]
//! parity = "+"                # "+" (cosine series) | "-" (sine series)
//! n = 3
//! m = 2
//! weight = "sqrt(1/2)"        # or "i*sqrt(1/3)", "0.5-i*0.25", or [re, im]
//!
//! [run]
//! theta0 = ["0", "pi/6"]      # pi-expressions or plain numbers
//! phi0 = 0.0
//! t_end = 10.0
//! checkpoints = [9.0, 10.0]
//! rel_tol = 1e-10
//! abs_tol = 1e-10
//! sample_dt = 0.01
//! ```

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use pilotwave::spectral::{flat_state, solve_state};
use pilotwave::{Parity, Superposition, SurfaceKind, TorusShape};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindSpec {
    Torus,
    Flat,
    Both,
}

impl KindSpec {
    pub fn surfaces(&self) -> Vec<SurfaceKind> {
        match self {
            KindSpec::Torus => vec![SurfaceKind::Torus],
            KindSpec::Flat => vec![SurfaceKind::FlatStrip],
            KindSpec::Both => vec![SurfaceKind::Torus, SurfaceKind::FlatStrip],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaSource {
    /// Printed eigenvalues drive the time phases (table-reproduction mode,
    /// applied on both surfaces).
    Reference,
    /// Each state's own eigenvalue drives its phase.
    Computed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: KindSpec,
    pub beta_source: BetaSource,
    pub basis_size: usize,
    pub renormalize: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_table: Option<String>,
    pub shape: ShapeSpec,
    pub terms: Vec<TermSpec>,
    pub run: RunSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub major_radius: f64,
    pub minor_radius: f64,
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec {
            major_radius: 1.0,
            minor_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermSpec {
    pub parity: char,
    pub n: u32,
    pub m: i32,
    /// Canonical form: `[re, im]`.
    pub weight: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub theta0: Vec<f64>,
    pub phi0: f64,
    pub t_end: f64,
    pub checkpoints: Vec<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sample_dt: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            theta0: vec![0.0],
            phi0: 0.0,
            t_end: 10.0,
            checkpoints: vec![9.0, 10.0],
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            sample_dt: 0.01,
        }
    }
}

// Flexible input forms, converted to the canonical struct after parsing.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default = "default_name")]
    name: String,
    #[serde(default = "default_kind")]
    kind: KindSpec,
    #[serde(default = "default_beta")]
    beta_source: BetaSource,
    #[serde(default = "default_basis")]
    basis_size: usize,
    #[serde(default)]
    renormalize: bool,
    #[serde(default)]
    reference_table: Option<String>,
    #[serde(default)]
    shape: ShapeSpec,
    terms: Vec<RawTerm>,
    #[serde(default)]
    run: RawRun,
}

fn default_name() -> String {
    "run".to_string()
}
fn default_kind() -> KindSpec {
    KindSpec::Torus
}
fn default_beta() -> BetaSource {
    BetaSource::Computed
}
fn default_basis() -> usize {
    32
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    parity: String,
    n: u32,
    m: i32,
    weight: RawWeight,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawWeight {
    Expr(String),
    Pair([f64; 2]),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    theta0: Option<Vec<RawAngle>>,
    phi0: Option<f64>,
    t_end: Option<f64>,
    checkpoints: Option<Vec<f64>>,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    sample_dt: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAngle {
    Number(f64),
    Expr(String),
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).context("config parse error")?;
        if raw.terms.is_empty() {
            bail!("config needs at least one [[terms]] entry");
        }
        let terms = raw
            .terms
            .iter()
            .map(|t| {
                let parity = match t.parity.as_str() {
                    "+" | "plus" => '+',
                    "-" | "minus" => '-',
                    other => bail!("parity must be \"+\" or \"-\", got {other:?}"),
                };
                let weight = match &t.weight {
                    RawWeight::Pair(p) => *p,
                    RawWeight::Expr(e) => {
                        let c = parse_weight(e)
                            .with_context(|| format!("bad weight expression {e:?}"))?;
                        [c.re, c.im]
                    }
                };
                Ok(TermSpec {
                    parity,
                    n: t.n,
                    m: t.m,
                    weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let defaults = RunSpec::default();
        let theta0 = match &raw.run.theta0 {
            None => defaults.theta0.clone(),
            Some(list) => list
                .iter()
                .map(|a| match a {
                    RawAngle::Number(x) => Ok(*x),
                    RawAngle::Expr(e) => {
                        parse_angle(e).with_context(|| format!("bad angle expression {e:?}"))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let run = RunSpec {
            theta0,
            phi0: raw.run.phi0.unwrap_or(defaults.phi0),
            t_end: raw.run.t_end.unwrap_or(defaults.t_end),
            checkpoints: raw.run.checkpoints.unwrap_or(defaults.checkpoints),
            rel_tol: raw.run.rel_tol.unwrap_or(defaults.rel_tol),
            abs_tol: raw.run.abs_tol.unwrap_or(defaults.abs_tol),
            sample_dt: raw.run.sample_dt.unwrap_or(defaults.sample_dt),
        };
        if let Some(table) = &raw.reference_table {
            if table != "table2" && table != "table3" {
                bail!("reference_table must be \"table2\" or \"table3\", got {table:?}");
            }
        }
        Ok(ExperimentSpec {
            name: raw.name,
            kind: raw.kind,
            beta_source: raw.beta_source,
            basis_size: raw.basis_size,
            renormalize: raw.renormalize,
            reference_table: raw.reference_table,
            shape: raw.shape,
            terms,
            run,
        })
    }

    /// Canonical serialization: weights as `[re, im]`, angles in radians.
    /// `parse(to_toml(spec))` reproduces `spec` exactly.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// FNV-1a hash of the canonical form; stable across runs.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for byte in self.to_toml().bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    pub fn torus_shape(&self) -> Result<TorusShape> {
        Ok(TorusShape::new(
            self.shape.major_radius,
            self.shape.minor_radius,
        )?)
    }

    /// Build the superposition on one surface.
    pub fn superposition(&self, kind: SurfaceKind) -> Result<Superposition> {
        let shape = self.torus_shape()?;
        let mut parts = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            let parity = if term.parity == '+' {
                Parity::Plus
            } else {
                Parity::Minus
            };
            let state = match kind {
                SurfaceKind::Torus => solve_state(&shape, self.basis_size, parity, term.n, term.m)?,
                SurfaceKind::FlatStrip => flat_state(term.n, term.m, parity, &shape)?,
            };
            parts.push((state, Complex64::new(term.weight[0], term.weight[1])));
        }
        let sp = if self.renormalize {
            Superposition::new_renormalized(parts, shape)?
        } else {
            Superposition::new(parts, shape)?
        };
        Ok(match self.beta_source {
            BetaSource::Reference => sp.with_reference_energies()?,
            BetaSource::Computed => sp,
        })
    }
}

/// Parse angle expressions: `"0.5"`, `"pi"`, `"pi/6"`, `"1.424pi"`,
/// `"11pi/6"`, `"-pi/2"`.
pub fn parse_angle(text: &str) -> Result<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        bail!("empty angle");
    }
    match s.find("pi") {
        None => Ok(s.parse::<f64>().context("not a number")?),
        Some(idx) => {
            let (pre, post) = (&s[..idx], &s[idx + 2..]);
            let factor = match pre {
                "" | "+" => 1.0,
                "-" => -1.0,
                num => num.parse::<f64>().context("bad pi prefix")?,
            };
            let denom = match post.strip_prefix('/') {
                None if post.is_empty() => 1.0,
                None => bail!("unexpected trailing {post:?}"),
                Some(d) => {
                    let d: f64 = d.parse().context("bad denominator")?;
                    if d == 0.0 {
                        bail!("zero denominator");
                    }
                    d
                }
            };
            Ok(factor * std::f64::consts::PI / denom)
        }
    }
}

/// Parse weight expressions: sums of signed terms, each `i*`-prefixed or
/// not, with `sqrt(a/b)` or plain decimals: `"sqrt(1/2)"`, `"-i*sqrt(5.2/12)"`,
/// `"sqrt(1.4/12)-i*sqrt(5.2/12)"`, `"0.3+0.1i"` is written `"0.3+i*0.1"`.
pub fn parse_weight(text: &str) -> Result<Complex64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        bail!("empty weight");
    }
    let mut total = Complex64::ZERO;
    let mut rest = s.as_str();
    let mut sign = 1.0;
    if let Some(r) = rest.strip_prefix('-') {
        sign = -1.0;
        rest = r;
    } else if let Some(r) = rest.strip_prefix('+') {
        rest = r;
    }
    while !rest.is_empty() {
        // Split off one term: scan to the next top-level + or - sign.
        let mut depth = 0usize;
        let mut split = rest.len();
        for (i, ch) in rest.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                '+' | '-' if depth == 0 && i > 0 => {
                    split = i;
                    break;
                }
                _ => {}
            }
        }
        let (term, tail) = rest.split_at(split);
        total += sign * parse_weight_term(term)?;
        rest = tail;
        if let Some(r) = rest.strip_prefix('-') {
            sign = -1.0;
            rest = r;
        } else if let Some(r) = rest.strip_prefix('+') {
            sign = 1.0;
            rest = r;
        } else if !rest.is_empty() {
            bail!("expected + or - between weight terms");
        }
    }
    Ok(total)
}

fn parse_weight_term(term: &str) -> Result<Complex64> {
    let (imaginary, body) = match term.strip_prefix("i*") {
        Some(rest) => (true, rest),
        None if term == "i" => (true, "1"),
        None => (false, term),
    };
    let value = if let Some(inner) = body.strip_prefix("sqrt(").and_then(|b| b.strip_suffix(')')) {
        let ratio = match inner.split_once('/') {
            Some((num, den)) => {
                let num: f64 = num.parse().context("bad sqrt numerator")?;
                let den: f64 = den.parse().context("bad sqrt denominator")?;
                if den == 0.0 {
                    bail!("zero denominator in sqrt");
                }
                num / den
            }
            None => inner.parse::<f64>().context("bad sqrt argument")?,
        };
        if ratio < 0.0 {
            bail!("negative sqrt argument");
        }
        ratio.sqrt()
    } else {
        body.parse::<f64>().context("bad weight number")?
    };
    Ok(if imaginary {
        Complex64::new(0.0, value)
    } else {
        Complex64::new(value, 0.0)
    })
}
