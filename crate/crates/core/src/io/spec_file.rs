//! Map spec files (TOML). The schema is documented in `maps.schema.md`.

use crate::analytic::{
    Bubble, BubbleSpec, MapSource, Orientation, PerturbedMap, RationalMapSpec,
    TangentPerturbation,
};
use crate::error::{HmError, Result};
use crate::geometry::ChartId;
use crate::vec3::Vec3;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::path::Path;

/// A coefficient: a bare real number or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum Coef {
    Real(f64),
    Pair([f64; 2]),
}

impl Coef {
    fn value(self) -> Complex64 {
        match self {
            Coef::Real(x) => Complex64::new(x, 0.0),
            Coef::Pair([a, b]) => Complex64::new(a, b),
        }
    }
}

fn default_denominator() -> Vec<Coef> {
    vec![Coef::Real(1.0)]
}

fn default_orientation() -> Orientation {
    Orientation::Holomorphic
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RationalDoc {
    #[serde(default)]
    pub kind: Option<String>,
    pub numerator: Vec<Coef>,
    #[serde(default = "default_denominator")]
    pub denominator: Vec<Coef>,
    #[serde(default = "default_orientation")]
    pub orientation: Orientation,
    /// Precompose with `z -> (z - a)/(1 + conj(a) z)`.
    #[serde(default)]
    pub mobius: Option<Coef>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleDoc {
    pub attach: Coef,
    pub scale: f64,
    pub map: RationalDoc,
}

fn default_cutoff() -> f64 {
    2.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GluedDoc {
    pub kind: String,
    pub body: RationalDoc,
    #[serde(default, rename = "bubble")]
    pub bubbles: Vec<BubbleDoc>,
    #[serde(default = "default_cutoff")]
    pub cutoff_width: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbedDoc {
    pub kind: String,
    pub amplitude: f64,
    pub seed: u64,
    /// Any other spec, parsed recursively.
    pub base: toml::Spanned<toml::Table>,
}

#[derive(Debug, Clone)]
pub enum MapDoc {
    Rational(RationalDoc),
    Glued(GluedDoc),
    Perturbed(PerturbedDoc, Box<MapDoc>),
}

/// A validated map ready for sampling.
#[derive(Debug, Clone)]
pub enum MapSpec {
    Rational(RationalMapSpec),
    Glued(BubbleSpec),
    Perturbed(Box<PerturbedMap<MapSpec>>),
}

impl MapSource for MapSpec {
    fn value(&self, chart: ChartId, s: Complex64) -> Result<Vec3> {
        match self {
            MapSpec::Rational(m) => m.value(chart, s),
            MapSpec::Glued(m) => m.value(chart, s),
            MapSpec::Perturbed(m) => m.value(chart, s),
        }
    }
}

impl MapSpec {
    /// Degree with orientation sign.
    pub fn signed_degree(&self) -> i64 {
        match self {
            MapSpec::Rational(m) => m.signed_degree(),
            MapSpec::Glued(m) => m.signed_degree(),
            MapSpec::Perturbed(m) => m.base.signed_degree(),
        }
    }
}

fn coefs(c: &[Coef]) -> Vec<Complex64> {
    c.iter().map(|x| x.value()).collect()
}

impl RationalDoc {
    pub fn build(&self) -> Result<RationalMapSpec> {
        if let Some(k) = &self.kind {
            if k != "rational" {
                return Err(HmError::InvalidSpec(format!("nested map has kind {k:?}, only \"rational\" fits here")));
            }
        }
        if self.numerator.is_empty() || self.denominator.is_empty() {
            return Err(HmError::InvalidSpec("coefficient lists must be non-empty".into()));
        }
        let base = RationalMapSpec::new(coefs(&self.numerator), coefs(&self.denominator), self.orientation)?;
        match self.mobius {
            None => Ok(base),
            Some(a) => base.precompose_mobius(a.value()),
        }
    }
}

impl MapDoc {
    pub fn build(&self) -> Result<MapSpec> {
        match self {
            MapDoc::Rational(r) => Ok(MapSpec::Rational(r.build()?)),
            MapDoc::Glued(g) => {
                let bubbles = g
                    .bubbles
                    .iter()
                    .map(|b| {
                        Ok(Bubble {
                            attach: b.attach.value(),
                            scale: b.scale,
                            map: b.map.build()?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(MapSpec::Glued(BubbleSpec::new(g.body.build()?, bubbles, g.cutoff_width)?))
            }
            MapDoc::Perturbed(p, base) => {
                if !(p.amplitude.is_finite() && p.amplitude >= 0.0) {
                    return Err(HmError::InvalidSpec(format!(
                        "amplitude = {} must be finite and >= 0",
                        p.amplitude
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
                Ok(MapSpec::Perturbed(Box::new(PerturbedMap {
                    base: base.build()?,
                    perturbation: TangentPerturbation::random(&mut rng),
                    amplitude: p.amplitude,
                })))
            }
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn de<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| HmError::InvalidSpec(e.to_string()))
}

/// Reads a spec document without validating the map itself.
pub fn parse_doc(text: &str) -> Result<MapDoc> {
    let table: toml::Table = de(text)?;
    let kind = match table.get("kind") {
        Some(toml::Value::String(k)) => k.as_str(),
        Some(_) => return Err(HmError::InvalidSpec("key `kind` must be a string".into())),
        None => return Err(HmError::InvalidSpec("missing key `kind`".into())),
    };
    match kind {
        "rational" => Ok(MapDoc::Rational(de(text)?)),
        "glued" => Ok(MapDoc::Glued(de(text)?)),
        "perturbed" => {
            let p: PerturbedDoc = de(text)?;
            let line = line_of(text, p.base.span().start);
            let sub = toml::to_string(p.base.get_ref()).expect("table serializes");
            let base = parse_doc(&sub).map_err(|e| {
                HmError::InvalidSpec(format!("in [base] starting at line {line}: {e}"))
            })?;
            Ok(MapDoc::Perturbed(p, Box::new(base)))
        }
        other => Err(HmError::InvalidSpec(format!(
            "unknown kind {other:?}, expected \"rational\", \"glued\" or \"perturbed\""
        ))),
    }
}

/// Parses and validates spec text. Syntax and schema errors carry line and column.
pub fn parse_spec(text: &str) -> Result<MapSpec> {
    parse_doc(text)?.build()
}

pub fn load_spec(path: &Path) -> Result<MapSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_spec(&text).map_err(|e| match e {
        HmError::InvalidSpec(m) => HmError::InvalidSpec(format!("{}: {m}", path.display())),
        other => other,
    })
}
