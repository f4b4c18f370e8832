//! Component formulas for custom charts and command-line fields.
//!
//! A component is either an expression string such as `"y1*cos(y2)"` or a
//! coefficient table: a sum of terms, each a coefficient times a product of
//! `fn(var)^power` factors. Variables are a letter followed by a 1-based
//! coordinate number (`y1`, `x3`); fields may also use `t` for the external
//! parameter.

use exmex::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TensorField;
use crate::scalar::Real;
use crate::tensor::{DenseTensor, Valency};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorFn {
    #[default]
    Pow,
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl FactorFn {
    fn apply(self, v: f64) -> f64 {
        match self {
            FactorFn::Pow => v,
            FactorFn::Sin => v.sin(),
            FactorFn::Cos => v.cos(),
            FactorFn::Tan => v.tan(),
            FactorFn::Exp => v.exp(),
            FactorFn::Ln => v.ln(),
            FactorFn::Sqrt => v.sqrt(),
        }
    }
}

fn one() -> i32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub var: String,
    #[serde(rename = "fn", default)]
    pub func: FactorFn,
    #[serde(default = "one")]
    pub power: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    #[serde(default)]
    pub factors: Vec<Factor>,
}

/// Serialized form of one component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComponentSpec {
    Expression(String),
    Table { terms: Vec<Term> },
}

impl From<&str> for ComponentSpec {
    fn from(s: &str) -> Self {
        ComponentSpec::Expression(s.to_string())
    }
}

/// Which variable names a formula may use.
#[derive(Clone, Copy, Debug)]
pub struct Variables<'a> {
    pub prefixes: &'a [char],
    pub dim: usize,
    pub parameter: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Coordinate(usize),
    Parameter,
}

fn resolve(name: &str, vars: Variables<'_>) -> Result<Slot> {
    if vars.parameter && name == "t" {
        return Ok(Slot::Parameter);
    }
    let mut chars = name.chars();
    let ok = chars.next().filter(|c| vars.prefixes.contains(c)).and_then(|_| {
        let digits = chars.as_str();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        digits.parse::<usize>().ok()
    });
    match ok {
        Some(i) if (1..=vars.dim).contains(&i) => Ok(Slot::Coordinate(i - 1)),
        _ => Err(Error::Parameter(format!(
            "unknown variable `{name}`; expected one of {} followed by 1..={}{}",
            vars.prefixes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("/"),
            vars.dim,
            if vars.parameter { " or `t`" } else { "" }
        ))),
    }
}

#[derive(Clone, Debug)]
struct CompiledFactor {
    slot: Slot,
    func: FactorFn,
    power: i32,
}

#[derive(Clone, Debug)]
enum Compiled {
    Expression { expr: Box<FlatEx<f64>>, slots: Vec<Slot> },
    Table(Vec<(f64, Vec<CompiledFactor>)>),
}

/// A parsed, ready-to-evaluate component.
#[derive(Clone, Debug)]
pub struct Formula {
    compiled: Compiled,
}

impl Formula {
    pub fn parse(source: &str, vars: Variables<'_>) -> Result<Self> {
        Self::compile(&ComponentSpec::Expression(source.to_string()), vars)
    }

    pub fn compile(spec: &ComponentSpec, vars: Variables<'_>) -> Result<Self> {
        let compiled = match spec {
            ComponentSpec::Expression(source) => {
                let expr = exmex::parse::<f64>(source)
                    .map_err(|e| Error::Parameter(format!("cannot parse formula `{source}`: {e}")))?;
                let slots = expr
                    .var_names()
                    .iter()
                    .map(|n| resolve(n, vars))
                    .collect::<Result<Vec<_>>>()?;
                Compiled::Expression { expr: Box::new(expr), slots }
            }
            ComponentSpec::Table { terms } => Compiled::Table(
                terms
                    .iter()
                    .map(|term| {
                        let factors = term
                            .factors
                            .iter()
                            .map(|f| {
                                Ok(CompiledFactor { slot: resolve(&f.var, vars)?, func: f.func, power: f.power })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok((term.coeff, factors))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(Self { compiled })
    }

    pub fn eval(&self, point: &[f64], t: f64) -> f64 {
        let pick = |slot: Slot| match slot {
            Slot::Coordinate(i) => point[i],
            Slot::Parameter => t,
        };
        match &self.compiled {
            Compiled::Expression { expr, slots } => {
                let args: Vec<f64> = slots.iter().map(|&s| pick(s)).collect();
                expr.eval(&args).unwrap_or(f64::NAN)
            }
            Compiled::Table(terms) => terms
                .iter()
                .map(|(c, factors)| {
                    factors
                        .iter()
                        .fold(*c, |acc, f| acc * f.func.apply(pick(f.slot)).powi(f.power))
                })
                .sum(),
        }
    }
}

/// Compiles one formula per component with a shared variable set.
pub fn compile_all(specs: &[ComponentSpec], vars: Variables<'_>) -> Result<Vec<Formula>> {
    specs.iter().map(|s| Formula::compile(s, vars)).collect()
}

/// Scalar field (one component) or vector field (`dim` components) over
/// coordinates named `y1..` or `x1..`, optionally depending on `t`.
pub fn field_from_components<R: Real>(dim: usize, specs: &[ComponentSpec]) -> Result<TensorField<R>> {
    let vars = Variables { prefixes: &['x', 'y'], dim, parameter: true };
    let formulas = compile_all(specs, vars)?;
    let valency = match formulas.len() {
        1 => Valency::SCALAR,
        n if n == dim => Valency::VECTOR,
        n => {
            return Err(Error::shape(format!(
                "a field needs 1 (scalar) or {dim} (vector) components, got {n}"
            )))
        }
    };
    Ok(TensorField::with_parameter(valency, dim, move |y: &[R], t: R| {
        let point: Vec<f64> = y.iter().map(|v| v.to_f64_lossy()).collect();
        let t = t.to_f64_lossy();
        let values: Vec<R> = formulas.iter().map(|f| R::lit(f.eval(&point, t))).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("field is not finite at {point:?}")));
        }
        DenseTensor::from_components(valency, dim, values)
    }))
}

/// Splits a command-line field string on `;` into expression components.
pub fn split_components(text: &str) -> Vec<ComponentSpec> {
    text.split(';').map(|s| ComponentSpec::Expression(s.trim().to_string())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const Y3: Variables<'static> = Variables { prefixes: &['y'], dim: 3, parameter: false };

    #[test]
    fn expressions_map_variables_by_name() {
        let f = Formula::parse("y3 - 2*y1^2 + sin(y2)", Y3).unwrap();
        let v = f.eval(&[1.5, 0.0, 10.0], 0.0);
        assert!((v - (10.0 - 4.5)).abs() < 1e-12);
    }

    #[test]
    fn tables_evaluate_products() {
        let spec: ComponentSpec = serde_json::from_str(
            r#"{"terms":[{"coeff":2.0,"factors":[{"var":"y1"},{"var":"y2","fn":"cos","power":2}]},{"coeff":-1.0}]}"#,
        )
        .unwrap();
        let f = Formula::compile(&spec, Y3).unwrap();
        assert!((f.eval(&[3.0, 0.0, 0.0], 0.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_variables_are_rejected() {
        assert!(Formula::parse("y4 + 1", Y3).is_err());
        assert!(Formula::parse("q1", Y3).is_err());
        assert!(Formula::parse("t", Y3).is_err());
        assert!(Formula::parse("y1 +* 2", Y3).is_err());
    }

    #[test]
    fn fields_from_strings() {
        let f = field_from_components::<f64>(3, &split_components("-x2; x1; 0")).unwrap();
        assert_eq!(f.valency(), Valency::VECTOR);
        assert_eq!(f.evaluate(&[1.0, 2.0, 3.0]).unwrap().components(), &[-2.0, 1.0, 0.0]);
        let s = field_from_components::<f64>(3, &split_components("y1*t")).unwrap();
        assert_eq!(s.evaluate_at(&[2.0, 0.0, 0.0], 3.0).unwrap().scalar_value().unwrap(), 6.0);
        assert!(field_from_components::<f64>(3, &split_components("1;2")).is_err());
    }
}
