use std::collections::HashMap;

use super::validate::validate;
use super::{IndexExpression, Level, Symbol};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{decompose, DenseTensor, Valency};

/// Looks up and checks the binding of one right-hand-side symbol.
fn bound<'b, R: Real>(
    symbol: &Symbol,
    bindings: &'b HashMap<String, DenseTensor<R>>,
    dim: usize,
) -> Result<&'b DenseTensor<R>> {
    let t = bindings
        .get(&symbol.name)
        .ok_or_else(|| Error::Binding(format!("symbol {} has no bound tensor", symbol.name)))?;
    let want = Valency::new(symbol.upper.len(), symbol.lower.len());
    if t.valency() != want {
        return Err(Error::shape(format!(
            "symbol {} is written with valency {want} but bound to a {} tensor",
            symbol.name,
            t.valency()
        )));
    }
    if t.dim() != dim {
        return Err(Error::shape(format!(
            "symbol {} is bound in dimension {}, expression evaluated in dimension {dim}",
            symbol.name,
            t.dim()
        )));
    }
    Ok(t)
}

/// Evaluates a valid expression by explicit summation over every repeated
/// index. The result's slots follow the left-hand side's index order.
pub fn evaluate<R: Real>(
    e: &IndexExpression,
    bindings: &HashMap<String, DenseTensor<R>>,
    dim: usize,
) -> Result<DenseTensor<R>> {
    let report = validate(e);
    if !report.is_valid() {
        let msgs: Vec<String> = report.violations.iter().map(|v| v.message.clone()).collect();
        return Err(Error::Validation(msgs.join("; ")));
    }
    if dim == 0 {
        return Err(Error::shape("dimension must be positive"));
    }
    let out_letters: Vec<char> = e.lhs.occurrences().map(|o| o.letter).collect();
    let valency = Valency::new(e.lhs.upper.len(), e.lhs.lower.len());
    let mut result = DenseTensor::zeros(valency, dim)?;
    let mut components = vec![R::zero(); result.len()];

    for (term, classes) in e.terms.iter().zip(&report.terms) {
        let tensors = term
            .factors
            .iter()
            .map(|f| bound(f, bindings, dim))
            .collect::<Result<Vec<_>>>()?;
        let summed: Vec<char> = classes.summation.iter().filter_map(|s| s.chars().next()).collect();
        // assignment layout: output letters, then summation letters
        let position = |c: char| -> usize {
            out_letters
                .iter()
                .position(|&l| l == c)
                .unwrap_or_else(|| out_letters.len() + summed.iter().position(|&l| l == c).expect("classified letter"))
        };
        let slot_maps: Vec<Vec<usize>> = term
            .factors
            .iter()
            .map(|f| f.occurrences().map(|o| position(o.letter)).collect())
            .collect();
        let coefficient = R::lit(term.coefficient);
        let inner = dim.pow(summed.len() as u32);
        let mut assignment = vec![0; out_letters.len() + summed.len()];
        let mut digits = vec![0; summed.len()];
        for (flat, slot) in components.iter_mut().enumerate() {
            decompose(flat, dim, &mut assignment[..out_letters.len()]);
            let mut acc = R::zero();
            for s in 0..inner {
                decompose(s, dim, &mut digits);
                assignment[out_letters.len()..].copy_from_slice(&digits);
                let mut product = coefficient;
                for (t, map) in tensors.iter().zip(&slot_maps) {
                    let offset = map.iter().fold(0, |acc, &p| acc * dim + assignment[p]);
                    product *= t.components()[offset];
                }
                acc += product;
            }
            *slot += acc;
        }
    }
    result = DenseTensor::from_components(result.valency(), dim, components)?;
    Ok(result)
}

fn render_symbol(s: &Symbol) -> String {
    let group = |level: Level| -> String {
        let letters: String = s.occurrences().filter(|o| o.level == level).map(|o| o.letter).collect();
        if letters.is_empty() {
            String::new()
        } else {
            format!("{}{{{letters}}}", if level == Level::Upper { '^' } else { '_' })
        }
    };
    format!("{}{}{}", s.name, group(Level::Upper), group(Level::Lower))
}

fn render_coefficient(c: f64, first: bool) -> String {
    let sign = if c < 0.0 { "-" } else if first { "" } else { "+" };
    let mag = c.abs();
    let body = if mag == 1.0 { String::new() } else { format!("{mag} ") };
    match (first, sign) {
        (true, "") => body,
        (true, s) => format!("{s}{body}"),
        (false, s) => format!(" {s} {body}"),
    }
}

/// The expression with every implicit sum written out, e.g.
/// `y^{i} = Σ_{j=1}^{3} F^{i}_{j} x^{j}`.
pub fn explicit_form(e: &IndexExpression, dim: usize) -> String {
    let report = validate(e);
    let mut out = format!("{} =", render_symbol(&e.lhs));
    for (n, (term, classes)) in e.terms.iter().zip(&report.terms).enumerate() {
        out.push_str(if n == 0 { " " } else { "" });
        out.push_str(&render_coefficient(term.coefficient, n == 0));
        for letter in &classes.summation {
            out.push_str(&format!("Σ_{{{letter}=1}}^{{{dim}}} "));
        }
        let factors: Vec<String> = term.factors.iter().map(render_symbol).collect();
        if factors.is_empty() {
            // a bare number: the coefficient already carries it
            if term.coefficient.abs() == 1.0 {
                out.push('1');
            } else {
                out.truncate(out.trim_end().len());
            }
        }
        out.push_str(&factors.join(" "));
    }
    out
}
