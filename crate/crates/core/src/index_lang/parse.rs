use super::{IndexExpression, IndexOccurrence, Level, ParseError, Span, Symbol, Term};

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

fn err<T>(message: impl Into<String>, start: usize, end: usize) -> Result<T, ParseError> {
    Err(ParseError { message: message.into(), span: Span::new(start, end) })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn here(&self) -> usize {
        self.pos
    }

    fn next_len(&self) -> usize {
        self.pos + self.peek().map_or(0, char::len_utf8)
    }

    fn describe(&self) -> String {
        match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of input".into(),
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.bump();
            Ok(())
        } else {
            err(format!("expected `{want}`, found {}", self.describe()), self.here(), self.next_len())
        }
    }

    fn symbol(&mut self) -> Result<Symbol, ParseError> {
        self.skip_ws();
        let start = self.here();
        match self.peek() {
            Some(c) if c.is_alphabetic() => {}
            _ => return err(format!("expected a symbol name, found {}", self.describe()), start, self.next_len()),
        }
        while self.peek().is_some_and(|c| c.is_alphanumeric()) {
            self.bump();
        }
        let name = self.src[start..self.pos].to_string();
        let span = Span::new(start, self.pos);
        let mut upper = None;
        let mut lower = None;
        loop {
            self.skip_ws();
            let (slot, level) = match self.peek() {
                Some('^') => (&mut upper, Level::Upper),
                Some('_') => (&mut lower, Level::Lower),
                _ => break,
            };
            let mark = self.here();
            if slot.is_some() {
                return err(format!("symbol {name} has two index groups of the same level"), mark, mark + 1);
            }
            self.bump();
            *slot = Some(Self::group(self, level)?);
        }
        Ok(Symbol { name, span, upper: upper.unwrap_or_default(), lower: lower.unwrap_or_default() })
    }

    fn group(&mut self, level: Level) -> Result<Vec<IndexOccurrence>, ParseError> {
        self.skip_ws();
        let letter = |p: &mut Self| -> Result<IndexOccurrence, ParseError> {
            p.skip_ws();
            let start = p.here();
            match p.peek() {
                Some(c) if c.is_alphabetic() => {
                    p.bump();
                    Ok(IndexOccurrence { letter: c, level, span: Span::new(start, p.pos) })
                }
                _ => err(format!("expected an index letter, found {}", p.describe()), start, p.next_len()),
            }
        };
        if self.peek() != Some('{') {
            return Ok(vec![letter(self)?]);
        }
        self.bump();
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some('}') {
                if out.is_empty() {
                    return err("empty index group", self.here(), self.next_len());
                }
                self.bump();
                return Ok(out);
            }
            out.push(letter(self)?);
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.here();
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || c == '.')
        {
            self.bump();
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
            } else {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse()
            .or_else(|_| err(format!("malformed number `{}`", &self.src[start..self.pos]), start, self.pos))
    }

    fn starts_factor(&self) -> bool {
        self.peek().is_some_and(|c| c.is_alphanumeric() || c == '.')
    }

    fn term(&mut self, sign: f64, start: usize) -> Result<Term, ParseError> {
        let mut coefficient = sign;
        let mut factors = Vec::new();
        let mut first = true;
        loop {
            self.skip_ws();
            if !first {
                if self.peek() == Some('*') {
                    self.bump();
                    self.skip_ws();
                } else if !self.starts_factor() {
                    break;
                }
            }
            if first {
                while let Some(s) = self.sign() {
                    coefficient *= s;
                }
                self.skip_ws();
            }
            first = false;
            match self.peek() {
                Some(c) if c.is_ascii_digit() || c == '.' => coefficient *= self.number()?,
                Some(c) if c.is_alphabetic() => factors.push(self.symbol()?),
                _ => {
                    return err(format!("expected a factor, found {}", self.describe()), self.here(), self.next_len())
                }
            }
        }
        Ok(Term { coefficient, factors, span: Span::new(start, self.pos) })
    }

    fn sign(&mut self) -> Option<f64> {
        self.skip_ws();
        match self.peek() {
            Some('+') => {
                self.bump();
                Some(1.0)
            }
            Some('-' | '\u{2212}') => {
                self.bump();
                Some(-1.0)
            }
            _ => None,
        }
    }

    fn equation(&mut self) -> Result<IndexExpression, ParseError> {
        let lhs = self.symbol()?;
        self.expect('=')?;
        self.skip_ws();
        let mut terms = Vec::new();
        let start = self.here();
        let sign = self.sign().unwrap_or(1.0);
        terms.push(self.term(sign, start)?);
        loop {
            self.skip_ws();
            let start = self.here();
            match self.sign() {
                Some(sign) => terms.push(self.term(sign, start)?),
                None => break,
            }
        }
        self.skip_ws();
        if self.peek().is_some() {
            return err(format!("unexpected {}", self.describe()), self.here(), self.next_len());
        }
        Ok(IndexExpression { source: self.src.to_string(), lhs, terms })
    }
}

/// Parses one equation. Whitespace is insignificant.
pub fn parse(text: &str) -> Result<IndexExpression, ParseError> {
    Parser { src: text, pos: 0 }.equation()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn letters(s: &Symbol) -> (String, String) {
        (s.upper.iter().map(|o| o.letter).collect(), s.lower.iter().map(|o| o.letter).collect())
    }

    #[test]
    fn operator_application() {
        let e = parse("y^i = F^i_j x^j").unwrap();
        assert_eq!(e.lhs.name, "y");
        assert_eq!(letters(&e.lhs), ("i".into(), "".into()));
        assert_eq!(e.terms.len(), 1);
        let f = &e.terms[0].factors;
        assert_eq!((f[0].name.as_str(), letters(&f[0])), ("F", ("i".into(), "j".into())));
        assert_eq!((f[1].name.as_str(), letters(&f[1])), ("x", ("j".into(), "".into())));
        assert_eq!(&e.source[f[0].lower[0].span.start..f[0].lower[0].span.end], "j");
    }

    #[test]
    fn scalar_lhs_and_braces() {
        let e = parse("c=a_{i}x^{i}").unwrap();
        assert!(e.lhs.upper.is_empty() && e.lhs.lower.is_empty());
        let e = parse("T^{ij}_{k} = A^{i}_{k} B^{j}").unwrap();
        assert_eq!(letters(&e.lhs), ("ij".into(), "k".into()));
        let e = parse("F_j^i = G^i_j").unwrap();
        assert_eq!(letters(&e.lhs), ("i".into(), "j".into()));
    }

    #[test]
    fn coefficients_and_signs() {
        let e = parse("z^i = 2 x^i − 0.5*y^i + -3 w^i").unwrap();
        let c: Vec<f64> = e.terms.iter().map(|t| t.coefficient).collect();
        assert_eq!(c, vec![2.0, -0.5, -3.0]);
        let e = parse("z = -x").unwrap();
        assert_eq!(e.terms[0].coefficient, -1.0);
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["y^i = = x", "y^i ==", "= x", "y^ = x", "y^{} = x", "y^i = x^i^j", "y^i = x +", "y^i x^i"] {
            let e = parse(bad).unwrap_err();
            assert!(e.span.start <= bad.len(), "{bad}: {e}");
        }
    }
}
