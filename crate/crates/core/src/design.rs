//! Regressor lists and design-row construction.
//!
//! A [`DesignSpec`] is an ordered list of [`Term`]s over the record's columns.
//! Rows are built on the fly with optional counterfactual [`Overrides`]; the
//! products and squares are formed after the overrides are applied.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::data::Record;

/// A column of a record. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Col {
    C0(usize),
    E,
    C1(usize),
    M,
}

impl Col {
    fn is_pathway(self) -> bool {
        matches!(self, Col::C1(_) | Col::M)
    }
}

impl fmt::Display for Col {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Col::C0(i) => write!(f, "c0_{}", i + 1),
            Col::E => f.write_str("e"),
            Col::C1(i) => write!(f, "c1_{}", i + 1),
            Col::M => f.write_str("m"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Intercept,
    Covariate(Col),
    Square(Col),
    Product(Col, Col),
}

impl Term {
    /// Canonical form: products are ordered and `x*x` becomes a square.
    pub fn product(a: Col, b: Col) -> Term {
        if a == b {
            Term::Square(a)
        } else if a < b {
            Term::Product(a, b)
        } else {
            Term::Product(b, a)
        }
    }

    fn canonical(self) -> Term {
        match self {
            Term::Product(a, b) => Term::product(a, b),
            t => t,
        }
    }

    /// Columns referenced, with multiplicity.
    pub fn factors(&self) -> Vec<Col> {
        match *self {
            Term::Intercept => Vec::new(),
            Term::Covariate(c) => alloc::vec![c],
            Term::Square(c) => alloc::vec![c, c],
            Term::Product(a, b) => alloc::vec![a, b],
        }
    }

    fn pathway_degree(&self) -> usize {
        self.factors().into_iter().filter(|c| c.is_pathway()).count()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("1"),
            Term::Covariate(c) => write!(f, "{c}"),
            Term::Square(c) => write!(f, "{c}^2"),
            Term::Product(a, b) => write!(f, "{a}*{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DesignError {
    Empty,
    DuplicateTerm(String),
    Unresolvable { term: String, d0: usize, d1: usize },
    Parse { token: String, reason: &'static str },
    Forbidden { term: String, reason: &'static str },
}

impl core::error::Error for DesignError {}

impl fmt::Display for DesignError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => f.write_str("design has no terms"),
            Self::DuplicateTerm(t) => write!(f, "duplicate term {t}"),
            Self::Unresolvable { term, d0, d1 } => {
                write!(f, "term {term} does not resolve against d0 = {d0}, d1 = {d1}")
            }
            Self::Parse { token, reason } => write!(f, "cannot parse term '{token}': {reason}"),
            Self::Forbidden { term, reason } => write!(f, "term {term} not allowed: {reason}"),
        }
    }
}

/// Ordered, duplicate-free list of regressors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignSpec {
    terms: Vec<Term>,
}

/// Counterfactual values substituted before a row is built.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides<'a> {
    pub e: Option<f64>,
    pub m: Option<f64>,
    pub c1: Option<&'a [f64]>,
}

impl<'a> Overrides<'a> {
    pub const NONE: Overrides<'static> = Overrides { e: None, m: None, c1: None };

    pub fn e(e: f64) -> Self {
        Overrides { e: Some(e), m: None, c1: None }
    }

    pub fn with_m(self, m: f64) -> Self {
        Overrides { m: Some(m), ..self }
    }

    pub fn with_c1(self, c1: &'a [f64]) -> Self {
        Overrides { c1: Some(c1), ..self }
    }
}

impl DesignSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self, DesignError> {
        if terms.is_empty() {
            return Err(DesignError::Empty);
        }
        let terms: Vec<Term> = terms.into_iter().map(Term::canonical).collect();
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(DesignError::DuplicateTerm(alloc::format!("{t}")));
            }
        }
        Ok(Self { terms })
    }

    pub fn intercept_only() -> Self {
        Self { terms: alloc::vec![Term::Intercept] }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn has_intercept(&self) -> bool {
        self.terms.contains(&Term::Intercept)
    }

    pub fn position(&self, term: Term) -> Option<usize> {
        let term = term.canonical();
        self.terms.iter().position(|t| *t == term)
    }

    /// Checks every column index against the declared dimensions.
    pub fn check_resolves(&self, d0: usize, d1: usize) -> Result<(), DesignError> {
        for t in &self.terms {
            for c in t.factors() {
                let ok = match c {
                    Col::C0(i) => i < d0,
                    Col::C1(i) => i < d1,
                    Col::E | Col::M => true,
                };
                if !ok {
                    return Err(DesignError::Unresolvable { term: alloc::format!("{t}"), d0, d1 });
                }
            }
        }
        Ok(())
    }

    /// Rejects terms that reference a column outside `allowed`.
    pub fn check_columns(&self, allowed: impl Fn(Col) -> bool, reason: &'static str) -> Result<(), DesignError> {
        for t in &self.terms {
            if t.factors().into_iter().any(|c| !allowed(c)) {
                return Err(DesignError::Forbidden { term: alloc::format!("{t}"), reason });
            }
        }
        Ok(())
    }

    /// Rejects terms containing more than one factor from `{C1, M}`, i.e.
    /// anything that is not linear in the post-treatment variables once
    /// `E` and `C0` are held fixed.
    pub fn check_linear_pathway(&self) -> Result<(), DesignError> {
        for t in &self.terms {
            if t.pathway_degree() > 1 {
                return Err(DesignError::Forbidden {
                    term: alloc::format!("{t}"),
                    reason: "the linear pathway needs means linear in c1 and m",
                });
            }
        }
        Ok(())
    }

    pub fn references(&self, col: Col) -> bool {
        self.terms.iter().any(|t| t.factors().contains(&col))
    }

    /// Writes the design row into `out`, which is cleared first. Column
    /// indices must already resolve (see [`check_resolves`](Self::check_resolves)).
    pub fn fill_row(&self, record: &Record, ov: &Overrides<'_>, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.terms.iter().map(|t| match *t {
            Term::Intercept => 1.0,
            Term::Covariate(c) => value(record, ov, c),
            Term::Square(c) => {
                let v = value(record, ov, c);
                v * v
            }
            Term::Product(a, b) => value(record, ov, a) * value(record, ov, b),
        }));
    }

    pub fn row(&self, record: &Record, ov: &Overrides<'_>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.terms.len());
        self.fill_row(record, ov, &mut out);
        out
    }

    /// Parses a comma-separated term list such as `1, c0, e, c1, m, e*m, c0_1^2`.
    ///
    /// The group names `c0` and `c1` expand to every component; a product
    /// with a group expands to one term per component, so `c0*c1` is the
    /// full set of `c0_i*c1_j` and `c1_1*c1` includes `c1_1^2`.
    pub fn parse(text: &str, d0: usize, d1: usize) -> Result<Self, DesignError> {
        let mut terms = Vec::new();
        for token in text.split(',').map(str::trim) {
            if token.is_empty() {
                return Err(DesignError::Parse { token: token.into(), reason: "empty term" });
            }
            let perr = |reason| DesignError::Parse { token: token.into(), reason };
            if token == "1" {
                terms.push(Term::Intercept);
            } else if let Some(base) = token.strip_suffix("^2") {
                for c in parse_cols(base.trim(), d0, d1).map_err(perr)? {
                    terms.push(Term::Square(c));
                }
            } else if let Some((a, b)) = token.split_once('*') {
                let left = parse_cols(a.trim(), d0, d1).map_err(perr)?;
                let right = parse_cols(b.trim(), d0, d1).map_err(perr)?;
                for &x in &left {
                    for &y in &right {
                        let t = Term::product(x, y);
                        if !terms.contains(&t) || left.len() * right.len() == 1 {
                            terms.push(t);
                        }
                    }
                }
            } else {
                for c in parse_cols(token, d0, d1).map_err(perr)? {
                    terms.push(Term::Covariate(c));
                }
            }
        }
        let spec = Self::new(terms)?;
        spec.check_resolves(d0, d1)?;
        Ok(spec)
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

fn parse_cols(name: &str, d0: usize, d1: usize) -> Result<Vec<Col>, &'static str> {
    match name {
        "e" => return Ok(alloc::vec![Col::E]),
        "m" => return Ok(alloc::vec![Col::M]),
        "c0" => return Ok((0..d0).map(Col::C0).collect()),
        "c1" => return Ok((0..d1).map(Col::C1).collect()),
        _ => {}
    }
    let (block, idx) = name.split_once('_').ok_or("unknown column")?;
    let idx: usize = idx.parse().map_err(|_| "bad column index")?;
    if idx == 0 {
        return Err("column indices start at 1");
    }
    match block {
        "c0" if idx <= d0 => Ok(alloc::vec![Col::C0(idx - 1)]),
        "c1" if idx <= d1 => Ok(alloc::vec![Col::C1(idx - 1)]),
        "c0" | "c1" => Err("column index exceeds declared dimension"),
        _ => Err("unknown column"),
    }
}

#[inline]
fn value(record: &Record, ov: &Overrides<'_>, col: Col) -> f64 {
    match col {
        Col::C0(i) => record.c0[i],
        Col::E => ov.e.unwrap_or(f64::from(record.e)),
        Col::C1(i) => match ov.c1 {
            Some(c1) => c1[i],
            None => record.c1[i],
        },
        Col::M => ov.m.unwrap_or(record.m),
    }
}

/// Builds one design row, checking that every column resolves first.
pub fn build_design_row(record: &Record, spec: &DesignSpec, ov: &Overrides<'_>) -> Result<Vec<f64>, DesignError> {
    let d1 = ov.c1.map_or(record.c1.len(), <[f64]>::len);
    spec.check_resolves(record.c0.len(), d1)?;
    Ok(spec.row(record, ov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec() -> Record {
        Record { c0: vec![2.0], e: 1, c1: vec![1.0, 1.0, 1.0], m: 0.5, y: 0.0 }
    }

    fn spec(s: &str) -> DesignSpec {
        DesignSpec::parse(s, 1, 3).unwrap()
    }

    #[test]
    fn rows_without_and_with_overrides() {
        let s = spec("1, c0, e, m, e*m");
        assert_eq!(build_design_row(&rec(), &s, &Overrides::NONE).unwrap(), vec![1.0, 2.0, 1.0, 0.5, 0.5]);
        assert_eq!(build_design_row(&rec(), &s, &Overrides::e(0.0)).unwrap(), vec![1.0, 2.0, 0.0, 0.5, 0.0]);
        assert_eq!(build_design_row(&rec(), &spec("1, c0, c0^2"), &Overrides::NONE).unwrap(), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn c1_override_feeds_products() {
        let s = spec("c1, c1_1*m");
        let c1 = [3.0, 4.0, 5.0];
        let row = s.row(&rec(), &Overrides::NONE.with_c1(&c1).with_m(2.0));
        assert_eq!(row, vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn group_expansion() {
        let s = spec("1, c0, c0^2, c1, c0*c1");
        assert_eq!(s.len(), 9);
        let s = spec("c1_1*c1");
        assert_eq!(s.terms()[0], Term::Square(Col::C1(0)));
        assert_eq!(s.len(), 3);
        assert_eq!(alloc::format!("{}", spec("1, e*m, c1_2")), "1, e*m, c1_2");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(DesignSpec::parse("1, m*e, e*m", 1, 3), Err(DesignError::DuplicateTerm(_))));
        assert!(matches!(DesignSpec::parse("c1_4", 1, 3), Err(DesignError::Parse { .. })));
        assert!(matches!(DesignSpec::parse("1, x", 1, 3), Err(DesignError::Parse { .. })));
        assert_eq!(DesignSpec::new(vec![]), Err(DesignError::Empty));
        let s = DesignSpec::new(vec![Term::Covariate(Col::C0(3))]).unwrap();
        assert!(matches!(build_design_row(&rec(), &s, &Overrides::NONE), Err(DesignError::Unresolvable { .. })));
    }

    #[test]
    fn linear_pathway_structure() {
        assert!(spec("1, c0, e, c1, m, e*m, c0*c1").check_linear_pathway().is_ok());
        assert!(spec("1, m^2").check_linear_pathway().is_err());
        assert!(spec("1, c1_1*m").check_linear_pathway().is_err());
    }
}
