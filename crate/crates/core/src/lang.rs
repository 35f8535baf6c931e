//! Text form of verification queries (`.vq` files).
//!
//! ```text
//! # violation: the logit can drop to 25 or below
//! pre: x[*] in [0, 2]
//! pre: x[1] >= 0.5
//! post: y <= 25
//! ```
//!
//! One statement per line; `#` starts a comment. `x[i]` indexes the
//! flattened input. Constraints on one dimension intersect, and a
//! `x[*]` line supplies the bound on any side of a dimension that no
//! explicit line constrains. Every dimension must end up bounded on both
//! sides. Strict and non-strict input bounds both describe the closed box.
//! The postcondition describes the violation being searched for.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::boxes::{Comparison, PostConstraint, Query};
use crate::error::Result;

/// Where query text came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File(PathBuf),
    Inline,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File(p) => write!(f, "{}", p.display()),
            Origin::Inline => f.write_str("<inline>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySource {
    pub text: String,
    pub origin: Origin,
}

impl QuerySource {
    pub fn inline(text: impl Into<String>) -> Self {
        QuerySource {
            text: text.into(),
            origin: Origin::Inline,
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(QuerySource {
            text: std::fs::read_to_string(path)?,
            origin: Origin::File(path.to_path_buf()),
        })
    }
}

/// A query that could not be parsed, with a 1-based position when the
/// problem is tied to one spot in the text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub position: Option<(usize, usize)>,
    pub message: String,
}

impl ParseError {
    fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError {
            position: Some((line, column)),
            message: message.into(),
        }
    }

    fn whole(message: impl Into<String>) -> Self {
        ParseError {
            position: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some((l, c)) => write!(f, "line {l}, column {c}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ParseError {}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(text: &str, line: usize) -> Self {
        Cursor {
            chars: text.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::at(self.line, self.column(), message)
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn eat(&mut self, word: &str) -> bool {
        self.skip_ws();
        let n = word.chars().count();
        if self.chars.len() >= self.pos + n && self.chars[self.pos..self.pos + n].iter().copied().eq(word.chars()) {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), ParseError> {
        if self.eat(word) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{word}'")))
        }
    }

    fn comparison(&mut self) -> Result<Comparison, ParseError> {
        for (word, cmp) in [
            ("<=", Comparison::Le),
            (">=", Comparison::Ge),
            ("<", Comparison::Lt),
            (">", Comparison::Gt),
        ] {
            if self.eat(word) {
                return Ok(cmp);
            }
        }
        Err(self.error("expected one of '<=', '>=', '<', '>'"))
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let mut end = start;
        while let Some(&c) = self.chars.get(end) {
            let sign_ok = (c == '-' || c == '+')
                && (end == start || matches!(self.chars[end - 1], 'e' | 'E'));
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || sign_ok {
                end += 1;
            } else {
                break;
            }
        }
        let token: String = self.chars[start..end].iter().collect();
        match token.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = end;
                Ok(v)
            }
            Ok(_) => Err(self.error(format!("number '{token}' is out of range"))),
            Err(_) if token.is_empty() => Err(self.error("expected a number")),
            Err(_) => Err(self.error(format!("invalid number '{token}'"))),
        }
    }

    /// `x[i]` or `x[*]`; `None` stands for `*`.
    fn variable(&mut self, len: usize) -> Result<Option<usize>, ParseError> {
        self.expect("x")?;
        self.expect("[")?;
        let index = if self.eat("*") {
            None
        } else {
            self.skip_ws();
            let start = self.pos;
            while self.chars.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("expected an index or '*'"));
            }
            let digits: String = self.chars[start..self.pos].iter().collect();
            let i = digits.parse::<usize>().ok().filter(|&i| i < len).ok_or_else(|| {
                ParseError::at(
                    self.line,
                    start + 1,
                    format!("index {digits} out of range for an input of {len} values"),
                )
            })?;
            Some(i)
        };
        self.expect("]")?;
        Ok(index)
    }
}

#[derive(Clone, Copy, Default)]
struct Sides {
    lo: Option<f64>,
    hi: Option<f64>,
}

impl Sides {
    fn raise(&mut self, v: f64) {
        self.lo = Some(self.lo.map_or(v, |l| l.max(v)));
    }

    fn lower(&mut self, v: f64) {
        self.hi = Some(self.hi.map_or(v, |h| h.min(v)));
    }
}

/// Parses query text for a network with the given input shape.
///
/// ```
/// use flarecheck::lang::{parse_query, QuerySource};
///
/// let q = parse_query(&QuerySource::inline("pre: x[*] in [0,2]\npost: y <= 25"), &[2]).unwrap();
/// assert_eq!(q.pre(), &[(0.0, 2.0), (0.0, 2.0)]);
/// ```
pub fn parse_query(src: &QuerySource, input_shape: &[usize]) -> Result<Query, ParseError> {
    let len: usize = input_shape.iter().product();
    if input_shape.is_empty() || len == 0 {
        return Err(ParseError::whole(format!("invalid input shape {input_shape:?}")));
    }
    let mut dims = vec![Sides::default(); len];
    let mut default = Sides::default();
    let mut post = Vec::new();

    for (n, raw) in src.text.lines().enumerate() {
        let code = raw.split('#').next().unwrap_or("");
        let mut c = Cursor::new(code, n + 1);
        if c.at_end() {
            continue;
        }
        if c.eat("pre:") {
            let var = c.variable(len)?;
            let target = match var {
                Some(i) => &mut dims[i],
                None => &mut default,
            };
            if c.eat("in") {
                c.expect("[")?;
                let a = c.number()?;
                c.expect(",")?;
                let b = c.number()?;
                c.expect("]")?;
                target.raise(a);
                target.lower(b);
            } else {
                let cmp = c.comparison()?;
                let v = c.number()?;
                match cmp {
                    Comparison::Ge | Comparison::Gt => target.raise(v),
                    Comparison::Le | Comparison::Lt => target.lower(v),
                }
            }
        } else if c.eat("post:") {
            c.expect("y")?;
            let cmp = c.comparison()?;
            let v = c.number()?;
            post.push(PostConstraint { coeff: 1.0, cmp, bound: v });
        } else {
            return Err(c.error("expected 'pre:' or 'post:'"));
        }
        if !c.at_end() {
            return Err(c.error("unexpected trailing input"));
        }
    }

    if post.is_empty() {
        return Err(ParseError::whole("empty post section"));
    }
    let mut pre = Vec::with_capacity(len);
    for (i, d) in dims.iter().enumerate() {
        match (d.lo.or(default.lo), d.hi.or(default.hi)) {
            (Some(lo), Some(hi)) => pre.push((lo, hi)),
            _ => return Err(ParseError::whole(format!("unbounded dimension {i}"))),
        }
    }
    Query::new(input_shape.to_vec(), pre, post).map_err(|e| ParseError::whole(e.to_string()))
}

/// Canonical text for `query`: a `x[*]` line for the most common interval
/// when at least two dimensions share it, the other dimensions in ascending
/// order, then the postconditions with
/// unit coefficients.
///
/// ```
/// use flarecheck::lang::{parse_query, render_query, QuerySource};
///
/// let src = QuerySource::inline("pre: x[*] in [0,2]\npre: x[0] >= 1\npost: y <= 25");
/// let q = parse_query(&src, &[2]).unwrap();
/// assert_eq!(render_query(&q).unwrap(), "pre: x[0] in [1,2]\npre: x[1] in [0,2]\npost: y <= 25\n");
/// ```
pub fn render_query(query: &Query) -> Result<String> {
    if let Some(i) = query.pre().iter().position(|(l, h)| l > h) {
        return Err(crate::Error::InfeasiblePrecondition(i));
    }
    let key = |p: &(f64, f64)| (p.0.to_bits(), p.1.to_bits());
    let mut counts: HashMap<(u64, u64), (usize, usize)> = HashMap::new();
    for (i, p) in query.pre().iter().enumerate() {
        counts.entry(key(p)).or_insert((0, i)).0 += 1;
    }
    // most common interval, earliest first occurrence on ties
    let (&common, _) = counts
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .expect("queries have at least one dimension");
    let mut out = String::new();
    let (shared, first) = counts[&common];
    let use_default = shared >= 2;
    if use_default {
        let (lo, hi) = query.pre()[first];
        out.push_str(&format!("pre: x[*] in [{lo},{hi}]\n"));
    }
    for (i, p) in query.pre().iter().enumerate() {
        if !use_default || key(p) != common {
            out.push_str(&format!("pre: x[{i}] in [{},{}]\n", p.0, p.1));
        }
    }
    for c in query.post() {
        let c = c.normalized();
        out.push_str(&format!("post: y {} {}\n", c.cmp, c.bound));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::boxes::InputBox;

    fn parse(text: &str, shape: &[usize]) -> Result<Query, ParseError> {
        parse_query(&QuerySource::inline(text), shape)
    }

    #[test]
    fn toy_query() {
        let q = parse("pre: x[*] in [0,2]\npost: y <= 25", &[2]).unwrap();
        let expected = Query::from_box(
            &InputBox::uniform(vec![2], 0.0, 2.0).unwrap(),
            vec![PostConstraint::new(1.0, Comparison::Le, 25.0).unwrap()],
        )
        .unwrap();
        assert_eq!(q, expected);
    }

    #[test]
    fn point_query() {
        let q = parse("pre: x[0] in [1,1]\npre: x[1] in [3,3]\npost: y >= 65", &[2]).unwrap();
        assert_eq!(q.pre(), &[(1.0, 1.0), (3.0, 3.0)]);
        assert_eq!(q.post()[0].cmp, Comparison::Ge);
    }

    #[test]
    fn missing_bounds() {
        let e = parse("post: y <= 25", &[2]).unwrap_err();
        assert_eq!(e.to_string(), "unbounded dimension 0");
        let e = parse("pre: x[*] >= 0\npre: x[1] <= 1\npost: y <= 25", &[2]).unwrap_err();
        assert_eq!(e.to_string(), "unbounded dimension 0");
        let e = parse("pre: x[*] in [0,1]\n# nothing else", &[2]).unwrap_err();
        assert_eq!(e.to_string(), "empty post section");
    }

    #[test]
    fn positioned_errors() {
        let e = parse("pre: x[*] in [0,1]\npost: y =< 3", &[2]).unwrap_err();
        assert_eq!(e.position, Some((2, 9)));
        let e = parse("pre: x[5] in [0,1]\npost: y <= 3", &[2]).unwrap_err();
        assert_eq!(e.position, Some((1, 8)));
        assert!(e.message.contains("out of range"));
        let e = parse("pre: x[0] in [0,1] extra\npost: y <= 3", &[1]).unwrap_err();
        assert_eq!(e.position, Some((1, 20)));
        let e = parse("pre: x[0] in [0,1e999]\npost: y <= 3", &[1]).unwrap_err();
        assert!(e.message.contains("out of range"));
        let e = parse("bogus", &[1]).unwrap_err();
        assert_eq!(e.to_string(), "line 1, column 1: expected 'pre:' or 'post:'");
    }

    #[test]
    fn intersection_and_defaults() {
        let q = parse(
            "pre: x[*] in [0, 2]   # default\npre: x[0] >= 1\npre: x[2] in [-1, 5]\npre: x[2] < 4\npost: y > -3.5e1",
            &[3],
        )
        .unwrap();
        assert_eq!(q.pre(), &[(1.0, 2.0), (0.0, 2.0), (-1.0, 4.0)]);
        assert_eq!(q.post()[0].bound, -35.0);
    }

    #[test]
    fn infeasible_intersection_renders_an_error() {
        let q = parse("pre: x[*] in [0,2]\npre: x[0] >= 3\npost: y <= 1", &[2]).unwrap();
        assert!(!q.is_feasible());
        let e = render_query(&q).unwrap_err();
        assert!(e.to_string().contains("infeasible precondition"));
    }

    #[test]
    fn render_examples() {
        let q = parse("pre: x[0] in [1,1]\npre: x[1] in [3,3]\npost: y >= 65", &[2]).unwrap();
        assert_eq!(render_query(&q).unwrap(), "pre: x[0] in [1,1]\npre: x[1] in [3,3]\npost: y >= 65\n");
        let q = parse("pre: x[*] in [0,2]\npre: x[2] <= 1\npost: y <= 25", &[3]).unwrap();
        assert_eq!(render_query(&q).unwrap(), "pre: x[*] in [0,2]\npre: x[2] in [0,1]\npost: y <= 25\n");
        let scaled = Query::new(
            vec![1],
            vec![(0.0, 1.0)],
            vec![PostConstraint::new(-2.0, Comparison::Lt, 3.0).unwrap()],
        )
        .unwrap();
        assert_eq!(render_query(&scaled).unwrap(), "pre: x[0] in [0,1]\npost: y > -1.5\n");
    }

    fn bound() -> impl Strategy<Value = f64> {
        prop_oneof![
            (-20i32..20).prop_map(f64::from),
            (-1e6f64..1e6),
            (-1e-6f64..1e-6),
        ]
    }

    fn query() -> impl Strategy<Value = Query> {
        let shape = prop_oneof![
            (1usize..6).prop_map(|n| vec![n]),
            (1usize..3, 1usize..4).prop_map(|(a, b)| vec![a, b]),
        ];
        shape.prop_flat_map(|shape| {
            let len: usize = shape.iter().product();
            let interval = (bound(), 0f64..10.0).prop_map(|(l, w)| (l, l + w));
            let pre = prop::collection::vec(interval, len);
            let cmp = prop_oneof![
                Just(Comparison::Le),
                Just(Comparison::Ge),
                Just(Comparison::Lt),
                Just(Comparison::Gt)
            ];
            let post = prop::collection::vec(
                (cmp, bound()).prop_map(|(cmp, b)| PostConstraint { coeff: 1.0, cmp, bound: b }),
                1..4,
            );
            (Just(shape), pre, post).prop_map(|(s, pre, post)| Query::new(s, pre, post).unwrap())
        })
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(q in query()) {
            let text = render_query(&q).unwrap();
            let back = parse(&text, q.shape()).unwrap();
            prop_assert_eq!(back, q);
        }

        #[test]
        fn arbitrary_text_never_panics(s in "\\PC{0,80}") {
            let _ = parse(&s, &[3]);
        }

        #[test]
        fn near_miss_text_never_panics(s in "(pre|post|x|y|\\[|\\]|\\*|[0-9]|in|<=|>=|<|>|:|,|-|\\.|e| |#|\n){0,40}") {
            let _ = parse(&s, &[2, 2]);
        }
    }
}
