//! Plain-text tableau files.
//!
//! ```text
//! # comments run to end of line
//! stages 4
//!
//! 1/2
//! 0 1/2
//! 0 0 1
//! b: 1/6 1/3 1/3 1/6
//! name: rk4
//! ```
//!
//! Row `i` of `a` lists its `i − 1` strictly-lower entries, so the first row
//! is an empty line. A full row of `s` entries is also accepted as long as
//! everything on or above the diagonal is zero. `c` is never stored.

use std::fmt::Write as _;
use std::str::FromStr;

use slrk_core::rational::RationalError;
use slrk_core::tableau::TableauError;
use slrk_core::{Rational, Tableau};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: bad rational `{token}`: {source}")]
    Rational {
        line: usize,
        token: String,
        source: RationalError,
    },
    #[error("row {row} of a is not explicit: entry {col} is {value}")]
    NotExplicit { row: usize, col: usize, value: Rational },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

impl From<TableauError> for FormatError {
    fn from(e: TableauError) -> Self {
        match e {
            TableauError::NotExplicit { row, col, value } => {
                FormatError::NotExplicit { row, col, value }
            }
            TableauError::Empty => FormatError::Dimension("no stages".into()),
            TableauError::DimensionMismatch(m) => FormatError::Dimension(m),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

fn rationals(line_no: usize, text: &str) -> Result<Vec<Rational>, FormatError> {
    text.split_whitespace()
        .map(|tok| {
            Rational::from_str(tok).map_err(|source| FormatError::Rational {
                line: line_no,
                token: tok.to_string(),
                source,
            })
        })
        .collect()
}

pub fn parse_tableau(text: &str) -> Result<Tableau, FormatError> {
    // (1-based line number, content without comment); comment-only lines vanish
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !(l.trim_start().starts_with('#')))
        .map(|(i, l)| (i + 1, strip_comment(l).trim()));

    let (line_no, header) = lines
        .by_ref()
        .find(|(_, l)| !l.is_empty())
        .ok_or(FormatError::Syntax {
            line: 1,
            message: "empty file".into(),
        })?;
    let s = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["stages", n] => n.parse::<usize>().map_err(|_| FormatError::Syntax {
            line: line_no,
            message: format!("bad stage count `{n}`"),
        })?,
        _ => {
            return Err(FormatError::Syntax {
                line: line_no,
                message: "expected `stages <s>`".into(),
            })
        }
    };
    if s == 0 {
        return Err(FormatError::Dimension("no stages".into()));
    }

    let mut a = Vec::with_capacity(s);
    for i in 0..s {
        let (line_no, row) = lines.next().ok_or_else(|| {
            FormatError::Dimension(format!("file ends after {i} of {s} rows of a"))
        })?;
        if row.starts_with("b:") || row.starts_with("name:") {
            return Err(FormatError::Dimension(format!(
                "line {line_no}: found `{}` where row {} of a was expected",
                &row[..row.find(':').unwrap_or(0) + 1],
                i + 1
            )));
        }
        let mut entries = rationals(line_no, row)?;
        if entries.len() == i {
            entries.resize(s, Rational::zero());
        } else if entries.len() != s {
            return Err(FormatError::Dimension(format!(
                "line {line_no}: row {} of a has {} entries, expected {} or {}",
                i + 1,
                entries.len(),
                i,
                s
            )));
        }
        a.push(entries);
    }

    let mut b = None;
    let mut name = None;
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("b:") {
            if b.is_some() {
                return Err(FormatError::Syntax {
                    line: line_no,
                    message: "duplicate `b:` line".into(),
                });
            }
            let v = rationals(line_no, rest)?;
            if v.len() != s {
                return Err(FormatError::Dimension(format!(
                    "line {line_no}: b has {} entries, expected {s}",
                    v.len()
                )));
            }
            b = Some(v);
        } else if let Some(rest) = line.strip_prefix("name:") {
            name = Some(rest.trim().to_string());
        } else {
            return Err(FormatError::Syntax {
                line: line_no,
                message: format!("unexpected `{line}`"),
            });
        }
    }
    let b = b.ok_or_else(|| FormatError::Dimension("missing `b:` line".into()))?;
    Ok(Tableau::new(name.unwrap_or_default(), a, b)?)
}

pub fn serialize_tableau(t: &Tableau) -> String {
    let join = |v: &[Rational]| {
        v.iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::new();
    let _ = writeln!(out, "stages {}", t.stages());
    for (i, row) in t.a().iter().enumerate() {
        let _ = writeln!(out, "{}", join(&row[..i]));
    }
    let _ = writeln!(out, "b: {}", join(t.b()));
    if !t.name().is_empty() {
        let _ = writeln!(out, "name: {}", t.name());
    }
    let _ = writeln!(out, "# c: {}", join(t.c()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use slrk_core::tableau::{builtin, rk4_tableau, rk6_tableau, BUILTIN_NAMES};

    #[test]
    fn rk4_b_line() {
        let text = serialize_tableau(&rk4_tableau());
        assert!(text.lines().any(|l| l == "b: 1/6 1/3 1/3 1/6"));
        assert!(text.starts_with("stages 4\n\n1/2\n"));
    }

    #[test]
    fn builtins_round_trip() {
        for name in BUILTIN_NAMES {
            let t = builtin(name).unwrap();
            assert_eq!(parse_tableau(&serialize_tableau(&t)).unwrap(), t);
        }
        assert_eq!(parse_tableau(&serialize_tableau(&rk6_tableau())).unwrap(), rk6_tableau());
    }

    #[test]
    fn full_rows_and_comments() {
        let text = "# heun\nstages 2\n0 0   # row one\n1 0\n\nb: 1/2 1/2\nname: heun2\n";
        let t = parse_tableau(text).unwrap();
        assert_eq!(t.name(), "heun2");
        assert_eq!(t.c()[1], Rational::one());
    }

    #[test]
    fn upper_entry_is_an_explicitness_error() {
        let text = "stages 2\n0 1\n1 0\nb: 1/2 1/2\n";
        assert_eq!(
            parse_tableau(text),
            Err(FormatError::NotExplicit { row: 0, col: 1, value: Rational::one() })
        );
    }

    #[test]
    fn division_by_zero_is_a_rational_error() {
        let text = "stages 2\n\n1/0\nb: 1/2 1/2\n";
        assert!(matches!(
            parse_tableau(text),
            Err(FormatError::Rational { line: 3, source: RationalError::DivisionByZero, .. })
        ));
    }

    #[test]
    fn wrong_lengths_are_dimension_errors() {
        for text in [
            "stages 3\n\n1/2\n1 2 3 4\nb: 1 0 0\n",
            "stages 2\n\n1\nb: 1\n",
            "stages 3\n\n1/2\nb: 1 0 0\n",
        ] {
            assert!(matches!(parse_tableau(text), Err(FormatError::Dimension(_))), "{text}");
        }
    }

    #[test]
    fn header_is_required() {
        assert!(matches!(parse_tableau("b: 1\n"), Err(FormatError::Syntax { .. })));
        assert!(matches!(parse_tableau(""), Err(FormatError::Syntax { .. })));
    }
}
