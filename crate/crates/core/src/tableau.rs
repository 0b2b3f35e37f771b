//! Explicit Butcher tableaux with exact rational coefficients.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableauError {
    #[error("tableau needs at least one stage")]
    Empty,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("not explicit: a[{row}][{col}] = {value} is on or above the diagonal")]
    NotExplicit { row: usize, col: usize, value: Rational },
}

/// An explicit Runge-Kutta scheme. The abscissae `c` are always the row sums
/// of `a`; they are never supplied independently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tableau {
    name: String,
    a: Vec<Vec<Rational>>,
    b: Vec<Rational>,
    c: Vec<Rational>,
}

impl Tableau {
    /// Builds from a full `s × s` coefficient matrix. Anything nonzero on or
    /// above the diagonal is rejected.
    pub fn new(
        name: impl Into<String>,
        a: Vec<Vec<Rational>>,
        b: Vec<Rational>,
    ) -> Result<Self, TableauError> {
        let s = b.len();
        if s == 0 {
            return Err(TableauError::Empty);
        }
        if a.len() != s {
            return Err(TableauError::DimensionMismatch(alloc::format!(
                "a has {} rows but b has {} entries",
                a.len(),
                s
            )));
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != s {
                return Err(TableauError::DimensionMismatch(alloc::format!(
                    "row {} of a has {} entries, expected {}",
                    i,
                    row.len(),
                    s
                )));
            }
            if let Some(j) = (i..s).find(|&j| !row[j].is_zero()) {
                return Err(TableauError::NotExplicit {
                    row: i,
                    col: j,
                    value: row[j].clone(),
                });
            }
        }
        let c = a.iter().map(|row| row.iter().sum()).collect();
        Ok(Tableau {
            name: name.into(),
            a,
            b,
            c,
        })
    }

    /// Builds from the strictly-lower rows only: row `i` holds `i` entries.
    pub fn from_lower_rows(
        name: impl Into<String>,
        rows: Vec<Vec<Rational>>,
        b: Vec<Rational>,
    ) -> Result<Self, TableauError> {
        let s = b.len();
        if rows.len() != s {
            return Err(TableauError::DimensionMismatch(alloc::format!(
                "{} rows of a for {} stages",
                rows.len(),
                s
            )));
        }
        let mut a = Vec::with_capacity(s);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != i {
                return Err(TableauError::DimensionMismatch(alloc::format!(
                    "row {} of a has {} entries, expected {}",
                    i,
                    row.len(),
                    i
                )));
            }
            let mut full = row;
            full.resize(s, Rational::zero());
            a.push(full);
        }
        Tableau::new(name, a, b)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[Vec<Rational>] {
        &self.a
    }

    pub fn b(&self) -> &[Rational] {
        &self.b
    }

    pub fn c(&self) -> &[Rational] {
        &self.c
    }

    pub fn to_float(&self) -> FloatTableau {
        let conv = |v: &[Rational]| v.iter().map(Rational::to_f64).collect::<Vec<_>>();
        FloatTableau {
            name: self.name.clone(),
            a: self.a.iter().map(|row| conv(row)).collect(),
            b: conv(&self.b),
            c: conv(&self.c),
        }
    }

    pub fn spacing(&self) -> SpacingReport {
        spacing_report(self)
    }
}

/// Double-precision rendering of a tableau, as used by the integrators and
/// the Newton search.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatTableau {
    pub name: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl FloatTableau {
    /// `c` is recomputed from the rows of `a`.
    pub fn new(name: impl Into<String>, a: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        let c = a.iter().map(|row| row.iter().sum()).collect();
        FloatTableau {
            name: name.into(),
            a,
            b,
            c,
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Increment {
    Zero,
    Step,
    /// Negative, or a second distinct nonzero increment.
    Irregular,
}

/// Whether the abscissae are ordered and equally spaced, which is what lets a
/// single propagator `exp(Δc·h·A)` drive the whole step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpacingReport {
    pub conforming: bool,
    /// The unique nonzero increment; `None` when every increment is zero.
    pub delta_c: Option<Rational>,
    /// `increments[i]` classifies `c[i + 1] - c[i]`.
    pub increments: Vec<Increment>,
    /// Last abscissa, kept so the step can be closed out to `c = 1`.
    pub c_last: Rational,
}

impl SpacingReport {
    /// Propagator increment and the number of extra applications needed after
    /// the last stage to reach the end of the step.
    ///
    /// With no nonzero increment the whole step `1 - c_last` becomes the
    /// propagator increment. `None` if the scheme is not conforming or the
    /// distance to `c = 1` is not a whole number of increments.
    pub fn lawson_schedule(&self) -> Option<(Rational, usize)> {
        if !self.conforming {
            return None;
        }
        let remaining = Rational::one() - &self.c_last;
        if remaining.is_negative() {
            return None;
        }
        match &self.delta_c {
            Some(dc) => {
                let count = remaining.checked_div(dc).ok()?;
                if !count.is_integer() {
                    return None;
                }
                let n = usize::try_from(num_traits::ToPrimitive::to_u64(count.numer())?).ok()?;
                Some((dc.clone(), n))
            }
            None if remaining.is_zero() => Some((Rational::zero(), 0)),
            None => Some((remaining, 1)),
        }
    }

    pub fn step_count(&self) -> usize {
        self.increments
            .iter()
            .filter(|&&i| i == Increment::Step)
            .count()
    }
}

pub fn spacing_report(t: &Tableau) -> SpacingReport {
    let c = t.c();
    let mut delta_c: Option<Rational> = None;
    let mut conforming = c[0].is_zero();
    let mut increments = Vec::with_capacity(c.len().saturating_sub(1));
    for w in c.windows(2) {
        let d = &w[1] - &w[0];
        let kind = if d.is_zero() {
            Increment::Zero
        } else if d.is_negative() {
            Increment::Irregular
        } else {
            match &delta_c {
                None => {
                    delta_c = Some(d);
                    Increment::Step
                }
                Some(dc) if *dc == d => Increment::Step,
                Some(_) => Increment::Irregular,
            }
        };
        conforming &= kind != Increment::Irregular;
        increments.push(kind);
    }
    SpacingReport {
        conforming,
        delta_c,
        increments,
        c_last: c[c.len() - 1].clone(),
    }
}

fn r(p: i64, q: i64) -> Rational {
    Rational::ratio(p, q)
}

fn rows(spec: &[&[(i64, i64)]]) -> Vec<Vec<Rational>> {
    spec.iter()
        .map(|row| row.iter().map(|&(p, q)| r(p, q)).collect())
        .collect()
}

/// Forward Euler.
pub fn euler_tableau() -> Tableau {
    Tableau::from_lower_rows("euler", vec![vec![]], vec![Rational::one()])
        .expect("built-in tableau")
}

/// Heun's third-order method, `c = [0, 1/3, 2/3]`.
pub fn heun3_tableau() -> Tableau {
    Tableau::from_lower_rows(
        "heun3",
        rows(&[&[], &[(1, 3)], &[(0, 1), (2, 3)]]),
        vec![r(1, 4), r(0, 1), r(3, 4)],
    )
    .expect("built-in tableau")
}

/// Classical fourth-order Runge-Kutta.
pub fn rk4_tableau() -> Tableau {
    Tableau::from_lower_rows(
        "rk4",
        rows(&[&[], &[(1, 2)], &[(0, 1), (1, 2)], &[(0, 1), (0, 1), (1, 1)]]),
        vec![r(1, 6), r(1, 3), r(1, 3), r(1, 6)],
    )
    .expect("built-in tableau")
}

/// Eight-stage sixth-order scheme with abscissae on the grid `k/6`.
pub fn rk6_tableau() -> Tableau {
    Tableau::from_lower_rows(
        "rk6",
        rows(&[
            &[],
            &[(1, 6)],
            &[(1, 12), (1, 12)],
            &[(0, 1), (-4, 33), (5, 11)],
            &[(-1, 4), (-29, 44), (31, 22), (0, 1)],
            &[(3, 11), (8, 33), (-4, 11), (1, 11), (14, 33)],
            &[(-17, 48), (-5, 12), (1, 1), (1, 1), (-13, 12), (11, 16)],
            &[
                (20, 39),
                (12, 39),
                (-31, 39),
                (-1, 39),
                (34, 39),
                (-11, 39),
                (16, 39),
            ],
        ]),
        vec![
            r(13, 200),
            r(0, 1),
            r(4, 25),
            r(11, 40),
            r(0, 1),
            r(11, 40),
            r(4, 25),
            r(13, 200),
        ],
    )
    .expect("built-in tableau")
}

/// Looks up a built-in scheme by name (`euler`/`rk1`, `heun3`, `rk4`, `rk6`).
pub fn builtin(name: &str) -> Option<Tableau> {
    match name {
        "euler" | "rk1" => Some(euler_tableau()),
        "heun3" => Some(heun3_tableau()),
        "rk4" => Some(rk4_tableau()),
        "rk6" => Some(rk6_tableau()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["euler", "heun3", "rk4", "rk6"];

#[cfg(test)]
mod tests {
    use super::*;

    fn all_builtins() -> Vec<Tableau> {
        BUILTIN_NAMES.iter().map(|n| builtin(n).unwrap()).collect()
    }

    #[test]
    fn rk6_abscissae_and_weights() {
        let t = rk6_tableau();
        assert_eq!(t.stages(), 8);
        let c: Vec<_> = [(0, 1), (1, 6), (1, 6), (2, 6), (3, 6), (4, 6), (5, 6), (1, 1)]
            .iter()
            .map(|&(p, q)| r(p, q))
            .collect();
        assert_eq!(t.c(), &c[..]);
        let b: Vec<_> = [(13, 200), (0, 1), (4, 25), (11, 40), (0, 1), (11, 40), (4, 25), (13, 200)]
            .iter()
            .map(|&(p, q)| r(p, q))
            .collect();
        assert_eq!(t.b(), &b[..]);
        assert_eq!(t.b().iter().sum::<Rational>(), Rational::one());
        assert_eq!(t.a()[3].iter().sum::<Rational>(), r(2, 6));
    }

    #[test]
    fn rk4_and_heun3_weights() {
        assert_eq!(rk4_tableau().b(), &[r(1, 6), r(1, 3), r(1, 3), r(1, 6)]);
        assert_eq!(rk4_tableau().c(), &[r(0, 1), r(1, 2), r(1, 2), r(1, 1)]);
        assert_eq!(heun3_tableau().c(), &[r(0, 1), r(1, 3), r(2, 3)]);
        assert_eq!(euler_tableau().c(), &[Rational::zero()]);
    }

    #[test]
    fn builtins_are_explicit_consistent_and_in_unit_interval() {
        for t in all_builtins() {
            let s = t.stages();
            for i in 0..s {
                assert_eq!(t.c()[i], t.a()[i].iter().sum::<Rational>(), "{}", t.name());
                assert!(t.a()[i][i..].iter().all(Rational::is_zero));
                assert!(!t.c()[i].is_negative() && t.c()[i] <= Rational::one());
            }
        }
    }

    #[test]
    fn spacing_of_builtins() {
        use Increment::*;
        let rep = spacing_report(&rk6_tableau());
        assert!(rep.conforming);
        assert_eq!(rep.delta_c, Some(r(1, 6)));
        assert_eq!(rep.increments, [Step, Zero, Step, Step, Step, Step, Step]);
        assert_eq!(rep.lawson_schedule(), Some((r(1, 6), 0)));

        let rep = spacing_report(&rk4_tableau());
        assert_eq!(rep.delta_c, Some(r(1, 2)));
        assert_eq!(rep.increments, [Step, Zero, Step]);

        let rep = spacing_report(&heun3_tableau());
        assert_eq!(rep.delta_c, Some(r(1, 3)));
        assert_eq!(rep.lawson_schedule(), Some((r(1, 3), 1)));

        let rep = spacing_report(&euler_tableau());
        assert!(rep.conforming);
        assert_eq!(rep.delta_c, None);
        assert!(rep.increments.is_empty());
        assert_eq!(rep.lawson_schedule(), Some((Rational::one(), 1)));
    }

    #[test]
    fn unequal_increments_are_non_conforming() {
        // c = [0, 1/4, 1]
        let t = Tableau::from_lower_rows(
            "odd",
            rows(&[&[], &[(1, 4)], &[(1, 2), (1, 2)]]),
            vec![r(1, 3), r(1, 3), r(1, 3)],
        )
        .unwrap();
        let rep = spacing_report(&t);
        assert!(!rep.conforming);
        assert_eq!(rep.increments, [Increment::Step, Increment::Irregular]);
        assert_eq!(rep.lawson_schedule(), None);
    }

    #[test]
    fn decreasing_abscissae_are_non_conforming() {
        let t = Tableau::from_lower_rows(
            "back",
            rows(&[&[], &[(1, 2)], &[(1, 4), (0, 1)]]),
            vec![r(1, 3), r(1, 3), r(1, 3)],
        )
        .unwrap();
        assert!(!spacing_report(&t).conforming);
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        let z = Rational::zero;
        let err = Tableau::new("x", vec![vec![z(), Rational::one()], vec![z(), z()]], vec![z(), z()]);
        assert!(matches!(err, Err(TableauError::NotExplicit { row: 0, col: 1, .. })));
        let err = Tableau::new("x", vec![vec![z()]], vec![z(), z()]);
        assert!(matches!(err, Err(TableauError::DimensionMismatch(_))));
        let err = Tableau::from_lower_rows("x", vec![vec![], vec![z(), z()]], vec![z(), z()]);
        assert!(matches!(err, Err(TableauError::DimensionMismatch(_))));
        assert_eq!(Tableau::new("x", vec![], vec![]), Err(TableauError::Empty));
    }
}
