//! The JSON model document.
//!
//! Rates are strings: decimal literals ("1", "-0.25") or exact rationals
//! ("p/q"). Both parse into exact rationals, so structural validation (signs
//! of off-diagonal rates, row sums) is exact end-to-end, and documents
//! round-trip verbatim. The compiled runtime model stores the nearest f64
//! for each rate; a positive rational that would underflow to 0.0 is
//! rejected, because sign queries on the runtime model compare floats
//! against zero exactly.
//!
//! ```json
//! {
//!   "schema_version": "1",
//!   "states": ["s0", "s1"],
//!   "rate_model": {
//!     "kind": "interval",
//!     "lower": [["0", "1"], ["1", "0"]],
//!     "upper": [["0", "2"], ["3", "0"]]
//!   }
//! }
//! ```
//!
//! `precise` carries `rows` (full rows, diagonal included, each summing to
//! zero); `rowsets` carries per-state lists of such rows; `interval` carries
//! `lower`/`upper` off-diagonal bound grids with zero diagonals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamble::StateSpace;
use crate::rates::{IntensityMatrix, LowerRateModel, RateModelKind};

pub const SCHEMA_VERSION: &str = "1";

/// The document as written: rates stay strings so serialisation reproduces
/// the input byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: String,
    pub states: Vec<String>,
    pub rate_model: RateModelDoc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RateModelDoc {
    Precise { rows: Vec<Vec<String>> },
    Interval { lower: Vec<Vec<String>>, upper: Vec<Vec<String>> },
    Rowsets { rows: Vec<Vec<Vec<String>>> },
}

/// Parses and validates a model document, returning both the document and
/// the compiled runtime model.
pub fn parse_model(text: &str) -> Result<(ModelFile, LowerRateModel)> {
    let doc: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "<document>".into(),
        message: e.to_string(),
    })?;
    let model = compile(&doc)?;
    Ok((doc, model))
}

/// Stable serialisation: two-space pretty JSON with fields in declaration
/// order.
pub fn serialize_model(doc: &ModelFile) -> String {
    let mut out = serde_json::to_string_pretty(doc).expect("document serialises");
    out.push('\n');
    out
}

/// Validates a document in exact rational arithmetic and compiles it to the
/// runtime representation.
pub fn compile(doc: &ModelFile) -> Result<LowerRateModel> {
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse {
            path: "schema_version".into(),
            message: format!("unsupported version {:?}, expected {SCHEMA_VERSION:?}", doc.schema_version),
        });
    }
    let space = StateSpace::new(doc.states.clone()).map_err(|e| Error::Parse {
        path: "states".into(),
        message: e.to_string(),
    })?;
    let n = space.len();

    match &doc.rate_model {
        RateModelDoc::Precise { rows } => {
            let grid = parse_grid(rows, n, "rate_model.rows")?;
            validate_intensity_rows(&grid, n, "rate_model.rows")?;
            let floats = off_diagonal_floats(&grid, n, "rate_model.rows")?;
            let matrix = IntensityMatrix::from_off_diagonal(n, floats)?;
            LowerRateModel::precise(space, matrix)
        }
        RateModelDoc::Interval { lower, upper } => {
            let lo = parse_grid(lower, n, "rate_model.lower")?;
            let hi = parse_grid(upper, n, "rate_model.upper")?;
            for x in 0..n {
                for y in 0..n {
                    let (l, h) = (&lo[x * n + y], &hi[x * n + y]);
                    let path = || format!("rate_model.lower[{x}][{y}]");
                    if x == y {
                        if !l.is_zero() || !h.is_zero() {
                            return Err(Error::Parse {
                                path: path(),
                                message: "diagonal bounds must be 0 (the diagonal is derived)"
                                    .into(),
                            });
                        }
                        continue;
                    }
                    if l.is_negative() {
                        return Err(Error::Parse {
                            path: path(),
                            message: format!("lower bound {l} is negative"),
                        });
                    }
                    if l > h {
                        return Err(Error::Parse {
                            path: path(),
                            message: format!("lower bound {l} exceeds upper bound {h}"),
                        });
                    }
                }
            }
            let lo = off_diagonal_floats(&lo, n, "rate_model.lower")?;
            let hi = off_diagonal_floats(&hi, n, "rate_model.upper")?;
            LowerRateModel::interval(space, lo, hi)
        }
        RateModelDoc::Rowsets { rows } => {
            if rows.len() != n {
                return Err(Error::Parse {
                    path: "rate_model.rows".into(),
                    message: format!("expected {n} row sets, got {}", rows.len()),
                });
            }
            let mut candidates = Vec::with_capacity(n);
            for (x, set) in rows.iter().enumerate() {
                if set.is_empty() {
                    return Err(Error::Parse {
                        path: format!("rate_model.rows[{x}]"),
                        message: "state has no candidate rows".into(),
                    });
                }
                let mut out = Vec::with_capacity(set.len());
                for (k, row) in set.iter().enumerate() {
                    let path = format!("rate_model.rows[{x}][{k}]");
                    let rationals = parse_row(row, n, &path)?;
                    validate_intensity_row(&rationals, x, &path)?;
                    let mut floats = Vec::with_capacity(n);
                    for (y, r) in rationals.iter().enumerate() {
                        if y == x {
                            floats.push(0.0);
                        } else {
                            floats.push(to_f64_checked(r, &format!("{path}[{y}]"))?);
                        }
                    }
                    out.push(floats);
                }
                candidates.push(out);
            }
            LowerRateModel::row_sets_from_off_diagonal(space, candidates)
        }
    }
}

/// Renders a runtime model back into a document, emitting shortest
/// round-trip decimal strings.
pub fn document_from_model(model: &LowerRateModel) -> ModelFile {
    let n = model.n();
    let states = model.space().labels().to_vec();
    let fmt = |v: f64| format!("{v}");
    let rate_model = match model.kind() {
        RateModelKind::Precise(m) => RateModelDoc::Precise {
            rows: (0..n).map(|x| m.row(x).iter().copied().map(fmt).collect()).collect(),
        },
        RateModelKind::IntervalRows { lo, hi } => RateModelDoc::Interval {
            lower: (0..n)
                .map(|x| lo[x * n..(x + 1) * n].iter().copied().map(fmt).collect())
                .collect(),
            upper: (0..n)
                .map(|x| hi[x * n..(x + 1) * n].iter().copied().map(fmt).collect())
                .collect(),
        },
        RateModelKind::FiniteRowSets { rows } => RateModelDoc::Rowsets {
            rows: rows
                .iter()
                .map(|set| set.iter().map(|row| row.iter().copied().map(fmt).collect()).collect())
                .collect(),
        },
    };
    ModelFile { schema_version: SCHEMA_VERSION.into(), states, rate_model }
}

fn parse_grid(rows: &[Vec<String>], n: usize, path: &str) -> Result<Vec<BigRational>> {
    if rows.len() != n {
        return Err(Error::Parse {
            path: path.into(),
            message: format!("expected {n} rows, got {}", rows.len()),
        });
    }
    let mut out = Vec::with_capacity(n * n);
    for (x, row) in rows.iter().enumerate() {
        out.extend(parse_row(row, n, &format!("{path}[{x}]"))?);
    }
    Ok(out)
}

fn parse_row(row: &[String], n: usize, path: &str) -> Result<Vec<BigRational>> {
    if row.len() != n {
        return Err(Error::Parse {
            path: path.into(),
            message: format!("expected {n} entries, got {}", row.len()),
        });
    }
    row.iter()
        .enumerate()
        .map(|(y, text)| parse_rate(text, &format!("{path}[{y}]")))
        .collect()
}

/// Off-diagonal rates: non-negative (exact); rows sum to zero (exact).
fn validate_intensity_rows(grid: &[BigRational], n: usize, path: &str) -> Result<()> {
    for x in 0..n {
        validate_intensity_row(&grid[x * n..(x + 1) * n], x, &format!("{path}[{x}]"))?;
    }
    Ok(())
}

fn validate_intensity_row(row: &[BigRational], x: usize, path: &str) -> Result<()> {
    let mut sum = BigRational::zero();
    for (y, q) in row.iter().enumerate() {
        if y != x && q.is_negative() {
            return Err(Error::Parse {
                path: format!("{path}[{y}]"),
                message: format!("off-diagonal rate {q} is negative"),
            });
        }
        sum += q;
    }
    if !sum.is_zero() {
        return Err(Error::Parse {
            path: path.into(),
            message: format!("row sums to {sum}, not 0"),
        });
    }
    Ok(())
}

/// Converts a rational grid to floats, keeping diagonal cells at zero.
fn off_diagonal_floats(grid: &[BigRational], n: usize, path: &str) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            if y != x {
                out[x * n + y] =
                    to_f64_checked(&grid[x * n + y], &format!("{path}[{x}][{y}]"))?;
            }
        }
    }
    Ok(out)
}

fn to_f64_checked(r: &BigRational, path: &str) -> Result<f64> {
    let v = r.to_f64().unwrap_or(f64::NAN);
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.into(),
            message: format!("rate {r} is not representable as a finite double"),
        });
    }
    if v == 0.0 && !r.is_zero() {
        return Err(Error::Parse {
            path: path.into(),
            message: format!(
                "rate {r} underflows to 0; signs are decided by exact float comparison, \
                 so vanishingly small positive rates are not supported"
            ),
        });
    }
    Ok(v)
}

/// Rate literal: an optional sign followed by `p/q`, an integer, or a
/// decimal. All forms are exact.
fn parse_rate(text: &str, path: &str) -> Result<BigRational> {
    let err = |message: String| Error::Parse { path: path.into(), message };
    let s = text.trim();
    if s.is_empty() {
        return Err(err("empty rate literal".into()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let p: BigInt = num
            .trim()
            .parse()
            .map_err(|_| err(format!("invalid numerator {num:?}")))?;
        let q: BigInt = den
            .trim()
            .parse()
            .map_err(|_| err(format!("invalid denominator {den:?}")))?;
        if q.is_zero() {
            return Err(err("zero denominator".into()));
        }
        return Ok(BigRational::new(p, q));
    }
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err(format!("invalid rate literal {text:?}")));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(err(format!(
            "invalid rate literal {text:?} (expected integer, decimal, or p/q)"
        )));
    }
    let mantissa: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .map_err(|_| err(format!("invalid rate literal {text:?}")))?;
    let denom = BigInt::from(10u32).pow(frac_part.len() as u32);
    Ok(BigRational::new(mantissa * sign, denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamble::Gamble;

    const INTERVAL_DOC: &str = r#"{
        "schema_version": "1",
        "states": ["s0", "s1"],
        "rate_model": {
            "kind": "interval",
            "lower": [["0", "1"], ["1", "0"]],
            "upper": [["0", "2"], ["3", "0"]]
        }
    }"#;

    #[test]
    fn parses_the_two_state_interval_model() {
        let (_, model) = parse_model(INTERVAL_DOC).unwrap();
        let f = Gamble::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(model.lower_apply(&f).unwrap().values(), &[1.0, -3.0]);
        assert_eq!(model.norm_bound().value, 6.0);
    }

    #[test]
    fn parses_precise_and_rowset_documents() {
        let precise = r#"{
            "schema_version": "1",
            "states": ["a", "b"],
            "rate_model": {"kind": "precise", "rows": [["-1", "1"], ["1", "-1"]]}
        }"#;
        let (_, model) = parse_model(precise).unwrap();
        assert!(model.is_precise());

        let rowsets = r#"{
            "schema_version": "1",
            "states": ["a", "b"],
            "rate_model": {"kind": "rowsets", "rows": [
                [["-1", "1"], ["-2", "2"]],
                [["1/2", "-1/2"]]
            ]}
        }"#;
        let (_, model) = parse_model(rowsets).unwrap();
        let f = Gamble::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(model.lower_apply(&f).unwrap().values(), &[1.0, -0.5]);
    }

    #[test]
    fn rejects_negative_rate_with_located_error() {
        let doc = r#"{
            "schema_version": "1",
            "states": ["a", "b"],
            "rate_model": {"kind": "precise", "rows": [["1", "-1"], ["1", "-1"]]}
        }"#;
        let err = parse_model(doc).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rate_model.rows[0][1]"), "{msg}");
        assert!(msg.contains("negative"), "{msg}");
    }

    #[test]
    fn rejects_row_sum_violation() {
        let doc = r#"{
            "schema_version": "1",
            "states": ["a", "b"],
            "rate_model": {"kind": "rowsets", "rows": [
                [["-0.9", "1"]],
                [["1", "-1"]]
            ]}
        }"#;
        let err = parse_model(doc).unwrap_err();
        assert!(err.to_string().contains("sums to"), "{err}");
    }

    #[test]
    fn rejects_malformed_documents() {
        assert!(parse_model("{").is_err());
        assert!(parse_model("{\"schema_version\":\"2\",\"states\":[\"a\"],\"rate_model\":{\"kind\":\"precise\",\"rows\":[[\"0\"]]}}").is_err());
        // Bad literals.
        for lit in ["", "1/0", "1.2.3", "abc", "1e3"] {
            assert!(parse_rate(lit, "x").is_err(), "{lit:?} should be rejected");
        }
    }

    #[test]
    fn rational_literals_are_exact() {
        let r = parse_rate("1/3", "x").unwrap();
        assert_eq!(r * BigRational::from(BigInt::from(3)), BigRational::from(BigInt::from(1)));
        let d = parse_rate("-0.125", "x").unwrap();
        assert_eq!(to_f64_checked(&d, "x").unwrap(), -0.125);
    }

    #[test]
    fn underflowing_positive_rate_is_rejected() {
        let doc = format!(
            r#"{{
            "schema_version": "1",
            "states": ["a", "b"],
            "rate_model": {{"kind": "interval",
                "lower": [["0", "1/1{zeros}"], ["1", "0"]],
                "upper": [["0", "1"], ["1", "0"]]}}
        }}"#,
            zeros = "0".repeat(400)
        );
        let err = parse_model(&doc).unwrap_err();
        assert!(err.to_string().contains("underflow"), "{err}");
    }

    #[test]
    fn documents_roundtrip_verbatim() {
        let (doc, _) = parse_model(INTERVAL_DOC).unwrap();
        let text = serialize_model(&doc);
        let (doc2, _) = parse_model(&text).unwrap();
        assert_eq!(doc, doc2);
        assert_eq!(text, serialize_model(&doc2));
    }

    #[test]
    fn model_to_document_roundtrips_bit_identically() {
        let (_, model) = parse_model(INTERVAL_DOC).unwrap();
        let doc = document_from_model(&model);
        let (_, model2) = parse_model(&serialize_model(&doc)).unwrap();
        assert_eq!(model, model2);
    }
}
