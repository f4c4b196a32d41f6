//! Plain-text gate matrices: one row per line, whitespace-separated entries
//! written as `re+imj` (e.g. `0.5-0.25j`, `1`, `-2e-3+1e-3j`).
//!
//! Blank lines and lines starting with `#` are ignored.

use thiserror::Error;

use crate::linalg::{c, CMatrix, C64};
use crate::types::GateMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {column}: {message}")]
pub struct GateParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Parse a single `re+imj` token.
pub fn parse_complex(token: &str) -> Option<C64> {
    let t = token.trim();
    let Some(body) = t.strip_suffix(['j', 'i']) else {
        return parse_real(t).map(|x| c(x, 0.0));
    };
    let bytes = body.as_bytes();
    // split at the last sign that is not leading and not part of an exponent
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    match split {
        Some(i) => {
            let re = parse_real(&body[..i])?;
            let im_str = &body[i..];
            let im = if im_str == "+" || im_str == "-" {
                if im_str == "+" { 1.0 } else { -1.0 }
            } else {
                parse_real(im_str)?
            };
            Some(c(re, im))
        }
        None => {
            let im = match body {
                "" | "+" => 1.0,
                "-" => -1.0,
                _ => parse_real(body)?,
            };
            Some(c(0.0, im))
        }
    }
}

/// Format one entry; Rust's shortest round-trip float formatting keeps it lossless.
pub fn format_complex(z: C64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{:?}{}{:?}j", z.re, sign, z.im.abs())
}

pub fn parse_gate(text: &str) -> Result<GateMatrix, GateParseError> {
    let mut rows: Vec<Vec<C64>> = Vec::new();
    let mut first_line = 0;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if rows.is_empty() {
            first_line = lineno + 1;
        }
        let mut row = Vec::new();
        let mut pos = 0;
        for token in line.split_whitespace() {
            let offset = line[pos..].find(token).unwrap() + pos;
            pos = offset + token.len();
            let z = parse_complex(token).ok_or_else(|| GateParseError {
                line: lineno + 1,
                column: offset + 1,
                message: format!("cannot parse complex number '{token}'"),
            })?;
            row.push(z);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(GateParseError {
                    line: lineno + 1,
                    column: 1,
                    message: format!("row has {} entries, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(GateParseError {
            line: 1,
            column: 1,
            message: "no matrix rows found".into(),
        });
    }
    let n = rows.len();
    if rows[0].len() != n {
        return Err(GateParseError {
            line: first_line,
            column: 1,
            message: format!("matrix is {}x{}, expected square", n, rows[0].len()),
        });
    }
    let m = CMatrix::from_fn(n, n, |i, j| rows[i][j]);
    GateMatrix::new(m).map_err(|e| GateParseError {
        line: first_line,
        column: 1,
        message: e.to_string(),
    })
}

pub fn format_gate(g: &GateMatrix) -> String {
    let mut out = String::new();
    for i in 0..g.nrows() {
        let row: Vec<String> = (0..g.ncols()).map(|j| format_complex(g[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_unitary;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tokens() {
        assert_eq!(parse_complex("1"), Some(c(1.0, 0.0)));
        assert_eq!(parse_complex("0.5-0.25j"), Some(c(0.5, -0.25)));
        assert_eq!(parse_complex("-2e-3+1e-3j"), Some(c(-2e-3, 1e-3)));
        assert_eq!(parse_complex("1E+2-1E-2j"), Some(c(100.0, -0.01)));
        assert_eq!(parse_complex("-j"), Some(c(0.0, -1.0)));
        assert_eq!(parse_complex("3.5j"), Some(c(0.0, 3.5)));
        assert_eq!(parse_complex("1+j"), Some(c(1.0, 1.0)));
        assert_eq!(parse_complex("abc"), None);
        assert_eq!(parse_complex("1+xj"), None);
        assert_eq!(parse_complex("nan"), None);
    }

    #[test]
    fn round_trip_random_gate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GateMatrix::new(random_unitary(4, &mut rng)).unwrap();
        let back = parse_gate(&format_gate(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn reports_position() {
        let text = "1 0 0 0\n0 1 0 0\n0 0 1 x+1j\n0 0 0 1\n";
        let err = parse_gate(text).unwrap_err();
        assert_eq!((err.line, err.column), (3, 7));
        let err = parse_gate("1 0\n0 1 0\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_gate("1 0 0\n0 1 0\n").unwrap_err();
        assert!(err.message.contains("square"));
        assert!(parse_gate("# only a comment\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let g = parse_gate("# cnot\n\n1 0 0 0\n0 1 0 0\n0 0 0 1\n0 0 1 0\n").unwrap();
        assert_eq!(g[(2, 3)], c(1.0, 0.0));
    }

    proptest! {
        #[test]
        fn complex_round_trip(re in -1e6f64..1e6, im in -1e6f64..1e6) {
            let z = c(re, im);
            prop_assert_eq!(parse_complex(&format_complex(z)), Some(z));
        }
    }
}
