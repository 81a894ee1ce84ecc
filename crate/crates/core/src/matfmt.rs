//! Plain-text matrix format.
//!
//! One complex entry per whitespace-separated token written as `a+bi` or
//! `a-bi`; one matrix row per line. A file may hold several matrices
//! separated by blank lines. Text after `#` is a comment.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! `parse(format(m)) == m` bit for bit.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::matkit::{CMatrix, C64};

/// Parses one `a+bi` token. Purely real (`a`) and purely imaginary (`bi`)
/// tokens are accepted as well.
pub fn parse_complex(token: &str) -> std::result::Result<C64, String> {
    let bad = || format!("malformed complex entry `{token}`");
    let num = |s: &str| -> std::result::Result<f64, String> {
        let v: f64 = s.parse().map_err(|_| bad())?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad())
        }
    };
    let Some(body) = token.strip_suffix('i') else {
        return Ok(C64::new(num(token)?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    match split {
        Some(k) => {
            let re = num(&body[..k])?;
            let im_str = &body[k..];
            let im = match im_str {
                "+" => 1.0,
                "-" => -1.0,
                _ => num(im_str)?,
            };
            Ok(C64::new(re, im))
        }
        None => {
            let im = match body {
                "" | "+" => 1.0,
                "-" => -1.0,
                _ => num(body)?,
            };
            Ok(C64::new(0.0, im))
        }
    }
}

pub fn format_complex(z: C64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{:?}{}{:?}i", z.re, sign, z.im.abs())
}

/// Parses every matrix in `text`, in order.
pub fn parse_matrices(text: &str) -> Result<Vec<CMatrix>> {
    let mut out = Vec::new();
    let mut rows: Vec<Vec<C64>> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();

    let mut flush = |rows: &mut Vec<Vec<C64>>, lines: &mut Vec<usize>| -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let ncols = rows[0].len();
        if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
            return Err(Error::Parse {
                line: lines[bad],
                reason: format!(
                    "ragged matrix: row has {} entries, expected {ncols}",
                    rows[bad].len()
                ),
            });
        }
        let nrows = rows.len();
        let flat: Vec<C64> = rows.drain(..).flatten().collect();
        lines.clear();
        out.push(CMatrix::from_row_slice(nrows, ncols, &flat));
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            // comment-only lines do not terminate a block
            if raw.trim().is_empty() {
                flush(&mut rows, &mut lines)?;
            }
            continue;
        }
        let row = content
            .split_whitespace()
            .map(parse_complex)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|reason| Error::Parse {
                line: line_no,
                reason,
            })?;
        rows.push(row);
        lines.push(line_no);
    }
    flush(&mut rows, &mut lines)?;
    Ok(out)
}

/// Parses a text holding exactly one matrix.
pub fn parse_matrix(text: &str) -> Result<CMatrix> {
    let mut all = parse_matrices(text)?;
    match all.len() {
        1 => Ok(all.remove(0)),
        n => Err(Error::Parse {
            line: 0,
            reason: format!("expected one matrix, found {n}"),
        }),
    }
}

pub fn format_matrix(m: &CMatrix) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_complex(m[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Writes labelled matrices as consecutive blocks.
pub fn format_matrices(blocks: &[(&str, &CMatrix)]) -> String {
    let mut s = String::new();
    for (k, (label, m)) in blocks.iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "# {label} ({}x{})", m.nrows(), m.ncols());
        s.push_str(&format_matrix(m));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_token_shapes() {
        assert_eq!(parse_complex("1.02+.82i").unwrap(), C64::new(1.02, 0.82));
        assert_eq!(parse_complex("-.01-.61i").unwrap(), C64::new(-0.01, -0.61));
        assert_eq!(parse_complex("-0.00+0.62i").unwrap(), C64::new(-0.0, 0.62));
        assert_eq!(
            parse_complex("1e-5-2.5E+3i").unwrap(),
            C64::new(1e-5, -2500.0)
        );
        assert_eq!(parse_complex("3").unwrap(), C64::new(3.0, 0.0));
        assert_eq!(parse_complex("-2i").unwrap(), C64::new(0.0, -2.0));
        assert_eq!(parse_complex("1+i").unwrap(), C64::new(1.0, 1.0));
        assert!(parse_complex("1+2j").is_err());
        assert!(parse_complex("abc").is_err());
        assert!(parse_complex("NaN+1i").is_err());
    }

    #[test]
    fn parses_blocks_and_comments() {
        let text = "# header\n1+0i 2+0i\n3+0i 4-1i # trailing\n\n\n5+5i\n";
        let ms = parse_matrices(text).unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0].shape(), (2, 2));
        assert_eq!(ms[0][(1, 1)], C64::new(4.0, -1.0));
        assert_eq!(ms[1][(0, 0)], C64::new(5.0, 5.0));
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = parse_matrices("1+0i 2+0i\n3+0i\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_matrices("1 2\n# note\n3 4\n5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn negative_zero_imaginary_survives() {
        let z = C64::new(1.0, -0.0);
        let back = parse_complex(&format_complex(z)).unwrap();
        assert!(back.im.is_sign_negative());
    }

    proptest! {
        #[test]
        fn format_parse_is_bit_exact(
            entries in prop::collection::vec((-1e6f64..1e6, -1e-30f64..1e-30), 1..20),
            cols in 1usize..5,
        ) {
            let n = entries.len() - entries.len() % cols;
            prop_assume!(n > 0);
            let data: Vec<C64> = entries[..n].iter().map(|&(a, b)| C64::new(a, b)).collect();
            let m = CMatrix::from_row_slice(n / cols, cols, &data);
            let back = parse_matrix(&format_matrix(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
