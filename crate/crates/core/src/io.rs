//! Plain-text CSV readers and writers for features, labels and embeddings.
//!
//! Feature files have no header: one item per line, comma-separated decimal
//! floats. Blank lines are ignored. Line numbers in errors are 1-based.

use std::io::{BufRead, Write};

use crate::error::{Result, SotError};
use crate::matrix::{FeatureMatrix, Mat};

fn parse_err(line: usize, message: impl Into<String>) -> SotError {
    SotError::Parse { line, message: message.into() }
}

pub fn read_features<R: BufRead>(reader: R) -> Result<FeatureMatrix> {
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for (c, field) in line.split(',').enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("column {}: cannot parse {:?} as a number", c + 1, field.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("column {}: non-finite value", c + 1)));
            }
            data.push(v);
        }
        let w = data.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(parse_err(lineno, format!("expected {expected} columns, found {w}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let Some(cols) = width else {
        return Err(parse_err(0, "no data rows"));
    };
    FeatureMatrix::new(Mat::new(rows, cols, data)?)
}

pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(t.parse().map_err(|_| parse_err(i + 1, format!("{t:?} is not a nonnegative integer")))?);
    }
    Ok(out)
}

/// Writes rows with 17 significant digits, enough for an exact round trip.
pub fn write_matrix<W: Write>(mut w: W, m: &Mat) -> Result<()> {
    let mut line = String::new();
    for row in m.iter_rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_f64(*v));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels<W: Write>(mut w: W, labels: &[usize]) -> Result<()> {
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_simple_file() {
        let f = read_features("1,0\n\n0, 1\n".as_bytes()).unwrap();
        assert_eq!((f.n(), f.d()), (2, 2));
        assert_eq!(f.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn bad_token_names_line() {
        let e = read_features("1,2,3\n1,2,x\n".as_bytes()).unwrap_err();
        match e {
            SotError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(e.to_string().contains('2'));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(read_features("1,2\n3\n".as_bytes()), Err(SotError::Parse { line: 2, .. })));
        assert!(read_features("".as_bytes()).is_err());
        assert!(read_features("1,inf\n".as_bytes()).is_err());
    }

    #[test]
    fn labels_parse() {
        assert_eq!(read_labels("0\n3\n\n1\n".as_bytes()).unwrap(), vec![0, 3, 1]);
        assert!(matches!(read_labels("0\n-1\n".as_bytes()), Err(SotError::Parse { line: 2, .. })));
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = Mat::from_rows(&[vec![0.1, 1.0 / 3.0, -2.5e-300], vec![std::f64::consts::PI, 1e300, 0.0]]).unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let back = read_features(buf.as_slice()).unwrap();
        assert_eq!(back.mat(), &m);
    }
}
