//! Dense signal files.
//!
//! Text: a header line `n f`, then `n` lines of `f` whitespace-separated
//! decimals. Binary: magic `DFSG`, `u32 n`, `u32 f`, a zero `u32` pad to 16
//! bytes, then `n * f` little-endian `f64` in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const SIGNAL_MAGIC: &[u8; 4] = b"DFSG";
const HEADER_LEN: usize = 16;

pub fn signal_to_text(x: &Array2<f64>) -> String {
    let (n, f) = x.dim();
    let mut out = String::with_capacity(n * f * 24 + 16);
    let _ = writeln!(out, "{n} {f}");
    for row in x.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            // `{:e}` prints the shortest representation that round-trips.
            let _ = write!(out, "{v:e}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_signal_text(text: &str, source: &Path) -> Result<Array2<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(source, 1, "missing `n f` header"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::parse(source, hline + 1, format!("bad dimension `{s}`")))
    };
    if dims.len() != 2 {
        return Err(Error::parse(source, hline + 1, "header must be `n f`"));
    }
    let (n, f) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let mut data = Vec::with_capacity(n * f);
    let mut rows = 0;
    for (idx, line) in lines {
        if rows == n {
            return Err(Error::parse(source, idx + 1, format!("more than {n} rows")));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(source, idx + 1, format!("bad number `{tok}`")))?;
            data.push(v);
        }
        if data.len() - before != f {
            return Err(Error::parse(
                source,
                idx + 1,
                format!("expected {f} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Format(format!(
            "{}: header declares {n} rows, found {rows}",
            source.display()
        )));
    }
    Ok(Array2::from_shape_vec((n, f), data).expect("shape checked"))
}

pub fn signal_to_bytes(x: &Array2<f64>) -> Result<Vec<u8>> {
    let (n, f) = x.dim();
    let n32 = u32::try_from(n).map_err(|_| Error::Format(format!("{n} rows do not fit in u32")))?;
    let f32_ = u32::try_from(f).map_err(|_| Error::Format(format!("{f} columns do not fit in u32")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * f);
    out.extend_from_slice(SIGNAL_MAGIC);
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&f32_.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in x.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn signal_from_bytes(bytes: &[u8], source: &Path) -> Result<Array2<f64>> {
    let bad = |msg: String| Error::Format(format!("{}: {msg}", source.display()));
    if bytes.len() < HEADER_LEN || &bytes[..4] != SIGNAL_MAGIC {
        return Err(bad("not a DFSG signal file".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (n, f) = (word(4), word(8));
    let expected = n
        .checked_mul(f)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(bad(format!("expected {expected} payload bytes for {n}x{f}, found {}", body.len())));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((n, f), data).expect("shape checked"))
}

/// Reads either format, detected by the magic bytes.
pub fn read_signal(path: &Path) -> Result<Array2<f64>> {
    let bytes = crate::error::read_input(path)?;
    if bytes.starts_with(SIGNAL_MAGIC) {
        return signal_from_bytes(&bytes, path);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{}: not UTF-8", path.display())))?;
    parse_signal_text(&text, path)
}

/// Writes binary when the extension is `.bin`, text otherwise.
pub fn write_signal(x: &Array2<f64>, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        fs::write(path, signal_to_bytes(x)?)?;
    } else {
        fs::write(path, signal_to_text(x))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn text_round_trip() {
        let x = arr2(&[[0.1, -2.5e-300], [f64::MAX, 1.0 / 3.0], [0.0, -0.0]]);
        let back = parse_signal_text(&signal_to_text(&x), Path::new("s")).unwrap();
        assert_eq!(x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), back.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn binary_round_trip() {
        let x = arr2(&[[0.1, 2.0, 3.0]]);
        let bytes = signal_to_bytes(&x).unwrap();
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(signal_from_bytes(&bytes, Path::new("s")).unwrap(), x);
        assert!(signal_from_bytes(&bytes[..30], Path::new("s")).is_err());
    }

    #[test]
    fn text_errors_carry_line_numbers() {
        let err = parse_signal_text("2 2\n1 2\n3\n", Path::new("x.txt")).unwrap_err();
        assert!(err.to_string().starts_with("x.txt:3:"), "{err}");
        assert!(parse_signal_text("2 2\n1 2\n", Path::new("x.txt")).is_err());
        assert!(parse_signal_text("", Path::new("x.txt")).is_err());
    }
}
