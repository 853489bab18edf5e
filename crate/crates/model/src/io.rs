//! Path files: CSV with a one-row metadata header followed by stacked factors.
//!
//! ```text
//! p,k,T,delta,gamma,sigma,seed
//! 4,1,3,1,0.1,1,42
//! t,row,a1
//! 0,0,0.61...
//! 0,1,...
//! ```
//!
//! Rows run over `t = 0..T` (0-based) and `row = 0..p`; `a1..ak` are the
//! entries of that row of `A_{t+1}`. Floats use Rust's shortest round-trip
//! formatting, so export → import is exact.

use std::io::{Read, Write};

use spca_linalg::Matrix;

use crate::{ModelError, Result, SubspacePath};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathHeader {
    pub p: usize,
    pub k: usize,
    pub t: usize,
    pub delta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub seed: u64,
}

const META: [&str; 7] = ["p", "k", "T", "delta", "gamma", "sigma", "seed"];

pub fn write_path_csv<W: Write>(w: W, header: &PathHeader, path: &SubspacePath) -> Result<()> {
    if path.len() != header.t || path.p() != header.p || path.k() != header.k {
        return Err(ModelError::ShapeMismatch(
            "header does not describe the path".into(),
        ));
    }
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    out.write_record(META)?;
    out.write_record([
        header.p.to_string(),
        header.k.to_string(),
        header.t.to_string(),
        header.delta.to_string(),
        header.gamma.to_string(),
        header.sigma.to_string(),
        header.seed.to_string(),
    ])?;
    let mut cols = vec!["t".to_string(), "row".to_string()];
    cols.extend((1..=header.k).map(|j| format!("a{j}")));
    out.write_record(&cols)?;
    let mut rec = Vec::with_capacity(header.k + 2);
    for (t, a) in path.factors.iter().enumerate() {
        for i in 0..header.p {
            rec.clear();
            rec.push(t.to_string());
            rec.push(i.to_string());
            rec.extend((0..header.k).map(|j| a[(i, j)].to_string()));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| ModelError::Format(format!("bad or missing {what}")))
}

pub fn read_path_csv<R: Read>(r: R) -> Result<(PathHeader, SubspacePath)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(r);
    let mut records = rdr.records();
    let mut next = |what: &str| -> Result<csv::StringRecord> {
        records
            .next()
            .ok_or_else(|| ModelError::Format(format!("missing {what}")))?
            .map_err(ModelError::from)
    };
    let names = next("metadata header")?;
    if names.iter().collect::<Vec<_>>() != META {
        return Err(ModelError::Format("unexpected metadata header".into()));
    }
    let m = next("metadata row")?;
    let header = PathHeader {
        p: field(&m, 0, "p")?,
        k: field(&m, 1, "k")?,
        t: field(&m, 2, "T")?,
        delta: field(&m, 3, "delta")?,
        gamma: field(&m, 4, "gamma")?,
        sigma: field(&m, 5, "sigma")?,
        seed: field(&m, 6, "seed")?,
    };
    if header.p == 0 || header.k == 0 || header.t == 0 {
        return Err(ModelError::Format("p, k and T must be positive".into()));
    }
    let cols = next("column header")?;
    if cols.len() != header.k + 2 {
        return Err(ModelError::Format("column header width != k + 2".into()));
    }
    let mut factors = vec![Matrix::zeros(header.p, header.k); header.t];
    let mut seen = 0usize;
    for rec in records {
        let rec = rec?;
        let t: usize = field(&rec, 0, "t")?;
        let i: usize = field(&rec, 1, "row")?;
        if t >= header.t || i >= header.p || rec.len() != header.k + 2 {
            return Err(ModelError::Format(format!("row out of range: t={t} row={i}")));
        }
        for j in 0..header.k {
            factors[t][(i, j)] = field(&rec, j + 2, "entry")?;
        }
        seen += 1;
    }
    if seen != header.p * header.t {
        return Err(ModelError::Format(format!(
            "expected {} rows, found {seen}",
            header.p * header.t
        )));
    }
    Ok((header, SubspacePath::new(factors)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{generate_rotating_path, SpikedParams};

    #[test]
    fn round_trip_is_exact() {
        let prm = SpikedParams {
            p: 4,
            k: 2,
            delta: 1.5,
            sigma: 0.5,
            gamma: 0.05,
            seed: 42,
        };
        let path = generate_rotating_path(&prm, 7).unwrap();
        let header = PathHeader {
            p: 4,
            k: 2,
            t: 7,
            delta: 1.5,
            gamma: 0.05,
            sigma: 0.5,
            seed: 42,
        };
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &header, &path).unwrap();
        let (h2, p2) = read_path_csv(buf.as_slice()).unwrap();
        assert_eq!(h2, header);
        assert_eq!(p2.factors, path.factors);
        assert_eq!(p2.gamma_certified, path.gamma_certified);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = "p,k,T,delta,gamma,sigma,seed\n2,1,2,1,0,1,0\nt,row,a1\n0,0,1\n0,1,0\n";
        assert!(matches!(read_path_csv(text.as_bytes()), Err(ModelError::Format(_))));
    }
}
