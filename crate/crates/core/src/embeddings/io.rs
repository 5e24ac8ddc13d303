use std::io::{self, Write};

use ndarray::{Array1, Array2};

use super::{EmbeddingError, EmbeddingPair, Objective};

/// Text format: a header `N k objective`, then one line per type,
/// `token<TAB>u<TAB>v[<TAB>a<TAB>b]` with space-separated vector components.
pub fn write_pair<W: Write>(pair: &EmbeddingPair, types: &[String], mut out: W) -> io::Result<()> {
    let join = |row: ndarray::ArrayView1<f64>| row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    writeln!(out, "{} {} {}", pair.vocab_size(), pair.dim(), pair.objective)?;
    for t in 0..pair.vocab_size() {
        write!(out, "{}\t{}\t{}", types[t], join(pair.u.row(t)), join(pair.v.row(t)))?;
        if let (Some(a), Some(b)) = (&pair.a, &pair.b) {
            write!(out, "\t{}\t{}", a[t], b[t])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_pair(text: &str) -> Result<(EmbeddingPair, Vec<String>), EmbeddingError> {
    let err = |line: usize, reason: &str| EmbeddingError::Parse {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [n, k, objective] = fields[..] else {
        return Err(err(1, "header must be `N k objective`"));
    };
    let n: usize = n.parse().map_err(|_| err(1, "bad N"))?;
    let k: usize = k.parse().map_err(|_| err(1, "bad k"))?;
    let objective: Objective = objective.parse().map_err(|e: String| err(1, &e))?;
    let mut u = Array2::zeros((n, k));
    let mut v = Array2::zeros((n, k));
    let mut a = Array1::zeros(n);
    let mut b = Array1::zeros(n);
    let mut types = Vec::with_capacity(n);
    for t in 0..n {
        let (i, line) = lines.next().ok_or_else(|| err(t + 2, "missing row"))?;
        let line_no = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        let expected = if objective.has_biases() { 5 } else { 3 };
        if cols.len() != expected {
            return Err(err(line_no, &format!("expected {expected} tab-separated fields")));
        }
        types.push(cols[0].to_string());
        for (target, field) in [(&mut u, cols[1]), (&mut v, cols[2])] {
            let values: Vec<f64> = field
                .split(' ')
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| err(line_no, "bad vector component"))?;
            if values.len() != k {
                return Err(err(line_no, "wrong vector length"));
            }
            target.row_mut(t).assign(&Array1::from(values));
        }
        if objective.has_biases() {
            a[t] = cols[3].parse().map_err(|_| err(line_no, "bad bias"))?;
            b[t] = cols[4].parse().map_err(|_| err(line_no, "bad bias"))?;
        }
    }
    let mut pair = EmbeddingPair::new(u, v, objective)?;
    if objective.has_biases() {
        pair.a = Some(a);
        pair.b = Some(b);
    }
    Ok((pair, types))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(-1e3f64..1e3, 12), biased in any::<bool>()) {
            let objective = if biased { Objective::Glove } else { Objective::SgnsExact };
            let mut pair = EmbeddingPair::new(
                Array2::from_shape_vec((3, 2), values[..6].to_vec()).unwrap(),
                Array2::from_shape_vec((3, 2), values[6..].to_vec()).unwrap(),
                objective,
            ).unwrap();
            if biased {
                pair.a = Some(Array1::from(vec![values[0], values[1], values[2]]));
                pair.b = Some(Array1::from(vec![values[3], values[4], values[5]]));
            }
            let types: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
            let mut buf = Vec::new();
            write_pair(&pair, &types, &mut buf).unwrap();
            let (back, back_types) = read_pair(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(back, pair);
            prop_assert_eq!(back_types, types);
        }
    }
}
