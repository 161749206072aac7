//! The mapped-estimates CSV: `bin_start_ms`, coordinates, active array
//! count and method name. Room coordinates are `x,y[,z]` in meters, PCA
//! coefficients are `a1..aJ`.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Room,
    Pca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub bin_start_ms: i64,
    pub coords: DVector<f64>,
    pub active_arrays: usize,
    pub method: String,
}

pub fn header(units: Units, dim: usize) -> Vec<String> {
    let mut h = vec!["bin_start_ms".to_string()];
    match units {
        Units::Room => h.extend(["x", "y", "z"].iter().take(dim).map(|s| s.to_string())),
        Units::Pca => h.extend((1..=dim).map(|j| format!("a{j}"))),
    }
    h.push("active_arrays".into());
    h.push("method".into());
    h
}

pub fn write_estimates<W: Write>(out: W, units: Units, dim: usize, rows: &[EstimateRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(units, dim))?;
    for r in rows {
        if r.coords.len() != dim {
            return Err(CliError::Data(format!(
                "estimate at {} ms has {} coordinates, expected {dim}",
                r.bin_start_ms,
                r.coords.len()
            )));
        }
        let mut rec = vec![r.bin_start_ms.to_string()];
        // `{}` on f64 prints the shortest string that parses back exactly.
        rec.extend(r.coords.iter().map(|v| v.to_string()));
        rec.push(r.active_arrays.to_string());
        rec.push(r.method.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimates<R: Read>(input: R) -> Result<(Units, Vec<EstimateRow>), CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let h = rdr.headers()?.clone();
    let cols: Vec<&str> = h.iter().collect();
    let bad_header = || CliError::Data(format!("unrecognized estimates header: {}", cols.join(",")));
    if cols.len() < 4 || cols[0] != "bin_start_ms" || cols[cols.len() - 2] != "active_arrays" || cols[cols.len() - 1] != "method" {
        return Err(bad_header());
    }
    let dim = cols.len() - 3;
    let units = if cols[1] == "x" { Units::Room } else { Units::Pca };
    if h.iter().collect::<Vec<_>>() != header(units, dim) {
        return Err(bad_header());
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |what: &str| CliError::Data(format!("estimates line {line}: bad {what}"));
        let bin_start_ms = rec[0].parse().map_err(|_| bad("bin_start_ms"))?;
        let coords = (1..=dim)
            .map(|j| rec[j].parse::<f64>().map_err(|_| bad("coordinate")))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(EstimateRow {
            bin_start_ms,
            coords: DVector::from_vec(coords),
            active_arrays: rec[dim + 1].parse().map_err(|_| bad("active_arrays"))?,
            method: rec[dim + 2].to_string(),
        });
    }
    Ok((units, rows))
}
