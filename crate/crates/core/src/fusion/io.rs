//! Text serialization for fitted models and CSV exchange of labeled DOA
//! observations.
//!
//! Model files are line oriented:
//!
//! ```text
//! doafuse-affine 1
//! arrays 5
//! active 0,1,2,3,4
//! matrix r0 2 1
//! <row>
//! matrix b 2 15
//! <row>
//! <row>
//! ```
//!
//! Matrices are row-major, one row per line, values separated by single
//! spaces and printed with round-trip precision.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use super::affine::AffineMap;
use super::pca::PcaModel;
use super::types::{ActiveSet, CalibrationSet, ConcatenatedDoa};
use crate::error::{Error, Result};

const AFFINE_MAGIC: &str = "doafuse-affine";
const PCA_MAGIC: &str = "doafuse-pca";
const FORMAT_VERSION: u32 = 1;

fn write_matrix<W: Write>(out: &mut W, name: &str, m: &DMatrix<f64>) -> Result<()> {
    writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols())?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(r: R) -> Self {
        Lines {
            inner: r.lines(),
            line: 0,
        }
    }

    fn next(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                Some(l) => {
                    let l = l?;
                    let t = l.trim();
                    if !t.is_empty() && !t.starts_with('#') {
                        return Ok(t.to_string());
                    }
                }
                None => return Err(Error::parse(self.line, "unexpected end of file")),
            }
        }
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_string()),
            _ => Err(Error::parse(self.line, format!("expected `{key}`"))),
        }
    }

    fn header(&mut self, magic: &str) -> Result<()> {
        let v = self.keyed(magic)?;
        match v.parse::<u32>() {
            Ok(FORMAT_VERSION) => Ok(()),
            _ => Err(Error::parse(self.line, format!("unsupported {magic} version {v}"))),
        }
    }

    fn matrix(&mut self, name: &str) -> Result<DMatrix<f64>> {
        let v = self.keyed("matrix")?;
        let parts: Vec<&str> = v.split_whitespace().collect();
        let dims = match parts.as_slice() {
            [n, r, c] if *n == name => r.parse::<usize>().ok().zip(c.parse::<usize>().ok()),
            _ => None,
        };
        let (rows, cols) =
            dims.ok_or_else(|| Error::parse(self.line, format!("bad header for matrix {name}")))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.next()?;
            let row = l
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(self.line, e.to_string()))?;
            if row.len() != cols {
                return Err(Error::parse(
                    self.line,
                    format!("matrix {name}: expected {cols} values, found {}", row.len()),
                ));
            }
            data.extend(row);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
}

fn parse_indices(s: &str, line: usize) -> Result<Vec<usize>> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| Error::parse(line, e.to_string())))
        .collect()
}

pub fn write_affine<W: Write>(map: &AffineMap, mut out: W) -> Result<()> {
    writeln!(out, "{AFFINE_MAGIC} {FORMAT_VERSION}")?;
    writeln!(out, "arrays {}", map.array_count)?;
    let idx: Vec<String> = map.active.indices().map(|i| i.to_string()).collect();
    writeln!(out, "active {}", if idx.is_empty() { "-".into() } else { idx.join(",") })?;
    write_matrix(&mut out, "r0", &DMatrix::from_column_slice(map.r0.len(), 1, map.r0.as_slice()))?;
    write_matrix(&mut out, "b", &map.b)?;
    Ok(())
}

pub fn read_affine<R: BufRead>(r: R) -> Result<AffineMap> {
    let mut lines = Lines::new(r);
    lines.header(AFFINE_MAGIC)?;
    let array_count: usize = lines
        .keyed("arrays")?
        .parse()
        .map_err(|_| Error::parse(lines.line, "bad array count"))?;
    let act = lines.keyed("active")?;
    let idx = parse_indices(&act, lines.line)?;
    if idx.iter().any(|&i| i >= array_count) {
        return Err(Error::parse(lines.line, "active index out of range"));
    }
    let active = ActiveSet::from_indices(idx);
    let r0 = lines.matrix("r0")?;
    let b = lines.matrix("b")?;
    if r0.ncols() != 1 || b.nrows() != r0.nrows() || b.ncols() != 3 * active.len() {
        return Err(Error::DimensionMismatch(format!(
            "affine model: r0 {}x{}, b {}x{}, {} active arrays",
            r0.nrows(),
            r0.ncols(),
            b.nrows(),
            b.ncols(),
            active.len()
        )));
    }
    Ok(AffineMap {
        r0: r0.column(0).into_owned(),
        b,
        active,
        array_count,
    })
}

pub fn write_pca<W: Write>(model: &PcaModel, mut out: W) -> Result<()> {
    writeln!(out, "{PCA_MAGIC} {FORMAT_VERSION}")?;
    let s = &model.singular_values;
    write_matrix(&mut out, "singular_values", &DMatrix::from_row_slice(1, s.len(), s))?;
    write_matrix(&mut out, "u", &model.u)?;
    Ok(())
}

pub fn read_pca<R: BufRead>(r: R) -> Result<PcaModel> {
    let mut lines = Lines::new(r);
    lines.header(PCA_MAGIC)?;
    let s = lines.matrix("singular_values")?;
    let u = lines.matrix("u")?;
    if s.nrows() != 1 || u.ncols() > s.ncols() {
        return Err(Error::DimensionMismatch("PCA model shape".into()));
    }
    Ok(PcaModel {
        u,
        singular_values: s.iter().copied().collect(),
    })
}

/// One CSV row: an observation, optionally labeled with the calibration
/// point it was recorded at and that point's location.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledObservation {
    pub doa: ConcatenatedDoa,
    pub point_id: Option<u32>,
    pub location: Option<DVector<f64>>,
}

pub fn observation_header(array_count: usize, room_dim: usize) -> Vec<String> {
    let mut h = vec!["timestamp_ms".to_string(), "point_id".into(), "r_x".into(), "r_y".into()];
    if room_dim == 3 {
        h.push("r_z".into());
    }
    for m in 0..array_count {
        for c in ["x", "y", "z"] {
            h.push(format!("a{m}_{c}"));
        }
    }
    for m in 0..array_count {
        h.push(format!("m{m}"));
    }
    h
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(line, e.to_string())
}

/// Writes observations in the calibration column layout. Unlabeled rows
/// leave `point_id` and the location fields empty.
pub fn write_observations_csv<W: Write>(
    out: W,
    array_count: usize,
    room_dim: usize,
    rows: &[LabeledObservation],
) -> Result<()> {
    if !(2..=3).contains(&room_dim) {
        return Err(Error::invalid("room dimension must be 2 or 3"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(observation_header(array_count, room_dim))
        .map_err(csv_err)?;
    for row in rows {
        if row.doa.array_count() != array_count {
            return Err(Error::DimensionMismatch(format!(
                "row has {} arrays, header has {array_count}",
                row.doa.array_count()
            )));
        }
        let mut rec = vec![row.doa.timestamp_ms.to_string()];
        rec.push(row.point_id.map_or(String::new(), |p| p.to_string()));
        match &row.location {
            Some(r) if r.len() == room_dim => rec.extend(r.iter().map(|v| v.to_string())),
            Some(_) => return Err(Error::DimensionMismatch("location length".into())),
            None => rec.extend(std::iter::repeat_n(String::new(), room_dim)),
        }
        rec.extend(row.doa.values().iter().map(|v| v.to_string()));
        rec.extend(row.doa.mask().iter().map(|&b| u8::from(b).to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the calibration column layout. Returns `(array_count, room_dim,
/// rows)`.
pub fn read_observations_csv<R: std::io::Read>(
    input: R,
) -> Result<(usize, usize, Vec<LabeledObservation>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let room_dim = if header.get(4) == Some("r_z") { 3 } else { 2 };
    let rest = header.len().saturating_sub(2 + room_dim);
    if header.get(0) != Some("timestamp_ms") || rest == 0 || rest % 4 != 0 {
        return Err(Error::parse(1, "unrecognized observation CSV header"));
    }
    let m = rest / 4;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let f = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize| -> Result<f64> {
            f(j).parse::<f64>()
                .map_err(|_| Error::parse(line, format!("bad number `{}` in column {}", f(j), j + 1)))
        };
        let ts = f(0)
            .parse::<i64>()
            .map_err(|_| Error::parse(line, "bad timestamp"))?;
        let point_id = match f(1) {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| Error::parse(line, "bad point id"))?),
        };
        let location = if f(2).is_empty() {
            None
        } else {
            Some(DVector::from_vec((0..room_dim).map(|k| num(2 + k)).collect::<Result<_>>()?))
        };
        let base = 2 + room_dim;
        let values: Vec<f64> = (0..3 * m).map(|k| num(base + k)).collect::<Result<_>>()?;
        let mask: Vec<bool> = (0..m)
            .map(|k| match f(base + 3 * m + k) {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(Error::parse(line, format!("bad mask bit `{other}`"))),
            })
            .collect::<Result<_>>()?;
        let doa = ConcatenatedDoa::new(values, mask, ts).map_err(|e| Error::parse(line, e.to_string()))?;
        rows.push(LabeledObservation {
            doa,
            point_id,
            location,
        });
    }
    Ok((m, room_dim, rows))
}

pub fn write_calibration_csv<W: Write>(out: W, cal: &CalibrationSet) -> Result<()> {
    let mut rows = Vec::with_capacity(cal.len());
    for seg in cal.segments() {
        for l in seg.columns() {
            rows.push(LabeledObservation {
                doa: cal.column(l),
                point_id: Some(seg.point_id),
                location: Some(seg.location.clone()),
            });
        }
    }
    write_observations_csv(out, cal.array_count(), cal.room_dim(), &rows)
}

/// Builds a calibration set from labeled rows. Consecutive rows with the
/// same point id form one segment. Rows without a location are accepted
/// only when `require_locations` is false, in which case the location is
/// zero (usable for PCA, which needs no locations).
pub fn calibration_from_rows(
    array_count: usize,
    room_dim: usize,
    rows: &[LabeledObservation],
    require_locations: bool,
) -> Result<CalibrationSet> {
    let mut groups: Vec<(u32, DVector<f64>, Vec<ConcatenatedDoa>)> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let id = row
            .point_id
            .ok_or_else(|| Error::parse(i + 2, "calibration row has no point id"))?;
        let loc = match (&row.location, require_locations) {
            (Some(r), _) => r.clone(),
            (None, false) => DVector::zeros(room_dim),
            (None, true) => return Err(Error::parse(i + 2, "calibration row has no location")),
        };
        match groups.last_mut() {
            Some((gid, gloc, obs)) if *gid == id => {
                if *gloc != loc {
                    return Err(Error::parse(i + 2, format!("point {id} changes location")));
                }
                obs.push(row.doa.clone());
            }
            _ => {
                if groups.iter().any(|(gid, _, _)| *gid == id) {
                    return Err(Error::parse(i + 2, format!("point {id} rows are not contiguous")));
                }
                groups.push((id, loc, vec![row.doa.clone()]));
            }
        }
    }
    CalibrationSet::from_points(array_count, room_dim, groups)
}

pub fn read_calibration_csv<R: std::io::Read>(input: R) -> Result<CalibrationSet> {
    let (m, n, rows) = read_observations_csv(input)?;
    calibration_from_rows(m, n, &rows, true)
}
