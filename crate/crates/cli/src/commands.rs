use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use doafuse_core::center::{query, query_all, replay_capture, serve_wire, write_rows_csv, JoinConfig, ServerConfig, Storage};
use doafuse_core::eval::{align_by_timestamp, corner_estimates, pca_scale, position_metrics, side_length_ratio};
use doafuse_core::frontend::{read_wav, ArrayPipeline, FrontendConfig};
use doafuse_core::fusion::{
    fit_affine, fit_pca, map_affine, map_from_reference, pca_to_room, project_pca, read_affine,
    read_calibration_csv, read_pca, write_affine, write_calibration_csv, write_pca, AffineMap, CalibrationSet,
    ConcatenatedDoa, MissingArrayMapper, OffsetPolicy, PcaModel, ReferencePair,
};
use doafuse_core::sim::{
    synthesize_calibration, synthesize_doa_stream, wire_capture, write_ground_truth_csv, read_ground_truth_csv,
    Scenario,
};
use doafuse_core::{build_halfsphere_grid, ActiveSet, ArrayGeometry, Error};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{Method, RunConfig};
use crate::error::{at, CliError};
use crate::estimates::{read_estimates, write_estimates, EstimateRow, Units};
use crate::svg;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(at(path))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(at(path))
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

/// Writes `report` as TOML to `path`, or to stdout.
fn emit_report<T: Serialize>(report: &T, path: Option<&PathBuf>) -> Result<(), CliError> {
    let text = toml::to_string(report).map_err(|e| CliError::Data(format!("report: {e}")))?;
    match path {
        Some(p) => std::fs::write(p, text).map_err(at(p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let truth = cfg.require(&cfg.truth, "truth")?;
    let capture = cfg.require(&cfg.capture, "capture")?;
    let scn = cfg.scenario()?;
    let traj = cfg.trajectory();
    scn.trajectory(traj).map_err(|e| CliError::Config(e.to_string()))?;
    let period = cfg.period_ms()?;
    let room_dim = cfg.room_dim()?;
    let dwell = cfg.dwell_s()?;

    let records = synthesize_doa_stream(&scn, traj, period)?;
    let mut w = create(truth)?;
    write_ground_truth_csv(&mut w, &records)?;
    w.flush().map_err(at(truth))?;

    let wire = wire_capture(&records);
    let mut w = create(capture)?;
    for r in &wire {
        writeln!(w, "{r}").map_err(at(capture))?;
    }
    w.flush().map_err(at(capture))?;

    if let Some(p) = &cfg.calibration {
        let cal = synthesize_calibration(&scn, dwell, period, room_dim)?;
        let mut w = create(p)?;
        write_calibration_csv(&mut w, &cal)?;
        w.flush().map_err(at(p))?;
    }
    if let Some(p) = &cfg.scenario_out {
        std::fs::write(p, scn.to_toml()).map_err(at(p))?;
    }
    println!("records {} wire_lines {} arrays {}", records.len(), wire.len(), scn.array_count());
    Ok(())
}

fn load_calibration(cfg: &RunConfig) -> Result<CalibrationSet, CliError> {
    let path = cfg.require(&cfg.calibration, "calibration")?;
    let cal = read_calibration_csv(open(path)?)?;
    Ok(cal.subset(&cfg.point_ids())?)
}

#[derive(Serialize)]
struct CalibrationReport {
    points: Vec<u32>,
    arrays: usize,
    room_dim: usize,
    columns: usize,
    affine: AffineSection,
    pca: PcaSection,
}

#[derive(Serialize)]
struct AffineSection {
    distinct_points: usize,
    location_rank: usize,
    doa_rank: usize,
    doa_dim: usize,
    degenerate: bool,
    rms_residual: f64,
    offset_gradient: f64,
    coefficient_gradient: f64,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct PcaSection {
    components: usize,
    rank: usize,
    energy_share: f64,
    /// Normalized by the largest value.
    spectrum: Vec<f64>,
    singular_values: Vec<f64>,
}

pub fn calibrate(cfg: &RunConfig) -> Result<(), CliError> {
    let j = cfg.components()?;
    let cal = load_calibration(cfg)?;
    let fit = fit_affine(&cal, ActiveSet::all(cal.array_count()))?;
    let warnings = fit.report.warnings();
    for w in &warnings {
        warn(w);
    }
    let pca = fit_pca(&cal, j)?;
    if let Some(p) = &cfg.affine {
        let mut w = create(p)?;
        write_affine(&fit.map, &mut w)?;
        w.flush().map_err(at(p))?;
    }
    if let Some(p) = &cfg.pca {
        let mut w = create(p)?;
        write_pca(&pca, &mut w)?;
        w.flush().map_err(at(p))?;
    }
    let top = pca.singular_values.first().copied().unwrap_or(0.0);
    let r = &fit.report;
    let report = CalibrationReport {
        points: cal.segments().iter().map(|s| s.point_id).collect(),
        arrays: cal.array_count(),
        room_dim: cal.room_dim(),
        columns: cal.len(),
        affine: AffineSection {
            distinct_points: r.distinct_points,
            location_rank: r.location_rank,
            doa_rank: r.doa_rank,
            doa_dim: r.doa_dim,
            degenerate: r.is_degenerate(),
            rms_residual: r.rms_residual,
            offset_gradient: r.offset_gradient,
            coefficient_gradient: r.coefficient_gradient,
            warnings,
        },
        pca: PcaSection {
            components: j,
            rank: pca.rank(),
            energy_share: pca.energy_share(j),
            spectrum: pca
                .singular_values
                .iter()
                .map(|s| if top > 0.0 { s / top } else { 0.0 })
                .collect(),
            singular_values: pca.singular_values.clone(),
        },
    };
    emit_report(&report, cfg.report.as_ref())
}

/// A fitted model ready to map joined rows.
enum Mapper {
    Affine(AffineMap),
    Missing(MissingArrayMapper),
    Pca(PcaModel),
    PcaToRoom(AffineMap, PcaModel, ReferencePair),
    Reference(AffineMap, ReferencePair),
}

impl Mapper {
    fn units(&self) -> Units {
        match self {
            Mapper::Pca(_) => Units::Pca,
            _ => Units::Room,
        }
    }

    fn dim(&self) -> usize {
        match self {
            Mapper::Affine(m) | Mapper::Reference(m, _) | Mapper::PcaToRoom(m, _, _) => m.room_dim(),
            Mapper::Missing(m) => m.calibration().room_dim(),
            Mapper::Pca(p) => p.components(),
        }
    }

    fn apply(&self, d: &ConcatenatedDoa) -> doafuse_core::Result<DVector<f64>> {
        match self {
            Mapper::Affine(m) => map_affine(m, d),
            Mapper::Missing(m) => m.map(d),
            Mapper::Pca(p) => Ok(project_pca(p, d)?.coeffs),
            Mapper::PcaToRoom(m, p, r) => pca_to_room(m, p, r, &project_pca(p, d)?.coeffs),
            Mapper::Reference(m, r) => map_from_reference(m, r, d),
        }
    }
}

fn read_affine_file(p: &Path) -> Result<AffineMap, CliError> {
    read_affine(open(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn read_pca_file(p: &Path) -> Result<PcaModel, CliError> {
    read_pca(open(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn build_mapper(cfg: &RunConfig, method: Method) -> Result<(Mapper, usize), CliError> {
    let affine = cfg.affine.as_deref().map(read_affine_file).transpose()?;
    let pca = cfg.pca.as_deref().map(read_pca_file).transpose()?;
    let needs_cal = matches!(method, Method::AffineMissing | Method::PcaToRoom | Method::Reference);
    let cal = if needs_cal { Some(load_calibration(cfg)?) } else { None };

    let mut counts = Vec::new();
    if let Some(m) = &affine {
        counts.push(("affine model", m.array_count));
    }
    if let Some(p) = &pca {
        if p.dim() % 3 != 0 {
            return Err(CliError::Data(format!("PCA model has {} rows, not a multiple of 3", p.dim())));
        }
        counts.push(("PCA model", p.dim() / 3));
    }
    if let Some(c) = &cal {
        counts.push(("calibration", c.array_count()));
    }
    let arrays = counts[0].1;
    if let Some((name, n)) = counts.iter().find(|c| c.1 != arrays) {
        return Err(CliError::Data(format!(
            "{name} covers {n} arrays but {} covers {arrays}",
            counts[0].0
        )));
    }
    let reference = |cal: &CalibrationSet| -> Result<ReferencePair, CliError> {
        let id = *cfg.require(&cfg.reference_point, "reference_point")?;
        Ok(ReferencePair::from_calibration(cal, id)?)
    };
    let mapper = match method {
        Method::Affine => Mapper::Affine(affine.expect("validated")),
        Method::AffineMissing => {
            Mapper::Missing(MissingArrayMapper::new(Arc::new(cal.expect("loaded")), OffsetPolicy::Refit)?)
        }
        Method::Pca => Mapper::Pca(pca.expect("validated")),
        Method::PcaToRoom => {
            let p = pca.expect("validated");
            let r = reference(cal.as_ref().expect("loaded"))?.with_pca(&p)?;
            Mapper::PcaToRoom(affine.expect("validated"), p, r)
        }
        Method::Reference => {
            let r = reference(cal.as_ref().expect("loaded"))?;
            Mapper::Reference(affine.expect("validated"), r)
        }
    };
    Ok((mapper, arrays))
}

fn join_config(cfg: &RunConfig, arrays: usize) -> Result<JoinConfig, CliError> {
    let jc = JoinConfig {
        bin_ms: cfg.bin_ms()?,
        array_count: arrays,
        offsets_ms: cfg.offsets_ms.clone().unwrap_or_default(),
    };
    if jc.offsets_ms.len() > arrays {
        return Err(CliError::Config(format!("{} clock offsets for {arrays} arrays", jc.offsets_ms.len())));
    }
    Ok(jc)
}

pub fn map(cfg: &RunConfig) -> Result<(), CliError> {
    let method = cfg.validate_map()?;
    let capture = cfg.require(&cfg.capture, "capture")?;
    let out = cfg.require(&cfg.out, "out")?;
    let (mapper, arrays) = build_mapper(cfg, method)?;
    let jc = join_config(cfg, arrays)?;

    let mut store = Storage::in_memory();
    let stats = store.ingest_reader(open(capture)?)?;
    if stats.rejected > 0 {
        warn(format!("{} malformed capture lines skipped", stats.rejected));
    }
    let rows = query_all(&store, &jc)?;

    let mut est = Vec::with_capacity(rows.len());
    let (mut uncovered, mut partial) = (0usize, 0usize);
    for row in &rows {
        let active = row.doa.active_set().len();
        if active < arrays {
            partial += 1;
        }
        match mapper.apply(&row.doa) {
            Ok(coords) => est.push(EstimateRow {
                bin_start_ms: row.bin_start_ms,
                coords,
                active_arrays: active,
                method: method.name().to_string(),
            }),
            Err(Error::ActiveSetMismatch { .. }) => uncovered += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if uncovered > 0 {
        warn(format!(
            "{uncovered} of {} bins lack arrays the {method} map needs and were not mapped",
            rows.len()
        ));
    }
    if partial > 0 && matches!(method, Method::Pca | Method::PcaToRoom) {
        warn(format!("{partial} bins projected with missing arrays zero-filled"));
    }

    let mut w = create(out)?;
    write_estimates(&mut w, mapper.units(), mapper.dim(), &est)?;
    w.flush().map_err(at(out))?;

    if let Some(p) = &cfg.svg {
        // The first PCA coefficient follows the mean DOA; with three or more
        // components the room plane shows in the second and third.
        let (cx, cy) = if mapper.units() == Units::Pca && mapper.dim() >= 3 { (1, 2) } else { (0, 1) };
        let points: Vec<(f64, f64)> = est
            .iter()
            .map(|r| (r.coords[cx], r.coords.get(cy).copied().unwrap_or(0.0)))
            .collect();
        let reference = match (&cfg.truth, mapper.units()) {
            (Some(t), Units::Room) => read_ground_truth_csv(open(t)?)?
                .iter()
                .map(|r| (r.true_position.x, r.true_position.y))
                .collect(),
            _ => Vec::new(),
        };
        let title = format!("{method}: {} bins", est.len());
        std::fs::write(p, svg::scatter(&title, &points, &reference)).map_err(at(p))?;
    }
    println!("bins {} mapped {}", rows.len(), est.len());
    Ok(())
}

/// Distinct trajectory waypoints (a closed path repeats its first point).
fn corners(scn: &Scenario, name: &str, dim: usize) -> Result<Vec<DVector<f64>>, CliError> {
    let traj = scn.trajectory(name).map_err(|e| CliError::Config(e.to_string()))?;
    let mut pts: Vec<DVector<f64>> = Vec::new();
    for w in &traj.waypoints {
        let p = DVector::from_iterator(dim, w.iter().copied().take(dim));
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    Ok(pts)
}

#[derive(Serialize)]
struct EvaluationReport {
    samples: usize,
    units: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    corners: Vec<CornerReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shape: Option<ShapeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<ScaleReport>,
}

#[derive(Serialize)]
struct CornerReport {
    index: usize,
    truth: Vec<f64>,
    estimate: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ShapeReport {
    side_ratio: f64,
    true_side_ratio: f64,
    relative_error: f64,
}

#[derive(Serialize)]
struct ScaleReport {
    /// Meters per PCA unit from the corner perimeters.
    perimeter_m_per_unit: f64,
    /// Mean singular value of the least-squares map from PCA units to meters.
    fit_m_per_unit: f64,
    fit_rms_residual_m: f64,
    relative_difference: f64,
}

/// Least-squares `C` with `r - r_mean = C (a - a_mean)`, its mean singular
/// value and the rms residual.
pub fn fit_linear_scale(a: &[DVector<f64>], r: &[DVector<f64>]) -> Result<(f64, f64), CliError> {
    let n = a.len();
    if n < 2 {
        return Err(CliError::Data("too few samples for a scale fit".into()));
    }
    let am = DMatrix::from_columns(a);
    let rm = DMatrix::from_columns(r);
    let a_mean = am.column_mean();
    let r_mean = rm.column_mean();
    let ac = DMatrix::from_fn(am.nrows(), n, |i, j| am[(i, j)] - a_mean[i]);
    let rc = DMatrix::from_fn(rm.nrows(), n, |i, j| rm[(i, j)] - r_mean[i]);
    let gram = &ac * ac.transpose();
    let eps = 1e-12 * gram.norm();
    let inv = gram
        .pseudo_inverse(eps)
        .map_err(|e| CliError::Data(format!("scale fit: {e}")))?;
    let c = &rc * ac.transpose() * inv;
    let resid = (&rc - &c * &ac).norm() / (n as f64).sqrt();
    let s = c.singular_values();
    Ok((s.mean(), resid))
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let est_path = cfg.require(&cfg.estimates, "estimates")?;
    let truth_path = cfg.require(&cfg.truth, "truth")?;
    let scn = cfg.scenario()?;
    let radius = cfg.corner_radius.unwrap_or(0.05);
    if !(radius > 0.0) {
        return Err(CliError::Config("corner_radius must be positive".into()));
    }
    let (units, rows) = read_estimates(open(est_path)?)?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no estimates", est_path.display())));
    }
    let truth = read_ground_truth_csv(open(truth_path)?)?;
    let est_dim = rows[0].coords.len();
    let room_dim = match units {
        Units::Room => est_dim,
        Units::Pca => cfg.room_dim()?,
    };
    let est_pairs: Vec<(i64, DVector<f64>)> = rows.iter().map(|r| (r.bin_start_ms, r.coords.clone())).collect();
    let truth_pairs: Vec<(i64, DVector<f64>)> = truth
        .iter()
        .map(|t| (t.timestamp_ms, DVector::from_iterator(room_dim, t.true_position.iter().copied().take(room_dim))))
        .collect();
    let (e, t) = align_by_timestamp(&est_pairs, &truth_pairs)
        .map_err(|err| CliError::Data(format!("timestamp misalignment: {err}")))?;

    let true_corners = corners(&scn, cfg.trajectory(), room_dim)?;
    let corner_est = corner_estimates(&e, &t, &true_corners, radius).ok();
    let mut report = EvaluationReport {
        samples: e.len(),
        units: match units {
            Units::Room => "m",
            Units::Pca => "pca",
        },
        rmse: None,
        bias: None,
        corners: Vec::new(),
        shape: None,
        scale: None,
    };
    if corner_est.is_none() {
        warn(format!("no estimates within {radius} m of every trajectory corner; corner metrics omitted"));
    }
    if let Some(ce) = &corner_est {
        report.corners = ce
            .iter()
            .zip(&true_corners)
            .enumerate()
            .map(|(k, (c, tc))| CornerReport {
                index: k + 1,
                truth: tc.iter().copied().collect(),
                estimate: c.iter().copied().collect(),
                bias: (units == Units::Room).then(|| (c - tc).iter().copied().collect()),
            })
            .collect();
    }
    match units {
        Units::Room => {
            let m = position_metrics(&e, &t)?;
            report.rmse = Some(m.rmse);
            report.bias = Some(m.bias.iter().copied().collect());
            if let (Some(ce), 4) = (&corner_est, true_corners.len()) {
                let ratio = side_length_ratio(ce)?;
                let truth_ratio = side_length_ratio(&true_corners)?;
                report.shape = Some(ShapeReport {
                    side_ratio: ratio,
                    true_side_ratio: truth_ratio,
                    relative_error: (ratio - truth_ratio).abs() / truth_ratio,
                });
            }
        }
        Units::Pca => {
            let (fit, resid) = fit_linear_scale(&e, &t)?;
            if let (Some(ce), 4) = (&corner_est, true_corners.len()) {
                let perim = pca_scale(ce, &true_corners)?;
                report.scale = Some(ScaleReport {
                    perimeter_m_per_unit: perim,
                    fit_m_per_unit: fit,
                    fit_rms_residual_m: resid,
                    relative_difference: (perim - fit).abs() / fit,
                });
            }
        }
    }
    emit_report(&report, cfg.report.as_ref())
}

/// Runs the ingest endpoint until `duration` elapses, or until stdin closes
/// when no duration is given.
pub fn serve(
    storage_dir: &Path,
    listen: &str,
    duration: Option<Duration>,
    export: Option<(&Path, usize, i64)>,
    channel_capacity: usize,
) -> Result<(), CliError> {
    if channel_capacity == 0 {
        return Err(CliError::Config("channel capacity must be positive".into()));
    }
    let storage = Storage::open(storage_dir)?;
    let server = serve_wire(listen, storage, ServerConfig { channel_capacity })
        .map_err(|e| CliError::Data(format!("{listen}: {e}")))?;
    println!("listening on {}", server.local_addr());
    std::io::stdout().flush()?;
    match duration {
        Some(d) => std::thread::sleep(d),
        None => {
            let mut sink = String::new();
            let stdin = std::io::stdin();
            while stdin.lock().read_line(&mut sink)? > 0 {
                sink.clear();
            }
        }
    }
    let errors = server.errors();
    let store = server.shutdown()?;
    for e in errors {
        warn(e);
    }
    let s = store.stats();
    println!(
        "received {} ingested {} rejected {} duplicates {}",
        s.received, s.ingested, s.rejected, s.duplicates
    );
    if let Some((path, arrays, bin_ms)) = export {
        let mut jc = JoinConfig::new(arrays);
        jc.bin_ms = bin_ms;
        let rows = query_all(&store, &jc)?;
        let mut w = create(path)?;
        write_rows_csv(&mut w, &jc, 2, &rows)?;
        w.flush().map_err(at(path))?;
    }
    Ok(())
}

pub fn replay(capture: &Path, connect: &str) -> Result<(), CliError> {
    let n = replay_capture(connect, open(capture)?).map_err(|e| CliError::Data(format!("{connect}: {e}")))?;
    println!("sent {n}");
    Ok(())
}

pub fn query_store(storage_dir: &Path, out: &Path, arrays: usize, bin_ms: i64, range: (i64, i64)) -> Result<(), CliError> {
    if !storage_dir.is_dir() {
        return Err(CliError::Data(format!("{}: no such storage directory", storage_dir.display())));
    }
    let store = Storage::open(storage_dir)?;
    let mut jc = JoinConfig::new(arrays);
    jc.bin_ms = bin_ms;
    let rows = query(&store, &jc, range.0, range.1).map_err(|e| match e {
        Error::InvalidArgument(m) => CliError::Config(m),
        e => e.into(),
    })?;
    let mut w = create(out)?;
    write_rows_csv(&mut w, &jc, 2, &rows)?;
    w.flush().map_err(at(out))?;
    println!("bins {}", rows.len());
    Ok(())
}

pub struct DoaArgs<'a> {
    pub wav: &'a Path,
    pub out: &'a Path,
    pub array_id: u16,
    pub mics: usize,
    pub radius: f64,
    pub speed_of_sound: f64,
    pub grid_level: u32,
    pub start_ms: i64,
}

pub fn doa(a: DoaArgs<'_>) -> Result<(), CliError> {
    if a.mics < 2 || !(a.radius > 0.0) || !(a.speed_of_sound > 0.0) {
        return Err(CliError::Config("need at least 2 mics and a positive radius and speed of sound".into()));
    }
    let rec = read_wav(a.wav).map_err(|e| CliError::Data(format!("{}: {e}", a.wav.display())))?;
    if rec.channels.len() != a.mics {
        return Err(CliError::Data(format!(
            "{}: {} channels, array has {} microphones",
            a.wav.display(),
            rec.channels.len(),
            a.mics
        )));
    }
    let grid = Arc::new(build_halfsphere_grid(a.grid_level).map_err(|e| CliError::Config(e.to_string()))?);
    let geom = ArrayGeometry::circular(a.mics, a.radius, a.speed_of_sound, rec.sample_rate);
    let mut pipeline = ArrayPipeline::new(a.array_id, geom, grid, FrontendConfig::default())?;
    let records = pipeline.run(&rec.channels, rec.sample_rate, a.start_ms)?;
    let mut w = create(a.out)?;
    for r in &records {
        writeln!(w, "{r}").map_err(at(a.out))?;
    }
    w.flush().map_err(at(a.out))?;
    println!("records {}", records.len());
    Ok(())
}

pub fn export_grid(level: u32, out: &Path) -> Result<(), CliError> {
    let grid = build_halfsphere_grid(level).map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = create(out)?;
    grid.write_csv(&mut w).map_err(at(out))?;
    w.flush().map_err(at(out))?;
    println!("points {}", grid.len());
    Ok(())
}
