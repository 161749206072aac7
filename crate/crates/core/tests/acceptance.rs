//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use common::{brute_force_join, jacobi_svd, random_concat, random_doa, rng, triangulate, ExactAffine};
use doafuse_core::center::{
    join_bins, log_file_name, query_all, replay_capture, serve_wire, write_rows_csv, JoinConfig, ServerConfig,
    Storage, WireRecord,
};
use doafuse_core::eval::{corner_estimates, cyclic_order_matches, side_length_ratio};
use doafuse_core::frontend::{SrpPhat, Stft, MultichannelFrame};
use doafuse_core::fusion::{
    fit_affine, fit_pca, map_affine, map_from_reference, pca_to_room, project_pca, ActiveSet, CalibrationSet,
    ConcatenatedDoa, MissingArrayMapper, OffsetPolicy, ReferencePair,
};
use doafuse_core::sim::{
    default_meeting_room, synthesize_audio, synthesize_calibration, synthesize_doa_stream, white_noise,
    wire_capture, ArrayPose, DropoutPolicy, GroundTruthRecord, Scenario, Trajectory, TABLE_POINTS,
};
use doafuse_core::{build_halfsphere_grid, ArrayGeometry};
use nalgebra::{DVector, Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;

// Criterion 1
const GRID_POINTS: usize = 1321;
const GRID_MAX_NN_DEG: f64 = 4.5;
const GRID_MEDIAN_NN_DEG: f64 = 3.0;
const GRID_MEDIAN_TOL_DEG: f64 = 0.5;
const GRID_TIME: Duration = Duration::from_secs(1);

// Criterion 2
const SRP_CASES: usize = 50;
const SRP_SNR_DB: f64 = 20.0;
const SRP_NOISY_DEG: f64 = 6.0;
const SRP_NOISY_SHARE: f64 = 0.95;
const SRP_MIN_DZ: f64 = 0.2;
const SRP_TIME: Duration = Duration::from_secs(30);

// Criterion 3
const EXACT_ERR_M: f64 = 1e-8;
const GRADIENT_REL: f64 = 1e-6;
const EXACT_TIME: Duration = Duration::from_secs(1);

// Criterion 4
const LINE_RESIDUAL_M: f64 = 1e-8;

// Criterion 5
const NOISE_DEG: f64 = 2.0;
const DWELL_S: f64 = 10.0;
const PERIOD_MS: i64 = 64;
const RMSE_FACTOR: f64 = 2.0;
const RATIO_TOL: f64 = 0.10;
const CORNER_RADIUS_M: f64 = 0.05;
const LOCALIZATION_TIME: Duration = Duration::from_secs(60);

// Criterion 6
const PCA_IDENTITY_TOL: f64 = 1e-8;
const SVD_AGREEMENT_REL: f64 = 1e-9;
/// "Most of the energy": share of the summed singular-value amplitudes.
const LEADING_PAIR_SHARE: f64 = 0.5;

// Criterion 7
const DROPOUT_PROBABILITY: f64 = 0.5;
const DROPOUT_RMSE_GROWTH: f64 = 0.5;

// Criterion 8
const CAPTURE_MS: i64 = 600_000;
const CAPTURE_JITTER_MS: i64 = 9;
const INGEST_TIME: Duration = Duration::from_secs(30);

// Criterion 9
const SUITE_TIME: Duration = Duration::from_secs(300);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn deg(x: f64) -> f64 {
    x.to_degrees()
}

fn c1_grid() -> Outcome {
    let t = Instant::now();
    let g = build_halfsphere_grid(4).unwrap();
    let elapsed = t.elapsed();
    // oracle: exhaustive pairwise angles
    let pts: Vec<Vector3<f64>> = g.points().iter().map(|p| *p.as_vector()).collect();
    let mut nn: Vec<f64> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            pts.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| p.cross(q).norm().atan2(p.dot(q)))
                .fold(f64::INFINITY, f64::min)
        })
        .map(deg)
        .collect();
    nn.sort_by(f64::total_cmp);
    let median = nn[nn.len() / 2];
    let max = nn[nn.len() - 1];
    let count_ok = g.len() == GRID_POINTS;
    let max_ok = max <= GRID_MAX_NN_DEG;
    let median_ok = (median - GRID_MEDIAN_NN_DEG).abs() <= GRID_MEDIAN_TOL_DEG;
    outcome(
        count_ok && max_ok && median_ok && elapsed < GRID_TIME,
        format!(
            "points {} (want {GRID_POINTS}), max NN {max:.3} deg (want <= {GRID_MAX_NN_DEG}), median NN {median:.3} deg (want {GRID_MEDIAN_NN_DEG} +/- {GRID_MEDIAN_TOL_DEG}), build {elapsed:?}",
            g.len()
        ),
    )
}

fn c2_srp() -> Outcome {
    let t = Instant::now();
    let grid = Arc::new(build_halfsphere_grid(4).unwrap());
    let pts: Vec<Vector3<f64>> = grid.points().iter().map(|p| *p.as_vector()).collect();
    // one grid step: the largest nearest-neighbor angle of this grid
    let step = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            pts.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| p.cross(q).norm().atan2(p.dot(q)))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let geom = ArrayGeometry::default();
    let srp = SrpPhat::new(Arc::clone(&grid), geom.clone());
    let stft = Stft::new(512).unwrap();
    let pose = ArrayPose::new(Vector3::zeros(), Matrix3::identity()).unwrap();
    let mut r = rng(2024);
    let (mut noisy_ok, mut clean_ok) = (0, 0);
    let (mut worst_noisy, mut worst_clean) = (0.0f64, 0.0f64);
    for case in 0..SRP_CASES {
        let d = loop {
            let d = random_doa(&mut r);
            if d.dz() >= SRP_MIN_DZ {
                break d;
            }
        };
        let source = d.as_vector() * 2.0;
        let signal = white_noise(4096, &mut r);
        for snr in [Some(SRP_SNR_DB), None] {
            let ch = synthesize_audio(&geom, &pose, &signal, &source, snr, &mut r).unwrap();
            let frame = MultichannelFrame {
                samples: ch.iter().map(|c| c[1800..2312].to_vec()).collect(),
                frame_index: case as u64,
                sample_rate: geom.sample_rate,
            };
            let map = srp.power(&stft.process(&frame).unwrap()).unwrap();
            let err = grid.points()[map.argmax()].angle_to(&d);
            if snr.is_some() {
                worst_noisy = worst_noisy.max(err);
                noisy_ok += usize::from(deg(err) <= SRP_NOISY_DEG);
            } else {
                worst_clean = worst_clean.max(err);
                clean_ok += usize::from(err <= step);
            }
        }
    }
    let elapsed = t.elapsed();
    let share = noisy_ok as f64 / SRP_CASES as f64;
    outcome(
        share >= SRP_NOISY_SHARE && clean_ok == SRP_CASES && elapsed < SRP_TIME,
        format!(
            "{SRP_SNR_DB} dB: {noisy_ok}/{SRP_CASES} within {SRP_NOISY_DEG} deg (worst {:.2}); clean: {clean_ok}/{SRP_CASES} within one grid step {:.3} deg (worst {:.2}); {elapsed:?}",
            deg(worst_noisy),
            deg(step),
            deg(worst_clean)
        ),
    )
}

fn c3_exact_affine() -> Outcome {
    let t = Instant::now();
    let (m, n, k, per_point) = (5, 3, 4, 100);
    let mut r = rng(33);
    let truth = ExactAffine::random(&mut r, n, m);

    // K = 4 calibration points, 100 identical observations each
    let bases: Vec<ConcatenatedDoa> = (0..k).map(|_| random_concat(&mut r, m, 0)).collect();
    let cal_k = CalibrationSet::from_points(
        m,
        n,
        bases.iter().enumerate().map(|(i, b)| {
            let loc = truth.map(&b.as_dvector());
            (i as u32 + 1, loc, vec![b.clone(); per_point])
        }),
    )
    .unwrap();
    let fit_k = fit_affine(&cal_k, ActiveSet::all(m)).unwrap();
    // held-out in-span points: affine combinations of the K observations
    let mut err_k = 0.0f64;
    for _ in 0..200 {
        let mut w: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..2.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let x = bases.iter().zip(&w).fold(DVector::zeros(3 * m), |acc, (b, wi)| acc + b.as_dvector() * *wi);
        let got = &fit_k.map.r0 + &fit_k.map.b * &x;
        err_k = err_k.max((got - truth.map(&x)).norm());
    }

    // L = 400 distinct observations spanning the whole DOA space
    let obs: Vec<ConcatenatedDoa> = (0..400).map(|i| random_concat(&mut r, m, i)).collect();
    let cal_l = truth.calibration(&obs);
    let fit_l = fit_affine(&cal_l, ActiveSet::all(m)).unwrap();
    let mut err_l = 0.0f64;
    for i in 0..200 {
        let d = random_concat(&mut r, m, i);
        err_l = err_l.max((map_affine(&fit_l.map, &d).unwrap() - truth.map(&d.as_dvector())).norm());
    }
    let elapsed = t.elapsed();
    let grad = [fit_k.report.offset_gradient, fit_k.report.coefficient_gradient, fit_l.report.offset_gradient, fit_l.report.coefficient_gradient]
        .into_iter()
        .fold(0.0, f64::max);
    outcome(
        err_k < EXACT_ERR_M && err_l < EXACT_ERR_M && grad < GRADIENT_REL && elapsed < EXACT_TIME,
        format!(
            "K={k} x {per_point} columns: max err {err_k:.2e} m; L=400 columns: max err {err_l:.2e} m; max relative gradient {grad:.2e}; {elapsed:?}"
        ),
    )
}

fn distance_to_line(x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let u = (b - a).normalize();
    let v = x - a;
    (&v - &u * u.dot(&v)).norm()
}

fn c4_degenerate() -> Outcome {
    let mut scn = default_meeting_room();
    scn.noise_deg = 0.0;
    scn.quantize = false;
    let cal = synthesize_calibration(&scn, 2.0, PERIOD_MS, 2).unwrap().subset(&[1, 3]).unwrap();
    let fit = fit_affine(&cal, ActiveSet::all(5)).unwrap();
    let a = &cal.segments()[0].location;
    let b = &cal.segments()[1].location;
    let stream = synthesize_doa_stream(&scn, "rectangle-1234", PERIOD_MS).unwrap();
    let mut r = rng(44);
    let worst = stream
        .iter()
        .map(|g| g.emitted.clone())
        .chain((0..200).map(|i| random_concat(&mut r, 5, i)))
        .map(|d| distance_to_line(&map_affine(&fit.map, &d).unwrap(), a, b))
        .fold(0.0, f64::max);
    let warned = fit.report.warnings().iter().any(|w| w.contains("collinear"));
    outcome(
        worst < LINE_RESIDUAL_M && warned,
        format!("max perpendicular residual {worst:.2e} m over {} observations; collinear warning {}", stream.len() + 200, if warned { "raised" } else { "missing" }),
    )
}

struct Setup {
    scn: Scenario,
    cal: CalibrationSet,
    stream: Vec<GroundTruthRecord>,
}

fn setup(dropout: DropoutPolicy) -> Setup {
    let mut scn = default_meeting_room();
    scn.noise_deg = NOISE_DEG;
    scn.quantize = true;
    scn.dropout = dropout;
    let cal = synthesize_calibration(&scn, DWELL_S, PERIOD_MS, 2).unwrap().subset(&TABLE_POINTS).unwrap();
    let stream = synthesize_doa_stream(&scn, "rectangle-1234", PERIOD_MS).unwrap();
    Setup { scn, cal, stream }
}

fn xy(v: &Vector3<f64>) -> DVector<f64> {
    DVector::from_vec(vec![v.x, v.y])
}

fn rmse(est: &[DVector<f64>], truth: &[DVector<f64>]) -> f64 {
    (est.iter().zip(truth).map(|(e, t)| (e - t).norm_squared()).sum::<f64>() / est.len() as f64).sqrt()
}

fn corners(s: &Setup) -> Vec<DVector<f64>> {
    (1..=4).map(|id| xy(&s.scn.point(id).unwrap().position)).collect()
}

fn c5_localization() -> Outcome {
    let t = Instant::now();
    let s = setup(DropoutPolicy::None);
    let fit = fit_affine(&s.cal, ActiveSet::all(5)).unwrap();
    let truth: Vec<DVector<f64>> = s.stream.iter().map(|g| xy(&g.true_position)).collect();
    let est: Vec<DVector<f64>> = s.stream.iter().map(|g| map_affine(&fit.map, &g.emitted).unwrap()).collect();
    let tri: Vec<DVector<f64>> = s
        .stream
        .iter()
        .map(|g| xy(&triangulate(&s.scn.poses, &g.emitted).expect("at least two arrays")))
        .collect();
    let affine_rmse = rmse(&est, &truth);
    let tri_rmse = rmse(&tri, &truth);
    let est_corners = corner_estimates(&est, &truth, &corners(&s), CORNER_RADIUS_M).unwrap();
    let ratio = side_length_ratio(&est_corners).unwrap();
    let target = 1.37 / 0.76;
    let ratio_err = (ratio / target - 1.0).abs();
    let elapsed = t.elapsed();
    outcome(
        affine_rmse <= RMSE_FACTOR * tri_rmse && ratio_err <= RATIO_TOL && elapsed < LOCALIZATION_TIME,
        format!(
            "affine RMSE {affine_rmse:.3} m vs triangulation {tri_rmse:.3} m (limit {RMSE_FACTOR}x); side ratio {ratio:.3} vs {target:.3} ({:.1}% off, limit {:.0}%); {elapsed:?}",
            100.0 * ratio_err,
            100.0 * RATIO_TOL
        ),
    )
}

fn c6_pca() -> Outcome {
    let s = setup(DropoutPolicy::None);
    let model = fit_pca(&s.cal, 2).unwrap();
    let (oracle_sv, _) = jacobi_svd(s.cal.doa_matrix());
    let agree = model
        .singular_values
        .iter()
        .zip(&oracle_sv)
        .all(|(a, b)| (a - b).abs() <= SVD_AGREEMENT_REL * oracle_sv[0]);
    // threshold: the oracle's own sigma3/sigma1 on this matrix
    let threshold = oracle_sv[2] / oracle_sv[0] * (1.0 + SVD_AGREEMENT_REL);
    let amp_total: f64 = oracle_sv.iter().sum();
    let leading = (model.singular_values[0] + model.singular_values[1]) / amp_total;
    let s31 = model.singular_values[2] / model.singular_values[0];

    let truth: Vec<DVector<f64>> = s.stream.iter().map(|g| xy(&g.true_position)).collect();
    let trace: Vec<DVector<f64>> = s.stream.iter().map(|g| project_pca(&model, &g.emitted).unwrap().coeffs).collect();
    let pca_corners = corner_estimates(&trace, &truth, &corners(&s), CORNER_RADIUS_M).unwrap();
    let order_ok = cyclic_order_matches(&pca_corners, &corners(&s));

    // rank-2 synthetic D = U_2 A, columns stacked from two observations
    let mut r = rng(66);
    let d1 = random_concat(&mut r, 5, 0);
    let d2 = random_concat(&mut r, 5, 0);
    let r1 = DVector::from_vec(vec![1.0, 1.5]);
    let r2 = DVector::from_vec(vec![2.5, 0.8]);
    let obs: Vec<ConcatenatedDoa> = (0..40).map(|i| if i % 2 == 0 { d1.clone() } else { d2.clone() }).collect();
    let locs: Vec<DVector<f64>> = (0..40).map(|i| if i % 2 == 0 { r1.clone() } else { r2.clone() }).collect();
    let syn = CalibrationSet::from_columns(2, &obs, &locs).unwrap();
    let syn_model = fit_pca(&syn, 2).unwrap();
    let syn_fit = fit_affine(&syn, ActiveSet::all(5)).unwrap();
    let reference = ReferencePair::new(d1.clone(), r1.clone()).with_pca(&syn_model).unwrap();
    let mut identity_err = 0.0f64;
    for w in [0.0, 0.3, 1.0, 1.7] {
        // columns of the span: (1 - w) d1 + w d2
        let x = d1.as_dvector() * (1.0 - w) + d2.as_dvector() * w;
        let a = syn_model.u.tr_mul(&x);
        let via_pca = pca_to_room(&syn_fit.map, &syn_model, &reference, &a).unwrap();
        let direct = &reference.r_ref + &syn_fit.map.b * (&x - d1.as_dvector());
        identity_err = identity_err.max((via_pca - direct).norm());
    }
    let a2 = project_pca(&syn_model, &d2).unwrap().coeffs;
    identity_err = identity_err.max(
        (pca_to_room(&syn_fit.map, &syn_model, &reference, &a2).unwrap()
            - map_from_reference(&syn_fit.map, &reference, &d2).unwrap())
        .norm(),
    );

    outcome(
        agree && s31 <= threshold && leading > LEADING_PAIR_SHARE && order_ok && identity_err < PCA_IDENTITY_TOL,
        format!(
            "normalized amplitudes {:?}; first two carry {leading:.3} of the amplitude (need > {LEADING_PAIR_SHARE}); sigma3/sigma1 {s31:.4} (oracle threshold {threshold:.4}; SVD agrees with oracle: {agree}); corner order preserved: {order_ok}; pca_to_room identity err {identity_err:.2e}",
            oracle_sv.iter().take(6).map(|v| (1000.0 * v / oracle_sv.iter().sum::<f64>()).round() / 1000.0).collect::<Vec<_>>()
        ),
    )
}

fn spread(est: &[DVector<f64>], truth: &[DVector<f64>]) -> f64 {
    // total variance of the error vectors
    let n = est.len() as f64;
    let errs: Vec<DVector<f64>> = est.iter().zip(truth).map(|(e, t)| e - t).collect();
    let mean = errs.iter().fold(DVector::zeros(errs[0].len()), |a, e| a + e) / n;
    errs.iter().map(|e| (e - &mean).norm_squared()).sum::<f64>() / n
}

fn c7_missing() -> Outcome {
    let clean = setup(DropoutPolicy::None);
    let lossy = setup(DropoutPolicy::OneOf { probability: DROPOUT_PROBABILITY });
    let cal = Arc::new(lossy.cal.clone());
    let mapper = MissingArrayMapper::new(Arc::clone(&cal), OffsetPolicy::Refit).unwrap();
    let full = fit_affine(&cal, ActiveSet::all(5)).unwrap();

    let truth: Vec<DVector<f64>> = lossy.stream.iter().map(|g| xy(&g.true_position)).collect();
    let mapped: Vec<Option<DVector<f64>>> = lossy.stream.iter().map(|g| mapper.map(&g.emitted).ok()).collect();
    let all_mapped = mapped.iter().all(Option::is_some);
    let est: Vec<DVector<f64>> = mapped.into_iter().flatten().collect();
    let base: Vec<DVector<f64>> = clean.stream.iter().map(|g| map_affine(&full.map, &g.emitted).unwrap()).collect();
    let base_truth: Vec<DVector<f64>> = clean.stream.iter().map(|g| xy(&g.true_position)).collect();
    let rmse_missing = rmse(&est, &truth);
    let rmse_full = rmse(&base, &base_truth);
    let growth = rmse_missing / rmse_full - 1.0;

    // zero-filled PCA, carried to meters through C = B U
    let model = fit_pca(&cal, 2).unwrap();
    let reference = ReferencePair::from_calibration(&cal, 1).unwrap().with_pca(&model).unwrap();
    let pca_est: Vec<DVector<f64>> = lossy
        .stream
        .iter()
        .map(|g| pca_to_room(&full.map, &model, &reference, &project_pca(&model, &g.emitted).unwrap().coeffs).unwrap())
        .collect();
    let ratio = spread(&pca_est, &truth) / spread(&est, &truth);
    let dropped = lossy.stream.iter().filter(|g| g.emitted.active_set().len() < 5).count();
    outcome(
        all_mapped && growth <= DROPOUT_RMSE_GROWTH && ratio > 1.0,
        format!(
            "{} of {} bins mapped ({dropped} with a dropped array); RMSE {rmse_missing:.3} m vs {rmse_full:.3} m without dropout (+{:.1}%, limit {:.0}%); zero-filled PCA / affine-missing error variance {ratio:.2}",
            est.len(),
            lossy.stream.len(),
            100.0 * growth,
            100.0 * DROPOUT_RMSE_GROWTH
        ),
    )
}

fn long_capture() -> Vec<WireRecord> {
    let mut scn = default_meeting_room();
    scn.dropout = DropoutPolicy::OneOf { probability: 0.1 };
    let rect: Vec<Vector3<f64>> = scn.trajectories[0].waypoints.clone();
    let mut loop_pts = vec![rect[0]];
    for _ in 0..15 {
        loop_pts.extend_from_slice(&rect[1..]);
    }
    scn.trajectories.push(Trajectory {
        name: "long".into(),
        waypoints: loop_pts,
        speed: 0.1,
    });
    let stream: Vec<GroundTruthRecord> = synthesize_doa_stream(&scn, "long", PERIOD_MS)
        .unwrap()
        .into_iter()
        .filter(|g| g.timestamp_ms < CAPTURE_MS)
        .collect();
    let mut recs = wire_capture(&stream);
    let mut r = rng(88);
    for w in &mut recs {
        w.timestamp_ms += r.random_range(0..=CAPTURE_JITTER_MS);
    }
    recs
}

fn rows_csv(rows: &[doafuse_core::center::JoinedRow], cfg: &JoinConfig) -> Vec<u8> {
    let mut out = Vec::new();
    write_rows_csv(&mut out, cfg, 2, rows).unwrap();
    out
}

fn c8_ingest() -> Outcome {
    let t = Instant::now();
    let recs = long_capture();
    let body: String = recs.iter().map(|r| format!("{r}\n")).collect();
    let cfg = JoinConfig::new(5);

    let batch_dir = tempfile::tempdir().unwrap();
    let mut batch = Storage::open(batch_dir.path()).unwrap();
    batch.ingest_reader(body.as_bytes()).unwrap();
    batch.flush().unwrap();

    let live_dir = tempfile::tempdir().unwrap();
    let server = serve_wire("127.0.0.1:0", Storage::open(live_dir.path()).unwrap(), ServerConfig::default()).unwrap();
    let sent = replay_capture(server.local_addr(), body.as_bytes()).unwrap();
    while server.stats().received < sent as u64 {
        thread::sleep(Duration::from_millis(5));
    }
    let live = server.shutdown().unwrap();
    let logs_equal = (0..5u16).all(|a| {
        fs::read(batch_dir.path().join(log_file_name(a))).unwrap() == fs::read(live_dir.path().join(log_file_name(a))).unwrap()
    });
    let batch_rows = query_all(&batch, &cfg).unwrap();
    let tables_equal = rows_csv(&batch_rows, &cfg) == rows_csv(&query_all(&live, &cfg).unwrap(), &cfg);

    let oracle = brute_force_join(&recs, &cfg);
    let join_exact = oracle.len() == batch_rows.len()
        && batch_rows.iter().zip(&oracle).all(|(row, (start, per))| {
            row.bin_start_ms == *start
                && per.iter().enumerate().all(|(m, e)| match (row.doa.subvector(m), e) {
                    (None, None) => true,
                    (Some(d), Some(e)) => d.to_array() == *e,
                    _ => false,
                })
        });

    let mut shuffled = recs.clone();
    shuffled.shuffle(&mut rng(89));
    let mut perm = Storage::in_memory();
    for r in &shuffled {
        perm.ingest_record(*r).unwrap();
    }
    let perm_equal = rows_csv(&query_all(&perm, &cfg).unwrap(), &cfg) == rows_csv(&batch_rows, &cfg)
        && rows_csv(&join_bins(&shuffled, &cfg, i64::MIN, i64::MAX).unwrap(), &cfg) == rows_csv(&batch_rows, &cfg);
    let no_conflicts = batch.stats().conflicting_duplicates == 0;
    let elapsed = t.elapsed();
    outcome(
        logs_equal && tables_equal && join_exact && perm_equal && no_conflicts && elapsed < INGEST_TIME,
        format!(
            "{} records, {} bins; replay logs identical: {logs_equal}, tables identical: {tables_equal}; join equals oracle exactly: {join_exact}; permutation invariant: {perm_equal}; {elapsed:?}",
            recs.len(),
            batch_rows.len()
        ),
    )
}

const PROPERTY_SUITES: &[&str] = &["sphere_grid", "frontend", "fusion", "sim", "center"];

fn c9_suites(total: Duration) -> Outcome {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests");
    let present: Vec<&str> = PROPERTY_SUITES
        .iter()
        .copied()
        .filter(|s| {
            fs::read_to_string(dir.join(format!("{s}.rs")))
                .map(|t| t.contains("proptest!"))
                .unwrap_or(false)
        })
        .collect();
    outcome(
        present.len() == PROPERTY_SUITES.len() && total < SUITE_TIME,
        format!(
            "property suites present: {} of {} ({}); acceptance run {total:?} (limit {SUITE_TIME:?} for the full suite)",
            present.len(),
            PROPERTY_SUITES.len(),
            present.join(", ")
        ),
    )
}

fn main() {
    // `cargo test` passes harness flags; only `--list` needs an answer.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let start = Instant::now();
    let checks: Vec<(&str, fn() -> Outcome)> = vec![
        ("grid fidelity", c1_grid),
        ("SRP-PHAT correctness", c2_srp),
        ("affine exact recovery", c3_exact_affine),
        ("degenerate calibration", c4_degenerate),
        ("simulation-relative localization", c5_localization),
        ("PCA planarity", c6_pca),
        ("missing-array robustness", c7_missing),
        ("ingestion correctness", c8_ingest),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let o = f();
        failed += usize::from(!o.pass);
        println!("criterion {} {} [{name}]: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let o = c9_suites(start.elapsed());
    failed += usize::from(!o.pass);
    println!("criterion 9 {} [property suites]: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
