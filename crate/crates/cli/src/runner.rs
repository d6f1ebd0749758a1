//! Trial execution and CSV output.
//!
//! Trials run on a bounded worker pool; each finished trial is appended to
//! `trials.partial.csv` by the calling thread, which is the only writer. When
//! every trial is done the rows are sorted into canonical order (sweep point,
//! trial, scheme as listed in the spec) and written to `trials.csv` and
//! `summary.csv`. Wall-clock times go to `timings.csv` so that the other two
//! files depend on the spec alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uav_relay::baselines::{center, es2d, es3d, free, BaselineResult};
use uav_relay::geometry::line_of_sight;
use uav_relay::lagrangian::solve;
use uav_relay::scenario::Scenario;
use uav_relay::{Point3, BPS_PER_MBPS};

use crate::spec::{ExperimentSpec, Scheme, SweepPoint};
use crate::{CliError, Result};

pub const TRIALS_CSV: &str = "trials.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const TIMINGS_CSV: &str = "timings.csv";
const TRIALS_PARTIAL: &str = "trials.partial.csv";
const TIMINGS_PARTIAL: &str = "timings.partial.csv";

/// One scheme on one trial. Optional columns are empty when they do not
/// apply or when the trial errored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub num_ues: Option<usize>,
    pub min_capacity_mbps: Option<f64>,
    /// Duality gap closed; only reported for the optimiser.
    pub converged: Option<bool>,
    pub used_fallback: Option<bool>,
    /// Every link is line-of-sight at the returned position.
    pub all_los: Option<bool>,
    pub outer_iterations: Option<usize>,
    pub inner_iterations: Option<usize>,
    pub x_m: Option<f64>,
    pub y_m: Option<f64>,
    pub z_m: Option<f64>,
    pub bs_power_w: Option<f64>,
    pub uav_power_w: Option<f64>,
    pub error: String,
}

impl TrialReport {
    pub fn is_error(&self) -> bool {
        !self.error.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub scheme: Scheme,
    pub wall_time_s: f64,
}

/// Per sweep point and scheme: arithmetic means over the successful trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub trials: usize,
    pub errors: usize,
    pub mean_min_capacity_mbps: Option<f64>,
    pub converged_fraction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads.
    pub parallel: usize,
    /// Keep trials already present in the output directory.
    pub resume: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trials: Vec<TrialReport>,
    pub summary: Vec<SummaryRow>,
    pub errored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Job {
    point: usize,
    trial: usize,
}

struct JobOutput {
    job: Job,
    rows: Vec<TrialReport>,
    timings: Vec<TimingRow>,
}

pub fn run(spec: &ExperimentSpec, opts: &RunOptions) -> Result<RunOutcome> {
    spec.validate()?;
    if opts.parallel == 0 {
        return Err(CliError::Spec("parallel must be at least 1".into()));
    }
    let out = &opts.out_dir;
    fs::create_dir_all(out).map_err(CliError::io(out))?;
    let points = spec.points();
    let all_jobs: Vec<Job> = (0..points.len())
        .flat_map(|point| (0..spec.trial_count()).map(move |trial| Job { point, trial }))
        .collect();

    let (mut rows, mut timings) = if opts.resume {
        load_previous(spec, &points, out)?
    } else {
        for f in [TRIALS_PARTIAL, TIMINGS_PARTIAL] {
            remove_if_exists(&out.join(f))?;
        }
        (BTreeMap::new(), BTreeMap::new())
    };
    let pending: Vec<Job> = all_jobs.iter().copied().filter(|j| !rows.contains_key(j)).collect();
    info!(
        "{} trials in total, {} already done, {} to run on {} threads",
        all_jobs.len(),
        all_jobs.len() - pending.len(),
        pending.len(),
        opts.parallel
    );

    // Rewrite the partial files from what was kept so they stay consistent.
    let mut trial_log = PartialWriter::create(&out.join(TRIALS_PARTIAL))?;
    let mut timing_log = PartialWriter::create(&out.join(TIMINGS_PARTIAL))?;
    for (r, t) in rows.values().zip(timings.values()) {
        trial_log.append(r)?;
        timing_log.append(t)?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallel)
        .build()
        .map_err(|e| CliError::Spec(format!("cannot start worker pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<JobOutput>();
    let mut write_error = None;
    thread::scope(|scope| {
        scope.spawn(|| {
            pool.install(|| {
                pending.par_iter().for_each_with(tx, |tx, &job| {
                    // The receiver only goes away once every job has reported.
                    let _ = tx.send(run_job(spec, points[job.point], job));
                });
            })
        });
        for done in rx {
            if write_error.is_none() {
                let res = trial_log
                    .append(&done.rows)
                    .and_then(|_| timing_log.append(&done.timings));
                write_error = res.err();
            }
            info!("sweep point {} trial {} done", done.job.point, done.job.trial);
            rows.insert(done.job, done.rows);
            timings.insert(done.job, done.timings);
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    drop((trial_log, timing_log));

    let trials: Vec<TrialReport> = rows.into_values().flatten().collect();
    let timings: Vec<TimingRow> = timings.into_values().flatten().collect();
    let summary = summarize(spec, &points, &trials);
    write_csv(&out.join(TRIALS_CSV), &trials)?;
    write_csv(&out.join(SUMMARY_CSV), &summary)?;
    write_csv(&out.join(TIMINGS_CSV), &timings)?;
    for f in [TRIALS_PARTIAL, TIMINGS_PARTIAL] {
        remove_if_exists(&out.join(f))?;
    }
    let errored = trials.iter().filter(|r| r.is_error()).count();
    if errored > 0 {
        warn!("{errored} scheme runs failed; see the error column of {TRIALS_CSV}");
    }
    Ok(RunOutcome {
        trials,
        summary,
        errored,
    })
}

fn run_job(spec: &ExperimentSpec, point: SweepPoint, job: Job) -> JobOutput {
    let scenario = spec.scenario(point, job.trial);
    let mut rows = Vec::with_capacity(spec.schemes.len());
    let mut timings = Vec::with_capacity(spec.schemes.len());
    for &scheme in &spec.schemes {
        let blank = TrialReport {
            sweep_variable: point.variable_name().to_string(),
            sweep_value: point.value,
            trial: job.trial,
            seed: scenario.as_ref().map_or(spec.seed(job.trial), |s| s.seed),
            scheme,
            num_ues: None,
            min_capacity_mbps: None,
            converged: None,
            used_fallback: None,
            all_los: None,
            outer_iterations: None,
            inner_iterations: None,
            x_m: None,
            y_m: None,
            z_m: None,
            bs_power_w: None,
            uav_power_w: None,
            error: String::new(),
        };
        let start = Instant::now();
        let row = match &scenario {
            Ok(s) => match run_scheme(spec, s, scheme, blank.clone()) {
                Ok(r) => r,
                Err(e) => TrialReport {
                    num_ues: Some(s.k()),
                    error: e.to_string(),
                    ..blank
                },
            },
            Err(e) => TrialReport {
                error: e.to_string(),
                ..blank
            },
        };
        timings.push(TimingRow {
            sweep_variable: row.sweep_variable.clone(),
            sweep_value: row.sweep_value,
            trial: row.trial,
            scheme,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        rows.push(row);
    }
    JobOutput { job, rows, timings }
}

fn run_scheme(spec: &ExperimentSpec, s: &Scenario, scheme: Scheme, row: TrialReport) -> Result<TrialReport> {
    let h = spec.fixed_altitude_m;
    let spacing = spec.es_spacing_m;
    let fill = |x: Point3, capacity: f64, bs: f64, uav: f64| TrialReport {
        num_ues: Some(s.k()),
        min_capacity_mbps: Some(capacity / BPS_PER_MBPS),
        all_los: Some(all_links_clear(x, s)),
        x_m: Some(x.x),
        y_m: Some(x.y),
        z_m: Some(x.z),
        bs_power_w: Some(bs),
        uav_power_w: Some(uav),
        ..row.clone()
    };
    let from_baseline = |b: BaselineResult| fill(b.x, b.min_capacity_bps, b.allocation.bs, b.allocation.uav_total());
    Ok(match scheme {
        Scheme::Lr => {
            let (sol, _) = solve(s)?;
            TrialReport {
                converged: Some(sol.converged),
                used_fallback: Some(sol.used_fallback),
                outer_iterations: Some(sol.outer_iterations),
                inner_iterations: Some(sol.inner_iterations),
                ..fill(
                    sol.x,
                    sol.min_capacity_bps,
                    sol.allocation.bs,
                    sol.allocation.uav_total(),
                )
            }
        }
        Scheme::Es3d => from_baseline(es3d(s, spacing)?),
        Scheme::Es2d => from_baseline(es2d(s, h, spacing)?),
        Scheme::Center => from_baseline(center(s)?),
        Scheme::Free => from_baseline(free(s, h)?),
    })
}

fn all_links_clear(x: Point3, s: &Scenario) -> bool {
    std::iter::once(s.bs)
        .chain(s.ues.iter().copied())
        .all(|p| line_of_sight(x, p, &s.buildings))
}

fn summarize(spec: &ExperimentSpec, points: &[SweepPoint], trials: &[TrialReport]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for p in points {
        for &scheme in &spec.schemes {
            let rows: Vec<&TrialReport> = trials
                .iter()
                .filter(|r| r.scheme == scheme && r.sweep_value.to_bits() == p.value.to_bits())
                .collect();
            let ok: Vec<&TrialReport> = rows.iter().copied().filter(|r| !r.is_error()).collect();
            let mean = |f: &dyn Fn(&TrialReport) -> Option<f64>| {
                let vals: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            };
            out.push(SummaryRow {
                sweep_variable: p.variable_name().to_string(),
                sweep_value: p.value,
                scheme,
                trials: rows.len(),
                errors: rows.len() - ok.len(),
                mean_min_capacity_mbps: mean(&|r| r.min_capacity_mbps),
                converged_fraction: mean(&|r| r.converged.map(|c| if c { 1.0 } else { 0.0 })),
            });
        }
    }
    out
}

type Previous = (BTreeMap<Job, Vec<TrialReport>>, BTreeMap<Job, Vec<TimingRow>>);

/// Trials completed by an earlier run with the same spec, from the final
/// files and from a partial log left by an interrupted run.
fn load_previous(spec: &ExperimentSpec, points: &[SweepPoint], out: &Path) -> Result<Previous> {
    let mut rows: BTreeMap<Job, BTreeMap<Scheme, TrialReport>> = BTreeMap::new();
    let mut times: BTreeMap<Job, BTreeMap<Scheme, TimingRow>> = BTreeMap::new();
    let job_of = |var: &str, value: f64, trial: usize| -> Result<Job> {
        let point = points
            .iter()
            .position(|p| p.variable_name() == var && p.value.to_bits() == value.to_bits())
            .ok_or_else(|| CliError::Resume(format!("sweep point {var} = {value} is not in the spec")))?;
        if trial >= spec.trial_count() {
            return Err(CliError::Resume(format!(
                "trial {trial} is beyond the spec's trial count"
            )));
        }
        Ok(Job { point, trial })
    };
    for name in [TRIALS_CSV, TRIALS_PARTIAL] {
        for r in read_csv::<TrialReport>(&out.join(name))? {
            if !spec.schemes.contains(&r.scheme) {
                return Err(CliError::Resume(format!("scheme {} is not in the spec", r.scheme)));
            }
            let job = job_of(&r.sweep_variable, r.sweep_value, r.trial)?;
            rows.entry(job).or_default().insert(r.scheme, r);
        }
    }
    for name in [TIMINGS_CSV, TIMINGS_PARTIAL] {
        for t in read_csv::<TimingRow>(&out.join(name))? {
            let job = job_of(&t.sweep_variable, t.sweep_value, t.trial)?;
            times.entry(job).or_default().insert(t.scheme, t);
        }
    }
    let wanted: BTreeSet<Scheme> = spec.schemes.iter().copied().collect();
    let order = |s: &Scheme| spec.schemes.iter().position(|x| x == s);
    let mut kept_rows = BTreeMap::new();
    let mut kept_times = BTreeMap::new();
    for (job, by_scheme) in rows {
        let have: BTreeSet<Scheme> = by_scheme.keys().copied().collect();
        let timed = times
            .get(&job)
            .is_some_and(|t| t.keys().copied().collect::<BTreeSet<_>>() == wanted);
        if have != wanted || !timed {
            continue;
        }
        let mut r: Vec<TrialReport> = by_scheme.into_values().collect();
        r.sort_by_key(|x| order(&x.scheme));
        let mut t: Vec<TimingRow> = times.remove(&job).unwrap_or_default().into_values().collect();
        t.sort_by_key(|x| order(&x.scheme));
        kept_rows.insert(job, r);
        kept_times.insert(job, t);
    }
    Ok((kept_rows, kept_times))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        match rec {
            Ok(r) => out.push(r),
            // A run killed mid-write can leave a truncated last line.
            Err(e) if matches!(e.kind(), csv::ErrorKind::UnequalLengths { .. }) => {
                warn!("{}: skipping truncated record", path.display());
            }
            Err(e) => {
                return Err(CliError::Csv {
                    path: path.to_path_buf(),
                    source: e,
                })
            }
        }
    }
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    for r in rows {
        w.serialize(r).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

fn remove_if_exists(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(CliError::io(path)(e)),
        _ => Ok(()),
    }
}

/// Append-only CSV log, flushed after every batch.
struct PartialWriter {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl PartialWriter {
    fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(CliError::io(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(file),
        })
    }

    fn append<T: Serialize>(&mut self, rows: &[T]) -> Result<()> {
        for r in rows {
            self.writer.serialize(r).map_err(CliError::csv(&self.path))?;
        }
        self.writer.flush().map_err(CliError::io(&self.path))
    }
}
