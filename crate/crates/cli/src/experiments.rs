//! Experiment runners. Each one writes its artifacts into its own directory
//! and returns a report whose assertions decide the exit status.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pilotwave_core::detection::{compare_with, marginal_ks_critical, pooled_ks, DetectionError, MarginalCdf};
use pilotwave_core::ensemble::{histogram_comparison, monte_carlo_bound, MAX_ABORT_FRACTION};
use pilotwave_core::ergodicity::{random_mode_system, resolving_samples, ErgodicityError};
use pilotwave_core::io::{write_arrivals, write_histogram, write_time_sweep, write_trajectories};
use pilotwave_core::stats::sample_std;
use pilotwave_core::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Experiment, ExperimentSpec};
use crate::report::{Assertion, Relation, Report, REPORT_FILE};

/// Pairs integrated with full trajectories in the spread experiment.
const ORACLE_PAIRS: usize = 1000;
/// Trajectories written to `trajectories.csv`.
const WRITTEN_TRAJECTORIES: usize = 20;
const BOHM_TOL: f64 = 1e-10;
const SQM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Wavepacket(#[from] WavepacketError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Ergodicity(#[from] ErgodicityError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// Runs `spec` and writes its artifacts and `report.json` into
/// `out_base/<experiment name>/`.
pub fn run(spec: &ExperimentSpec, out_base: &Path) -> Result<Report, RunError> {
    let dir = out_base.join(spec.experiment.name());
    fs::create_dir_all(&dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let ctx = Context {
        spec,
        dir,
        state: TwoSlitState::new(spec.params)?,
    };
    let mut report = match spec.experiment {
        Experiment::Equivariance => equivariance(&ctx)?,
        Experiment::Coincidence => coincidence(&ctx)?,
        Experiment::Constrained => constrained(&ctx)?,
        Experiment::GhosePstar => ghose(&ctx)?,
        Experiment::Spread => spread(&ctx)?,
        Experiment::ErgodicityToy => ergodicity_toy(&ctx)?,
        Experiment::Eq44 => eq44(&ctx)?,
    };
    if let Value::Object(map) = &mut report.results {
        map.insert("params".into(), json!(spec.params));
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    ctx.write_file(REPORT_FILE, text.as_bytes())?;
    Ok(report)
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    dir: PathBuf,
    state: TwoSlitState,
}

impl Context<'_> {
    fn params(&self) -> &PhysicalParams {
        &self.spec.params
    }

    fn report(&self, n_pairs: usize, assertions: Vec<Assertion>, results: Value) -> Report {
        Report::new(
            self.spec.experiment.name(),
            self.spec.ensemble.master_seed,
            n_pairs,
            assertions,
            results,
        )
    }

    fn write_file(&self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| RunError::Io { path, source })
    }

    fn write_csv<F>(&self, name: &str, write: F) -> Result<(), RunError>
    where
        F: FnOnce(&mut BufWriter<File>) -> csv::Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        let mut out = BufWriter::new(file);
        write(&mut out).map_err(|source| RunError::Csv {
            path: path.clone(),
            source,
        })?;
        out.flush().map_err(|source| RunError::Io { path, source })
    }

    fn sample(&self) -> Result<Vec<PhasePoint>, RunError> {
        Ok(pilotwave_core::ensemble::sample(&self.spec.ensemble, self.params())?)
    }

    fn advance(&self, set: &ArrivalSet, t: f64) -> Result<ArrivalSet, RunError> {
        Ok(set.advance(t, &self.spec.integrator, self.params(), self.spec.workers)?)
    }

    fn window_probability(&self, w1: &DetectorWindow, w2: &DetectorWindow) -> Result<f64, RunError> {
        let p = self.params();
        Ok(sqm_window_probability(
            w1,
            w2,
            p.t0,
            &self.state,
            self.spec.analysis.quad_tol,
        )?)
    }
}

fn equivariance(ctx: &Context) -> Result<Report, RunError> {
    let p = ctx.params();
    let start = ArrivalSet::initial(&ctx.sample()?)?;
    let half = ctx.advance(&start, p.t0 / 2.0)?;
    let end = ctx.advance(&half, p.t0)?;

    let mut assertions = Vec::new();
    let mut snapshots = Vec::new();
    for set in [&start, &half, &end] {
        let h = histogram_comparison(set, &ctx.state);
        let bound = monte_carlo_bound(2.0, h.grid.bin_count(), h.n);
        assertions.push(Assertion::new(
            format!("tv_distance_t{}", set.t),
            h.distance,
            Relation::Lt,
            bound,
        ));
        snapshots.push(json!({
            "t": set.t,
            "tv_distance": h.distance,
            "bound": bound,
            "outside_count": h.outside_count,
            "model_outside": h.model_outside,
        }));
    }
    assertions.push(Assertion::new(
        "abort_fraction",
        end.abort_fraction(),
        Relation::Lt,
        MAX_ABORT_FRACTION,
    ));
    ctx.write_csv("arrivals.csv", |w| write_arrivals(w, &end))?;
    let final_hist = histogram_comparison(&end, &ctx.state);
    ctx.write_csv("histogram.csv", |w| write_histogram(w, &final_hist))?;
    Ok(ctx.report(
        end.arrivals.len(),
        assertions,
        json!({ "snapshots": snapshots, "aborted": end.aborted_count }),
    ))
}

fn ks_check(ctx: &Context, set: &ArrivalSet) -> Result<(f64, f64), RunError> {
    let model = MarginalCdf::new(&ctx.state, set.t)?;
    let crit = marginal_ks_critical(ctx.spec.analysis.ks_alpha, set.completed_count());
    Ok((pooled_ks(set, &model), crit))
}

fn window_label(w1: &DetectorWindow, w2: &DetectorWindow) -> String {
    format!("[{},{})x[{},{})", w1.lo, w1.hi(), w2.lo, w2.hi())
}

fn coincidence(ctx: &Context) -> Result<Report, RunError> {
    let start = ArrivalSet::initial(&ctx.sample()?)?;
    let end = ctx.advance(&start, ctx.params().t0)?;
    let (ks, crit) = ks_check(ctx, &end)?;

    let mut assertions = Vec::new();
    let mut verdicts = Vec::new();
    for (w1, w2) in &ctx.spec.windows {
        let sqm = ctx.window_probability(w1, w2)?;
        let v = compare_with(sqm, &bm_coincidence_fraction(&end, w1, w2), ctx.spec.analysis.z_max)?;
        assertions.push(Assertion::new(
            format!("abs_z {}", window_label(w1, w2)),
            v.z.abs(),
            Relation::Le,
            ctx.spec.analysis.z_max,
        ));
        verdicts.push(VerdictReport::new([*w1, *w2], &v, ks, crit));
    }
    assertions.push(Assertion::new("marginal_ks", ks, Relation::Lt, crit));
    ctx.write_csv("arrivals.csv", |w| write_arrivals(w, &end))?;
    Ok(ctx.report(
        end.arrivals.len(),
        assertions,
        json!({ "verdicts": verdicts, "aborted": end.aborted_count }),
    ))
}

/// Both windows on the same side of the slit axis.
fn same_side(w1: &DetectorWindow, w2: &DetectorWindow) -> bool {
    (w1.lo >= 0.0 && w2.lo >= 0.0) || (w1.hi() <= 0.0 && w2.hi() <= 0.0)
}

fn constrained(ctx: &Context) -> Result<Report, RunError> {
    let sigma0 = ctx.params().sigma0;
    let start = ArrivalSet::initial(&ctx.sample()?)?;
    let end = ctx.advance(&start, ctx.params().t0)?;

    let max_sum = end.points().map(|q| (q.y1 + q.y2).abs()).fold(0.0, f64::max);
    let mut assertions = vec![
        Assertion::new("max_abs_y1_plus_y2", max_sum, Relation::Lt, 1e-8 * sigma0),
        Assertion::new("aborted", end.aborted_count as f64, Relation::Eq, 0.0),
    ];
    let (ks, crit) = ks_check(ctx, &end)?;
    let mut verdicts = Vec::new();
    for (w1, w2) in &ctx.spec.windows {
        let sqm = ctx.window_probability(w1, w2)?;
        let v = compare_with(sqm, &bm_coincidence_fraction(&end, w1, w2), ctx.spec.analysis.z_max)?;
        if same_side(w1, w2) {
            let label = window_label(w1, w2);
            assertions.push(Assertion::new(
                format!("hits {label}"),
                v.bm.hits as f64,
                Relation::Eq,
                0.0,
            ));
            assertions.push(Assertion::new(format!("sqm_p {label}"), sqm, Relation::Gt, 0.01));
            assertions.push(Assertion::new(
                format!("agrees {label}"),
                f64::from(u8::from(v.agrees)),
                Relation::Eq,
                0.0,
            ));
        }
        verdicts.push(VerdictReport::new([*w1, *w2], &v, ks, crit));
    }
    let (ks0, crit0) = ks_check(ctx, &start)?;
    assertions.push(Assertion::new("marginal_ks_t0", ks, Relation::Gt, crit));
    assertions.push(Assertion::new("marginal_ks_initial", ks0, Relation::Gt, crit0));
    ctx.write_csv("arrivals.csv", |w| write_arrivals(w, &end))?;
    Ok(ctx.report(
        end.arrivals.len(),
        assertions,
        json!({
            "verdicts": verdicts,
            "max_abs_y1_plus_y2": max_sum,
            "ks_violation": ks > crit,
            "ks_violation_initial": ks0 > crit0,
            "aborted": end.aborted_count,
        }),
    ))
}

fn ghose(ctx: &Context) -> Result<Report, RunError> {
    let start = ArrivalSet::initial(&ctx.sample()?)?;
    let end = ctx.advance(&start, ctx.params().t0)?;
    let g = ghose_p_star(&end, &ctx.state)?;
    let margin = (1.0 - g.mean) / g.se;
    ctx.write_csv("arrivals.csv", |w| write_arrivals(w, &end))?;
    Ok(ctx.report(
        end.arrivals.len(),
        vec![Assertion::new("one_minus_pstar_over_se", margin, Relation::Gt, 10.0)],
        json!({ "pstar": g }),
    ))
}

fn spread(ctx: &Context) -> Result<Report, RunError> {
    let p = ctx.params();
    let points = ctx.sample()?;
    let coms: Vec<f64> = points.iter().map(PhasePoint::com).collect();
    let s = sample_std(&coms).ok_or(EnsembleError::TooFewPairs {
        min: 2,
        got: coms.len(),
    })?;
    // Standard error of a sample standard deviation of a normal variable.
    let se = s / (2.0 * (coms.len() as f64 - 1.0)).sqrt();
    let target = p.sigma0 / 2f64.sqrt();
    let mut assertions = Vec::new();
    // The spread only approaches sigma0/sqrt(2) once the packets are well separated.
    let separated = p.half_separation >= 5.0 * p.sigma0;
    if separated {
        assertions.push(Assertion::new(
            "abs_spread_minus_target",
            (s - target).abs(),
            Relation::Lt,
            4.0 * se,
        ));
    }

    let m = points.len().min(ORACLE_PAIRS);
    let end = ArrivalSet::initial(&points[..m])?;
    let end = ctx.advance(&end, p.t0)?;
    let integrator = PairIntegrator::new(*p, ctx.spec.integrator, 0.0, p.t0)?;
    let mut trajectories = Vec::new();
    for (id, start) in points.iter().take(WRITTEN_TRAJECTORIES.min(m)).enumerate() {
        trajectories.push((id, integrator.trajectory(*start, p.t0)?));
    }

    let rel_err = |y0: f64, q: &PhasePoint| (q.com() - com_oracle(y0, q.t, p)).abs() / (y0.abs() + p.sigma0);
    let mut worst: f64 = 0.0;
    for a in end.arrivals.iter().filter(|a| a.status == TrajectoryStatus::Completed) {
        worst = worst.max(rel_err(a.start.com(), &a.end));
    }
    for (_, traj) in &trajectories {
        let y0 = traj.first().com();
        for s in &traj.samples {
            worst = worst.max(rel_err(y0, &s.point));
        }
    }
    assertions.push(Assertion::new("com_oracle_rel_error", worst, Relation::Lt, 1e-6));

    ctx.write_csv("arrivals.csv", |w| write_arrivals(w, &end))?;
    ctx.write_csv("trajectories.csv", |w| {
        write_trajectories(w, trajectories.iter().map(|(id, t)| (*id, t)))
    })?;
    Ok(ctx.report(
        points.len(),
        assertions,
        json!({
            "com_spread": s,
            "com_spread_se": se,
            "target": target,
            "spread_asserted": separated,
            "oracle_pairs": m,
            "com_oracle_rel_error": worst,
        }),
    ))
}

/// Horizons in units of the slowest period, three per decade up to 1e4.
fn sweep_horizons(min_gap: f64) -> Vec<f64> {
    let mut h: Vec<f64> = (0..12).map(|k| 10f64.powf(k as f64 / 3.0) / min_gap).collect();
    h.push(1e4 / min_gap);
    h
}

fn ergodicity_toy(ctx: &Context) -> Result<Report, RunError> {
    let toy = ctx.spec.toy;
    let mut assertions = Vec::new();
    let mut systems = Vec::new();
    for i in 0..toy.systems {
        let (x, f) = random_mode_system(ctx.spec.ensemble.master_seed, i as u64, toy.modes);
        let diag = diagonal_average(&x, &f)?;
        let mut rows = Vec::new();
        for horizon in sweep_horizons(x.min_gap()) {
            let avg = time_average(&x, &f, horizon, resolving_samples(&x, horizon, 32.0))?;
            rows.push((horizon, avg, diag));
        }
        let &(horizon, avg, _) = rows.last().expect("non-empty sweep");
        let deviation = (avg - diag).abs();
        // |deviation| * T stays bounded when the deviation falls like c/T.
        let c_max = rows.iter().map(|&(t, a, d)| (a - d).abs() * t).fold(0.0, f64::max);
        assertions.push(Assertion::new(
            format!("system_{i:02}_deviation"),
            deviation,
            Relation::Lt,
            1e-2,
        ));
        ctx.write_csv(&format!("sweep_{i:02}.csv"), |w| write_time_sweep(w, &rows))?;
        systems.push(json!({
            "index": i,
            "min_gap": x.min_gap(),
            "horizon": horizon,
            "time_average": avg,
            "diagonal_average": diag,
            "max_deviation_times_horizon": c_max,
        }));
    }
    Ok(ctx.report(0, assertions, json!({ "modes": toy.modes, "systems": systems })))
}

fn eq44(ctx: &Context) -> Result<Report, RunError> {
    let t0 = ctx.params().t0;
    let mut assertions = Vec::new();
    let mut csv_out = csv::Writer::from_writer(Vec::new());
    csv_out
        .write_record(["observable", "t", "bohm_average", "sqm_average", "abs_diff"])
        .expect("in-memory write");
    let mut rows = Vec::new();
    for t in [0.0, t0 / 2.0, t0] {
        for obs in [LocalObservable::PositionY1, LocalObservable::MomentumY1] {
            let bohm = bohm_space_average(obs, t, &ctx.state, BOHM_TOL)?;
            let sqm = sqm_expectation(obs, t, &ctx.state, SQM_TOL)?;
            let diff = (bohm.value - sqm.re).abs();
            let label = format!("{} t={t}", obs.as_str());
            assertions.push(Assertion::new(format!("abs_diff {label}"), diff, Relation::Lt, 1e-8));
            assertions.push(Assertion::new(
                format!("abs_imag {label}"),
                sqm.im.abs(),
                Relation::Lt,
                1e-10,
            ));
            csv_out
                .serialize((obs.as_str(), t, bohm.value, sqm.re, diff))
                .expect("in-memory write");
            rows.push(json!({
                "observable": obs.as_str(),
                "t": t,
                "bohm_average": bohm.value,
                "sqm_average": sqm.re,
                "abs_diff": diff,
                "sqm_imag": sqm.im,
                "masked_weight": bohm.masked_weight,
                "cells_per_axis": bohm.cells_per_axis,
            }));
        }
    }
    let bytes = csv_out.into_inner().expect("in-memory write");
    ctx.write_file("eq44.csv", &bytes)?;
    Ok(ctx.report(0, assertions, json!({ "rows": rows })))
}
