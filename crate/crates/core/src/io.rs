//! CSV dumps. Every file carries a header row; floats are written in their
//! shortest round-trip form so reruns with the same seed are byte-identical.

use std::io::Write;

use serde::Serialize;

use crate::ensemble::{ArrivalSet, HistogramComparison};
use crate::guidance::Trajectory;

#[derive(Serialize)]
struct TrajectoryRow {
    pair_id: usize,
    t: f64,
    y1: f64,
    y2: f64,
    v1: f64,
    v2: f64,
}

#[derive(Serialize)]
struct ArrivalRow {
    pair_id: usize,
    y1_0: f64,
    y2_0: f64,
    y1_t: f64,
    y2_t: f64,
    status: &'static str,
}

#[derive(Serialize)]
struct HistogramRow {
    bin_y1_lo: f64,
    bin_y2_lo: f64,
    count: u64,
    model_prob: f64,
}

#[derive(Serialize)]
struct SweepRow {
    horizon: f64,
    time_avg: f64,
    diagonal_avg: f64,
}

fn writer<W: Write>(out: W, header: &[&str]) -> csv::Result<csv::Writer<W>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

/// Concatenated trajectories: `pair_id, t, y1, y2, v1, v2`.
pub fn write_trajectories<'a, W, I>(out: W, trajectories: I) -> csv::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (usize, &'a Trajectory)>,
{
    let mut w = writer(out, &["pair_id", "t", "y1", "y2", "v1", "v2"])?;
    for (pair_id, traj) in trajectories {
        for s in &traj.samples {
            w.serialize(TrajectoryRow {
                pair_id,
                t: s.point.t,
                y1: s.point.y1,
                y2: s.point.y2,
                v1: s.v1,
                v2: s.v2,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `pair_id, y1_0, y2_0, y1_t, y2_t, status`, one row per pair.
pub fn write_arrivals<W: Write>(out: W, arrivals: &ArrivalSet) -> csv::Result<()> {
    let mut w = writer(out, &["pair_id", "y1_0", "y2_0", "y1_t", "y2_t", "status"])?;
    for a in &arrivals.arrivals {
        w.serialize(ArrivalRow {
            pair_id: a.pair_id,
            y1_0: a.start.y1,
            y2_0: a.start.y2,
            y1_t: a.end.y1,
            y2_t: a.end.y2,
            status: a.status.as_str(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `bin_y1_lo, bin_y2_lo, count, model_prob`, y1 outer.
pub fn write_histogram<W: Write>(out: W, h: &HistogramComparison) -> csv::Result<()> {
    let mut w = writer(out, &["bin_y1_lo", "bin_y2_lo", "count", "model_prob"])?;
    let bins = h.grid.bins;
    for i in 0..bins {
        for j in 0..bins {
            let k = i * bins + j;
            w.serialize(HistogramRow {
                bin_y1_lo: h.grid.edge(i),
                bin_y2_lo: h.grid.edge(j),
                count: h.counts[k],
                model_prob: h.model[k],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Time-average sweep: `T, time_avg, diagonal_avg`.
pub fn write_time_sweep<W: Write>(out: W, rows: &[(f64, f64, f64)]) -> csv::Result<()> {
    let mut w = writer(out, &["T", "time_avg", "diagonal_avg"])?;
    for &(horizon, time_avg, diagonal_avg) in rows {
        w.serialize(SweepRow {
            horizon,
            time_avg,
            diagonal_avg,
        })?;
    }
    w.flush()?;
    Ok(())
}
