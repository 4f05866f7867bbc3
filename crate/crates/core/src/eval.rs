//! Error statistics per noise condition, and real-time-factor measurement.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, AudioBuffer};
use crate::corpus::{ManifestRow, NoiseKind};
use crate::error::{Error, Result};
use crate::estimator::{Estimate, Estimator, StageTimes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item: String,
    pub t60: f64,
    pub drr: f64,
    pub t60_hat: f64,
    pub drr_hat: f64,
    pub e_t60: f64,
    pub e_drr: f64,
    pub noise: NoiseKind,
    pub snr: f64,
    pub audio_s: f64,
    pub proc_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
    pub n: usize,
}

/// Quantile of sorted data, linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box-plot summary; outliers lie more than 1.5·IQR beyond the quartiles.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("box-plot value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q25 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q75 = quantile(&sorted, 0.75);
    let iqr = q75 - q25;
    let (lo_fence, hi_fence) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);
    let (inside, outliers): (Vec<f64>, Vec<f64>) =
        sorted.iter().partition(|&&v| v >= lo_fence && v <= hi_fence);
    Ok(BoxStats {
        median,
        q25,
        q75,
        whisker_lo: inside[0],
        whisker_hi: inside[inside.len() - 1],
        outliers,
        n: sorted.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorAxis {
    T60,
    Drr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub noise: NoiseKind,
    pub snr: f64,
    pub axis: ErrorAxis,
    pub stats: BoxStats,
}

/// SNR plus the T60 and DRR errors of one condition.
type ConditionErrors = (f64, Vec<f64>, Vec<f64>);

/// Box statistics of E_T60 and E_DRR per (noise, SNR) condition, ordered by
/// noise kind, then SNR, then axis.
pub fn grouped_stats(records: &[EvalRecord]) -> Result<Vec<GroupStats>> {
    let mut groups: BTreeMap<(NoiseKind, u64), ConditionErrors> = BTreeMap::new();
    for r in records {
        // Order SNRs numerically, including +inf for clean items.
        let key = (r.noise, ordered_bits(r.snr));
        let g = groups.entry(key).or_insert((r.snr, Vec::new(), Vec::new()));
        g.1.push(r.e_t60);
        g.2.push(r.e_drr);
    }
    let mut out = Vec::new();
    for ((noise, _), (snr, t, d)) in groups {
        for (axis, v) in [(ErrorAxis::T60, t), (ErrorAxis::Drr, d)] {
            out.push(GroupStats {
                noise,
                snr,
                axis,
                stats: boxplot_stats(&v)?,
            });
        }
    }
    Ok(out)
}

fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

pub fn fps_to_rtf(fps: f64) -> Result<f64> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidParameter(format!("fps must be positive, got {fps}")));
    }
    Ok(100.0 / fps)
}

/// Timing of one processed utterance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedRun {
    pub proc_s: f64,
    pub audio_s: f64,
    pub frames: usize,
    pub stages: StageTimes,
}

impl TimedRun {
    pub fn simple(proc_s: f64, audio_s: f64) -> Self {
        Self {
            proc_s,
            audio_s,
            frames: 0,
            stages: StageTimes::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBreakdown {
    /// Mean per-run RTF of log-mel plus Gabor feature extraction.
    pub features_rtf: f64,
    /// Mean per-run RTF of the MLP forward pass.
    pub mlp_rtf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtfReport {
    pub mean_rtf: f64,
    /// Classifier throughput in frames per second of MLP time; 0 when no
    /// frames were timed.
    pub fps: f64,
    pub runs: usize,
    pub stages: StageBreakdown,
}

/// Mean of per-run processing/audio ratios.
pub fn measure_rtf(runs: &[TimedRun]) -> Result<RtfReport> {
    if runs.is_empty() {
        return Err(Error::Empty("timing runs"));
    }
    if let Some(r) = runs.iter().find(|r| !(r.audio_s > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "audio length must be positive, got {} s",
            r.audio_s
        )));
    }
    let n = runs.len() as f64;
    let mean = |f: &dyn Fn(&TimedRun) -> f64| runs.iter().map(|r| f(r) / r.audio_s).sum::<f64>() / n;
    let frames: usize = runs.iter().map(|r| r.frames).sum();
    let mlp_s: f64 = runs.iter().map(|r| r.stages.mlp.as_secs_f64()).sum();
    let fps = if frames > 0 && mlp_s > 0.0 {
        frames as f64 / mlp_s
    } else {
        0.0
    };
    Ok(RtfReport {
        mean_rtf: mean(&|r| r.proc_s),
        fps,
        runs: runs.len(),
        stages: StageBreakdown {
            features_rtf: mean(&|r| r.stages.features.as_secs_f64()),
            mlp_rtf: mean(&|r| r.stages.mlp.as_secs_f64()),
        },
    })
}

/// Runs `estimate` on every utterance and records the truth, errors and
/// wall-clock time. Items are processed in parallel on the current rayon pool.
pub fn evaluate_with<F>(
    items: &[(ManifestRow, AudioBuffer)],
    estimate: F,
) -> Result<Vec<EvalRecord>>
where
    F: Fn(&AudioBuffer) -> Result<(f64, f64)> + Sync,
{
    items
        .par_iter()
        .map(|(row, audio)| {
            let start = Instant::now();
            let (t60_hat, drr_hat) = estimate(audio)?;
            let proc_s = start.elapsed().as_secs_f64();
            Ok(record(row, t60_hat, drr_hat, audio.duration_secs(), proc_s))
        })
        .collect()
}

fn record(row: &ManifestRow, t60_hat: f64, drr_hat: f64, audio_s: f64, proc_s: f64) -> EvalRecord {
    EvalRecord {
        item: row.path.clone(),
        t60: row.t60_s,
        drr: row.drr_db,
        t60_hat,
        drr_hat,
        e_t60: t60_hat - row.t60_s,
        e_drr: drr_hat - row.drr_db,
        noise: row.noise_kind,
        snr: row.snr_db,
        audio_s,
        proc_s,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedItem {
    pub item: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub records: Vec<EvalRecord>,
    pub estimates: Vec<Estimate>,
    pub runs: Vec<TimedRun>,
    pub failed: Vec<FailedItem>,
    pub groups: Vec<GroupStats>,
}

/// Evaluates every manifest row. Unreadable or failing items are reported in
/// `failed` and left out of the statistics.
pub fn evaluate(rows: &[ManifestRow], estimator: &Estimator) -> Result<EvalOutcome> {
    let results: Vec<std::result::Result<(EvalRecord, Estimate, TimedRun), FailedItem>> = rows
        .par_iter()
        .map(|row| {
            let fail = |e: Error| FailedItem {
                item: row.path.clone(),
                error: e.to_string(),
            };
            let audio = read_wav(&row.path, 0).map_err(fail)?;
            let start = Instant::now();
            let (est, _, stages) = estimator.estimate_detailed(&audio).map_err(fail)?;
            let proc_s = start.elapsed().as_secs_f64();
            let rec = record(row, est.t60_hat, est.drr_hat, audio.duration_secs(), proc_s);
            let run = TimedRun {
                proc_s,
                audio_s: audio.duration_secs(),
                frames: est.n_frames,
                stages,
            };
            Ok((rec, est, run))
        })
        .collect();
    let mut out = EvalOutcome {
        records: Vec::new(),
        estimates: Vec::new(),
        runs: Vec::new(),
        failed: Vec::new(),
        groups: Vec::new(),
    };
    for r in results {
        match r {
            Ok((rec, est, run)) => {
                out.records.push(rec);
                out.estimates.push(est);
                out.runs.push(run);
            }
            Err(f) => out.failed.push(f),
        }
    }
    if !out.records.is_empty() {
        out.groups = grouped_stats(&out.records)?;
    }
    Ok(out)
}

/// Times single-threaded estimation over `audio`, one pass per utterance
/// after one untimed warm-up pass.
pub fn bench_estimator(estimator: &Estimator, audio: &[AudioBuffer]) -> Result<RtfReport> {
    let first = audio.first().ok_or(Error::Empty("benchmark audio"))?;
    estimator.estimate(first)?;
    let mut runs = Vec::with_capacity(audio.len());
    for a in audio {
        let start = Instant::now();
        let (est, _, stages) = estimator.estimate_detailed(a)?;
        let proc: Duration = start.elapsed();
        runs.push(TimedRun {
            proc_s: proc.as_secs_f64(),
            audio_s: a.duration_secs(),
            frames: est.n_frames,
            stages,
        });
    }
    measure_rtf(&runs)
}

pub fn write_results_csv(path: impl AsRef<Path>, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsFile<'a> {
    pub groups: &'a [GroupStats],
    pub excluded: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtf: Option<&'a RtfReport>,
}

pub fn write_stats_json(path: impl AsRef<Path>, stats: &StatsFile<'_>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(stats)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn box_examples() {
        let s = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.median, s.q25, s.q75), (3.0, 2.0, 4.0));
        assert!(s.outliers.is_empty());
        assert_eq!((s.whisker_lo, s.whisker_hi, s.n), (1.0, 5.0, 5));

        let s = boxplot_stats(&[1.0, 1.0, 1.0, 1.0, 100.0]).unwrap();
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!(s.whisker_hi, 1.0);

        let s = boxplot_stats(&[7.0]).unwrap();
        assert_eq!(
            [s.median, s.q25, s.q75, s.whisker_lo, s.whisker_hi],
            [7.0; 5]
        );
        assert!(boxplot_stats(&[]).is_err());
    }

    #[test]
    fn quartiles_match_linear_interpolation() {
        // numpy.percentile([3, 1, 4, 1, 5, 9], [25, 50, 75]) -> 1.5, 3.5, 4.75
        let s = boxplot_stats(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0]).unwrap();
        assert_eq!((s.q25, s.median, s.q75), (1.5, 3.5, 4.75));
    }

    #[test]
    fn rtf_conversions() {
        assert!((fps_to_rtf(23_736.0).unwrap() - 0.0042).abs() < 5e-5);
        assert_eq!(fps_to_rtf(100.0).unwrap(), 1.0);
        assert_eq!(fps_to_rtf(200.0).unwrap(), 0.5);
        assert!(fps_to_rtf(0.0).is_err());
        assert!(fps_to_rtf(-3.0).is_err());
    }

    #[test]
    fn rtf_is_mean_of_ratios() {
        let r = measure_rtf(&[TimedRun::simple(0.62, 10.0)]).unwrap();
        assert!((r.mean_rtf - 0.062).abs() < 1e-15);
        let r = measure_rtf(&[TimedRun::simple(0.1, 1.0), TimedRun::simple(0.9, 3.0)]).unwrap();
        assert!((r.mean_rtf - 0.2).abs() < 1e-15);
        assert!(measure_rtf(&[]).is_err());
        assert!(measure_rtf(&[TimedRun::simple(0.1, 0.0)]).is_err());
    }

    fn rows(n: usize) -> Vec<(ManifestRow, AudioBuffer)> {
        (0..n)
            .map(|i| {
                let row = ManifestRow {
                    path: format!("item_{i}.wav"),
                    rir_id: i % 3,
                    noise_kind: [NoiseKind::Ambient, NoiseKind::Fan][i % 2],
                    snr_db: [0.0, 10.0, 20.0][i % 3],
                    t60_s: 0.2 + 0.05 * (i % 7) as f64,
                    drr_db: -3.0 + (i % 5) as f64,
                    class_id: 0,
                };
                (row, AudioBuffer::mono16k(vec![i as f64; 1600]))
            })
            .collect()
    }

    fn truth_of(items: &[(ManifestRow, AudioBuffer)], audio: &AudioBuffer) -> (f64, f64) {
        let i = audio.samples[0] as usize;
        (items[i].0.t60_s, items[i].0.drr_db)
    }

    #[test]
    fn oracle_estimator_has_zero_error() {
        let items = rows(30);
        let recs = evaluate_with(&items, |a| Ok(truth_of(&items, a))).unwrap();
        let groups = grouped_stats(&recs).unwrap();
        assert_eq!(groups.len(), 6 * 2);
        for g in &groups {
            assert_eq!(g.stats.median, 0.0);
            assert_eq!(g.stats.q75 - g.stats.q25, 0.0);
        }
        assert_eq!(recs[4].audio_s, 0.1);
    }

    #[test]
    fn constant_bias_shows_in_median() {
        let items = rows(30);
        let recs = evaluate_with(&items, |a| {
            let (t, d) = truth_of(&items, a);
            Ok((t + 0.1, d))
        })
        .unwrap();
        for g in grouped_stats(&recs).unwrap() {
            let want = if g.axis == ErrorAxis::T60 { 0.1 } else { 0.0 };
            assert!((g.stats.median - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_center_estimates_stay_within_half_a_bin() {
        let grid = crate::grid::ClassGrid::default();
        let items = rows(35);
        let recs = evaluate_with(&items, |a| {
            let (t, d) = truth_of(&items, a);
            grid.center_of(grid.cell_of(t, d)?)
        })
        .unwrap();
        for r in recs {
            assert!(r.e_t60.abs() <= 0.05 + 1e-9);
            assert!(r.e_drr.abs() <= 0.5 + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn shift_moves_location_stats(v in prop::collection::vec(-50.0f64..50.0, 1..40), c in -10.0f64..10.0) {
            let a = boxplot_stats(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = boxplot_stats(&shifted).unwrap();
            for (x, y) in [(a.median, b.median), (a.q25, b.q25), (a.q75, b.q75),
                           (a.whisker_lo, b.whisker_lo), (a.whisker_hi, b.whisker_hi)] {
                prop_assert!((x + c - y).abs() < 1e-9);
            }
        }

        #[test]
        fn stats_are_ordered(v in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let s = boxplot_stats(&v).unwrap();
            prop_assert!(s.q25 <= s.median && s.median <= s.q75);
            prop_assert!(s.whisker_lo <= s.whisker_hi);
            let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.whisker_lo >= min && s.whisker_hi <= max);
            prop_assert_eq!(s.n, v.len());
        }

        #[test]
        fn grouping_ignores_record_order(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let items = rows(24);
            let recs = evaluate_with(&items, |a| {
                let (t, d) = truth_of(&items, a);
                Ok((t * 1.1, d - 0.3 * t))
            }).unwrap();
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(grouped_stats(&recs).unwrap(), grouped_stats(&shuffled).unwrap());
        }
    }
}
