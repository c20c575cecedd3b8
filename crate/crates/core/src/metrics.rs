//! Joint detection and localization metrics.
//!
//! Scores are accumulated over 1 s segments of ten 100 ms frames. Within a
//! segment each class is scored separately: reference and predicted DOAs in
//! the same frame are paired by minimum total angular distance, each matched
//! reference track gets its mean distance over the segment, and a match is a
//! true positive when that mean is within 20 degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FRAME_SECONDS: f64 = 0.1;
pub const SEGMENT_FRAMES: usize = 10;
pub const DOA_THRESHOLD_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub class_id: usize,
    /// Carried through IO; not used for scoring.
    pub track_id: usize,
    pub azimuth: f64,
    pub elevation: f64,
}

/// Active events per 100 ms frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeldEventGrid {
    pub frames: Vec<Vec<Event>>,
    pub n_classes: usize,
}

impl SeldEventGrid {
    pub fn new(n_frames: usize, n_classes: usize) -> Self {
        Self {
            frames: vec![Vec::new(); n_frames],
            n_classes,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Adds an event, growing the grid if `frame` is past the end.
    pub fn push(&mut self, frame: usize, event: Event) {
        if frame >= self.frames.len() {
            self.frames.resize(frame + 1, Vec::new());
        }
        self.frames[frame].push(event);
    }

    /// Extends the grid with empty frames up to `n_frames`.
    pub fn padded_to(mut self, n_frames: usize) -> Self {
        if self.frames.len() < n_frames {
            self.frames.resize(n_frames, Vec::new());
        }
        self
    }

    pub fn n_events(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    fn check(&self, name: &str) -> Result<()> {
        for (k, frame) in self.frames.iter().enumerate() {
            for e in frame {
                if e.class_id >= self.n_classes {
                    return Err(Error::OutOfRange(format!(
                        "{name} frame {k}: class {} >= {}",
                        e.class_id, self.n_classes
                    )));
                }
                if !e.azimuth.is_finite() || !e.elevation.is_finite() {
                    return Err(Error::OutOfRange(format!("{name} frame {k}: non-finite angle")));
                }
            }
        }
        Ok(())
    }
}

/// Great-circle distance between two directions, degrees.
pub fn angular_distance(az1: f64, el1: f64, az2: f64, el2: f64) -> f64 {
    let (az1, el1, az2, el2) = (az1.to_radians(), el1.to_radians(), az2.to_radians(), el2.to_radians());
    // Haversine form: exact zero for identical directions, unlike acos.
    let h = ((el2 - el1) / 2.0).sin().powi(2) + el1.cos() * el2.cos() * ((az2 - az1) / 2.0).sin().powi(2);
    (2.0 * h.clamp(0.0, 1.0).sqrt().asin()).to_degrees()
}

/// Minimum-cost assignment for a rectangular cost matrix. Returns
/// `(row, col)` pairs covering `min(rows, cols)` entries.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        return hungarian(&t).into_iter().map(|(j, i)| (i, j)).collect();
    }
    // Potentials formulation, 1-based with a virtual column 0.
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    /// Class-correct matches rejected by the DOA threshold.
    pub spatial_false_positives: u64,
    pub false_negatives: u64,
    pub substitutions: u64,
    pub deletions: u64,
    pub insertions: u64,
    pub reference_events: u64,
    pub localization_matches: u64,
    pub localization_misses: u64,
    pub total_doa_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub error_rate: f64,
    pub f_score: f64,
    pub localization_error: f64,
    pub localization_recall: f64,
    pub seld_error: f64,
    pub counts: MetricCounts,
}

/// Aggregate SELD error `(ER + (1 - F) + LE / 180 + (1 - LR)) / 4`.
pub fn seld_error(er: f64, f: f64, le_deg: f64, lr: f64) -> Result<f64> {
    if !(er >= 0.0 && er.is_finite()) {
        return Err(Error::OutOfRange(format!("error rate {er} must be finite and >= 0")));
    }
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::OutOfRange(format!("F-score {f} outside [0, 1]")));
    }
    if !(0.0..=180.0).contains(&le_deg) {
        return Err(Error::OutOfRange(format!(
            "localization error {le_deg} outside [0, 180]"
        )));
    }
    if !(0.0..=1.0).contains(&lr) {
        return Err(Error::OutOfRange(format!("localization recall {lr} outside [0, 1]")));
    }
    Ok((er + (1.0 - f) + le_deg / 180.0 + (1.0 - lr)) / 4.0)
}

/// DOAs of one class in one frame.
fn class_doas(frame: &[Event], class: usize) -> Vec<(f64, f64)> {
    frame
        .iter()
        .filter(|e| e.class_id == class)
        .map(|e| (e.azimuth, e.elevation))
        .collect()
}

/// Scores `prediction` against `reference`; both grids must cover the same
/// frames (see [`SeldEventGrid::padded_to`]).
pub fn evaluate(reference: &SeldEventGrid, prediction: &SeldEventGrid) -> Result<MetricsReport> {
    if reference.n_classes != prediction.n_classes {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} classes, prediction has {}",
            reference.n_classes, prediction.n_classes
        )));
    }
    if reference.n_frames() != prediction.n_frames() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} frames, prediction has {}",
            reference.n_frames(),
            prediction.n_frames()
        )));
    }
    reference.check("reference")?;
    prediction.check("prediction")?;
    let n_frames = reference.n_frames();
    let n_segments = n_frames.div_ceil(SEGMENT_FRAMES);

    let mut c = MetricCounts::default();
    for seg in 0..n_segments {
        let frames = seg * SEGMENT_FRAMES..((seg + 1) * SEGMENT_FRAMES).min(n_frames);
        let (mut loc_fp, mut loc_fn) = (0u64, 0u64);
        for class in 0..reference.n_classes {
            let gt: Vec<Vec<(f64, f64)>> = frames
                .clone()
                .map(|k| class_doas(&reference.frames[k], class))
                .collect();
            let pr: Vec<Vec<(f64, f64)>> = frames
                .clone()
                .map(|k| class_doas(&prediction.frames[k], class))
                .collect();
            let nb_gt = gt.iter().map(Vec::len).max().unwrap_or(0) as u64;
            let nb_pr = pr.iter().map(Vec::len).max().unwrap_or(0) as u64;
            c.reference_events += nb_gt;

            match (nb_gt > 0, nb_pr > 0) {
                (false, false) => {}
                (true, false) => {
                    loc_fn += nb_gt;
                    c.false_negatives += nb_gt;
                    c.localization_misses += nb_gt;
                }
                (false, true) => {
                    loc_fp += nb_pr;
                    c.false_positives += nb_pr;
                }
                (true, true) => {
                    // Per reference slot: summed distance and number of matched frames.
                    let mut slots: Vec<(f64, usize)> = vec![(0.0, 0); nb_gt as usize];
                    for (g, p) in gt.iter().zip(&pr) {
                        if g.is_empty() || p.is_empty() {
                            continue;
                        }
                        let cost: Vec<Vec<f64>> = g
                            .iter()
                            .map(|a| p.iter().map(|b| angular_distance(a.0, a.1, b.0, b.1)).collect())
                            .collect();
                        for (r, col) in hungarian(&cost) {
                            slots[r].0 += cost[r][col];
                            slots[r].1 += 1;
                        }
                    }
                    let matched: Vec<f64> = slots.iter().filter(|s| s.1 > 0).map(|s| s.0 / s.1 as f64).collect();
                    if matched.is_empty() {
                        // Same class in the segment but never in the same frame.
                        loc_fn += nb_gt;
                        loc_fp += nb_pr;
                        c.false_negatives += nb_gt;
                        c.false_positives += nb_pr;
                        c.localization_misses += nb_gt;
                        continue;
                    }
                    for avg in matched {
                        c.total_doa_error += avg;
                        c.localization_matches += 1;
                        if avg <= DOA_THRESHOLD_DEG {
                            c.true_positives += 1;
                        } else {
                            loc_fp += 1;
                            c.spatial_false_positives += 1;
                        }
                    }
                    if nb_pr > nb_gt {
                        loc_fp += nb_pr - nb_gt;
                        c.false_positives += nb_pr - nb_gt;
                    } else if nb_gt > nb_pr {
                        loc_fn += nb_gt - nb_pr;
                        c.false_negatives += nb_gt - nb_pr;
                        c.localization_misses += nb_gt - nb_pr;
                    }
                }
            }
        }
        c.substitutions += loc_fp.min(loc_fn);
        c.deletions += loc_fn.saturating_sub(loc_fp);
        c.insertions += loc_fp.saturating_sub(loc_fn);
    }
    Ok(report_from_counts(c))
}

pub fn report_from_counts(c: MetricCounts) -> MetricsReport {
    let error_rate = (c.substitutions + c.deletions + c.insertions) as f64 / c.reference_events.max(1) as f64;
    let tp = c.true_positives as f64;
    let f_den = tp + c.spatial_false_positives as f64 + 0.5 * (c.false_positives + c.false_negatives) as f64;
    let f_score = if f_den > 0.0 { tp / f_den } else { 0.0 };
    let localization_error = if c.localization_matches > 0 {
        c.total_doa_error / c.localization_matches as f64
    } else {
        180.0
    };
    let lr_den = (c.localization_matches + c.localization_misses) as f64;
    let localization_recall = if lr_den > 0.0 {
        c.localization_matches as f64 / lr_den
    } else {
        0.0
    };
    let seld = (error_rate + (1.0 - f_score) + localization_error / 180.0 + (1.0 - localization_recall)) / 4.0;
    MetricsReport {
        error_rate,
        f_score,
        localization_error,
        localization_recall,
        seld_error: seld,
        counts: c,
    }
}
