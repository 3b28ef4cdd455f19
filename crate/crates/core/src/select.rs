//! Discretized mutual information and greedy quotient-form mRMR ranking.
//!
//! Relevance of a set `S` is the mean mutual information between the label
//! and each member; redundancy is the mean over all ordered member pairs,
//! self-pairs included, normalized by `|S|²`. Each greedy step adds the
//! candidate maximizing relevance / redundancy of the enlarged set.

use std::path::Path;

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BiomarkerMatrix;

/// Redundancy below which the gain falls back to plain relevance.
pub const REDUNDANCY_FLOOR: f64 = 1e-12;

/// Relative slack under which two gains count as tied; ties resolve to the
/// lowest feature index.
pub const GAIN_TIE_EPS: f64 = 1e-12;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteSeries {
    codes: Vec<usize>,
    bins: usize,
}

impl DiscreteSeries {
    pub fn new(codes: Vec<usize>, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Config("bins must be positive".into()));
        }
        if let Some(c) = codes.iter().find(|&&c| c >= bins) {
            return Err(Error::InvalidData(format!("code {c} outside {bins} bins")));
        }
        Ok(DiscreteSeries { codes, bins })
    }

    pub fn from_labels(labels: &[u8]) -> Self {
        DiscreteSeries {
            codes: labels.iter().map(|&l| l as usize).collect(),
            bins: 2,
        }
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Equal-frequency binning by rank. Ranks come from a stable sort on
/// `(value, index)` and rank `r` maps to bin `floor(r * bins / n)`.
pub fn discretize(values: ArrayView1<'_, f64>, bins: usize) -> Result<DiscreteSeries> {
    let n = values.len();
    if bins == 0 {
        return Err(Error::Config("bins must be positive".into()));
    }
    if n < bins {
        return Err(Error::InvalidData(format!(
            "cannot split {n} values into {bins} bins"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut codes = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        codes[i] = rank * bins / n;
    }
    Ok(DiscreteSeries { codes, bins })
}

/// Plug-in entropy in nats.
pub fn entropy(x: &DiscreteSeries) -> f64 {
    let n = x.len() as f64;
    let mut counts = vec![0usize; x.bins];
    for &c in &x.codes {
        counts[c] += 1;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in mutual information in nats. Empty cells contribute nothing.
pub fn mutual_information(x: &DiscreteSeries, y: &DiscreteSeries) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "series lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let n = x.len() as f64;
    let mut joint = vec![0usize; x.bins * y.bins];
    let mut px = vec![0usize; x.bins];
    let mut py = vec![0usize; y.bins];
    for (&a, &b) in x.codes.iter().zip(&y.codes) {
        joint[a * y.bins + b] += 1;
        px[a] += 1;
        py[b] += 1;
    }
    let mut mi = 0.0;
    for a in 0..x.bins {
        for b in 0..y.bins {
            let c = joint[a * y.bins + b];
            if c == 0 {
                continue;
            }
            // p(a,b) / (p(a) p(b)) = c n / (ca cb)
            mi += (c as f64 / n) * ((c as f64 * n) / (px[a] as f64 * py[b] as f64)).ln();
        }
    }
    Ok(mi.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedundancyMode {
    /// Self-pairs `I(i,i)` count toward redundancy.
    WithDiagonal,
    /// Only distinct pairs count; the `|S|²` normalization is kept.
    OffDiagonal,
}

#[derive(Debug, Clone, Copy)]
pub struct MrmrOptions {
    pub bins: usize,
    pub redundancy: RedundancyMode,
}

impl Default for MrmrOptions {
    fn default() -> Self {
        MrmrOptions {
            bins: DEFAULT_BINS,
            redundancy: RedundancyMode::WithDiagonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrmrResult {
    pub order: Vec<usize>,
    pub gains: Vec<f64>,
    /// `I(label, feature)` for every feature.
    pub relevance: Vec<f64>,
    /// Redundancy of the selected set after each step.
    pub redundancy_trace: Vec<f64>,
}

/// Quotient gain with the near-zero redundancy guard.
pub fn gain(relevance: f64, redundancy: f64) -> f64 {
    if redundancy < REDUNDANCY_FLOOR {
        relevance
    } else {
        relevance / redundancy
    }
}

/// Whether `candidate` beats `best` by more than the tie slack.
pub fn beats(candidate: f64, best: f64) -> bool {
    candidate > best + GAIN_TIE_EPS * best.abs().max(1.0)
}

pub fn discretize_matrix(matrix: &BiomarkerMatrix, bins: usize) -> Result<Vec<DiscreteSeries>> {
    (0..matrix.n_features())
        .into_par_iter()
        .map(|j| discretize(matrix.column(j), bins))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Lazily filled symmetric table of pairwise feature MI.
struct PairCache<'a> {
    series: &'a [DiscreteSeries],
    table: Vec<Option<f64>>,
}

impl<'a> PairCache<'a> {
    fn new(series: &'a [DiscreteSeries]) -> Self {
        let p = series.len();
        PairCache {
            series,
            table: vec![None; p * p],
        }
    }

    fn get(&mut self, i: usize, j: usize) -> Result<f64> {
        let p = self.series.len();
        if let Some(v) = self.table[i * p + j] {
            return Ok(v);
        }
        let v = mutual_information(&self.series[i], &self.series[j])?;
        self.table[i * p + j] = Some(v);
        self.table[j * p + i] = Some(v);
        Ok(v)
    }
}

pub fn mrmr_select(matrix: &BiomarkerMatrix, m: usize, opts: &MrmrOptions) -> Result<MrmrResult> {
    let series = discretize_matrix(matrix, opts.bins)?;
    let label = DiscreteSeries::from_labels(&matrix.labels);
    mrmr_from_series(&series, &label, m, opts.redundancy)
}

/// Greedy ranking on pre-discretized features. Pairwise MI is memoized and
/// each candidate carries a running sum of its MI against the selected set,
/// so a step costs one new MI evaluation per remaining candidate.
pub fn mrmr_from_series(
    series: &[DiscreteSeries],
    label: &DiscreteSeries,
    m: usize,
    mode: RedundancyMode,
) -> Result<MrmrResult> {
    let p = series.len();
    if m < 1 || m > p {
        return Err(Error::Config(format!("mrmr size {m} outside 1..={p}")));
    }
    let relevance: Vec<f64> = series
        .par_iter()
        .map(|s| mutual_information(label, s))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let mut cache = PairCache::new(series);
    let mut selected = vec![false; p];
    let mut against_selected = vec![0.0; p];
    let mut order = Vec::with_capacity(m);
    let mut gains = Vec::with_capacity(m);
    let mut trace = Vec::with_capacity(m);
    let mut relevance_sum = 0.0;
    let mut pair_sum = 0.0;

    for step in 0..m {
        let size = (step + 1) as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..p {
            if selected[j] {
                continue;
            }
            let (g, w) = if step == 0 {
                let self_term = match mode {
                    RedundancyMode::WithDiagonal => cache.get(j, j)?,
                    RedundancyMode::OffDiagonal => 0.0,
                };
                (relevance[j], self_term)
            } else {
                let self_term = match mode {
                    RedundancyMode::WithDiagonal => cache.get(j, j)?,
                    RedundancyMode::OffDiagonal => 0.0,
                };
                let w = (pair_sum + 2.0 * against_selected[j] + self_term) / (size * size);
                let v = (relevance_sum + relevance[j]) / size;
                (gain(v, w), w)
            };
            match best {
                Some((_, bg, _)) if !beats(g, bg) => {}
                _ => best = Some((j, g, w)),
            }
        }
        let (pick, g, w) = best.expect("m <= p leaves a candidate");
        selected[pick] = true;
        let self_term = match mode {
            RedundancyMode::WithDiagonal => cache.get(pick, pick)?,
            RedundancyMode::OffDiagonal => 0.0,
        };
        pair_sum += 2.0 * against_selected[pick] + self_term;
        relevance_sum += relevance[pick];
        order.push(pick);
        gains.push(g);
        trace.push(w);
        if step + 1 < m {
            for j in 0..p {
                if !selected[j] {
                    against_selected[j] += cache.get(pick, j)?;
                }
            }
        }
    }

    Ok(MrmrResult {
        order,
        gains,
        relevance,
        redundancy_trace: trace,
    })
}

/// Writes `{order, gains, relevance}` as JSON and a rank CSV
/// (`rank,feature,gain,relevance`).
pub fn write_mrmr_report(
    result: &MrmrResult,
    names: &[String],
    json_path: &Path,
    csv_path: &Path,
) -> Result<()> {
    #[derive(Serialize)]
    struct Report<'a> {
        order: Vec<&'a str>,
        gains: &'a [f64],
        relevance: Vec<(&'a str, f64)>,
    }
    let report = Report {
        order: result.order.iter().map(|&i| names[i].as_str()).collect(),
        gains: &result.gains,
        relevance: names.iter().map(String::as_str).zip(result.relevance.iter().copied()).collect(),
    };
    std::fs::write(json_path, serde_json::to_string_pretty(&report)?)
        .map_err(|e| Error::io(json_path, e))?;
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(["rank", "feature", "gain", "relevance"])?;
    for (rank, (&i, g)) in result.order.iter().zip(&result.gains).enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            names[i].clone(),
            g.to_string(),
            result.relevance[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;
    Ok(())
}
