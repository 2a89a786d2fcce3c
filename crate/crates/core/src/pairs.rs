//! Pairwise ratio features and systematic-discrepancy analytics.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::props::{guard, PropertySchema, PropertyVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Match,
    NonMatch,
}

impl Label {
    pub fn from_bool(is_match: bool) -> Self {
        if is_match {
            Label::Match
        } else {
            Label::NonMatch
        }
    }

    pub fn is_match(self) -> bool {
        self == Label::Match
    }
}

/// Which property values the ratios are taken over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// log1p-normalize first, then divide.
    #[default]
    LogRatio,
    /// Divide raw property values (ablation).
    RawRatio,
}

impl RatioMode {
    fn expects_normalized(self) -> bool {
        matches!(self, RatioMode::LogRatio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatureVector {
    pub candidate_id: String,
    pub index_id: String,
    pub values: Vec<f64>,
    pub label: Option<Label>,
}

/// Candidate-over-index element-wise ratio. Both entries are floored at the
/// shared guard, so every ratio is finite and positive and a vector divided
/// by itself is exactly all ones.
pub fn pair_features(cand: &PropertyVector, idx: &PropertyVector) -> Result<PairFeatureVector> {
    pair_features_with(cand, idx, RatioMode::LogRatio)
}

pub fn pair_features_with(
    cand: &PropertyVector,
    idx: &PropertyVector,
    mode: RatioMode,
) -> Result<PairFeatureVector> {
    if cand.len() != idx.len() {
        return Err(Error::SchemaMismatch(format!(
            "`{}` has {} properties, `{}` has {}",
            cand.mesh_id,
            cand.len(),
            idx.mesh_id,
            idx.len()
        )));
    }
    for v in [cand, idx] {
        if v.normalized != mode.expects_normalized() {
            return Err(Error::State(format!(
                "`{}` is {} but {mode:?} needs {} inputs",
                v.mesh_id,
                if v.normalized { "normalized" } else { "raw" },
                if mode.expects_normalized() { "normalized" } else { "raw" },
            )));
        }
    }
    let values = cand
        .values
        .iter()
        .zip(&idx.values)
        .map(|(&a, &b)| guard(a) / guard(b))
        .collect();
    Ok(PairFeatureVector {
        candidate_id: cand.mesh_id.clone(),
        index_id: idx.mesh_id.clone(),
        values,
        label: None,
    })
}

/// `(epsilon, delta)` tolerance curve for one property over matching pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyProfile {
    pub property_name: String,
    pub r_g: f64,
    pub sigma: f64,
    pub curve: Vec<(f64, f64)>,
}

impl DiscrepancyProfile {
    /// Fraction of the profiled ratios outside `[r_g - eps, r_g + eps]`.
    pub fn delta_at(ratios: &[f64], r_g: f64, eps: f64) -> f64 {
        if ratios.is_empty() {
            return 0.0;
        }
        let outside = ratios.iter().filter(|&&r| (r - r_g).abs() > eps).count();
        outside as f64 / ratios.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyOptions {
    /// Explicit epsilon grid. When empty, `grid_points` evenly spaced values
    /// from 0 to the largest deviation from `r_g` are used.
    pub epsilon_grid: Vec<f64>,
    pub grid_points: usize,
    /// Interpret epsilon relative to `r_g` (`|r - r_g| <= eps * r_g`).
    pub relative: bool,
}

impl Default for DiscrepancyOptions {
    fn default() -> Self {
        Self {
            epsilon_grid: Vec::new(),
            grid_points: 51,
            relative: false,
        }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn ratios_for(pairs: &[PairFeatureVector], column: usize) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|p| {
            p.values.get(column).copied().ok_or_else(|| {
                Error::SchemaMismatch(format!(
                    "pair ({}, {}) has no column {column}",
                    p.candidate_id, p.index_id
                ))
            })
        })
        .collect()
}

/// Robust centre (median), sample spread and tolerance curve of one
/// property's ratios over known matching pairs.
pub fn estimate_discrepancy(
    matching_pairs: &[PairFeatureVector],
    schema: &PropertySchema,
    property: &str,
    opts: &DiscrepancyOptions,
) -> Result<DiscrepancyProfile> {
    let column = schema
        .position_by_name(property)
        .ok_or_else(|| Error::InvalidInput(format!("property `{property}` not in schema")))?;
    if matching_pairs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 matching pairs, got {}",
            matching_pairs.len()
        )));
    }
    let mut ratios = ratios_for(matching_pairs, column)?;
    ratios.sort_by(f64::total_cmp);
    let r_g = median(&ratios);
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let sigma = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();

    let scale = if opts.relative { r_g } else { 1.0 };
    // (reported epsilon, absolute tolerance) pairs
    let grid: Vec<(f64, f64)> = if opts.epsilon_grid.is_empty() {
        let spread = ratios.iter().map(|r| (r - r_g).abs()).fold(0.0, f64::max);
        let steps = opts.grid_points.max(2) - 1;
        (0..=steps)
            .map(|i| {
                // the last point covers the widest deviation exactly
                let abs = if i == steps { spread } else { spread * i as f64 / steps as f64 };
                (abs / scale, abs)
            })
            .collect()
    } else {
        let mut g = opts.epsilon_grid.clone();
        g.sort_by(f64::total_cmp);
        g.into_iter().map(|e| (e, e * scale)).collect()
    };
    let curve = grid
        .into_iter()
        .map(|(eps, abs)| (eps, DiscrepancyProfile::delta_at(&ratios, r_g, abs)))
        .collect();
    Ok(DiscrepancyProfile {
        property_name: property.to_string(),
        r_g,
        sigma,
        curve,
    })
}

/// Fixed-width histogram; bin `i` is centred on `i * bin_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: BTreeMap<i64, usize>,
}

impl Histogram {
    pub fn new(bin_width: f64, values: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = BTreeMap::new();
        for v in values {
            let bin = (v / bin_width).round() as i64;
            *counts.entry(bin).or_default() += 1;
        }
        Self { bin_width, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn center(&self, bin: i64) -> f64 {
        bin as f64 * self.bin_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioDistribution {
    pub property_name: String,
    pub matches: Histogram,
    pub non_matches: Histogram,
}

impl RatioDistribution {
    /// `bin_center,match_count,non_match_count` rows over the union of bins.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["property", "bin_center", "match_count", "non_match_count"])?;
        let bins: std::collections::BTreeSet<i64> = self
            .matches
            .counts
            .keys()
            .chain(self.non_matches.counts.keys())
            .copied()
            .collect();
        for b in bins {
            wtr.write_record([
                self.property_name.clone(),
                self.matches.center(b).to_string(),
                self.matches.counts.get(&b).copied().unwrap_or(0).to_string(),
                self.non_matches.counts.get(&b).copied().unwrap_or(0).to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Match / non-match histograms of one property's ratios. Unlabeled pairs are ignored.
pub fn ratio_distribution(
    pairs: &[PairFeatureVector],
    schema: &PropertySchema,
    property: &str,
    bin_width: f64,
) -> Result<RatioDistribution> {
    let column = schema
        .position_by_name(property)
        .ok_or_else(|| Error::InvalidInput(format!("property `{property}` not in schema")))?;
    if bin_width.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidInput("bin width must be positive".into()));
    }
    let pick = |want: Label| -> Result<Vec<f64>> {
        let chosen: Vec<PairFeatureVector> =
            pairs.iter().filter(|p| p.label == Some(want)).cloned().collect();
        ratios_for(&chosen, column)
    };
    Ok(RatioDistribution {
        property_name: property.to_string(),
        matches: Histogram::new(bin_width, pick(Label::Match)?),
        non_matches: Histogram::new(bin_width, pick(Label::NonMatch)?),
    })
}

fn label_str(l: Option<Label>) -> &'static str {
    match l {
        Some(Label::Match) => "1",
        Some(Label::NonMatch) => "0",
        None => "",
    }
}

/// `candidate_id,index_id,label,<schema features>`.
pub fn write_pair_csv<W: Write>(w: W, schema: &PropertySchema, pairs: &[PairFeatureVector]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["candidate_id", "index_id", "label"];
    header.extend(schema.names());
    wtr.write_record(&header)?;
    for p in pairs {
        if p.values.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "pair ({}, {}) has {} features, schema has {}",
                p.candidate_id,
                p.index_id,
                p.values.len(),
                schema.len()
            )));
        }
        let mut rec = vec![p.candidate_id.clone(), p.index_id.clone(), label_str(p.label).to_string()];
        rec.extend(p.values.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_pair_csv<R: Read>(r: R) -> Result<(PropertySchema, Vec<PairFeatureVector>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().take(3).collect::<Vec<_>>() != ["candidate_id", "index_id", "label"] {
        return Err(Error::Schema("pair CSV must start with candidate_id,index_id,label".into()));
    }
    let names: Vec<&str> = header.iter().skip(3).collect();
    let schema = PropertySchema::from_names(&names)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let label = match rec.get(2).unwrap_or_default() {
            "1" => Some(Label::Match),
            "0" => Some(Label::NonMatch),
            "" => None,
            other => return Err(Error::Schema(format!("bad label `{other}`"))),
        };
        let values = rec
            .iter()
            .skip(3)
            .map(|s| s.parse::<f64>().map_err(|e| Error::Schema(format!("bad number `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(PairFeatureVector {
            candidate_id: rec.get(0).unwrap_or_default().to_string(),
            index_id: rec.get(1).unwrap_or_default().to_string(),
            values,
            label,
        });
    }
    Ok((schema, out))
}
