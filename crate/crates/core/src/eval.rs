//! Blocking and matching metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bkafi::CandidateSet;
use crate::error::{Error, Result};
use crate::matcher::Prediction;

/// Clean-clean ground truth: at most one index match per candidate and at
/// most one candidate per index mesh.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    matches: BTreeMap<String, String>,
    candidates_without_match: BTreeSet<String>,
}

impl GroundTruth {
    /// `pairs` maps candidate id to index id. Every candidate in
    /// `all_candidates` without an entry is recorded as unmatched.
    pub fn from_pairs(
        pairs: BTreeMap<String, String>,
        all_candidates: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for idx in pairs.values() {
            if !seen.insert(idx.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "index mesh `{idx}` is matched by more than one candidate"
                )));
            }
        }
        let candidates_without_match = all_candidates
            .into_iter()
            .filter(|c| !pairs.contains_key(c))
            .collect();
        Ok(Self {
            matches: pairs,
            candidates_without_match,
        })
    }

    pub fn matches(&self) -> &BTreeMap<String, String> {
        &self.matches
    }

    pub fn candidates_without_match(&self) -> &BTreeSet<String> {
        &self.candidates_without_match
    }

    pub fn match_of(&self, candidate_id: &str) -> Option<&str> {
        self.matches.get(candidate_id).map(String::as_str)
    }

    pub fn is_match(&self, candidate_id: &str, index_id: &str) -> bool {
        self.match_of(candidate_id) == Some(index_id)
    }

    pub fn n_matches(&self) -> usize {
        self.matches.len()
    }

    /// All candidate ids, matched or not, in sorted order.
    pub fn candidate_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .matches
            .keys()
            .chain(self.candidates_without_match.iter())
            .map(String::as_str)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Truth over a subset of candidates.
    pub fn restrict_to<'a>(&self, candidate_ids: impl IntoIterator<Item = &'a str>) -> Self {
        let mut out = Self::default();
        for c in candidate_ids {
            match self.matches.get(c) {
                Some(i) => {
                    out.matches.insert(c.to_string(), i.clone());
                }
                None => {
                    out.candidates_without_match.insert(c.to_string());
                }
            }
        }
        out
    }

    /// `candidate_id,index_id` rows, sorted by candidate id.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["candidate_id", "index_id"])?;
        for (c, i) in &self.matches {
            wtr.write_record([c, i])?;
        }
        wtr.flush().map_err(|e| Error::io("<truth csv>", e))?;
        Ok(())
    }

    /// Reads match pairs; candidates absent from the file are unmatched.
    pub fn read_csv<R: Read>(r: R, all_candidates: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut pairs = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let (Some(c), Some(i)) = (rec.get(0), rec.get(1)) else {
                return Err(Error::Schema("truth row needs candidate_id and index_id".into()));
            };
            if pairs.insert(c.to_string(), i.to_string()).is_some() {
                return Err(Error::InvalidInput(format!("candidate `{c}` listed twice in truth")));
            }
        }
        Self::from_pairs(pairs, all_candidates)
    }
}

/// Metrics are percentages in `[0, 100]` except `rr_k` and `pc_k`, which are
/// fractions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rr: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub pc_at_k: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rr_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pc_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub precision_undefined: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub recall_undefined: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index_build_s: Option<f64>,
}

impl MetricsReport {
    /// Range and harmonic-mean checks.
    pub fn check(&self) -> Result<()> {
        let pct = [self.pc, self.rr, self.precision, self.recall, self.f1];
        for v in pct.into_iter().flatten().chain(self.pc_at_k.values().copied()) {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::InvalidInput(format!("metric {v} outside [0, 100]")));
            }
        }
        if let (Some(p), Some(r), Some(f)) = (self.precision, self.recall, self.f1) {
            let expect = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            if (expect - f).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "f1 {f} is not the harmonic mean of {p} and {r}"
                )));
            }
        }
        Ok(())
    }

    /// Aligned two-column text table.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = Vec::new();
        let mut push = |name: &str, v: Option<f64>, prec: usize| {
            if let Some(v) = v {
                rows.push((name.to_string(), format!("{v:.prec$}")));
            }
        };
        push("PC", self.pc, 4);
        push("RR", self.rr, 6);
        push("RR_k", self.rr_k, 6);
        push("PC_k", self.pc_k, 6);
        push("precision", self.precision, 4);
        push("recall", self.recall, 4);
        push("F1", self.f1, 4);
        push("wall_time_s", self.wall_time_s, 3);
        push("index_build_s", self.index_build_s, 3);
        for (k, v) in &self.pc_at_k {
            rows.push((format!("PC@{k}"), format!("{v:.4}")));
        }
        if let Some(n) = self.n_pairs {
            rows.push(("pairs".into(), n.to_string()));
        }
        if self.precision_undefined {
            rows.push(("precision_undefined".into(), "true".into()));
        }
        if self.recall_undefined {
            rows.push(("recall_undefined".into(), "true".into()));
        }
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(n, v)| format!("{n:<width$}  {v:>12}\n"))
            .collect()
    }
}

/// `100 * (1 - pairs / (n_candidates * n_index))`.
pub fn reduction_ratio(n_pairs: usize, n_candidates: usize, n_index: usize) -> f64 {
    let total = n_candidates as f64 * n_index as f64;
    if total == 0.0 {
        return 100.0;
    }
    100.0 * (1.0 - n_pairs as f64 / total)
}

/// 1-based rank of the true match in each matched candidate's list; `None`
/// when the match was not retrieved.
fn match_ranks(cands: &CandidateSet, truth: &GroundTruth) -> Vec<Option<usize>> {
    let mut rank_of: HashMap<(&str, &str), usize> = HashMap::with_capacity(cands.pairs.len());
    for p in &cands.pairs {
        rank_of.insert((p.candidate_id.as_str(), p.index_id.as_str()), p.rank);
    }
    truth
        .matches()
        .iter()
        .map(|(c, i)| rank_of.get(&(c.as_str(), i.as_str())).copied())
        .collect()
}

/// PC with each candidate's list truncated at rank `k`, as a percentage.
pub fn pc_at_k(cands: &CandidateSet, truth: &GroundTruth, k: usize) -> Result<f64> {
    if truth.n_matches() == 0 {
        return Err(Error::Undefined("pair completeness needs at least one true match".into()));
    }
    let hits = match_ranks(cands, truth)
        .into_iter()
        .filter(|r| r.is_some_and(|r| r <= k))
        .count();
    Ok(100.0 * hits as f64 / truth.n_matches() as f64)
}

/// The k values reported in `pc_at_k`.
fn reported_ks(k_max: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [1, 2, 3, 5, 10, 20, 50, 100]
        .into_iter()
        .filter(|&k| k < k_max)
        .collect();
    ks.push(k_max);
    ks
}

/// PC, RR and PC@k for a candidate set. `truth` should be restricted to the
/// queried candidates; unmatched candidates count toward RR only.
pub fn blocking_metrics(
    cands: &CandidateSet,
    truth: &GroundTruth,
    n_candidates: usize,
    n_index: usize,
) -> Result<MetricsReport> {
    if truth.n_matches() == 0 {
        return Err(Error::Undefined("pair completeness needs at least one true match".into()));
    }
    let ranks = match_ranks(cands, truth);
    let n = truth.n_matches() as f64;
    let retrieved = ranks.iter().filter(|r| r.is_some()).count();
    let mut report = MetricsReport {
        pc: Some(100.0 * retrieved as f64 / n),
        rr: Some(reduction_ratio(cands.pairs.len(), n_candidates, n_index)),
        n_pairs: Some(cands.pairs.len()),
        ..Default::default()
    };
    if cands.k > 0 {
        for k in reported_ks(cands.k) {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
            report.pc_at_k.insert(k, 100.0 * hits as f64 / n);
        }
    }
    Ok(report)
}

/// `(RR_k, PC_k)` as fractions: `1 - |pruned| / (k * n_candidates)` and
/// `PC(pruned) / PC(unpruned)`.
pub fn pruning_metrics(
    pruned: &CandidateSet,
    unpruned: &CandidateSet,
    truth: &GroundTruth,
    n_candidates: usize,
) -> Result<(f64, f64)> {
    if pruned.k != unpruned.k {
        return Err(Error::InvalidInput(format!(
            "pruned run used k={} but unpruned used k={}",
            pruned.k, unpruned.k
        )));
    }
    let pc_full = pc_at_k(unpruned, truth, usize::MAX)?;
    if pc_full == 0.0 {
        return Err(Error::Undefined("unpruned run retrieved no true match".into()));
    }
    let pc_pruned = pc_at_k(pruned, truth, usize::MAX)?;
    let budget = pruned.k as f64 * n_candidates as f64;
    let rr_k = if budget > 0.0 {
        1.0 - pruned.pairs.len() as f64 / budget
    } else {
        0.0
    };
    Ok((rr_k, pc_pruned / pc_full))
}

/// Binary precision, recall and F1 over the predicted pairs, labelled by
/// `truth`. Undefined precision or recall is reported as 0 with a flag.
pub fn matching_metrics(predictions: &[Prediction], truth: &GroundTruth) -> MetricsReport {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for p in predictions {
        let actual = truth.is_match(&p.candidate_id, &p.index_id);
        match (p.label.is_match(), actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            (0.0, true)
        } else {
            (100.0 * num as f64 / den as f64, false)
        }
    };
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let (recall, recall_undefined) = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricsReport {
        precision: Some(precision),
        recall: Some(recall),
        f1: Some(f1),
        precision_undefined,
        recall_undefined,
        n_pairs: Some(predictions.len()),
        ..Default::default()
    }
}

/// One point of a PC-vs-RR (or PC_k-vs-RR_k) curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub pc: f64,
    pub rr: f64,
}

/// PC and RR for every k in `1..=cands.k`, from a single run at the largest k.
pub fn pc_rr_curve(
    cands: &CandidateSet,
    truth: &GroundTruth,
    n_candidates: usize,
    n_index: usize,
) -> Result<Vec<CurvePoint>> {
    if truth.n_matches() == 0 {
        return Err(Error::Undefined("pair completeness needs at least one true match".into()));
    }
    let ranks = match_ranks(cands, truth);
    let n = truth.n_matches() as f64;
    Ok((1..=cands.k)
        .map(|k| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
            let size = cands.pairs.iter().filter(|p| p.rank <= k).count();
            CurvePoint {
                k,
                pc: 100.0 * hits as f64 / n,
                rr: reduction_ratio(size, n_candidates, n_index),
            }
        })
        .collect())
}

pub fn write_curve_csv<W: Write>(w: W, header: [&str; 3], points: &[CurvePoint]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    for p in points {
        wtr.write_record([p.k.to_string(), format!("{:.6}", p.pc), format!("{:.6}", p.rr)])?;
    }
    wtr.flush().map_err(|e| Error::io("<curve csv>", e))?;
    Ok(())
}

/// Normalized trapezoidal area under a PC@k series sampled at k = 1, 2, ...
/// Returns a value on the same scale as the inputs.
pub fn auc_pc_at_k(series: &[f64]) -> f64 {
    match series.len() {
        0 => 0.0,
        1 => series[0],
        n => {
            let area: f64 = series.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
            area / (n - 1) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bkafi::CandidatePair;
    use crate::pairs::Label;

    fn truth(pairs: &[(&str, &str)], unmatched: &[&str]) -> GroundTruth {
        let map = pairs.iter().map(|(c, i)| (c.to_string(), i.to_string())).collect();
        let all = pairs
            .iter()
            .map(|(c, _)| c.to_string())
            .chain(unmatched.iter().map(|s| s.to_string()));
        GroundTruth::from_pairs(map, all).unwrap()
    }

    fn cset(k: usize, lists: &[(&str, &[&str])]) -> CandidateSet {
        let mut pairs = Vec::new();
        for (c, idx) in lists {
            for (r, i) in idx.iter().enumerate() {
                pairs.push(CandidatePair {
                    candidate_id: c.to_string(),
                    index_id: i.to_string(),
                    distance: r as f64,
                    rank: r + 1,
                });
            }
        }
        CandidateSet { pairs, k, pruned: false }
    }

    #[test]
    fn rr_matches_published_arithmetic() {
        let rr = reduction_ratio(20 * 3507, 3507, 9985);
        assert!((rr - 99.7997).abs() < 1e-4, "{rr}");
    }

    #[test]
    fn full_cross_product_and_empty() {
        let t = truth(&[("a", "x"), ("b", "y")], &[]);
        let full = cset(2, &[("a", &["x", "y"]), ("b", &["x", "y"])]);
        let m = blocking_metrics(&full, &t, 2, 2).unwrap();
        assert_eq!(m.rr, Some(0.0));
        assert_eq!(m.pc, Some(100.0));
        let empty = cset(1, &[]);
        let m = blocking_metrics(&empty, &t, 2, 2).unwrap();
        assert_eq!(m.rr, Some(100.0));
        assert_eq!(m.pc, Some(0.0));
        let none = truth(&[], &["a"]);
        assert!(matches!(blocking_metrics(&empty, &none, 1, 2), Err(Error::Undefined(_))));
    }

    #[test]
    fn pc_at_k_truncates_and_ignores_unmatched() {
        let t = truth(&[("a", "x"), ("b", "y")], &["c"]);
        let cs = cset(2, &[("a", &["x", "z"]), ("b", &["z", "y"]), ("c", &["x", "y"])]);
        let m = blocking_metrics(&cs, &t, 3, 3).unwrap();
        assert_eq!(m.pc_at_k[&1], 50.0);
        assert_eq!(m.pc_at_k[&2], 100.0);
        m.check().unwrap();
    }

    #[test]
    fn pruning_identity() {
        let t = truth(&[("a", "x"), ("b", "y")], &[]);
        let cs = cset(2, &[("a", &["x", "z"]), ("b", &["y"])]);
        let (rr_k, pc_k) = pruning_metrics(&cs, &cs, &t, 2).unwrap();
        assert_eq!(pc_k, 1.0);
        assert!((rr_k - (1.0 - 3.0 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn pruning_needs_retrieved_match() {
        let t = truth(&[("a", "x")], &[]);
        let cs = cset(1, &[("a", &["z"])]);
        assert!(pruning_metrics(&cs, &cs, &t, 1).is_err());
    }

    fn pred(c: &str, i: &str, m: bool) -> Prediction {
        Prediction {
            candidate_id: c.into(),
            index_id: i.into(),
            probability: if m { 1.0 } else { 0.0 },
            label: Label::from_bool(m),
        }
    }

    #[test]
    fn matching_boundaries() {
        let t = truth(&[("a", "x"), ("b", "y")], &[]);
        let perfect = [pred("a", "x", true), pred("a", "y", false), pred("b", "y", true)];
        let m = matching_metrics(&perfect, &t);
        assert_eq!((m.precision, m.recall, m.f1), (Some(100.0), Some(100.0), Some(100.0)));
        let negative = [pred("a", "x", false), pred("b", "y", false)];
        let m = matching_metrics(&negative, &t);
        assert!(m.precision_undefined);
        assert_eq!((m.precision, m.recall, m.f1), (Some(0.0), Some(0.0), Some(0.0)));
        let m = matching_metrics(&[], &t);
        m.check().unwrap();
    }

    #[test]
    fn f1_identity_is_checked() {
        let bad = MetricsReport {
            precision: Some(50.0),
            recall: Some(100.0),
            f1: Some(70.0),
            ..Default::default()
        };
        assert!(bad.check().is_err());
    }

    #[test]
    fn truth_rejects_shared_index_match() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), "x".to_string());
        m.insert("b".to_string(), "x".to_string());
        assert!(GroundTruth::from_pairs(m, Vec::new()).is_err());
    }

    #[test]
    fn truth_csv_round_trip() {
        let t = truth(&[("b", "y"), ("a", "x")], &["c"]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "candidate_id,index_id\na,x\nb,y\n");
        let back = GroundTruth::read_csv(&buf[..], ["a", "b", "c"].map(String::from)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn curve_and_auc() {
        let t = truth(&[("a", "x"), ("b", "y")], &[]);
        let cs = cset(2, &[("a", &["x", "z"]), ("b", &["z", "y"])]);
        let c = pc_rr_curve(&cs, &t, 2, 3).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].pc, 50.0);
        assert!(c[0].rr > c[1].rr);
        assert_eq!(auc_pc_at_k(&[50.0, 100.0]), 75.0);
    }
}
