//! Per-group micro metrics and pairwise group gaps.
//!
//! Parity is the predicted-positive rate over a group's (instance, label)
//! pairs. Reported metrics are rounded half-to-even to two decimals, and gaps
//! are absolute differences of the rounded metrics, so tables built from the
//! report are internally consistent.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::datagen::{Ethnicity, Gender, LabeledNote};
use crate::error::{Error, Result};
pub use crate::metrics::ConfusionCounts;
use crate::metrics::PredictionRecord;

pub const DECIMALS: i32 = 2;
pub const METRIC_NAMES: [&str; 3] = ["f1", "parity", "recall"];

/// Rounds half-to-even at `decimals` places.
pub fn round_half_even(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let scaled = x * scale;
    // Snap values that are a hair off a representable tie, e.g. 0.125 * 100.
    let snapped = if (scaled - scaled.round()).abs() < 1e-9 {
        scaled.round()
    } else if ((scaled - scaled.trunc()).abs() - 0.5).abs() < 1e-9 {
        scaled.trunc() + 0.5f64.copysign(scaled)
    } else {
        scaled
    };
    snapped.round_ties_even() / scale
}

pub fn gap(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

/// A demographic attribute with a fixed enumeration of comparable groups.
pub trait GroupAttribute: Copy + Ord + 'static {
    const KEY: &'static str;
    fn comparable() -> &'static [Self];
    fn name(self) -> &'static str;
}

impl GroupAttribute for Gender {
    const KEY: &'static str = "gender";
    fn comparable() -> &'static [Self] {
        &Gender::GROUPS
    }
    fn name(self) -> &'static str {
        self.as_str()
    }
}

impl GroupAttribute for Ethnicity {
    const KEY: &'static str = "ethnicity";
    fn comparable() -> &'static [Self] {
        &Ethnicity::GROUPS
    }
    fn name(self) -> &'static str {
        self.as_str()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub instances: usize,
    pub counts: ConfusionCounts,
    pub f1: f64,
    pub parity: f64,
    pub recall: f64,
}

impl GroupMetrics {
    pub fn from_counts(counts: ConfusionCounts, instances: usize) -> Self {
        Self {
            instances,
            counts,
            f1: round_half_even(counts.f1(), DECIMALS),
            parity: round_half_even(counts.parity(), DECIMALS),
            recall: round_half_even(counts.recall(), DECIMALS),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "f1" => Some(self.f1),
            "parity" => Some(self.parity),
            "recall" => Some(self.recall),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub a: String,
    pub b: String,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub key: String,
    /// Comparable groups with at least one instance.
    pub groups: BTreeMap<String, GroupMetrics>,
    /// Comparable groups with no instances.
    pub absent: Vec<String>,
    /// Instances outside the enumeration; excluded from gaps.
    pub other: Option<GroupMetrics>,
    /// Per metric, every unordered pair of present groups.
    pub gaps: BTreeMap<String, Vec<PairGap>>,
    pub max_gap: BTreeMap<String, f64>,
}

impl GroupReport {
    /// Builds the report from per-group counts, listed in enumeration order.
    pub fn from_counts(
        key: &str,
        groups: &[(String, Option<(ConfusionCounts, usize)>)],
        other: Option<(ConfusionCounts, usize)>,
    ) -> Self {
        let mut present = Vec::new();
        let mut absent = Vec::new();
        for (name, data) in groups {
            match data {
                Some((c, n)) if *n > 0 => present.push((name.clone(), GroupMetrics::from_counts(*c, *n))),
                _ => absent.push(name.clone()),
            }
        }
        let mut gaps = BTreeMap::new();
        let mut max_gap = BTreeMap::new();
        for metric in METRIC_NAMES {
            let mut pairs = Vec::new();
            for i in 0..present.len() {
                for j in i + 1..present.len() {
                    let (a, ma) = &present[i];
                    let (b, mb) = &present[j];
                    let g = gap(ma.metric(metric).unwrap(), mb.metric(metric).unwrap());
                    pairs.push(PairGap {
                        a: a.clone(),
                        b: b.clone(),
                        gap: round_half_even(g, DECIMALS),
                    });
                }
            }
            if let Some(m) = pairs.iter().map(|p| p.gap).reduce(f64::max) {
                max_gap.insert(metric.to_owned(), m);
            }
            gaps.insert(metric.to_owned(), pairs);
        }
        Self {
            key: key.to_owned(),
            groups: present.into_iter().collect(),
            absent,
            other: other.filter(|(_, n)| *n > 0).map(|(c, n)| GroupMetrics::from_counts(c, n)),
            gaps,
            max_gap,
        }
    }

    /// Gap for one metric between two groups, in either order; `None` if a
    /// group is absent.
    pub fn gap(&self, metric: &str, a: &str, b: &str) -> Option<f64> {
        if a == b {
            return self.groups.contains_key(a).then_some(0.0);
        }
        self.gaps.get(metric)?.iter().find_map(|p| {
            ((p.a == a && p.b == b) || (p.a == b && p.b == a)).then_some(p.gap)
        })
    }
}

/// Per-group report from binary prediction and gold matrices and one group
/// label per instance.
pub fn group_gaps<G: GroupAttribute>(pred: &[Vec<u8>], gold: &[Vec<u8>], groups: &[G]) -> Result<GroupReport> {
    if groups.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} group labels for {} instances",
            groups.len(),
            pred.len()
        )));
    }
    crate::metrics::confusion(pred, gold)?;
    let mut per: BTreeMap<G, (ConfusionCounts, usize)> = BTreeMap::new();
    let mut other = (ConfusionCounts::default(), 0usize);
    for ((p, g), &grp) in pred.iter().zip(gold).zip(groups) {
        let slot = if G::comparable().contains(&grp) {
            per.entry(grp).or_default()
        } else {
            &mut other
        };
        for (&a, &b) in p.iter().zip(g) {
            slot.0.add_pair(a, b);
        }
        slot.1 += 1;
    }
    let listed: Vec<(String, Option<(ConfusionCounts, usize)>)> = G::comparable()
        .iter()
        .map(|g| (g.name().to_owned(), per.get(g).copied()))
        .collect();
    Ok(GroupReport::from_counts(G::KEY, &listed, Some(other)))
}

/// Fairness audit of one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessAudit {
    pub overall: GroupMetrics,
    pub gender: GroupReport,
    pub ethnicity: GroupReport,
}

/// Joins predictions with note demographics by admission id.
pub fn audit(predictions: &[PredictionRecord], notes: &[LabeledNote]) -> Result<FairnessAudit> {
    let by_id: HashMap<u64, &LabeledNote> = notes.iter().map(|n| (n.admission_id, n)).collect();
    let mut pred = Vec::with_capacity(predictions.len());
    let mut gold = Vec::with_capacity(predictions.len());
    let mut genders = Vec::with_capacity(predictions.len());
    let mut ethnicities = Vec::with_capacity(predictions.len());
    for p in predictions {
        let note = by_id
            .get(&p.admission_id)
            .ok_or_else(|| Error::Data(format!("prediction for unknown admission {}", p.admission_id)))?;
        pred.push(p.predicted.clone());
        gold.push(p.gold.clone());
        genders.push(note.gender);
        ethnicities.push(note.ethnicity);
    }
    if pred.is_empty() {
        return Err(Error::Data("no predictions to audit".into()));
    }
    let overall = GroupMetrics::from_counts(crate::metrics::confusion(&pred, &gold)?, pred.len());
    Ok(FairnessAudit {
        overall,
        gender: group_gaps(&pred, &gold, &genders)?,
        ethnicity: group_gaps(&pred, &gold, &ethnicities)?,
    })
}

/// One block of a plain-text fairness table: a model, a DP flag and a report.
pub struct TableBlock<'a> {
    pub model: &'a str,
    pub dp: bool,
    pub report: &'a GroupReport,
}

/// Aligned text table with columns Model, DP, Group, F1, Parity, Recall.
pub fn render_table(blocks: &[TableBlock<'_>]) -> String {
    let mut rows: Vec<[String; 6]> = vec![["Model", "DP", "Group", "F1", "Parity", "Recall"].map(str::to_owned)];
    for b in blocks {
        for (name, m) in &b.report.groups {
            rows.push([
                b.model.to_owned(),
                if b.dp { "True" } else { "False" }.to_owned(),
                capitalize(name),
                format!("{:.2}", m.f1),
                format!("{:.2}", m.parity),
                format!("{:.2}", m.recall),
            ]);
        }
        for name in &b.report.absent {
            rows.push([
                b.model.to_owned(),
                if b.dp { "True" } else { "False" }.to_owned(),
                capitalize(name),
                "absent".into(),
                "absent".into(),
                "absent".into(),
            ]);
        }
    }
    let widths: Vec<usize> = (0..6).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| if c < 3 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 10));
            out.push('\n');
        }
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_even() {
        assert_eq!(round_half_even(0.125, 2), 0.12);
        assert_eq!(round_half_even(0.135, 2), 0.14);
        assert_eq!(round_half_even(0.7349, 2), 0.73);
        assert_eq!(round_half_even(0.04000000001, 2), 0.04);
    }

    #[test]
    fn other_group_is_excluded_from_gaps() {
        let pred = vec![vec![1, 0], vec![0, 0], vec![1, 1]];
        let gold = vec![vec![1, 0], vec![1, 0], vec![1, 1]];
        let groups = [Ethnicity::White, Ethnicity::Other, Ethnicity::White];
        let r = group_gaps(&pred, &gold, &groups).unwrap();
        assert_eq!(r.groups.len(), 1);
        assert_eq!(r.absent, vec!["black", "hispanic", "asian"]);
        assert_eq!(r.other.unwrap().instances, 1);
        assert!(r.gaps["f1"].is_empty());
        assert!(r.max_gap.is_empty());
        assert_eq!(r.gap("f1", "white", "black"), None);
        assert_eq!(r.gap("f1", "white", "white"), Some(0.0));
    }

    #[test]
    fn table_has_one_row_per_group() {
        let pred = vec![vec![1], vec![0]];
        let gold = vec![vec![1], vec![1]];
        let r = group_gaps(&pred, &gold, &[Gender::Male, Gender::Female]).unwrap();
        let text = render_table(&[TableBlock { model: "m", dp: true, report: &r }]);
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("Male") && text.contains("1.00"));
    }
}
