//! Scoring of proposal sequences: validity, novelty and recovery rates,
//! recovery curves, pattern entropy, creativity measures and aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{Assessment, Difficulty, Outcome, TaskKind};

/// Failure taxonomy, in precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ParseFailure,
    ConstraintViolation,
    Invalid,
    DuplicateExact,
    DuplicateCanonical,
    ValidNovel,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::ParseFailure,
        Category::ConstraintViolation,
        Category::Invalid,
        Category::DuplicateExact,
        Category::DuplicateCanonical,
        Category::ValidNovel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::ParseFailure => "parse_failure",
            Category::ConstraintViolation => "constraint_violation",
            Category::Invalid => "invalid",
            Category::DuplicateExact => "duplicate_exact",
            Category::DuplicateCanonical => "duplicate_canonical",
            Category::ValidNovel => "valid_novel",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One scored proposal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalRecord {
    /// 1-based position in the run.
    pub index: usize,
    pub raw: String,
    pub canonical: Option<String>,
    pub category: Category,
    pub valid: bool,
    /// Key not seen at any earlier index.
    pub novel: bool,
}

/// Novelty key: the canonical form when the proposal parsed, else its raw text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoveltyKey<'a> {
    Canonical(&'a str),
    Raw(&'a str),
}

impl ProposalRecord {
    pub fn key(&self) -> NoveltyKey<'_> {
        match &self.canonical {
            Some(c) => NoveltyKey::Canonical(c),
            None => NoveltyKey::Raw(&self.raw),
        }
    }

    /// Pattern used for entropy: canonical form, or raw text if unparseable.
    pub fn pattern(&self) -> &str {
        self.canonical.as_deref().unwrap_or(&self.raw)
    }
}

/// Whether `record` has a key absent from every earlier record.
pub fn is_novel(record: &ProposalRecord, earlier: &[ProposalRecord]) -> bool {
    let key = record.key();
    earlier.iter().all(|e| e.key() != key)
}

/// Incremental classifier for a run, in emission order.
#[derive(Debug, Default, Clone)]
pub struct RunClassifier {
    canonical_seen: HashSet<String>,
    raw_seen: HashSet<String>,
    unparsed_seen: HashSet<String>,
    records: Vec<ProposalRecord>,
}

impl RunClassifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, raw: &str, assessment: &Assessment) -> &ProposalRecord {
        let novel = match &assessment.canonical {
            Some(c) => !self.canonical_seen.contains(c),
            None => !self.unparsed_seen.contains(raw),
        };
        let valid = assessment.outcome == Outcome::Valid;
        let category = match assessment.outcome {
            Outcome::ParseFailure(_) => Category::ParseFailure,
            Outcome::ConstraintViolation(_) => Category::ConstraintViolation,
            Outcome::Invalid => Category::Invalid,
            Outcome::Valid if novel => Category::ValidNovel,
            Outcome::Valid if self.raw_seen.contains(raw) => Category::DuplicateExact,
            Outcome::Valid => Category::DuplicateCanonical,
        };
        match &assessment.canonical {
            Some(c) => self.canonical_seen.insert(c.clone()),
            None => self.unparsed_seen.insert(raw.to_string()),
        };
        self.raw_seen.insert(raw.to_string());
        self.records.push(ProposalRecord {
            index: self.records.len() + 1,
            raw: raw.to_string(),
            canonical: assessment.canonical.clone(),
            category,
            valid,
            novel,
        });
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[ProposalRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ProposalRecord> {
        self.records
    }
}

/// Classifies a whole run of assessed emissions.
pub fn classify_run<'a>(
    items: impl IntoIterator<Item = (&'a str, &'a Assessment)>,
) -> Vec<ProposalRecord> {
    let mut c = RunClassifier::new();
    for (raw, a) in items {
        c.push(raw, a);
    }
    c.into_records()
}

/// The admissible set H_O, either listed by canonical form or only counted.
///
/// A counted set is used when validity already implies membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdmissibleSet {
    Enumerated(BTreeSet<String>),
    Counted(u64),
}

impl AdmissibleSet {
    pub fn size(&self) -> u64 {
        match self {
            AdmissibleSet::Enumerated(s) => s.len() as u64,
            AdmissibleSet::Counted(n) => *n,
        }
    }

    fn admits(&self, record: &ProposalRecord) -> bool {
        record.valid
            && match (self, &record.canonical) {
                (AdmissibleSet::Enumerated(s), Some(c)) => s.contains(c),
                (AdmissibleSet::Enumerated(_), None) => false,
                (AdmissibleSet::Counted(_), _) => true,
            }
    }

    fn nonempty_size(&self) -> Result<u64> {
        match self.size() {
            0 => Err(Error::InvalidParameters("admissible set is empty".into())),
            n => Ok(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n: usize,
    pub h_o_size: u64,
    pub vr: f64,
    pub nr: f64,
    pub rr: f64,
    /// `rr_at_k[k-1]` is the recovery rate after the first k proposals.
    pub rr_at_k: Vec<f64>,
    pub failure_counts: BTreeMap<Category, usize>,
    /// Fraction of H_O covered by distinct valid proposals.
    pub coverage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
}

impl MetricsSummary {
    pub fn count(&self, category: Category) -> usize {
        self.failure_counts.get(&category).copied().unwrap_or(0)
    }
}

/// Recovery curve: distinct admissible hypotheses found after each prefix,
/// divided by |H_O|.
pub fn rr_at_k(records: &[ProposalRecord], admissible: &AdmissibleSet) -> Result<Vec<f64>> {
    let size = admissible.nonempty_size()? as f64;
    let mut found = 0u64;
    Ok(records
        .iter()
        .map(|r| {
            if r.novel && admissible.admits(r) {
                found += 1;
            }
            found as f64 / size
        })
        .collect())
}

/// Distinct admissible hypotheses among valid proposals, over |H_O|.
pub fn coverage_fraction(records: &[ProposalRecord], admissible: &AdmissibleSet) -> Result<f64> {
    let size = admissible.nonempty_size()?;
    let distinct: HashSet<NoveltyKey<'_>> = records
        .iter()
        .filter(|r| admissible.admits(r))
        .map(|r| r.key())
        .collect();
    Ok(distinct.len() as f64 / size as f64)
}

pub fn score_run(records: &[ProposalRecord], admissible: &AdmissibleSet) -> Result<MetricsSummary> {
    if records.is_empty() {
        return Err(Error::EmptyRun);
    }
    let n = records.len();
    let valid = records.iter().filter(|r| r.valid).count();
    let novel = records.iter().filter(|r| r.novel).count();
    let curve = rr_at_k(records, admissible)?;
    let mut failure_counts: BTreeMap<Category, usize> =
        Category::ALL.iter().map(|&c| (c, 0)).collect();
    for r in records {
        *failure_counts.entry(r.category).or_default() += 1;
    }
    Ok(MetricsSummary {
        n,
        h_o_size: admissible.size(),
        vr: valid as f64 / n as f64,
        nr: novel as f64 / n as f64,
        rr: *curve.last().expect("nonempty run"),
        rr_at_k: curve,
        failure_counts,
        coverage: coverage_fraction(records, admissible)?,
        token_count: None,
    })
}

fn entropy_from_counts(mut counts: Vec<usize>, total: usize) -> f64 {
    // Fixed summation order keeps results bit-identical across runs.
    counts.sort_unstable();
    let t = total as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let c = c as f64;
            (c / t) * (t / c).log2()
        })
        .sum()
}

/// Shannon entropy (bits) of the empirical distribution of `patterns`.
pub fn pattern_entropy<K: Hash + Eq>(patterns: &[K]) -> Result<f64> {
    if patterns.is_empty() {
        return Err(Error::EmptyPrefix);
    }
    let mut counts: HashMap<&K, usize> = HashMap::new();
    for p in patterns {
        *counts.entry(p).or_default() += 1;
    }
    Ok(entropy_from_counts(
        counts.into_values().collect(),
        patterns.len(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub t: usize,
    pub entropy: f64,
    /// Change in entropy from the previous prefix; the empty prefix counts as 0.
    pub info_gain: f64,
}

/// Pattern entropy of every prefix and its first differences.
pub fn entropy_series<K: Hash + Eq>(patterns: &[K]) -> Vec<EntropyPoint> {
    // H_t = log2 t - (1/t) * sum c log2 c, with the sum kept incrementally.
    let mut counts: HashMap<&K, usize> = HashMap::new();
    let mut weighted = 0.0f64;
    let mut prev = 0.0f64;
    let clog = |c: usize| {
        if c == 0 {
            0.0
        } else {
            c as f64 * (c as f64).log2()
        }
    };
    patterns
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let t = i + 1;
            let c = counts.entry(p).or_default();
            weighted += clog(*c + 1) - clog(*c);
            *c += 1;
            let h = ((t as f64).log2() - weighted / t as f64).max(0.0);
            let point = EntropyPoint {
                t,
                entropy: h,
                info_gain: h - prev,
            };
            prev = h;
            point
        })
        .collect()
}

pub fn info_gain_series<K: Hash + Eq>(patterns: &[K]) -> Vec<f64> {
    entropy_series(patterns)
        .into_iter()
        .map(|p| p.info_gain)
        .collect()
}

/// Entropy patterns of a run.
pub fn run_patterns(records: &[ProposalRecord]) -> Vec<&str> {
    records.iter().map(ProposalRecord::pattern).collect()
}

/// Distribution over valid hypotheses used by the creativity measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Posterior {
    /// Frequency of each valid canonical form among the run's proposals.
    #[default]
    Empirical,
    /// Uniform over the admissible set.
    UniformAdmissible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Creativity {
    /// Hypotheses with posterior mass above the threshold.
    pub count: u64,
    /// Entropy (bits) of the posterior.
    pub entropy: f64,
}

pub fn creativity_measures(
    records: &[ProposalRecord],
    admissible: &AdmissibleSet,
    epsilon: f64,
    posterior: Posterior,
) -> Result<Creativity> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidParameters(format!(
            "threshold {epsilon} outside [0, 1)"
        )));
    }
    match posterior {
        Posterior::UniformAdmissible => {
            let size = admissible.nonempty_size()?;
            let p = 1.0 / size as f64;
            Ok(Creativity {
                count: if p > epsilon { size } else { 0 },
                entropy: (size as f64).log2(),
            })
        }
        Posterior::Empirical => {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for r in records.iter().filter(|r| r.valid) {
                *counts.entry(r.pattern()).or_default() += 1;
            }
            let total: usize = counts.values().sum();
            if total == 0 {
                return Ok(Creativity {
                    count: 0,
                    entropy: 0.0,
                });
            }
            let count = counts
                .values()
                .filter(|&&c| c as f64 / total as f64 > epsilon)
                .count() as u64;
            Ok(Creativity {
                count,
                entropy: entropy_from_counts(counts.into_values().collect(), total),
            })
        }
    }
}

/// Mean and sample standard deviation (n - 1 divisor; a single value has
/// deviation 0).
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyGroup("no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Formats rates in [0, 1] as `75.00% ± 35.36%`.
pub fn format_pct(mean: f64, std: f64) -> String {
    format!("{:.2}% ± {:.2}%", mean * 100.0, std * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    Vr,
    Nr,
    Rr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Vr, Metric::Nr, Metric::Rr];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Vr => "VR",
            Metric::Nr => "NR",
            Metric::Rr => "RR",
        }
    }

    pub fn of(self, s: &MetricsSummary) -> f64 {
        match self {
            Metric::Vr => s.vr,
            Metric::Nr => s.nr,
            Metric::Rr => s.rr,
        }
    }
}

/// Grouping key for aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupKey {
    pub task: TaskKind,
    pub difficulty: Difficulty,
    pub sampler: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub task: TaskKind,
    pub difficulty: Difficulty,
    pub sampler: String,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub instances: usize,
}

impl AggregateRow {
    pub fn formatted(&self) -> String {
        format_pct(self.mean, self.std)
    }
}

/// Mean and sample std of VR, NR and RR per (task, difficulty, sampler).
/// Rows are ordered by task, then difficulty, then sampler, then metric.
/// Values are combined in input order.
pub fn aggregate<'a>(
    runs: impl IntoIterator<Item = (GroupKey, &'a MetricsSummary)>,
) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&MetricsSummary>> = BTreeMap::new();
    for (k, s) in runs {
        groups.entry(k).or_default().push(s);
    }
    let mut rows = Vec::new();
    for (key, summaries) in groups {
        for metric in Metric::ALL {
            let values: Vec<f64> = summaries.iter().map(|s| metric.of(s)).collect();
            let (mean, std) = mean_std(&values).expect("group is nonempty");
            rows.push(AggregateRow {
                task: key.task,
                difficulty: key.difficulty.clone(),
                sampler: key.sampler.clone(),
                metric,
                mean,
                std,
                instances: values.len(),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn valid(c: &str) -> Assessment {
        Assessment {
            canonical: Some(c.to_string()),
            outcome: Outcome::Valid,
        }
    }

    fn parse_fail() -> Assessment {
        Assessment {
            canonical: None,
            outcome: Outcome::ParseFailure("x".into()),
        }
    }

    fn set(items: &[&str]) -> AdmissibleSet {
        AdmissibleSet::Enumerated(items.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn worked_example() {
        let h = valid("h");
        let bad = parse_fail();
        let recs = classify_run([("h", &h), ("h", &h), ("junk", &bad), ("h ", &h)]);
        let cats: Vec<Category> = recs.iter().map(|r| r.category).collect();
        assert_eq!(
            cats,
            vec![
                Category::ValidNovel,
                Category::DuplicateExact,
                Category::ParseFailure,
                Category::DuplicateCanonical
            ]
        );
        let s = score_run(&recs, &set(&["h", "g"])).unwrap();
        assert_eq!(s.vr, 0.75);
        assert_eq!(s.nr, 0.5);
        assert_eq!(s.rr, 0.5);
        assert_eq!(s.rr_at_k, vec![0.5; 4]);
        assert_eq!(s.count(Category::ParseFailure), 1);
    }

    #[test]
    fn unparseable_novelty_uses_raw_text() {
        let bad = parse_fail();
        let recs = classify_run([("a", &bad), ("a", &bad), ("b", &bad)]);
        assert_eq!(
            recs.iter().map(|r| r.novel).collect::<Vec<_>>(),
            vec![true, false, true]
        );
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(r.novel, is_novel(r, &recs[..i]));
        }
    }

    #[test]
    fn empty_run_is_an_error() {
        assert!(matches!(score_run(&[], &set(&["a"])), Err(Error::EmptyRun)));
        assert!(pattern_entropy::<&str>(&[]).is_err());
    }

    #[test]
    fn entropy_values() {
        let h = pattern_entropy(&["a", "a", "b"]).unwrap();
        assert!((h - 0.918_295_834_054_489_6).abs() < 1e-9);
        assert_eq!(pattern_entropy(&["a", "a"]).unwrap(), 0.0);
        let gains = info_gain_series(&["a", "b", "a", "c"]);
        assert_eq!(gains[0], 0.0);
        assert!((gains[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn creativity() {
        let a = valid("a");
        let b = valid("b");
        let recs = classify_run([("a", &a), ("a", &a), ("a", &a), ("b", &b)]);
        let adm = set(&["a", "b", "c", "d"]);
        let c = creativity_measures(&recs, &adm, 0.3, Posterior::Empirical).unwrap();
        assert_eq!(c.count, 1);
        let c = creativity_measures(&recs, &adm, 0.0, Posterior::Empirical).unwrap();
        assert_eq!(c.count, 2);
        let u = creativity_measures(&recs, &adm, 0.0, Posterior::UniformAdmissible).unwrap();
        assert_eq!((u.count, u.entropy), (4, 2.0));
        assert!(creativity_measures(&recs, &adm, 1.0, Posterior::Empirical).is_err());
    }

    #[test]
    fn aggregation_format() {
        let mk = |rr: f64| MetricsSummary {
            n: 1,
            h_o_size: 1,
            vr: 1.0,
            nr: 1.0,
            rr,
            rr_at_k: vec![rr],
            failure_counts: BTreeMap::new(),
            coverage: rr,
            token_count: None,
        };
        let (a, b) = (mk(0.5), mk(1.0));
        let key = GroupKey {
            task: TaskKind::Causal,
            difficulty: Difficulty::new(1, "nodes=4"),
            sampler: "s".into(),
        };
        let rows = aggregate([(key.clone(), &a), (key, &b)]);
        let rr = rows.iter().find(|r| r.metric == Metric::Rr).unwrap();
        assert_eq!(rr.formatted(), "75.00% ± 35.36%");
        assert_eq!(mean_std(&[0.3]).unwrap(), (0.3, 0.0));
        assert!(mean_std(&[]).is_err());
    }

    /// Reference scoring written directly from the definitions.
    fn brute_force(
        raws: &[String],
        assess: &[Assessment],
        adm: &BTreeSet<String>,
    ) -> (f64, f64, f64) {
        let n = raws.len() as f64;
        let key = |i: usize| match &assess[i].canonical {
            Some(c) => format!("c{c}"),
            None => format!("r{}", raws[i]),
        };
        let mut v = 0;
        let mut nov = 0;
        let mut rec = 0;
        for (i, a) in assess.iter().enumerate() {
            let fresh = (0..i).all(|j| key(j) != key(i));
            let ok = a.outcome == Outcome::Valid;
            v += ok as usize;
            nov += fresh as usize;
            if fresh && ok && adm.contains(a.canonical.as_ref().unwrap()) {
                rec += 1;
            }
        }
        (v as f64 / n, nov as f64 / n, rec as f64 / adm.len() as f64)
    }

    fn arb_assessment() -> impl Strategy<Value = (String, Assessment)> {
        // Small alphabets force collisions; raw text maps to one canonical
        // form by lowercasing, so exact and canonical duplicates both occur.
        prop_oneof![
            "[a-dA-D]".prop_map(|r| {
                let c = r.to_lowercase();
                (r, valid(&c))
            }),
            "[e-f]".prop_map(|r| {
                let c = r.clone();
                (
                    r,
                    Assessment {
                        canonical: Some(c),
                        outcome: Outcome::Invalid,
                    },
                )
            }),
            "[x-z]".prop_map(|r| (r, parse_fail())),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn invariants(items in prop::collection::vec(arb_assessment(), 1..5)) {
            // N <= |H_O| = 4 here, which RR <= NR requires.
            let adm: BTreeSet<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
            let raws: Vec<String> = items.iter().map(|(r, _)| r.clone()).collect();
            let assess: Vec<Assessment> = items.iter().map(|(_, a)| a.clone()).collect();
            let recs = classify_run(raws.iter().map(String::as_str).zip(assess.iter()));
            let s = score_run(&recs, &AdmissibleSet::Enumerated(adm.clone())).unwrap();
            for x in [s.vr, s.nr, s.rr] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            prop_assert!(s.rr <= s.nr + 1e-12);
            prop_assert_eq!(s.failure_counts.values().sum::<usize>(), s.n);
            for w in s.rr_at_k.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            prop_assert_eq!(s.rr_at_k[s.n - 1], s.rr);
            let (vr, nr, rr) = brute_force(&raws, &assess, &adm);
            prop_assert_eq!((s.vr, s.nr, s.rr), (vr, nr, rr));
            for (i, r) in recs.iter().enumerate() {
                prop_assert_eq!(r.novel, is_novel(r, &recs[..i]));
            }
        }

        #[test]
        fn entropy_bounds_and_telescoping(seq in prop::collection::vec(0u8..6, 1..60)) {
            let series = entropy_series(&seq);
            let mut sum = 0.0;
            for (t, p) in series.iter().enumerate() {
                let distinct = seq[..=t].iter().collect::<HashSet<_>>().len();
                prop_assert!(p.entropy >= -1e-12);
                prop_assert!(p.entropy <= (distinct as f64).log2() + 1e-12);
                let direct = pattern_entropy(&seq[..=t]).unwrap();
                prop_assert!((p.entropy - direct).abs() < 1e-12);
                sum += p.info_gain;
            }
            let total = pattern_entropy(&seq).unwrap();
            prop_assert!((sum - total).abs() < 1e-12);
        }
    }
}
