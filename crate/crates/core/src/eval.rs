//! Test-set scoring, accuracy tables, confusion matrices, the α sweep and
//! the t statistic used to compare approaches.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Gender;
use crate::pipeline::{decide, identify_gender, Decision, TrainedSystem, Utterance};
use crate::sphmm::{FusionWeight, LayerScores};

pub const REPORT_SCHEMA: &str = "sphmm-report v1";
pub const CONFUSION_SCHEMA: &str = "sphmm-confusion v1";
pub const SWEEP_SCHEMA: &str = "sphmm-alpha-sweep v1";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const REPORT_FILE: &str = "report.json";
pub const SWEEP_FILE: &str = "alpha_sweep.csv";
pub const DEFAULT_CRITICAL_VALUE: f64 = 1.645;

pub fn confusion_file(approach: u8) -> String {
    format!("confusion_approach{approach}.txt")
}

/// 0.0, 0.1, ..., 1.0.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Approach {
    /// Identified gender, then that gender's emotion models.
    GenderDependent = 1,
    /// Gender-independent emotion models.
    NoGender = 2,
    /// True gender, then that gender's emotion models.
    OracleGender = 3,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::GenderDependent, Approach::NoGender, Approach::OracleGender];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn description(self) -> &'static str {
        match self {
            Approach::GenderDependent => "gender-dependent emotion recognizer",
            Approach::NoGender => "emotion recognizer without gender information",
            Approach::OracleGender => "emotion recognizer with correct gender information",
        }
    }
}

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let m = labels.len();
        Self {
            labels,
            counts: vec![vec![0; m]; m],
        }
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "emotion",
                label: label.to_string(),
            })
    }

    pub fn record(&mut self, truth: &str, predicted: &str) -> Result<()> {
        let (i, j) = (self.index(truth)?, self.index(predicted)?);
        self.counts[i][j] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// `100 * trace / total`, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        percent(self.trace(), self.total())
    }

    pub fn to_table(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut s = format!("{:>width$}", "true\\pred");
        for l in &self.labels {
            write!(s, " {l:>width$}").unwrap();
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            write!(s, "{l:>width$}").unwrap();
            for c in row {
                write!(s, " {c:>width$}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

fn percent(k: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * k as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachReport {
    pub approach: Approach,
    /// Accuracy over all test utterances (`100 * trace / total`).
    pub average: f64,
    pub per_gender: BTreeMap<Gender, f64>,
    pub per_emotion: BTreeMap<String, f64>,
    pub confusion: ConfusionMatrix,
}

/// What happened to one test utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceOutcome {
    pub id: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub emotion: String,
    pub predicted_gender: Gender,
    /// Emotion labels for approaches 1, 2 and 3.
    pub predicted: [String; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub accuracy_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema: String,
    pub alpha: f64,
    pub utterances: usize,
    pub emotions: Vec<String>,
    pub gender_accuracy: f64,
    pub gender_accuracy_by_gender: BTreeMap<Gender, f64>,
    pub approaches: Vec<ApproachReport>,
    pub ties: usize,
    pub config: BTreeMap<String, String>,
    pub outcomes: Vec<UtteranceOutcome>,
    pub alpha_sweep: Vec<SweepPoint>,
}

impl EvaluationReport {
    pub fn approach(&self, a: Approach) -> &ApproachReport {
        self.approaches
            .iter()
            .find(|r| r.approach == a)
            .expect("all approaches present")
    }

    pub fn average(&self, a: Approach) -> f64 {
        self.approach(a).average
    }
}

/// Per-utterance scores needed to reach every approach's decision at any α.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceScores {
    pub gender_decision: Decision,
    pub predicted_gender: Gender,
    /// Emotion-layer scores under the identified gender's models.
    pub identified: BTreeMap<String, LayerScores>,
    /// Emotion-layer scores under the true gender's models.
    pub oracle: BTreeMap<String, LayerScores>,
    pub pooled: BTreeMap<String, LayerScores>,
}

/// Scores every utterance once; decisions at any α follow without touching
/// the models again.
pub fn score_utterances(system: &TrainedSystem, test: &[&Utterance]) -> Result<Vec<UtteranceScores>> {
    test.par_iter()
        .map(|u| {
            let (predicted_gender, gender_decision) = identify_gender(&system.gender, &u.observations)?;
            let oracle = system.emotion.layer_scores(u.row.gender, &u.observations, &u.prosody)?;
            let identified = if predicted_gender == u.row.gender {
                oracle.clone()
            } else {
                system
                    .emotion
                    .layer_scores(predicted_gender, &u.observations, &u.prosody)?
            };
            let pooled = system.pooled.layer_scores(&u.observations, &u.prosody)?;
            Ok(UtteranceScores {
                gender_decision,
                predicted_gender,
                identified,
                oracle,
                pooled,
            })
        })
        .collect()
}

fn fused_decision(scores: &BTreeMap<String, LayerScores>, w: FusionWeight) -> Decision {
    decide(scores.iter().map(|(e, s)| (e.clone(), s.fused(w))).collect())
}

/// Builds the report from precomputed scores.
pub fn report_from_scores(
    emotions: &[String],
    test: &[&Utterance],
    scores: &[UtteranceScores],
    w: FusionWeight,
    config: BTreeMap<String, String>,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    let mut outcomes = Vec::with_capacity(test.len());
    let mut ties = 0;
    for (u, s) in test.iter().zip(scores) {
        let decisions = [
            fused_decision(&s.identified, w),
            fused_decision(&s.pooled, w),
            fused_decision(&s.oracle, w),
        ];
        ties += usize::from(s.gender_decision.tie) + decisions.iter().filter(|d| d.tie).count();
        outcomes.push(UtteranceOutcome {
            id: u.row.path.clone(),
            speaker_id: u.row.speaker_id.clone(),
            gender: u.row.gender,
            emotion: u.row.emotion.clone(),
            predicted_gender: s.predicted_gender,
            predicted: decisions.map(|d| d.label),
        });
    }
    report_from_outcomes(emotions, w.alpha(), outcomes, ties, config)
}

fn report_from_outcomes(
    emotions: &[String],
    alpha: f64,
    outcomes: Vec<UtteranceOutcome>,
    ties: usize,
    config: BTreeMap<String, String>,
) -> Result<EvaluationReport> {
    let n = outcomes.len() as u64;
    let gender_hits = outcomes.iter().filter(|o| o.gender == o.predicted_gender).count() as u64;
    let mut gender_accuracy_by_gender = BTreeMap::new();
    for g in Gender::ALL {
        let of_g: Vec<_> = outcomes.iter().filter(|o| o.gender == g).collect();
        if !of_g.is_empty() {
            let hits = of_g.iter().filter(|o| o.predicted_gender == g).count() as u64;
            gender_accuracy_by_gender.insert(g, percent(hits, of_g.len() as u64));
        }
    }
    let mut approaches = Vec::new();
    for (k, a) in Approach::ALL.into_iter().enumerate() {
        let mut confusion = ConfusionMatrix::new(emotions.to_vec());
        let mut by_gender: BTreeMap<Gender, (u64, u64)> = BTreeMap::new();
        for o in &outcomes {
            confusion.record(&o.emotion, &o.predicted[k])?;
            let e = by_gender.entry(o.gender).or_default();
            e.0 += u64::from(o.emotion == o.predicted[k]);
            e.1 += 1;
        }
        let per_emotion = emotions
            .iter()
            .zip(&confusion.counts)
            .enumerate()
            .map(|(i, (e, row))| (e.clone(), percent(row[i], row.iter().sum())))
            .collect();
        approaches.push(ApproachReport {
            approach: a,
            average: confusion.accuracy(),
            per_gender: by_gender.into_iter().map(|(g, (h, t))| (g, percent(h, t))).collect(),
            per_emotion,
            confusion,
        });
    }
    Ok(EvaluationReport {
        schema: REPORT_SCHEMA.to_string(),
        alpha,
        utterances: outcomes.len(),
        emotions: emotions.to_vec(),
        gender_accuracy: percent(gender_hits, n),
        gender_accuracy_by_gender,
        approaches,
        ties,
        config,
        outcomes,
        alpha_sweep: Vec::new(),
    })
}

/// Runs all three approaches over the test utterances at one α.
pub fn evaluate(
    system: &TrainedSystem,
    test: &[&Utterance],
    w: FusionWeight,
    config: BTreeMap<String, String>,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    let scores = score_utterances(system, test)?;
    report_from_scores(system.emotions(), test, &scores, w, config)
}

fn check_alphas(alphas: &[f64]) -> Result<Vec<FusionWeight>> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    alphas.iter().map(|&a| FusionWeight::new(a)).collect()
}

/// Approach-1 accuracy at each α, from precomputed scores.
pub fn sweep_from_scores(test: &[&Utterance], scores: &[UtteranceScores], alphas: &[f64]) -> Result<Vec<SweepPoint>> {
    let weights = check_alphas(alphas)?;
    if test.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    Ok(weights
        .into_iter()
        .map(|w| {
            let hits = test
                .iter()
                .zip(scores)
                .filter(|(u, s)| fused_decision(&s.identified, w).label == u.row.emotion)
                .count() as u64;
            SweepPoint {
                alpha: w.alpha(),
                accuracy_percent: percent(hits, test.len() as u64),
            }
        })
        .collect())
}

/// Approach-1 average accuracy at each α.
pub fn alpha_sweep(system: &TrainedSystem, test: &[&Utterance], alphas: &[f64]) -> Result<Vec<SweepPoint>> {
    check_alphas(alphas)?;
    if test.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    let scores = score_utterances(system, test)?;
    sweep_from_scores(test, &scores, alphas)
}

/// Result of the two-sample t statistic with the pooled spread
/// `sqrt((sd_x^2 + sd_y^2) / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub mean_x: f64,
    pub mean_y: f64,
    pub sd_x: f64,
    pub sd_y: f64,
    pub n: usize,
    pub sd_pooled: f64,
    pub t_value: f64,
    pub critical_value: f64,
    pub significant: bool,
}

pub fn students_t(mean_x: f64, mean_y: f64, sd_x: f64, sd_y: f64, n: usize) -> Result<SignificanceResult> {
    students_t_with_critical(mean_x, mean_y, sd_x, sd_y, n, DEFAULT_CRITICAL_VALUE)
}

pub fn students_t_with_critical(
    mean_x: f64,
    mean_y: f64,
    sd_x: f64,
    sd_y: f64,
    n: usize,
    critical_value: f64,
) -> Result<SignificanceResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    for (name, v) in [
        ("mean_x", mean_x),
        ("mean_y", mean_y),
        ("sd_x", sd_x),
        ("sd_y", sd_y),
        ("critical value", critical_value),
    ] {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be finite, got {v}")));
        }
    }
    if sd_x < 0.0 || sd_y < 0.0 {
        return Err(Error::InvalidArgument(
            "standard deviations must be non-negative".into(),
        ));
    }
    let sd_pooled = ((sd_x * sd_x + sd_y * sd_y) / n as f64).sqrt();
    let diff = mean_x - mean_y;
    let t_value = if diff == 0.0 {
        0.0
    } else if sd_pooled == 0.0 {
        return Err(Error::ZeroPooledDeviation);
    } else {
        diff / sd_pooled
    };
    Ok(SignificanceResult {
        mean_x,
        mean_y,
        sd_x,
        sd_y,
        n,
        sd_pooled,
        t_value,
        critical_value,
        significant: t_value > critical_value,
    })
}

/// Sample mean and (n - 1) standard deviation.
pub fn mean_sd(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::Empty("sample".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok((mean, sd))
}

/// Emotion accuracy of one approach per test speaker, in speaker order.
pub fn per_speaker_accuracy(report: &EvaluationReport, a: Approach) -> BTreeMap<String, f64> {
    let k = a.number() as usize - 1;
    let mut tally: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for o in &report.outcomes {
        let e = tally.entry(o.speaker_id.clone()).or_default();
        e.0 += u64::from(o.emotion == o.predicted[k]);
        e.1 += 1;
    }
    tally.into_iter().map(|(s, (h, t))| (s, percent(h, t))).collect()
}

/// Compares two approaches using per-speaker accuracies as the samples.
pub fn compare_approaches(
    report: &EvaluationReport,
    x: Approach,
    y: Approach,
    critical: f64,
) -> Result<SignificanceResult> {
    let xs: Vec<f64> = per_speaker_accuracy(report, x).into_values().collect();
    let ys: Vec<f64> = per_speaker_accuracy(report, y).into_values().collect();
    let (mx, sx) = mean_sd(&xs)?;
    let (my, sy) = mean_sd(&ys)?;
    students_t_with_critical(mx, my, sx, sy, xs.len(), critical)
}

/// Human-readable summary.
pub fn summary_text(report: &EvaluationReport) -> String {
    let mut s = format!("# {REPORT_SCHEMA}\n");
    writeln!(s, "alpha: {}", report.alpha).unwrap();
    writeln!(s, "test utterances: {}", report.utterances).unwrap();
    writeln!(s, "gender accuracy: {:.2}%", report.gender_accuracy).unwrap();
    for (g, a) in &report.gender_accuracy_by_gender {
        writeln!(s, "  {g}: {a:.2}%").unwrap();
    }
    writeln!(s, "\nemotion accuracy (%)").unwrap();
    writeln!(s, "{:<10} {:>8} {:>8} {:>8}", "approach", "female", "male", "average").unwrap();
    for r in &report.approaches {
        let g = |g| r.per_gender.get(&g).map_or("-".to_string(), |v| format!("{v:.2}"));
        writeln!(
            s,
            "{:<10} {:>8} {:>8} {:>8.2}",
            r.approach.number(),
            g(Gender::Female),
            g(Gender::Male),
            r.average
        )
        .unwrap();
    }
    for r in &report.approaches {
        writeln!(s, "\napproach {}: {}", r.approach.number(), r.approach.description()).unwrap();
        for (e, a) in &r.per_emotion {
            writeln!(s, "  {e}: {a:.2}%").unwrap();
        }
    }
    if report.ties > 0 {
        writeln!(s, "\ntied decisions: {}", report.ties).unwrap();
    }
    if !report.alpha_sweep.is_empty() {
        writeln!(s, "\nalpha sweep (approach 1)").unwrap();
        for p in &report.alpha_sweep {
            writeln!(s, "  {:.2}: {:.2}%", p.alpha, p.accuracy_percent).unwrap();
        }
    }
    if !report.config.is_empty() {
        writeln!(s, "\nconfig").unwrap();
        for (k, v) in &report.config {
            writeln!(s, "  {k} = {v}").unwrap();
        }
    }
    s
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = format!("# {SWEEP_SCHEMA}\nalpha,accuracy_percent\n");
    for p in points {
        writeln!(s, "{},{}", p.alpha, p.accuracy_percent).unwrap();
    }
    s
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepPoint>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(&format!("# {SWEEP_SCHEMA}")) {
        return Err(Error::parse("line 1", "missing alpha-sweep schema line"));
    }
    if lines.next().map(str::trim) != Some("alpha,accuracy_percent") {
        return Err(Error::parse("line 2", "missing `alpha,accuracy_percent` header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = || Error::parse(format!("line {}", i + 3), format!("bad row `{l}`"));
            let (a, p) = l.split_once(',').ok_or_else(bad)?;
            Ok(SweepPoint {
                alpha: a.trim().parse().map_err(|_| bad())?,
                accuracy_percent: p.trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `summary.txt`, `report.json`, `confusion_approach{1,2,3}.txt` and,
/// when the sweep is non-empty, `alpha_sweep.csv`. Returns the paths written.
pub fn emit_report(report: &EvaluationReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = vec![
        write(out_dir.join(SUMMARY_FILE), &summary_text(report))?,
        write(
            out_dir.join(REPORT_FILE),
            &(serde_json::to_string_pretty(report)? + "\n"),
        )?,
    ];
    for r in &report.approaches {
        let n = r.approach.number();
        let text = format!(
            "# {CONFUSION_SCHEMA} approach {n}\n# rows: true emotion, columns: predicted emotion\n{}",
            r.confusion.to_table()
        );
        written.push(write(out_dir.join(confusion_file(n)), &text)?);
    }
    if !report.alpha_sweep.is_empty() {
        written.push(write(out_dir.join(SWEEP_FILE), &sweep_csv(&report.alpha_sweep))?);
    }
    Ok(written)
}

pub fn load_report(dir: &Path) -> Result<EvaluationReport> {
    let p = dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let report: EvaluationReport = serde_json::from_str(&text)?;
    if report.schema != REPORT_SCHEMA {
        return Err(Error::parse(
            p.display().to_string(),
            format!("unsupported schema `{}`", report.schema),
        ));
    }
    Ok(report)
}

/// Distinct test speakers per gender, useful when sizing t-test samples.
pub fn speakers_by_gender(report: &EvaluationReport) -> BTreeMap<Gender, BTreeSet<String>> {
    let mut out: BTreeMap<Gender, BTreeSet<String>> = BTreeMap::new();
    for o in &report.outcomes {
        out.entry(o.gender).or_default().insert(o.speaker_id.clone());
    }
    out
}
