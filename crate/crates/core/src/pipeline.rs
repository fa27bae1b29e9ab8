//! The two-stage recognizer: gender identification followed by
//! gender-dependent emotion identification with fused acoustic and
//! suprasegmental scores, plus the gender-free and oracle-gender baselines.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::load_wav;
use crate::error::{Error, Result};
use crate::features::{extract_observations, FeatureConfig, ObservationSequence};
use crate::hmm::{baum_welch_train, AcousticHmm, TrainConfig};
use crate::manifest::{DatasetManifest, Gender, ManifestRow, Split, DEFAULT_EMOTIONS};
use crate::model_io::{load_acoustic, load_suprasegmental, save_acoustic, save_suprasegmental};
use crate::prosody::{extract_prosody, ProsodicTrack, ProsodyConfig};
use crate::seed::derive_seed;
use crate::sphmm::{
    layer_scores, train_suprasegmental, FusionWeight, LayerScores, SupraTrainConfig, SuprasegmentalHmm,
};

/// One utterance with its labels and extracted features.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub row: ManifestRow,
    pub observations: ObservationSequence,
    pub prosody: ProsodicTrack,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.row.split == split)
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest::new(self.utterances.iter().map(|u| u.row.clone()).collect())
    }

    /// Loads and analyzes every manifest row in `splits`. Relative paths
    /// resolve against `base_dir`.
    pub fn from_manifest(
        manifest: &DatasetManifest,
        base_dir: &Path,
        features: &FeatureConfig,
        prosody: &ProsodyConfig,
        splits: &[Split],
    ) -> Result<Self> {
        let rows: Vec<&ManifestRow> = manifest.rows.iter().filter(|r| splits.contains(&r.split)).collect();
        let utterances = rows
            .par_iter()
            .map(|row| {
                let path = base_dir.join(&row.path);
                let clip = load_wav(&path)?;
                Ok(Utterance {
                    row: (*row).clone(),
                    observations: extract_observations(&row.path, &clip, features)?,
                    prosody: extract_prosody(&clip, &features.frontend, prosody)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { utterances })
    }
}

/// Model sizes and training settings shared by every model in a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_states: usize,
    pub acoustic_mixtures: usize,
    pub supra_states: usize,
    pub supra_mixtures: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub variance_floor_ratio: f64,
    pub seed: u64,
    pub emotions: Vec<String>,
    /// Skip the train/test speaker and sentence disjointness check.
    pub allow_split_overlap: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_states: 9,
            acoustic_mixtures: 10,
            supra_states: 3,
            supra_mixtures: 3,
            max_iters: 20,
            rel_tol: 1e-4,
            variance_floor_ratio: 1e-3,
            seed: 0,
            emotions: DEFAULT_EMOTIONS.iter().map(|s| s.to_string()).collect(),
            allow_split_overlap: false,
        }
    }
}

impl ModelConfig {
    fn acoustic(&self, tag: &str) -> TrainConfig {
        TrainConfig {
            num_states: self.num_states,
            num_mixtures: self.acoustic_mixtures,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            seed: derive_seed(self.seed, &format!("{tag}/acoustic")),
            variance_floor_ratio: self.variance_floor_ratio,
            end_in_final: false,
        }
    }

    fn supra(&self, tag: &str) -> SupraTrainConfig {
        SupraTrainConfig {
            num_supra_states: self.supra_states,
            num_mixtures: self.supra_mixtures,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            seed: derive_seed(self.seed, &format!("{tag}/supra")),
            variance_floor_ratio: self.variance_floor_ratio,
        }
    }
}

/// Acoustic model plus the suprasegmental model trained on top of it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionModel {
    pub acoustic: AcousticHmm,
    pub supra: SuprasegmentalHmm,
}

impl EmotionModel {
    pub fn scores(&self, obs: &ObservationSequence, prosody: &ProsodicTrack) -> Result<LayerScores> {
        layer_scores(&self.acoustic, &self.supra, obs, prosody)
    }
}

/// Trains the acoustic model, then the suprasegmental model on top.
pub fn train_emotion_model(utts: &[&Utterance], config: &ModelConfig, tag: &str) -> Result<EmotionModel> {
    let seqs: Vec<&[Vec<f64>]> = utts.iter().map(|u| u.observations.vectors.as_slice()).collect();
    let acoustic = baum_welch_train(&seqs, &config.acoustic(tag))?.model;
    let pairs: Vec<(&ObservationSequence, &ProsodicTrack)> =
        utts.iter().map(|u| (&u.observations, &u.prosody)).collect();
    let supra = train_suprasegmental(&pairs, &acoustic, &config.supra(tag))?.model;
    Ok(EmotionModel { acoustic, supra })
}

/// Label chosen by an argmax, with the full score map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: String,
    pub scores: BTreeMap<String, f64>,
    /// Set when another label reached the same maximum score.
    pub tie: bool,
}

/// Argmax over a score map; ties go to the lexicographically first label.
pub fn decide(scores: BTreeMap<String, f64>) -> Decision {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut best: Option<(&String, f64)> = None;
    for (label, &v) in &scores {
        if best.is_none_or(|(_, b)| key(v) > b) {
            best = Some((label, key(v)));
        }
    }
    let (label, max) = best.expect("score map is never empty");
    let tie = scores.values().filter(|&&v| key(v) == max).count() > 1;
    let label = label.clone();
    if tie {
        log::debug!("tie at score {max}; picked `{label}`");
    }
    Decision { label, scores, tie }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenderModels {
    pub female: AcousticHmm,
    pub male: AcousticHmm,
    pub training_counts: BTreeMap<Gender, usize>,
}

impl GenderModels {
    pub fn new(female: AcousticHmm, male: AcousticHmm) -> Result<Self> {
        if female.feature_dim() != male.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: female.feature_dim(),
                actual: male.feature_dim(),
            });
        }
        Ok(Self {
            female,
            male,
            training_counts: BTreeMap::new(),
        })
    }

    pub fn get(&self, g: Gender) -> &AcousticHmm {
        match g {
            Gender::Female => &self.female,
            Gender::Male => &self.male,
        }
    }

    /// Raw forward log-likelihood under each gender model.
    pub fn scores(&self, obs: &ObservationSequence) -> Result<BTreeMap<Gender, f64>> {
        Gender::ALL
            .iter()
            .map(|&g| Ok((g, self.get(g).forward_log_likelihood(&obs.vectors)?)))
            .collect()
    }
}

/// One acoustic model per gender, each trained on all of that gender's
/// training utterances across emotions.
pub fn train_gender_models(corpus: &Corpus, config: &ModelConfig) -> Result<GenderModels> {
    let trained = Gender::ALL
        .par_iter()
        .map(|&g| {
            let utts: Vec<&[Vec<f64>]> = corpus
                .split(Split::Train)
                .filter(|u| u.row.gender == g)
                .map(|u| u.observations.vectors.as_slice())
                .collect();
            if utts.is_empty() {
                return Err(Error::EmptyGender(g.to_string()));
            }
            log::info!("gender model {g}: {} training utterances", utts.len());
            let model = baum_welch_train(&utts, &config.acoustic(&format!("gender/{g}")))?.model;
            Ok((model, utts.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = trained.into_iter();
    let (female, nf) = it.next().unwrap();
    let (male, nm) = it.next().unwrap();
    let mut models = GenderModels::new(female, male)?;
    models.training_counts = BTreeMap::from([(Gender::Female, nf), (Gender::Male, nm)]);
    Ok(models)
}

pub fn identify_gender(models: &GenderModels, obs: &ObservationSequence) -> Result<(Gender, Decision)> {
    let scores = models.scores(obs)?;
    let decision = decide(scores.into_iter().map(|(g, v)| (g.to_string(), v)).collect());
    let gender = decision.label.parse()?;
    Ok((gender, decision))
}

/// Per-(gender, emotion) model pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionModelSet {
    pub emotions: Vec<String>,
    pub cells: BTreeMap<(Gender, String), EmotionModel>,
    pub training_counts: BTreeMap<(Gender, String), usize>,
}

impl EmotionModelSet {
    pub fn cell(&self, gender: Gender, emotion: &str) -> Result<&EmotionModel> {
        self.cells
            .get(&(gender, emotion.to_string()))
            .ok_or_else(|| Error::EmptyCell {
                gender: gender.to_string(),
                emotion: emotion.to_string(),
            })
    }

    /// Layer scores of every emotion model of `gender`.
    pub fn layer_scores(
        &self,
        gender: Gender,
        obs: &ObservationSequence,
        prosody: &ProsodicTrack,
    ) -> Result<BTreeMap<String, LayerScores>> {
        self.emotions
            .iter()
            .map(|e| Ok((e.clone(), self.cell(gender, e)?.scores(obs, prosody)?)))
            .collect()
    }
}

fn check_vocabulary(emotions: &[String]) -> Result<()> {
    if emotions.is_empty() {
        return Err(Error::InvalidArgument("emotion vocabulary is empty".into()));
    }
    Ok(())
}

/// Trains one (acoustic, suprasegmental) pair per (gender, emotion) cell.
pub fn train_emotion_models(corpus: &Corpus, config: &ModelConfig) -> Result<EmotionModelSet> {
    check_vocabulary(&config.emotions)?;
    let mut jobs = Vec::new();
    for g in Gender::ALL {
        for e in &config.emotions {
            let utts: Vec<&Utterance> = corpus
                .split(Split::Train)
                .filter(|u| u.row.gender == g && &u.row.emotion == e)
                .collect();
            if utts.is_empty() {
                return Err(Error::EmptyCell {
                    gender: g.to_string(),
                    emotion: e.clone(),
                });
            }
            log::info!("emotion model ({g}, {e}): {} training utterances", utts.len());
            jobs.push(((g, e.clone()), utts));
        }
    }
    let trained = jobs
        .par_iter()
        .map(|((g, e), utts)| train_emotion_model(utts, config, &format!("emotion/{g}/{e}")))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for ((key, utts), model) in jobs.into_iter().zip(trained) {
        counts.insert(key.clone(), utts.len());
        cells.insert(key, model);
    }
    Ok(EmotionModelSet {
        emotions: config.emotions.clone(),
        cells,
        training_counts: counts,
    })
}

/// Gender-independent model pairs, one per emotion.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledModelSet {
    pub emotions: Vec<String>,
    pub cells: BTreeMap<String, EmotionModel>,
    pub training_counts: BTreeMap<String, usize>,
}

impl PooledModelSet {
    pub fn cell(&self, emotion: &str) -> Result<&EmotionModel> {
        self.cells.get(emotion).ok_or_else(|| Error::UnknownLabel {
            kind: "emotion",
            label: emotion.to_string(),
        })
    }

    pub fn layer_scores(
        &self,
        obs: &ObservationSequence,
        prosody: &ProsodicTrack,
    ) -> Result<BTreeMap<String, LayerScores>> {
        self.emotions
            .iter()
            .map(|e| Ok((e.clone(), self.cell(e)?.scores(obs, prosody)?)))
            .collect()
    }
}

/// Emotion models trained on both genders' training utterances pooled, with
/// the same sizes as the gender-dependent models.
pub fn train_pooled_models(corpus: &Corpus, config: &ModelConfig) -> Result<PooledModelSet> {
    check_vocabulary(&config.emotions)?;
    let mut jobs = Vec::new();
    for e in &config.emotions {
        let utts: Vec<&Utterance> = corpus.split(Split::Train).filter(|u| &u.row.emotion == e).collect();
        if utts.is_empty() {
            return Err(Error::EmptyCell {
                gender: "any".into(),
                emotion: e.clone(),
            });
        }
        log::info!("pooled emotion model {e}: {} training utterances", utts.len());
        jobs.push((e.clone(), utts));
    }
    let trained = jobs
        .par_iter()
        .map(|(e, utts)| train_emotion_model(utts, config, &format!("pooled/{e}")))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for ((e, utts), model) in jobs.into_iter().zip(trained) {
        counts.insert(e.clone(), utts.len());
        cells.insert(e, model);
    }
    Ok(PooledModelSet {
        emotions: config.emotions.clone(),
        cells,
        training_counts: counts,
    })
}

fn fuse_map(scores: &BTreeMap<String, LayerScores>, w: FusionWeight) -> BTreeMap<String, f64> {
    scores.iter().map(|(e, s)| (e.clone(), s.fused(w))).collect()
}

/// Argmax of fused scores over the emotions of `gender`.
pub fn identify_emotion(
    set: &EmotionModelSet,
    gender: Gender,
    obs: &ObservationSequence,
    prosody: &ProsodicTrack,
    w: FusionWeight,
) -> Result<Decision> {
    Ok(decide(fuse_map(&set.layer_scores(gender, obs, prosody)?, w)))
}

/// Argmax of per-frame acoustic log-likelihoods only.
pub fn identify_emotion_hmm_only(set: &EmotionModelSet, gender: Gender, obs: &ObservationSequence) -> Result<Decision> {
    let scores = set
        .emotions
        .iter()
        .map(|e| {
            let ll = set.cell(gender, e)?.acoustic.forward_log_likelihood(&obs.vectors)?;
            Ok((e.clone(), ll / obs.len() as f64))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(decide(scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub gender: Gender,
    pub gender_decision: Decision,
    pub emotion: String,
    pub emotion_decision: Decision,
}

/// Gender identification feeding gender-dependent emotion identification.
/// A wrong gender decision is not corrected: the emotion stage consults the
/// wrong gender's models.
pub fn run_two_stage(
    models: &GenderModels,
    set: &EmotionModelSet,
    obs: &ObservationSequence,
    prosody: &ProsodicTrack,
    w: FusionWeight,
) -> Result<ClassificationResult> {
    let (gender, gender_decision) = identify_gender(models, obs)?;
    let emotion_decision = identify_emotion(set, gender, obs, prosody, w)?;
    Ok(ClassificationResult {
        gender,
        gender_decision,
        emotion: emotion_decision.label.clone(),
        emotion_decision,
    })
}

/// Emotion identification with gender-independent models.
pub fn run_without_gender(
    pooled: &PooledModelSet,
    obs: &ObservationSequence,
    prosody: &ProsodicTrack,
    w: FusionWeight,
) -> Result<Decision> {
    Ok(decide(fuse_map(&pooled.layer_scores(obs, prosody)?, w)))
}

/// Emotion identification given the true gender.
pub fn run_with_oracle_gender(
    set: &EmotionModelSet,
    true_gender: Gender,
    obs: &ObservationSequence,
    prosody: &ProsodicTrack,
    w: FusionWeight,
) -> Result<Decision> {
    identify_emotion(set, true_gender, obs, prosody, w)
}

/// Everything produced by a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSystem {
    pub gender: GenderModels,
    pub emotion: EmotionModelSet,
    pub pooled: PooledModelSet,
}

const SYSTEM_INDEX: &str = "system.txt";
const SYSTEM_MAGIC: &str = "sphmm-system v1";

impl TrainedSystem {
    /// Trains gender models, the per-gender emotion set and the pooled set.
    pub fn train(corpus: &Corpus, config: &ModelConfig) -> Result<Self> {
        if !config.allow_split_overlap {
            corpus.manifest().check_speaker_independence()?;
        }
        Ok(Self {
            gender: train_gender_models(corpus, config)?,
            emotion: train_emotion_models(corpus, config)?,
            pooled: train_pooled_models(corpus, config)?,
        })
    }

    pub fn emotions(&self) -> &[String] {
        &self.emotion.emotions
    }

    /// Writes every model plus a `system.txt` index into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = format!("{SYSTEM_MAGIC}\nemotions {}\n", self.emotions().join(" "));
        for g in Gender::ALL {
            let name = format!("gender_{g}.acoustic");
            save_acoustic(dir.join(&name), self.gender.get(g))?;
            index.push_str(&format!(
                "gender {g} {name} {}\n",
                self.gender.training_counts.get(&g).unwrap_or(&0)
            ));
        }
        for ((g, e), m) in &self.emotion.cells {
            let stem = format!("emotion_{g}_{e}");
            save_acoustic(dir.join(format!("{stem}.acoustic")), &m.acoustic)?;
            save_suprasegmental(dir.join(format!("{stem}.supra")), &m.supra)?;
            let n = self.emotion.training_counts.get(&(*g, e.clone())).unwrap_or(&0);
            index.push_str(&format!("emotion {g} {e} {stem} {n}\n"));
        }
        for (e, m) in &self.pooled.cells {
            let stem = format!("pooled_{e}");
            save_acoustic(dir.join(format!("{stem}.acoustic")), &m.acoustic)?;
            save_suprasegmental(dir.join(format!("{stem}.supra")), &m.supra)?;
            index.push_str(&format!(
                "pooled {e} {stem} {}\n",
                self.pooled.training_counts.get(e).unwrap_or(&0)
            ));
        }
        let p = dir.join(SYSTEM_INDEX);
        std::fs::write(&p, index).map_err(|e| Error::io(&p, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join(SYSTEM_INDEX);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(SYSTEM_MAGIC) {
            return Err(Error::parse(p.display().to_string(), "missing system header"));
        }
        let mut emotions = Vec::new();
        let mut genders: BTreeMap<Gender, (AcousticHmm, usize)> = BTreeMap::new();
        let mut cells = BTreeMap::new();
        let mut cell_counts = BTreeMap::new();
        let mut pooled = BTreeMap::new();
        let mut pooled_counts = BTreeMap::new();
        let bad = |l: &str| Error::parse(p.display().to_string(), format!("bad index line `{l}`"));
        let count = |s: &str, l: &str| s.parse::<usize>().map_err(|_| bad(l));
        let load_pair = |stem: &str| -> Result<EmotionModel> {
            Ok(EmotionModel {
                acoustic: load_acoustic(dir.join(format!("{stem}.acoustic")))?,
                supra: load_suprasegmental(dir.join(format!("{stem}.supra")))?,
            })
        };
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["emotions", rest @ ..] => emotions = rest.iter().map(|s| s.to_string()).collect(),
                ["gender", g, file, n] => {
                    genders.insert(g.parse()?, (load_acoustic(dir.join(file))?, count(n, line)?));
                }
                ["emotion", g, e, stem, n] => {
                    let key = (g.parse::<Gender>()?, e.to_string());
                    cells.insert(key.clone(), load_pair(stem)?);
                    cell_counts.insert(key, count(n, line)?);
                }
                ["pooled", e, stem, n] => {
                    pooled.insert(e.to_string(), load_pair(stem)?);
                    pooled_counts.insert(e.to_string(), count(n, line)?);
                }
                [] => {}
                _ => return Err(bad(line)),
            }
        }
        let (female, nf) = genders
            .remove(&Gender::Female)
            .ok_or_else(|| Error::EmptyGender("female".into()))?;
        let (male, nm) = genders
            .remove(&Gender::Male)
            .ok_or_else(|| Error::EmptyGender("male".into()))?;
        let mut gender = GenderModels::new(female, male)?;
        gender.training_counts = BTreeMap::from([(Gender::Female, nf), (Gender::Male, nm)]);
        for g in Gender::ALL {
            for e in &emotions {
                if !cells.contains_key(&(g, e.clone())) {
                    return Err(Error::EmptyCell {
                        gender: g.to_string(),
                        emotion: e.clone(),
                    });
                }
            }
        }
        Ok(Self {
            gender,
            emotion: EmotionModelSet {
                emotions: emotions.clone(),
                cells,
                training_counts: cell_counts,
            },
            pooled: PooledModelSet {
                emotions,
                cells: pooled,
                training_counts: pooled_counts,
            },
        })
    }
}
