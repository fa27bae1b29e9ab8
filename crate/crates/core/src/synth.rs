//! Seeded synthetic corpora with controllable gender and emotion
//! separability.
//!
//! Two tiers share one [`SynthSpec`]:
//!
//! * waveform: impulse-train-plus-noise source, per-segment formant
//!   resonators scaled by gender and speaker, a one-pole spectral tilt and
//!   per-emotion F0/energy contours, written as 16-bit WAV files plus a
//!   manifest;
//! * feature: MFCC-like vectors and prosodic tracks drawn directly, skipping
//!   the audio frontend.
//!
//! Every utterance draws from its own RNG derived from the root seed and its
//! path, so output does not depend on generation order or thread count.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::features::{delta, ObservationSequence};
use crate::manifest::{DatasetManifest, Gender, ManifestRow, Split, DEFAULT_EMOTIONS};
use crate::pipeline::{Corpus, Utterance};
use crate::prosody::{ProsodicTrack, ProsodyFrame};
use crate::seed::rng_for;

/// Per-emotion generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionParams {
    pub name: String,
    pub f0_offset_hz: f64,
    /// Rise (positive) or fall of F0 across the utterance.
    pub f0_range_hz: f64,
    pub energy_scale: f64,
    /// In [-1, 1]; positive brightens the spectrum, negative darkens it.
    pub spectral_tilt: f64,
    /// Above 1 speaks faster (shorter utterances).
    pub rate_factor: f64,
}

impl EmotionParams {
    fn new(
        name: &str,
        f0_offset_hz: f64,
        f0_range_hz: f64,
        energy_scale: f64,
        spectral_tilt: f64,
        rate_factor: f64,
    ) -> Self {
        Self {
            name: name.into(),
            f0_offset_hz,
            f0_range_hz,
            energy_scale,
            spectral_tilt,
            rate_factor,
        }
    }
}

/// Six emotions with plausible relative contours.
pub fn default_emotion_params() -> Vec<EmotionParams> {
    let [n, a, s, h, d, f] = DEFAULT_EMOTIONS;
    vec![
        EmotionParams::new(n, 0.0, -15.0, 1.0, 0.0, 1.0),
        EmotionParams::new(a, 45.0, 70.0, 2.2, 0.7, 1.2),
        EmotionParams::new(s, -25.0, -35.0, 0.45, -0.7, 0.75),
        EmotionParams::new(h, 35.0, 100.0, 1.6, 0.35, 1.1),
        EmotionParams::new(d, -10.0, 30.0, 0.7, -0.3, 0.9),
        EmotionParams::new(f, 65.0, -60.0, 1.25, 0.2, 1.3),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub female_f0_hz: f64,
    pub male_f0_hz: f64,
    pub emotions: Vec<EmotionParams>,
    pub speakers_per_gender: usize,
    /// The first `train_speakers` of each gender are training speakers.
    pub train_speakers: usize,
    pub sentences: usize,
    /// The first `train_sentences` sentences are training sentences.
    pub train_sentences: usize,
    /// Repeats of each (speaker, sentence, emotion) per recording session.
    pub repeats_per_session: Vec<usize>,
    pub seed: u64,
    /// Scales every inter-emotion difference; 0 makes emotions identical.
    pub separability: f64,
    /// Multiplies the spectral (MFCC-visible) part of the emotion encoding.
    pub spectral_weight: f64,
    /// Multiplies the prosodic (F0, energy, rate) part of the emotion encoding.
    pub prosodic_weight: f64,
    /// Female speakers realize emotion `i` with the parameters of emotion
    /// `i + 1`, so gender-independent emotion models see two patterns per
    /// label.
    pub gender_divergent: bool,
    /// Mean utterance length at rate factor 1, seconds.
    pub duration_s: f64,
    /// Feature tier: per-dimension scale of emotion spectral signatures.
    pub signature_scale: f64,
    /// Feature tier: per-dimension scale of the gender offset.
    pub gender_scale: f64,
    /// Feature tier: scale of the phone-like segment means shared by every
    /// sentence; keeps segments acoustically distinct.
    pub phone_scale: f64,
    /// Feature tier: scale of per-sentence segment templates.
    pub template_scale: f64,
    /// Per-speaker variability (feature offsets, F0 and formant factors).
    pub speaker_scale: f64,
    /// Feature tier: per-frame noise standard deviation.
    pub noise_scale: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            female_f0_hz: 210.0,
            male_f0_hz: 120.0,
            emotions: default_emotion_params(),
            speakers_per_gender: 6,
            train_speakers: 4,
            sentences: 4,
            train_sentences: 2,
            repeats_per_session: vec![3],
            seed: 0,
            separability: 1.0,
            spectral_weight: 1.0,
            prosodic_weight: 1.0,
            gender_divergent: false,
            duration_s: 0.5,
            signature_scale: 1.5,
            gender_scale: 2.0,
            phone_scale: 3.0,
            template_scale: 0.5,
            speaker_scale: 0.3,
            noise_scale: 1.0,
        }
    }
}

/// Named starting points for [`SynthSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 15 + 15 speakers, 8 sentences, 5 + 4 repeats, 6 emotions.
    PaperShape,
    /// Small corpus where gender and emotion are easy to tell apart and
    /// emotion patterns differ between genders.
    Separable,
    /// Emotion information only in F0, energy and rate.
    ProsodyOnly,
    /// No emotion information at all.
    Chance,
}

impl Preset {
    pub const NAMES: [&'static str; 4] = ["paper-shape", "separable", "prosody-only", "chance"];

    pub fn spec(self, seed: u64) -> SynthSpec {
        let base = SynthSpec {
            seed,
            ..SynthSpec::default()
        };
        match self {
            Preset::PaperShape => SynthSpec {
                speakers_per_gender: 15,
                train_speakers: 10,
                sentences: 8,
                train_sentences: 4,
                repeats_per_session: vec![5, 4],
                separability: 0.5,
                duration_s: 1.0,
                ..base
            },
            Preset::Separable => SynthSpec {
                gender_divergent: true,
                ..base
            },
            Preset::ProsodyOnly => SynthSpec {
                spectral_weight: 0.0,
                ..base
            },
            Preset::Chance => SynthSpec {
                separability: 0.0,
                ..base
            },
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-shape" => Ok(Preset::PaperShape),
            "separable" => Ok(Preset::Separable),
            "prosody-only" => Ok(Preset::ProsodyOnly),
            "chance" => Ok(Preset::Chance),
            _ => Err(Error::UnknownLabel {
                kind: "preset",
                label: s.to_string(),
            }),
        }
    }
}

/// Parameters actually used for one utterance after applying separability,
/// channel weights and the gender permutation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Realized {
    f0_offset_hz: f64,
    f0_range_hz: f64,
    energy_scale: f64,
    spectral_tilt: f64,
    rate_factor: f64,
    /// Index of the emotion whose spectral signature is used.
    signature: usize,
    spectral: f64,
}

/// One planned utterance.
#[derive(Debug, Clone)]
struct Plan {
    row: ManifestRow,
    speaker: usize,
    sentence: usize,
    emotion: usize,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.separability) {
            return bad(format!("separability must be in [0, 1], got {}", self.separability));
        }
        if self.emotions.len() < 2 {
            return bad("at least two emotions are required".into());
        }
        for e in &self.emotions {
            if e.energy_scale <= 0.0 || e.rate_factor <= 0.0 {
                return bad(format!(
                    "emotion `{}` needs positive energy scale and rate factor",
                    e.name
                ));
            }
            if !(-1.0..=1.0).contains(&e.spectral_tilt) {
                return bad(format!("emotion `{}` spectral tilt must be in [-1, 1]", e.name));
            }
        }
        if self.female_f0_hz <= 0.0 || self.male_f0_hz <= 0.0 || self.duration_s <= 0.0 {
            return bad("base F0 and duration must be positive".into());
        }
        if self.train_speakers == 0 || self.train_speakers >= self.speakers_per_gender {
            return bad("need at least one training and one test speaker per gender".into());
        }
        if self.train_sentences == 0 || self.train_sentences >= self.sentences {
            return bad("need at least one training and one test sentence".into());
        }
        if self.repeats_per_session.is_empty() || self.repeats_per_session.contains(&0) {
            return bad("every session needs at least one repeat".into());
        }
        for (name, v) in [
            ("spectral_weight", self.spectral_weight),
            ("prosodic_weight", self.prosodic_weight),
            ("signature_scale", self.signature_scale),
            ("gender_scale", self.gender_scale),
            ("phone_scale", self.phone_scale),
            ("template_scale", self.template_scale),
            ("speaker_scale", self.speaker_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn emotion_names(&self) -> Vec<String> {
        self.emotions.iter().map(|e| e.name.clone()).collect()
    }

    fn realize(&self, gender: Gender, emotion: usize) -> Realized {
        let m = self.emotions.len();
        let idx = if self.gender_divergent && gender == Gender::Female {
            (emotion + 1) % m
        } else {
            emotion
        };
        let mean = |f: fn(&EmotionParams) -> f64| self.emotions.iter().map(f).sum::<f64>() / m as f64;
        let e = &self.emotions[idx];
        let p = self.separability * self.prosodic_weight;
        let s = self.separability * self.spectral_weight;
        let toward = |center: f64, v: f64, k: f64| center + k * (v - center);
        let log_energy_center = mean(|e| e.energy_scale.ln());
        Realized {
            f0_offset_hz: toward(mean(|e| e.f0_offset_hz), e.f0_offset_hz, p),
            f0_range_hz: toward(mean(|e| e.f0_range_hz), e.f0_range_hz, p),
            energy_scale: toward(log_energy_center, e.energy_scale.ln(), p).exp(),
            rate_factor: toward(mean(|e| e.rate_factor), e.rate_factor, p),
            spectral_tilt: toward(mean(|e| e.spectral_tilt), e.spectral_tilt, s),
            signature: idx,
            spectral: s,
        }
    }

    fn base_f0(&self, g: Gender) -> f64 {
        match g {
            Gender::Female => self.female_f0_hz,
            Gender::Male => self.male_f0_hz,
        }
    }

    /// Rows in gender, speaker, sentence, emotion, session, repeat order.
    fn plan(&self) -> Vec<Plan> {
        let mut out = Vec::new();
        for g in Gender::ALL {
            for spk in 0..self.speakers_per_gender {
                let speaker_id = format!("{}{:02}", &g.as_str()[..1], spk + 1);
                let train_spk = spk < self.train_speakers;
                for sent in 0..self.sentences {
                    let train_sent = sent < self.train_sentences;
                    let split = match (train_spk, train_sent) {
                        (true, true) => Split::Train,
                        (false, false) => Split::Test,
                        _ => Split::Unused,
                    };
                    for (ei, e) in self.emotions.iter().enumerate() {
                        for (session, &reps) in self.repeats_per_session.iter().enumerate() {
                            for r in 0..reps {
                                let path = format!(
                                    "wav/{speaker_id}/{speaker_id}_s{:02}_{}_{}_{}.wav",
                                    sent + 1,
                                    e.name,
                                    session + 1,
                                    r + 1
                                );
                                out.push(Plan {
                                    row: ManifestRow {
                                        path,
                                        speaker_id: speaker_id.clone(),
                                        gender: g,
                                        emotion: e.name.clone(),
                                        sentence_id: format!("s{:02}", sent + 1),
                                        session: (session + 1).to_string(),
                                        split,
                                    },
                                    speaker: spk,
                                    sentence: sent,
                                    emotion: ei,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// The manifest `generate_corpus` would write, without any audio.
    pub fn manifest(&self) -> Result<DatasetManifest> {
        self.validate()?;
        Ok(DatasetManifest::new(self.plan().into_iter().map(|p| p.row).collect()))
    }
}

const SEGMENTS: usize = 3;
/// Feature tier: static coefficients per frame (deltas double this).
pub const FEATURE_STATIC_DIM: usize = 8;
const FRAME_SHIFT_S: f64 = 0.005;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

/// Speaker-level factors shared by both tiers.
struct Speaker {
    f0_factor: f64,
    formant_factor: f64,
    offset: Vec<f64>,
}

fn speaker(spec: &SynthSpec, g: Gender, idx: usize) -> Speaker {
    let mut rng = rng_for(spec.seed, &format!("speaker/{g}/{idx}"));
    Speaker {
        f0_factor: (0.08 * spec.speaker_scale * normal(&mut rng)).exp(),
        formant_factor: (0.05 * spec.speaker_scale * normal(&mut rng)).exp(),
        offset: normal_vec(&mut rng, FEATURE_STATIC_DIM, spec.speaker_scale),
    }
}

/// Segment lengths in frames (feature tier) or seconds (waveform tier),
/// inversely proportional to the rate factor with emotion-independent jitter.
fn segment_durations(spec: &SynthSpec, rate: f64, rng: &mut ChaCha8Rng) -> [f64; SEGMENTS] {
    std::array::from_fn(|_| spec.duration_s / SEGMENTS as f64 / rate * rng.random_range(0.9..1.1))
}

fn f0_at(spec: &SynthSpec, g: Gender, spk: &Speaker, r: &Realized, frac: f64, jitter: f64) -> f64 {
    (spec.base_f0(g) * spk.f0_factor + r.f0_offset_hz + r.f0_range_hz * (frac - 0.5) + jitter).max(50.0)
}

/// Draws one feature-tier utterance.
fn feature_utterance(spec: &SynthSpec, plan: &Plan) -> Result<Utterance> {
    let g = plan.row.gender;
    let r = spec.realize(g, plan.emotion);
    let spk = speaker(spec, g, plan.speaker);
    let mut rng = rng_for(spec.seed, &plan.row.path);

    let mut sig_rng = rng_for(spec.seed, &format!("signature/{}", r.signature));
    let signature: Vec<Vec<f64>> = (0..SEGMENTS)
        .map(|_| normal_vec(&mut sig_rng, FEATURE_STATIC_DIM, 1.0))
        .collect();
    let mut phone_rng = rng_for(spec.seed, "phones");
    let phones: Vec<Vec<f64>> = (0..SEGMENTS)
        .map(|_| normal_vec(&mut phone_rng, FEATURE_STATIC_DIM, spec.phone_scale))
        .collect();
    let mut tpl_rng = rng_for(spec.seed, &format!("sentence/{}", plan.sentence));
    let template: Vec<Vec<f64>> = (0..SEGMENTS)
        .map(|_| normal_vec(&mut tpl_rng, FEATURE_STATIC_DIM, spec.template_scale))
        .collect();
    let mut g_rng = rng_for(spec.seed, &format!("gender/{g}"));
    let gender_offset = normal_vec(&mut g_rng, FEATURE_STATIC_DIM, spec.gender_scale);

    let durations = segment_durations(spec, r.rate_factor, &mut rng);
    let lengths: Vec<usize> = durations
        .iter()
        .map(|d| ((d / FRAME_SHIFT_S).round() as usize).max(2))
        .collect();
    let total: usize = lengths.iter().sum();
    let f0_jitter = Normal::new(0.0, 3.0).unwrap();
    let utt_f0_shift = 4.0 * normal(&mut rng);

    let mut statics = Vec::with_capacity(total);
    let mut frames = Vec::with_capacity(total);
    let mut t = 0usize;
    for (k, &len) in lengths.iter().enumerate() {
        let mean: Vec<f64> = (0..FEATURE_STATIC_DIM)
            .map(|d| {
                // Tilt mostly moves the first coefficient.
                let tilt = if d == 0 { -2.0 * r.spectral_tilt } else { 0.0 };
                phones[k][d]
                    + template[k][d]
                    + gender_offset[d]
                    + spk.offset[d]
                    + tilt * spec.signature_scale
                    + r.spectral * spec.signature_scale * signature[k][d]
            })
            .collect();
        for _ in 0..len {
            statics.push(
                mean.iter()
                    .map(|m| m + spec.noise_scale * normal(&mut rng))
                    .collect::<Vec<_>>(),
            );
            let frac = t as f64 / total as f64;
            let voiced = rng.random::<f64>() >= 0.1;
            let f0 = voiced.then(|| f0_at(spec, g, &spk, &r, frac, utt_f0_shift + f0_jitter.sample(&mut rng)));
            let log_energy = r.energy_scale.ln() + 8.0 - 0.5 * frac + 0.2 * normal(&mut rng);
            frames.push(ProsodyFrame { f0, log_energy });
            t += 1;
        }
    }
    let deltas = delta(&statics, 2)?;
    let vectors = statics
        .into_iter()
        .zip(deltas)
        .map(|(mut s, d)| {
            s.extend(d);
            s
        })
        .collect();
    Ok(Utterance {
        observations: ObservationSequence::new(&plan.row.path, vectors)?,
        prosody: ProsodicTrack {
            frames,
            frame_shift_s: FRAME_SHIFT_S,
        },
        row: plan.row.clone(),
    })
}

/// Feature-tier corpus covering the train and test splits (unused rows are
/// skipped).
pub fn generate_feature_corpus(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let plans: Vec<Plan> = spec
        .plan()
        .into_iter()
        .filter(|p| p.row.split != Split::Unused)
        .collect();
    let utterances = plans
        .par_iter()
        .map(|p| feature_utterance(spec, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { utterances })
}

/// Two-pole resonator coefficients for centre `freq` and bandwidth `bw`.
fn resonator(freq: f64, bw: f64, rate: f64) -> (f64, f64) {
    let r = (-std::f64::consts::PI * bw / rate).exp();
    (2.0 * r * (2.0 * std::f64::consts::PI * freq / rate).cos(), -r * r)
}

const FORMANT_BANDWIDTHS: [f64; 3] = [90.0, 120.0, 180.0];

/// Male reference formants of the three vowel-like segments every sentence
/// is built from.
const PHONE_FORMANTS: [[f64; 3]; SEGMENTS] = [[730.0, 1090.0, 2440.0], [270.0, 2290.0, 3010.0], [300.0, 870.0, 2240.0]];

/// Per-sentence formant frequencies of each segment: the shared phones,
/// perturbed per sentence by `template_scale`.
fn sentence_formants(spec: &SynthSpec, sentence: usize) -> [[f64; 3]; SEGMENTS] {
    let mut rng = rng_for(spec.seed, &format!("formants/{sentence}"));
    std::array::from_fn(|k| {
        std::array::from_fn(|f| PHONE_FORMANTS[k][f] * (0.1 * spec.template_scale * normal(&mut rng)).exp())
    })
}

/// Synthesizes one waveform-tier utterance.
pub fn synthesize_waveform(spec: &SynthSpec, row_index: usize) -> Result<(ManifestRow, AudioClip)> {
    spec.validate()?;
    let plans = spec.plan();
    let plan = plans
        .get(row_index)
        .ok_or_else(|| Error::InvalidArgument(format!("row {row_index} out of range")))?;
    Ok((plan.row.clone(), waveform(spec, plan)?))
}

fn waveform(spec: &SynthSpec, plan: &Plan) -> Result<AudioClip> {
    let fs = SAMPLE_RATE as f64;
    let g = plan.row.gender;
    let r = spec.realize(g, plan.emotion);
    let spk = speaker(spec, g, plan.speaker);
    let mut rng = rng_for(spec.seed, &plan.row.path);
    let gender_formant = match g {
        Gender::Female => 1.17,
        Gender::Male => 1.0,
    };
    let formants = sentence_formants(spec, plan.sentence);
    let durations = segment_durations(spec, r.rate_factor, &mut rng);
    let utt_f0_shift = 4.0 * normal(&mut rng);

    // Each segment: a short unvoiced onset, then the voiced nucleus.
    let mut spans = Vec::new();
    let mut start = 0usize;
    for (k, d) in durations.iter().enumerate() {
        let len = (d * fs) as usize;
        let onset = ((rng.random_range(0.15..0.35) * d * fs) as usize).min(len / 2);
        spans.push((k, start, start + onset, false));
        spans.push((k, start + onset, start + len, true));
        start += len;
    }
    let total = start;
    let mut phase = 0.0;
    let mut source = vec![0.0; total];
    for &(_, a, b, voiced) in &spans {
        for (n, s) in source.iter_mut().enumerate().take(b).skip(a) {
            let noise = normal(&mut rng);
            if voiced {
                let f0 = f0_at(spec, g, &spk, &r, n as f64 / total as f64, utt_f0_shift);
                phase += f0 / fs;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                *s = pulse + 0.02 * noise;
            } else {
                *s = 0.1 * noise;
            }
        }
    }

    // Cascade of formant resonators, coefficients switching per segment.
    let mut out = source;
    for f in 0..3 {
        let (mut y1, mut y2) = (0.0, 0.0);
        for &(k, a, b, _) in &spans {
            let freq = formants[k][f] * gender_formant * spk.formant_factor;
            let (c1, c2) = resonator(freq, FORMANT_BANDWIDTHS[f], fs);
            for x in &mut out[a..b] {
                let y = *x + c1 * y1 + c2 * y2;
                y2 = y1;
                y1 = y;
                *x = y;
            }
        }
    }

    // One-pole tilt: differencing brightens, leaky integration darkens.
    let tilt = r.spectral_tilt;
    let mut prev_in = 0.0;
    let mut prev_out = 0.0;
    for x in &mut out {
        let y = if tilt >= 0.0 {
            *x - 0.9 * tilt * prev_in
        } else {
            *x + 0.9 * (-tilt) * prev_out
        };
        prev_in = *x;
        prev_out = y;
        *x = y;
    }

    // Fix the RMS so loudness follows the energy scale alone, then add a
    // faint noise floor.
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / out.len() as f64).sqrt();
    let gain = if rms > 0.0 { 0.05 * r.energy_scale / rms } else { 0.0 };
    for x in &mut out {
        *x = *x * gain + 2e-4 * normal(&mut rng);
    }
    AudioClip::new(out, SAMPLE_RATE)
}

/// Writes every WAV and `manifest.csv` under `out_dir`.
pub fn generate_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let plans = spec.plan();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    plans.par_iter().try_for_each(|p| -> Result<()> {
        let path = out_dir.join(&p.row.path);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_wav(&path, &waveform(spec, p)?)
    })?;
    let manifest = DatasetManifest::new(plans.into_iter().map(|p| p.row).collect());
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Writes only `manifest.csv`.
pub fn generate_manifest(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let manifest = spec.manifest()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Utterance-level summary used by the nearest-mean sanity classifier:
/// mean static coefficients, mean log F0 of voiced frames, mean log energy.
fn utterance_summary(u: &Utterance) -> Vec<f64> {
    let dim = u.observations.dim() / 2;
    let n = u.observations.len() as f64;
    let mut v: Vec<f64> = (0..dim)
        .map(|d| u.observations.vectors.iter().map(|x| x[d]).sum::<f64>() / n)
        .collect();
    let f0: Vec<f64> = u.prosody.frames.iter().filter_map(|f| f.f0.map(f64::ln)).collect();
    v.push(if f0.is_empty() {
        0.0
    } else {
        10.0 * f0.iter().sum::<f64>() / f0.len() as f64
    });
    v.push(u.prosody.frames.iter().map(|f| f.log_energy).sum::<f64>() / u.prosody.len().max(1) as f64);
    v.push(n / 100.0);
    v
}

/// Emotion accuracy (%) of a nearest (gender, emotion) class-mean classifier
/// trained on the train split and applied to the test split.
pub fn nearest_mean_accuracy(corpus: &Corpus) -> Result<f64> {
    use std::collections::BTreeMap;
    let mut sums: BTreeMap<(Gender, String), (Vec<f64>, usize)> = BTreeMap::new();
    for u in corpus.split(Split::Train) {
        let s = utterance_summary(u);
        let e = sums
            .entry((u.row.gender, u.row.emotion.clone()))
            .or_insert_with(|| (vec![0.0; s.len()], 0));
        e.0.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        e.1 += 1;
    }
    if sums.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    let means: Vec<((Gender, String), Vec<f64>)> = sums
        .into_iter()
        .map(|(k, (s, n))| (k, s.into_iter().map(|x| x / n as f64).collect()))
        .collect();
    let (mut hits, mut total) = (0usize, 0usize);
    for u in corpus.split(Split::Test) {
        let s = utterance_summary(u);
        let dist = |m: &[f64]| m.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let best = means
            .iter()
            .min_by(|a, b| dist(&a.1).total_cmp(&dist(&b.1)))
            .expect("non-empty");
        hits += usize::from(best.0 .1 == u.row.emotion);
        total += 1;
    }
    if total == 0 {
        return Err(Error::Empty("test split".into()));
    }
    Ok(100.0 * hits as f64 / total as f64)
}
