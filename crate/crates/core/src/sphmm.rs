//! Suprasegmental layer: prosodic summaries over blocks of acoustic states,
//! the small left-to-right model trained on them, and acoustic/prosodic
//! score fusion.
//!
//! An utterance is Viterbi-aligned to its acoustic model; consecutive groups
//! of acoustic states (three groups of three for a nine-state model) form
//! suprasegmental states, and each group contributes one summary vector.
//! Scores from both layers are normalized per observation before fusing:
//! an acoustic log-likelihood spans hundreds of frames while the
//! suprasegmental one spans three summaries.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ObservationSequence;
use crate::hmm::{baum_welch_train, AcousticHmm, LtrHmm, TrainConfig};
use crate::prosody::ProsodicTrack;

/// Entries of a [`SummaryVector`], in order.
pub const SUMMARY_FIELDS: [&str; 6] = [
    "mean_log_f0",
    "log_f0_slope",
    "voiced_fraction",
    "mean_log_energy",
    "log_energy_slope",
    "duration_fraction",
];

pub const SUMMARY_DIM: usize = SUMMARY_FIELDS.len();

/// Prosodic summary of the frames aligned to one suprasegmental state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryVector {
    /// Mean log F0 over voiced frames; 0 when none are voiced.
    pub mean_log_f0: f64,
    /// Least-squares slope of log F0 over voiced frames, per second.
    pub log_f0_slope: f64,
    pub voiced_fraction: f64,
    pub mean_log_energy: f64,
    /// Least-squares slope of log energy, per second.
    pub log_energy_slope: f64,
    /// Share of the utterance's frames falling in this block.
    pub duration_fraction: f64,
}

impl SummaryVector {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.mean_log_f0,
            self.log_f0_slope,
            self.voiced_fraction,
            self.mean_log_energy,
            self.log_energy_slope,
            self.duration_fraction,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != SUMMARY_DIM {
            return Err(Error::DimensionMismatch {
                expected: SUMMARY_DIM,
                actual: v.len(),
            });
        }
        Ok(Self {
            mean_log_f0: v[0],
            log_f0_slope: v[1],
            voiced_fraction: v[2],
            mean_log_energy: v[3],
            log_energy_slope: v[4],
            duration_fraction: v[5],
        })
    }
}

/// One summary vector per suprasegmental state, in temporal order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVectorSequence {
    pub vectors: Vec<SummaryVector>,
}

impl SummaryVectorSequence {
    pub fn as_observations(&self) -> Vec<Vec<f64>> {
        self.vectors.iter().map(SummaryVector::to_vec).collect()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Least-squares slope of `ys` against `xs`; 0 with fewer than two distinct x.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    sxy / sxx
}

/// Summarizes the prosody of the frames `idx` (all from one block).
fn summarize_block(idx: &[usize], prosody: &ProsodicTrack, total_frames: usize) -> SummaryVector {
    if idx.is_empty() {
        return SummaryVector::default();
    }
    let time = |t: usize| t as f64 * prosody.frame_shift_s;
    let voiced: Vec<(f64, f64)> = idx
        .iter()
        .filter_map(|&t| prosody.frames[t].f0.map(|f| (time(t), f.ln())))
        .collect();
    let (vt, vf): (Vec<f64>, Vec<f64>) = voiced.iter().cloned().unzip();
    let et: Vec<f64> = idx.iter().map(|&t| time(t)).collect();
    let ev: Vec<f64> = idx.iter().map(|&t| prosody.frames[t].log_energy).collect();
    SummaryVector {
        mean_log_f0: if vf.is_empty() {
            0.0
        } else {
            vf.iter().sum::<f64>() / vf.len() as f64
        },
        log_f0_slope: ls_slope(&vt, &vf),
        voiced_fraction: vf.len() as f64 / idx.len() as f64,
        mean_log_energy: ev.iter().sum::<f64>() / ev.len() as f64,
        log_energy_slope: ls_slope(&et, &ev),
        duration_fraction: idx.len() as f64 / total_frames as f64,
    }
}

/// Groups an acoustic state path into `num_blocks` contiguous state blocks
/// and summarizes each block's prosody.
pub fn summarize_path(
    path: &[usize],
    num_acoustic_states: usize,
    num_blocks: usize,
    prosody: &ProsodicTrack,
) -> Result<SummaryVectorSequence> {
    if path.len() != prosody.len() {
        return Err(Error::LengthMismatch {
            observations: path.len(),
            prosody: prosody.len(),
        });
    }
    if num_blocks == 0 || !num_acoustic_states.is_multiple_of(num_blocks) {
        return Err(Error::InvalidArgument(format!(
            "{num_acoustic_states} acoustic states do not split into {num_blocks} equal blocks"
        )));
    }
    let group = num_acoustic_states / num_blocks;
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); num_blocks];
    for (t, &s) in path.iter().enumerate() {
        blocks[s / group].push(t);
    }
    Ok(SummaryVectorSequence {
        vectors: blocks.iter().map(|b| summarize_block(b, prosody, path.len())).collect(),
    })
}

/// Aligns `obs` to the acoustic model and emits one prosodic summary per
/// suprasegmental state. Blocks with no aligned frames yield a zero vector.
pub fn to_suprasegmental(
    hmm: &AcousticHmm,
    obs: &ObservationSequence,
    prosody: &ProsodicTrack,
    num_supra_states: usize,
) -> Result<SummaryVectorSequence> {
    if obs.len() != prosody.len() {
        return Err(Error::LengthMismatch {
            observations: obs.len(),
            prosody: prosody.len(),
        });
    }
    let (path, _) = hmm.viterbi(&obs.vectors)?;
    summarize_path(&path, hmm.num_states(), num_supra_states, prosody)
}

/// Left-to-right model over summary vectors. Paths must end in the last
/// state, so with one summary per state the alignment is forced.
#[derive(Debug, Clone, PartialEq)]
pub struct SuprasegmentalHmm {
    hmm: LtrHmm,
}

impl SuprasegmentalHmm {
    pub fn new(hmm: LtrHmm) -> Result<Self> {
        if !hmm.end_in_final() {
            return Err(Error::InvalidArgument(
                "suprasegmental models must require ending in the final state".into(),
            ));
        }
        Ok(Self { hmm })
    }

    pub fn hmm(&self) -> &LtrHmm {
        &self.hmm
    }

    pub fn num_supra_states(&self) -> usize {
        self.hmm.num_states()
    }

    pub fn summary_dim(&self) -> usize {
        self.hmm.feature_dim()
    }

    /// Forward log-likelihood of a summary sequence.
    pub fn log_likelihood(&self, s: &SummaryVectorSequence) -> Result<f64> {
        self.hmm.forward_log_likelihood(&s.as_observations())
    }
}

pub fn supra_log_likelihood(psi: &SuprasegmentalHmm, s: &SummaryVectorSequence) -> Result<f64> {
    psi.log_likelihood(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupraTrainConfig {
    pub num_supra_states: usize,
    pub num_mixtures: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub variance_floor_ratio: f64,
}

impl Default for SupraTrainConfig {
    fn default() -> Self {
        Self {
            num_supra_states: 3,
            num_mixtures: 3,
            max_iters: 20,
            rel_tol: 1e-4,
            seed: 0,
            variance_floor_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SupraTraining {
    pub model: SuprasegmentalHmm,
    pub log_likelihoods: Vec<f64>,
}

/// Fits a suprasegmental model to precomputed summary sequences.
pub fn train_on_summaries(summaries: &[SummaryVectorSequence], config: &SupraTrainConfig) -> Result<SupraTraining> {
    if summaries.is_empty() {
        return Err(Error::Empty("suprasegmental training data".into()));
    }
    let obs: Vec<Vec<Vec<f64>>> = summaries.iter().map(SummaryVectorSequence::as_observations).collect();
    let refs: Vec<&[Vec<f64>]> = obs.iter().map(Vec::as_slice).collect();
    let cfg = TrainConfig {
        num_states: config.num_supra_states,
        num_mixtures: config.num_mixtures,
        max_iters: config.max_iters,
        rel_tol: config.rel_tol,
        seed: config.seed,
        variance_floor_ratio: config.variance_floor_ratio,
        end_in_final: true,
    };
    let t = baum_welch_train(&refs, &cfg)?;
    Ok(SupraTraining {
        model: SuprasegmentalHmm::new(t.model)?,
        log_likelihoods: t.log_likelihoods,
    })
}

/// Trains a suprasegmental model on top of an already trained acoustic model.
pub fn train_suprasegmental(
    data: &[(&ObservationSequence, &ProsodicTrack)],
    acoustic: &AcousticHmm,
    config: &SupraTrainConfig,
) -> Result<SupraTraining> {
    if data.is_empty() {
        return Err(Error::Empty("suprasegmental training data".into()));
    }
    let summaries = data
        .iter()
        .map(|(o, p)| to_suprasegmental(acoustic, o, p, config.num_supra_states))
        .collect::<Result<Vec<_>>>()?;
    train_on_summaries(&summaries, config)
}

/// Fusion weight `alpha` in `[0, 1]`: 0 is purely acoustic, 1 purely prosodic.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub const ACOUSTIC_ONLY: FusionWeight = FusionWeight(0.0);
    pub const UNBIASED: FusionWeight = FusionWeight(0.5);
    pub const PROSODIC_ONLY: FusionWeight = FusionWeight(1.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(Self(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    /// `(1 - alpha) * acoustic + alpha * prosodic`.
    pub fn fuse(self, acoustic: f64, prosodic: f64) -> f64 {
        (1.0 - self.0) * acoustic + self.0 * prosodic
    }

    pub fn regime(self) -> AlphaRegime {
        classify_alpha_regime(self)
    }
}

impl Default for FusionWeight {
    fn default() -> Self {
        Self::UNBIASED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphaRegime {
    AcousticOnly,
    AcousticBiased,
    Unbiased,
    ProsodicBiased,
    ProsodicOnly,
}

impl fmt::Display for AlphaRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlphaRegime::AcousticOnly => "acoustic-only",
            AlphaRegime::AcousticBiased => "acoustic-biased",
            AlphaRegime::Unbiased => "unbiased",
            AlphaRegime::ProsodicBiased => "prosodic-biased",
            AlphaRegime::ProsodicOnly => "prosodic-only",
        })
    }
}

pub fn classify_alpha_regime(w: FusionWeight) -> AlphaRegime {
    let a = w.alpha();
    if a == 0.0 {
        AlphaRegime::AcousticOnly
    } else if a < 0.5 {
        AlphaRegime::AcousticBiased
    } else if a == 0.5 {
        AlphaRegime::Unbiased
    } else if a < 1.0 {
        AlphaRegime::ProsodicBiased
    } else {
        AlphaRegime::ProsodicOnly
    }
}

/// Per-observation scores of one utterance against one (acoustic,
/// suprasegmental) model pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    /// Acoustic forward log-likelihood divided by the frame count.
    pub acoustic: f64,
    /// Suprasegmental log-likelihood divided by the number of supra states.
    pub suprasegmental: f64,
}

impl LayerScores {
    pub fn fused(&self, w: FusionWeight) -> f64 {
        w.fuse(self.acoustic, self.suprasegmental)
    }
}

pub fn layer_scores(
    lambda: &AcousticHmm,
    psi: &SuprasegmentalHmm,
    obs: &ObservationSequence,
    prosody: &ProsodicTrack,
) -> Result<LayerScores> {
    if obs.len() != prosody.len() {
        return Err(Error::LengthMismatch {
            observations: obs.len(),
            prosody: prosody.len(),
        });
    }
    let acoustic = lambda.forward_log_likelihood(&obs.vectors)? / obs.len() as f64;
    let summary = to_suprasegmental(lambda, obs, prosody, psi.num_supra_states())?;
    let suprasegmental = psi.log_likelihood(&summary)? / psi.num_supra_states() as f64;
    Ok(LayerScores {
        acoustic,
        suprasegmental,
    })
}

/// Fused per-observation log score of one model pair.
pub fn fused_log_score(
    lambda: &AcousticHmm,
    psi: &SuprasegmentalHmm,
    obs: &ObservationSequence,
    prosody: &ProsodicTrack,
    w: FusionWeight,
) -> Result<f64> {
    Ok(layer_scores(lambda, psi, obs, prosody)?.fused(w))
}
