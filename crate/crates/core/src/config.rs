//! Run configuration: a flat `key = value` text file (`#` starts a comment)
//! whose values command-line flags may override.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::audio::FrontendConfig;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::manifest::DEFAULT_EMOTIONS;
use crate::pipeline::ModelConfig;
use crate::prosody::ProsodyConfig;
use crate::sphmm::FusionWeight;
use crate::synth::{Preset, SynthSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub pre_emphasis: f64,
    pub pre_emphasis_enabled: bool,
    pub mel_channels: usize,
    pub fft_size: usize,
    pub num_coeffs: usize,
    pub delta_window: usize,
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
    pub num_states: usize,
    pub acoustic_mixtures: usize,
    pub supra_states: usize,
    pub supra_mixtures: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub variance_floor_ratio: f64,
    pub seed: u64,
    pub alpha: f64,
    pub critical_value: f64,
    pub emotions: Vec<String>,
    pub allow_split_overlap: bool,
    pub manifest: Option<PathBuf>,
    /// Directory WAV paths in the manifest are relative to; defaults to the
    /// manifest's directory.
    pub data_dir: Option<PathBuf>,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
    pub synth_preset: String,
    pub synth_overrides: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fe = FrontendConfig::default();
        let feat = FeatureConfig::default();
        let pros = ProsodyConfig::default();
        let model = ModelConfig::default();
        Self {
            frame_length_ms: fe.frame_length_ms,
            frame_shift_ms: fe.frame_shift_ms,
            pre_emphasis: fe.pre_emphasis.unwrap_or(0.97),
            pre_emphasis_enabled: fe.pre_emphasis.is_some(),
            mel_channels: feat.num_channels,
            fft_size: feat.fft_size,
            num_coeffs: feat.num_coeffs,
            delta_window: feat.delta_window,
            f0_min: pros.f0_min,
            f0_max: pros.f0_max,
            voicing_threshold: pros.voicing_threshold,
            num_states: model.num_states,
            acoustic_mixtures: model.acoustic_mixtures,
            supra_states: model.supra_states,
            supra_mixtures: model.supra_mixtures,
            max_iters: model.max_iters,
            rel_tol: model.rel_tol,
            variance_floor_ratio: model.variance_floor_ratio,
            seed: 0,
            alpha: FusionWeight::default().alpha(),
            critical_value: crate::eval::DEFAULT_CRITICAL_VALUE,
            emotions: DEFAULT_EMOTIONS.iter().map(|s| s.to_string()).collect(),
            allow_split_overlap: false,
            manifest: None,
            data_dir: None,
            model_dir: PathBuf::from("models"),
            report_dir: PathBuf::from("report"),
            synth_preset: "separable".into(),
            synth_overrides: BTreeMap::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("bad boolean `{value}` for `{key}`"))),
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Synthesis keys accepted under the `synth.` prefix.
pub const SYNTH_KEYS: [&str; 12] = [
    "speakers_per_gender",
    "train_speakers",
    "sentences",
    "train_sentences",
    "repeats",
    "separability",
    "spectral_weight",
    "prosodic_weight",
    "gender_divergent",
    "duration_s",
    "female_f0_hz",
    "male_f0_hz",
];

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "frame_length_ms" => self.frame_length_ms = parse(key, v)?,
            "frame_shift_ms" => self.frame_shift_ms = parse(key, v)?,
            "pre_emphasis" => self.pre_emphasis = parse(key, v)?,
            "pre_emphasis_enabled" => self.pre_emphasis_enabled = parse_bool(key, v)?,
            "mel_channels" => self.mel_channels = parse(key, v)?,
            "fft_size" => self.fft_size = parse(key, v)?,
            "num_coeffs" => self.num_coeffs = parse(key, v)?,
            "delta_window" => self.delta_window = parse(key, v)?,
            "f0_min" => self.f0_min = parse(key, v)?,
            "f0_max" => self.f0_max = parse(key, v)?,
            "voicing_threshold" => self.voicing_threshold = parse(key, v)?,
            "num_states" => self.num_states = parse(key, v)?,
            "acoustic_mixtures" => self.acoustic_mixtures = parse(key, v)?,
            "supra_states" => self.supra_states = parse(key, v)?,
            "supra_mixtures" => self.supra_mixtures = parse(key, v)?,
            "max_iters" => self.max_iters = parse(key, v)?,
            "rel_tol" => self.rel_tol = parse(key, v)?,
            "variance_floor_ratio" => self.variance_floor_ratio = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "critical_value" => self.critical_value = parse(key, v)?,
            "emotions" => self.emotions = list(v),
            "allow_split_overlap" => self.allow_split_overlap = parse_bool(key, v)?,
            "manifest" => self.manifest = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data_dir" => self.data_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "model_dir" => self.model_dir = PathBuf::from(v),
            "report_dir" => self.report_dir = PathBuf::from(v),
            "synth.preset" => {
                v.parse::<Preset>()?;
                self.synth_preset = v.to_string();
            }
            k if k.strip_prefix("synth.").is_some_and(|s| SYNTH_KEYS.contains(&s)) => {
                self.synth_overrides
                    .insert(k["synth.".len()..].to_string(), v.to_string());
            }
            _ => return Err(Error::InvalidArgument(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a configuration file's text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(
                    format!("line {}", i + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            self.set(k.trim(), v)
                .map_err(|e| Error::parse(format!("line {}", i + 1), e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    /// Every setting as `key -> value`, in the file syntax.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut m: BTreeMap<String, String> = [
            ("frame_length_ms", self.frame_length_ms.to_string()),
            ("frame_shift_ms", self.frame_shift_ms.to_string()),
            ("pre_emphasis", self.pre_emphasis.to_string()),
            ("pre_emphasis_enabled", self.pre_emphasis_enabled.to_string()),
            ("mel_channels", self.mel_channels.to_string()),
            ("fft_size", self.fft_size.to_string()),
            ("num_coeffs", self.num_coeffs.to_string()),
            ("delta_window", self.delta_window.to_string()),
            ("f0_min", self.f0_min.to_string()),
            ("f0_max", self.f0_max.to_string()),
            ("voicing_threshold", self.voicing_threshold.to_string()),
            ("num_states", self.num_states.to_string()),
            ("acoustic_mixtures", self.acoustic_mixtures.to_string()),
            ("supra_states", self.supra_states.to_string()),
            ("supra_mixtures", self.supra_mixtures.to_string()),
            ("max_iters", self.max_iters.to_string()),
            ("rel_tol", self.rel_tol.to_string()),
            ("variance_floor_ratio", self.variance_floor_ratio.to_string()),
            ("seed", self.seed.to_string()),
            ("alpha", self.alpha.to_string()),
            ("critical_value", self.critical_value.to_string()),
            ("emotions", self.emotions.join(",")),
            ("allow_split_overlap", self.allow_split_overlap.to_string()),
            ("manifest", path(&self.manifest)),
            ("data_dir", path(&self.data_dir)),
            ("model_dir", self.model_dir.display().to_string()),
            ("report_dir", self.report_dir.display().to_string()),
            ("synth.preset", self.synth_preset.clone()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        for (k, v) in &self.synth_overrides {
            m.insert(format!("synth.{k}"), v.clone());
        }
        m
    }

    /// Settings that determine the trained models and their scores; paths
    /// are left out so reports do not depend on where files live.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = self.to_map();
        for k in ["manifest", "data_dir", "model_dir", "report_dir"] {
            m.remove(k);
        }
        m.retain(|k, _| !k.starts_with("synth."));
        m
    }

    pub fn to_text(&self) -> String {
        self.to_map().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn frontend(&self) -> FrontendConfig {
        FrontendConfig {
            frame_length_ms: self.frame_length_ms,
            frame_shift_ms: self.frame_shift_ms,
            pre_emphasis: self.pre_emphasis_enabled.then_some(self.pre_emphasis),
        }
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            frontend: self.frontend(),
            num_channels: self.mel_channels,
            fft_size: self.fft_size,
            num_coeffs: self.num_coeffs,
            delta_window: self.delta_window,
        }
    }

    pub fn prosody(&self) -> ProsodyConfig {
        ProsodyConfig {
            f0_min: self.f0_min,
            f0_max: self.f0_max,
            voicing_threshold: self.voicing_threshold,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            num_states: self.num_states,
            acoustic_mixtures: self.acoustic_mixtures,
            supra_states: self.supra_states,
            supra_mixtures: self.supra_mixtures,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            variance_floor_ratio: self.variance_floor_ratio,
            seed: self.seed,
            emotions: self.emotions.clone(),
            allow_split_overlap: self.allow_split_overlap,
        }
    }

    pub fn fusion_weight(&self) -> Result<FusionWeight> {
        FusionWeight::new(self.alpha)
    }

    /// The preset's spec with this config's seed and `synth.*` overrides.
    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let mut spec = self.synth_preset.parse::<Preset>()?.spec(self.seed);
        for (k, v) in &self.synth_overrides {
            let key = format!("synth.{k}");
            match k.as_str() {
                "speakers_per_gender" => spec.speakers_per_gender = parse(&key, v)?,
                "train_speakers" => spec.train_speakers = parse(&key, v)?,
                "sentences" => spec.sentences = parse(&key, v)?,
                "train_sentences" => spec.train_sentences = parse(&key, v)?,
                "repeats" => {
                    spec.repeats_per_session = list(v).iter().map(|r| parse(&key, r)).collect::<Result<_>>()?
                }
                "separability" => spec.separability = parse(&key, v)?,
                "spectral_weight" => spec.spectral_weight = parse(&key, v)?,
                "prosodic_weight" => spec.prosodic_weight = parse(&key, v)?,
                "gender_divergent" => spec.gender_divergent = parse_bool(&key, v)?,
                "duration_s" => spec.duration_s = parse(&key, v)?,
                "female_f0_hz" => spec.female_f0_hz = parse(&key, v)?,
                "male_f0_hz" => spec.male_f0_hz = parse(&key, v)?,
                _ => unreachable!("keys are checked in set()"),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Checks ranges that would otherwise only fail deep inside a run.
    pub fn validate(&self) -> Result<()> {
        self.fusion_weight()?;
        if self.supra_states == 0 || !self.num_states.is_multiple_of(self.supra_states) {
            return Err(Error::InvalidArgument(format!(
                "num_states ({}) must be a multiple of supra_states ({})",
                self.num_states, self.supra_states
            )));
        }
        if self.num_states == 0 || self.acoustic_mixtures == 0 || self.supra_mixtures == 0 {
            return Err(Error::InvalidArgument("model sizes must be positive".into()));
        }
        if self.emotions.len() < 2 {
            return Err(Error::InvalidArgument("at least two emotions are required".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_recognizer_setup() {
        let c = RunConfig::default();
        assert_eq!(c.num_states, 9);
        assert_eq!(c.acoustic_mixtures, 10);
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.mel_channels, 24);
        assert_eq!(c.num_coeffs, 8);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip_and_overrides() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# comment\nnum_states = 3 # inline\nemotions = a, b,c\nsynth.repeats = 2,1\nmanifest = x/m.csv\n",
        )
        .unwrap();
        assert_eq!(c.num_states, 3);
        assert_eq!(c.emotions, ["a", "b", "c"]);
        assert_eq!(c.synth_spec().unwrap().repeats_per_session, vec![2, 1]);
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert!(!c.echo().contains_key("manifest"));
    }

    #[test]
    fn bad_input_is_reported() {
        let mut c = RunConfig::default();
        assert!(c.apply_text("nonsense").is_err());
        assert!(c.apply_text("unknown_key = 3").is_err());
        assert!(c.apply_text("num_states = many").is_err());
        assert!(c.apply_text("synth.preset = loud").is_err());
        c.alpha = 1.5;
        assert!(c.validate().is_err());
        let c = RunConfig {
            num_states: 8,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
