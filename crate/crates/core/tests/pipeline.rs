use std::collections::BTreeMap;

use sphmm_core::audio::load_wav;
use sphmm_core::config::RunConfig;
use sphmm_core::eval::{self, Approach};
use sphmm_core::features::extract_observations;
use sphmm_core::manifest::{DatasetManifest, Gender, Split};
use sphmm_core::pipeline::{
    identify_emotion, run_two_stage, run_with_oracle_gender, Corpus, ModelConfig, TrainedSystem, Utterance,
};
use sphmm_core::prosody::extract_prosody;
use sphmm_core::sphmm::FusionWeight;
use sphmm_core::synth::{generate_corpus, generate_feature_corpus, Preset, SynthSpec};

fn small_config(spec: &SynthSpec) -> ModelConfig {
    ModelConfig {
        num_states: 3,
        acoustic_mixtures: 1,
        supra_mixtures: 1,
        max_iters: 8,
        emotions: spec.emotion_names(),
        ..ModelConfig::default()
    }
}

fn trained(preset: Preset, seed: u64) -> (SynthSpec, Corpus, TrainedSystem) {
    let spec = preset.spec(seed);
    let corpus = generate_feature_corpus(&spec).unwrap();
    let system = TrainedSystem::train(&corpus, &small_config(&spec)).unwrap();
    (spec, corpus, system)
}

#[test]
fn chance_preset_stays_near_chance() {
    let mut spec = Preset::Chance.spec(17);
    spec.speakers_per_gender = 10;
    spec.repeats_per_session = vec![4];
    let corpus = generate_feature_corpus(&spec).unwrap();
    let system = TrainedSystem::train(&corpus, &small_config(&spec)).unwrap();
    let test: Vec<&Utterance> = corpus.split(Split::Test).collect();
    assert!(test.len() >= 500, "{} test utterances", test.len());
    let report = eval::evaluate(&system, &test, FusionWeight::UNBIASED, BTreeMap::new()).unwrap();
    let chance = 100.0 / 6.0;
    for a in Approach::ALL {
        let acc = report.average(a);
        assert!((acc - chance).abs() <= 10.0, "approach {}: {acc:.2}%", a.number());
    }
}

#[test]
fn wrong_gender_decision_is_not_corrected() {
    let (_, corpus, system) = trained(Preset::Separable, 3);
    for u in corpus.split(Split::Test).take(20) {
        let w = FusionWeight::UNBIASED;
        let two = run_two_stage(&system.gender, &system.emotion, &u.observations, &u.prosody, w).unwrap();
        let via_decided = identify_emotion(&system.emotion, two.gender, &u.observations, &u.prosody, w).unwrap();
        assert_eq!(two.emotion_decision, via_decided);
        let other = match u.row.gender {
            Gender::Female => Gender::Male,
            Gender::Male => Gender::Female,
        };
        let forced = run_with_oracle_gender(&system.emotion, other, &u.observations, &u.prosody, w).unwrap();
        let direct = identify_emotion(&system.emotion, other, &u.observations, &u.prosody, w).unwrap();
        assert_eq!(forced, direct);
    }
}

#[test]
fn saved_system_scores_identically() {
    let (_, corpus, system) = trained(Preset::Separable, 4);
    let dir = tempfile::tempdir().unwrap();
    system.save(dir.path()).unwrap();
    let loaded = TrainedSystem::load(dir.path()).unwrap();
    let test: Vec<&Utterance> = corpus.split(Split::Test).take(30).collect();
    let a = eval::score_utterances(&system, &test).unwrap();
    let b = eval::score_utterances(&loaded, &test).unwrap();
    assert_eq!(a, b);
}

#[test]
fn report_round_trips_through_disk() {
    let (_, corpus, system) = trained(Preset::Separable, 6);
    let test: Vec<&Utterance> = corpus.split(Split::Test).collect();
    let mut report = eval::evaluate(&system, &test, FusionWeight::UNBIASED, BTreeMap::new()).unwrap();
    report.alpha_sweep = eval::alpha_sweep(&system, &test, &[0.0, 0.5, 1.0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = eval::emit_report(&report, dir.path()).unwrap();
    assert_eq!(written.len(), 6);
    assert_eq!(eval::load_report(dir.path()).unwrap(), report);
    let csv = std::fs::read_to_string(dir.path().join(eval::SWEEP_FILE)).unwrap();
    assert_eq!(eval::parse_sweep_csv(&csv).unwrap(), report.alpha_sweep);
}

#[test]
fn waveform_corpus_feeds_the_frontend() {
    let mut spec = Preset::Separable.spec(8);
    spec.speakers_per_gender = 2;
    spec.train_speakers = 1;
    spec.sentences = 2;
    spec.train_sentences = 1;
    spec.repeats_per_session = vec![1];
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_corpus(&spec, dir.path()).unwrap();
    assert_eq!(
        DatasetManifest::load(dir.path().join("manifest.csv")).unwrap(),
        manifest
    );
    let cfg = RunConfig::default();
    let row = manifest.split(Split::Test).next().unwrap();
    let clip = load_wav(dir.path().join(&row.path)).unwrap();
    assert_eq!(clip.sample_rate(), 16_000);
    let obs = extract_observations(&row.path, &clip, &cfg.features()).unwrap();
    let prosody = extract_prosody(&clip, &cfg.frontend(), &cfg.prosody()).unwrap();
    assert_eq!(obs.dim(), 16);
    assert_eq!(obs.len(), prosody.len());
    let voiced = prosody.frames.iter().filter(|f| f.f0.is_some()).count();
    assert!(
        voiced * 2 > prosody.len(),
        "{voiced} of {} frames voiced",
        prosody.len()
    );
    let corpus = Corpus::from_manifest(&manifest, dir.path(), &cfg.features(), &cfg.prosody(), &[Split::Test]).unwrap();
    assert_eq!(corpus.utterances.len(), manifest.split(Split::Test).count());
}
