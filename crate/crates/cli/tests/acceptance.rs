//! Acceptance checks. Runs as a plain binary (no libtest harness) so every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sphmm_core::eval::{self, score_utterances, students_t, students_t_with_critical, sweep_from_scores, Approach};
use sphmm_core::features::{mfcc, ObservationSequence};
use sphmm_core::gmm::{DiagGaussian, GaussianMixture};
use sphmm_core::hmm::{baum_welch_train, LtrHmm, TrainConfig};
use sphmm_core::manifest::{Gender, Split};
use sphmm_core::pipeline::{
    identify_emotion, identify_emotion_hmm_only, Corpus, ModelConfig, TrainedSystem, Utterance,
};
use sphmm_core::prosody::ProsodicTrack;
use sphmm_core::sphmm::{train_suprasegmental, FusionWeight, SupraTrainConfig};
use sphmm_core::synth::{generate_corpus, generate_feature_corpus, Preset};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------------------
// Independent HMM oracle: linear-domain probabilities over all N^T state
// sequences, with the Gaussian density written out by hand.

struct RandomHmm {
    model: LtrHmm,
    self_loops: Vec<f64>,
    weights: Vec<Vec<f64>>,
    means: Vec<Vec<Vec<f64>>>,
    vars: Vec<Vec<Vec<f64>>>,
}

fn random_hmm(rng: &mut ChaCha8Rng) -> (RandomHmm, Vec<Vec<f64>>) {
    let n = rng.random_range(1..=3usize);
    let d = rng.random_range(1..=2usize);
    let m = rng.random_range(1..=2usize);
    let end_in_final = rng.random_bool(0.5);
    let t_min = if end_in_final { n } else { 1 };
    let t = rng.random_range(t_min..=5usize);
    let mut self_loops: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    self_loops[n - 1] = 1.0;
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut vars = Vec::new();
    let mut states = Vec::new();
    for _ in 0..n {
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let mu: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let var: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(0.3..2.0)).collect())
            .collect();
        let comps = mu
            .iter()
            .zip(&var)
            .map(|(a, b)| DiagGaussian::new(a.clone(), b.clone()).unwrap())
            .collect();
        states.push(GaussianMixture::new(w.clone(), comps).unwrap());
        weights.push(w);
        means.push(mu);
        vars.push(var);
    }
    let model = LtrHmm::from_self_loops(&self_loops, states, end_in_final).unwrap();
    let obs = (0..t)
        .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    (
        RandomHmm {
            model,
            self_loops,
            weights,
            means,
            vars,
        },
        obs,
    )
}

fn emission(h: &RandomHmm, state: usize, x: &[f64]) -> f64 {
    let mut p = 0.0;
    for k in 0..h.weights[state].len() {
        let mut g = 1.0;
        for (i, &xi) in x.iter().enumerate() {
            let mu = h.means[state][k][i];
            let v = h.vars[state][k][i];
            g *= (-(xi - mu) * (xi - mu) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        }
        p += h.weights[state][k] * g;
    }
    p
}

fn transition(h: &RandomHmm, from: usize, to: usize) -> f64 {
    if to == from {
        h.self_loops[from]
    } else if to == from + 1 {
        1.0 - h.self_loops[from]
    } else {
        0.0
    }
}

/// Every state sequence with nonzero probability and its probability.
fn all_paths(h: &RandomHmm, obs: &[Vec<f64>]) -> Vec<(Vec<usize>, f64)> {
    let n = h.self_loops.len();
    let t = obs.len();
    let mut out = Vec::new();
    for code in 0..n.pow(t as u32) {
        let path: Vec<usize> = (0..t).map(|i| code / n.pow(i as u32) % n).collect();
        if path[0] != 0 || (h.model.end_in_final() && path[t - 1] != n - 1) {
            continue;
        }
        let mut p = emission(h, path[0], &obs[0]);
        for i in 1..t {
            p *= transition(h, path[i - 1], path[i]) * emission(h, path[i], &obs[i]);
        }
        if p > 0.0 {
            out.push((path, p));
        }
    }
    out
}

fn forward_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (h, obs) = random_hmm(&mut rng);
        let total: f64 = all_paths(&h, &obs).iter().map(|(_, p)| p).sum();
        let got = h.model.forward_log_likelihood(&obs).map_err(|e| e.to_string())?;
        worst = worst.max((got - total.ln()).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, format!("max |error| {worst:.2e}"))?;
    ensure(secs < 30.0, format!("took {secs:.1}s"))?;
    Ok(format!("200 models, max |log error| {worst:.2e}, {secs:.2}s"))
}

fn viterbi_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let (h, obs) = random_hmm(&mut rng);
        let (best_path, best_p) = all_paths(&h, &obs)
            .into_iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or("no admissible path")?;
        let (path, score) = h.model.viterbi(&obs).map_err(|e| e.to_string())?;
        ensure(path == best_path, format!("model {i}: path {path:?} != {best_path:?}"))?;
        worst = worst.max((score - best_p.ln()).abs());
    }
    ensure(worst <= 1e-9, format!("max |score error| {worst:.2e}"))?;
    Ok(format!("200 models, paths identical, max |log error| {worst:.2e}"))
}

// ---------------------------------------------------------------------------

fn monotone(lls: &[f64]) -> bool {
    lls.windows(2).all(|w| w[1] >= w[0] - 1e-6)
}

fn em_monotonicity() -> Check {
    let spec = Preset::Separable.spec(5);
    let corpus = generate_feature_corpus(&spec).map_err(|e| e.to_string())?;
    let mut iters = 0;
    for run in 0..20u64 {
        let gender = Gender::ALL[run as usize % 2];
        let emotion = &spec.emotion_names()[run as usize % 6];
        let utts: Vec<&Utterance> = corpus
            .split(Split::Train)
            .filter(|u| u.row.gender == gender && &u.row.emotion == emotion)
            .collect();
        let seqs: Vec<&[Vec<f64>]> = utts.iter().map(|u| u.observations.vectors.as_slice()).collect();
        let cfg = TrainConfig {
            num_states: 6,
            num_mixtures: 2,
            max_iters: 15,
            rel_tol: 0.0,
            seed: run,
            ..TrainConfig::default()
        };
        let acoustic = baum_welch_train(&seqs, &cfg).map_err(|e| e.to_string())?;
        ensure(
            monotone(&acoustic.log_likelihoods),
            format!("acoustic run {run}: {:?}", acoustic.log_likelihoods),
        )?;
        let data: Vec<(&ObservationSequence, &ProsodicTrack)> =
            utts.iter().map(|u| (&u.observations, &u.prosody)).collect();
        let supra_cfg = SupraTrainConfig {
            num_mixtures: 2,
            max_iters: 15,
            rel_tol: 0.0,
            seed: run,
            ..SupraTrainConfig::default()
        };
        let supra = train_suprasegmental(&data, &acoustic.model, &supra_cfg).map_err(|e| e.to_string())?;
        ensure(
            monotone(&supra.log_likelihoods),
            format!("supra run {run}: {:?}", supra.log_likelihoods),
        )?;
        iters += acoustic.log_likelihoods.len() + supra.log_likelihoods.len() - 2;
    }
    Ok(format!(
        "20 acoustic + 20 suprasegmental runs, {iters} EM steps, none decreased by > 1e-6"
    ))
}

// ---------------------------------------------------------------------------

fn mfcc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = 24;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(1e-3..1e3)).collect();
        let got = mfcc(&y, 8).map_err(|e| e.to_string())?;
        for n in 1..=8 {
            let mut c = 0.0;
            for mm in 1..=m {
                c += y[mm - 1].ln() * (PI * n as f64 * (mm as f64 - 0.5) / m as f64).cos();
            }
            worst = worst.max((got[n - 1] - c).abs());
        }
    }
    ensure(worst <= 1e-12, format!("max |error| {worst:.2e}"))?;
    let mut flat = 0.0f64;
    for level in [1e-6, 0.37, 1.0, 42.0, 1e6] {
        for c in mfcc(&vec![level; m], 8).map_err(|e| e.to_string())? {
            flat = flat.max(c.abs());
        }
    }
    ensure(flat <= 1e-12, format!("constant input gives |C| up to {flat:.2e}"))?;
    Ok(format!(
        "100 vectors, max |error| {worst:.2e}; constant input max |C| {flat:.2e}"
    ))
}

// ---------------------------------------------------------------------------

fn small_model_config(emotions: Vec<String>) -> ModelConfig {
    ModelConfig {
        num_states: 6,
        acoustic_mixtures: 2,
        supra_mixtures: 2,
        max_iters: 10,
        emotions,
        ..ModelConfig::default()
    }
}

fn fusion_identities() -> Check {
    let spec = Preset::Separable.spec(9);
    let corpus = generate_feature_corpus(&spec).map_err(|e| e.to_string())?;
    let system = TrainedSystem::train(&corpus, &small_model_config(spec.emotion_names())).map_err(|e| e.to_string())?;
    let utts: Vec<&Utterance> = corpus.utterances.iter().take(100).collect();
    ensure(utts.len() == 100, "fewer than 100 utterances")?;
    let grid = eval::default_alpha_grid();
    let mut worst = 0.0f64;
    for u in &utts {
        for g in Gender::ALL {
            let scores = system
                .emotion
                .layer_scores(g, &u.observations, &u.prosody)
                .map_err(|e| e.to_string())?;
            for (e, s) in &scores {
                ensure(
                    s.fused(FusionWeight::ACOUSTIC_ONLY) == s.acoustic,
                    format!("alpha 0 differs for {e}"),
                )?;
                ensure(
                    s.fused(FusionWeight::PROSODIC_ONLY) == s.suprasegmental,
                    format!("alpha 1 differs for {e}"),
                )?;
                for &a in &grid {
                    let affine = s.acoustic + a * (s.suprasegmental - s.acoustic);
                    let got = s.fused(FusionWeight::new(a).map_err(|e| e.to_string())?);
                    worst = worst.max((got - affine).abs() / affine.abs().max(1.0));
                }
            }
            let hmm_only = identify_emotion_hmm_only(&system.emotion, g, &u.observations).map_err(|e| e.to_string())?;
            let fused = identify_emotion(
                &system.emotion,
                g,
                &u.observations,
                &u.prosody,
                FusionWeight::ACOUSTIC_ONLY,
            )
            .map_err(|e| e.to_string())?;
            ensure(
                hmm_only.label == fused.label,
                format!("{}: {} vs {}", u.row.path, hmm_only.label, fused.label),
            )?;
        }
    }
    ensure(worst <= 1e-12, format!("affine residual {worst:.2e}"))?;
    Ok(format!(
        "exact at alpha 0 and 1, affine residual {worst:.2e}, hmm-only labels equal on 100 utterances"
    ))
}

// ---------------------------------------------------------------------------

fn separable_end_to_end() -> Check {
    let start = Instant::now();
    let spec = Preset::Separable.spec(0);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = generate_corpus(&spec, dir.path()).map_err(|e| e.to_string())?;
    let defaults = sphmm_core::config::RunConfig::default();
    let corpus = Corpus::from_manifest(
        &manifest,
        dir.path(),
        &defaults.features(),
        &defaults.prosody(),
        &[Split::Train, Split::Test],
    )
    .map_err(|e| e.to_string())?;
    let config = ModelConfig {
        emotions: spec.emotion_names(),
        ..defaults.model()
    };
    let system = TrainedSystem::train(&corpus, &config).map_err(|e| e.to_string())?;
    let test: Vec<&Utterance> = corpus.split(Split::Test).collect();
    let report = eval::evaluate(&system, &test, FusionWeight::UNBIASED, BTreeMap::new()).map_err(|e| e.to_string())?;
    let [a1, a2, a3] = Approach::ALL.map(|a| report.average(a));
    let secs = start.elapsed().as_secs_f64();
    let line = format!(
        "waveform corpus, {} test utterances: gender {:.2}%, approaches 1/2/3 = {a1:.2}/{a2:.2}/{a3:.2}%, {secs:.1}s",
        test.len(),
        report.gender_accuracy
    );
    ensure(
        report.gender_accuracy >= 98.0,
        format!("gender accuracy too low; {line}"),
    )?;
    ensure(a1 >= 90.0, format!("approach 1 too low; {line}"))?;
    ensure(a1 >= a3 && a3 >= a2, format!("ordering violated; {line}"))?;
    ensure(secs < 300.0, format!("too slow; {line}"))?;
    Ok(line)
}

fn prosody_only_sweep() -> Check {
    let spec = Preset::ProsodyOnly.spec(0);
    let corpus = generate_feature_corpus(&spec).map_err(|e| e.to_string())?;
    let config = ModelConfig {
        emotions: spec.emotion_names(),
        ..ModelConfig::default()
    };
    let system = TrainedSystem::train(&corpus, &config).map_err(|e| e.to_string())?;
    let test: Vec<&Utterance> = corpus.split(Split::Test).collect();
    let scores = score_utterances(&system, &test).map_err(|e| e.to_string())?;
    let curve = sweep_from_scores(&test, &scores, &eval::default_alpha_grid()).map_err(|e| e.to_string())?;
    let at0 = curve.first().ok_or("empty sweep")?.accuracy_percent;
    let at1 = curve.last().ok_or("empty sweep")?.accuracy_percent;
    let max = curve
        .iter()
        .map(|p| p.accuracy_percent)
        .fold(f64::NEG_INFINITY, f64::max);
    let line = format!("accuracy {at0:.2}% at alpha 0, {at1:.2}% at alpha 1, curve max {max:.2}%");
    ensure(at1 > at0, format!("no gain from prosody; {line}"))?;
    ensure(at1 >= max, format!("maximum not at alpha 1; {line}"))?;
    Ok(line)
}

// ---------------------------------------------------------------------------

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

fn significance() -> Check {
    let hand = [
        // (mx, my, sx, sy, n, t, sd_pooled)
        (5.0, 3.0, 1.0, 1.0, 2, 2.0, 1.0),
        (80.0, 75.0, 4.0, 3.0, 25, 5.0, 1.0),
        (1.0, 2.0, 2.0, 1.0, 5, -1.0, 1.0),
        (70.0, 67.0, 6.0, 8.0, 16, 1.2, 2.5),
        (10.0, 10.0, 0.0, 0.0, 3, 0.0, 0.0),
    ];
    for (mx, my, sx, sy, n, t, sd) in hand {
        let r = students_t(mx, my, sx, sy, n).map_err(|e| e.to_string())?;
        ensure(
            close(r.t_value, t) && close(r.sd_pooled, sd),
            format!("t({mx},{my},{sx},{sy},{n}) = {}", r.t_value),
        )?;
        ensure(
            r.critical_value == 1.645 && r.significant == (t > 1.645),
            "verdict uses the wrong critical value",
        )?;
    }
    ensure(
        !students_t(1.645, 0.0, 1.0, 0.0, 1)
            .map_err(|e| e.to_string())?
            .significant,
        "t equal to the critical value is significant",
    )?;
    let custom = students_t_with_critical(5.0, 3.0, 1.0, 1.0, 2, 2.5).map_err(|e| e.to_string())?;
    ensure(!custom.significant, "custom critical ignored")?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let mx = rng.random_range(0.0..100.0);
        let my = rng.random_range(0.0..100.0);
        let sx = rng.random_range(0.1..20.0);
        let sy = rng.random_range(0.1..20.0);
        let n = rng.random_range(1..50usize);
        let c = rng.random_range(0.01..100.0);
        let xy = students_t(mx, my, sx, sy, n).map_err(|e| e.to_string())?.t_value;
        let yx = students_t(my, mx, sy, sx, n).map_err(|e| e.to_string())?.t_value;
        let scaled = students_t(c * mx, c * my, c * sx, c * sy, n)
            .map_err(|e| e.to_string())?
            .t_value;
        ensure(close(xy, -yx), format!("antisymmetry: {xy} vs {yx}"))?;
        ensure(close(xy, scaled), format!("scale invariance: {xy} vs {scaled}"))?;
    }
    Ok("5 hand-computed cases incl. t = 2.0, critical 1.645, antisymmetry and scale invariance on 100 inputs".into())
}

// ---------------------------------------------------------------------------

fn sphmm(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sphmm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "sphmm {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn dir_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        out.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(out)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let s = |p: &str| root.join(p).to_string_lossy().into_owned();
    sphmm(&[
        "synth",
        "--seed",
        "21",
        "--out",
        &s("corpus"),
        "--speakers",
        "4",
        "--train-speakers",
        "3",
        "--sentences",
        "2",
        "--train-sentences",
        "1",
        "--repeats",
        "2",
    ])?;
    let manifest = s("corpus/manifest.csv");
    let model = [
        "--states",
        "6",
        "--mixtures",
        "2",
        "--supra-mixtures",
        "2",
        "--max-iters",
        "6",
    ];
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let jobs = if run == "a" { "1" } else { "2" };
        let models = s(&format!("models_{run}"));
        let report = s(&format!("report_{run}"));
        let mut train = vec![
            "train",
            "--seed",
            "21",
            "--jobs",
            jobs,
            "--manifest",
            &manifest,
            "--out",
            &models,
        ];
        train.extend(model);
        sphmm(&train)?;
        sphmm(&[
            "evaluate",
            "--seed",
            "21",
            "--jobs",
            jobs,
            "--manifest",
            &manifest,
            "--model-dir",
            &models,
            "--out",
            &report,
        ])?;
        snapshots.push((dir_bytes(Path::new(&models))?, dir_bytes(Path::new(&report))?));
    }
    let (ma, ra) = &snapshots[0];
    let (mb, rb) = &snapshots[1];
    ensure(ma == mb, "model files differ between runs")?;
    ensure(ra == rb, "report files differ between runs")?;
    Ok(format!(
        "{} model files and {} report files byte-identical across two runs",
        ma.len(),
        ra.len()
    ))
}

fn accounting() -> Check {
    let m = Preset::PaperShape.spec(0).manifest().map_err(|e| e.to_string())?;
    let per_gender = m.gender_counts(Split::Train);
    let cells = m.cell_counts(Split::Train);
    let test = m.split(Split::Test).count();
    for g in Gender::ALL {
        let n = per_gender.get(&g).copied().unwrap_or(0);
        ensure(n == 2160, format!("{g:?} training utterances: {n}"))?;
    }
    ensure(cells.len() == 12, format!("{} training cells", cells.len()))?;
    if let Some((cell, n)) = cells.iter().find(|(_, &n)| n != 360) {
        return Err(format!("cell {cell:?} has {n} utterances"));
    }
    ensure(test == 2160, format!("{test} evaluation utterances"))?;
    Ok("2160 training utterances per gender, 360 per (gender, emotion) cell, 2160 evaluation utterances".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("forward matches path enumeration", forward_oracle),
        ("Viterbi matches exhaustive maximization", viterbi_oracle),
        ("Baum-Welch never decreases the likelihood", em_monotonicity),
        ("MFCC matches the double-loop definition", mfcc_oracle),
        ("fusion identities", fusion_identities),
        ("separable corpus end to end", separable_end_to_end),
        ("prosody-only alpha sweep peaks at alpha 1", prosody_only_sweep),
        ("t statistic", significance),
        ("train + evaluate are deterministic", determinism),
        ("full-size preset utterance accounting", accounting),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
