//! Versioned plain-text model files.
//!
//! ```text
//! sphmm-model v1
//! layer acoustic            # or: suprasegmental
//! states 9
//! dim 16
//! mixtures 10
//! end_in_final 0
//! transitions               # log domain, one row per state
//! <9 reals>
//! ...
//! state 0
//! weights <10 reals>
//! mean <16 reals>           # one mean/var pair per component
//! var <16 reals>
//! ...
//! end
//! ```
//!
//! Reals are written with 17 significant digits (`-inf` for impossible
//! transitions), so loading a saved model reproduces it bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gmm::{DiagGaussian, GaussianMixture};
use crate::hmm::LtrHmm;
use crate::sphmm::SuprasegmentalHmm;

pub const MODEL_MAGIC: &str = "sphmm-model v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Acoustic,
    Suprasegmental,
}

impl Layer {
    fn tag(self) -> &'static str {
        match self {
            Layer::Acoustic => "acoustic",
            Layer::Suprasegmental => "suprasegmental",
        }
    }
}

fn push_reals(out: &mut String, key: &str, xs: &[f64]) {
    out.push_str(key);
    for x in xs {
        write!(out, " {x:.16e}").unwrap();
    }
    out.push('\n');
}

/// Serializes a model to the text format.
pub fn model_to_string(hmm: &LtrHmm, layer: Layer) -> String {
    let mut s = String::new();
    writeln!(s, "{MODEL_MAGIC}").unwrap();
    writeln!(s, "layer {}", layer.tag()).unwrap();
    writeln!(s, "states {}", hmm.num_states()).unwrap();
    writeln!(s, "dim {}", hmm.feature_dim()).unwrap();
    writeln!(s, "mixtures {}", hmm.num_mixtures()).unwrap();
    writeln!(s, "end_in_final {}", u8::from(hmm.end_in_final())).unwrap();
    writeln!(s, "transitions").unwrap();
    for row in hmm.log_transitions() {
        let mut line = String::new();
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{x:.16e}").unwrap();
        }
        writeln!(s, "{line}").unwrap();
    }
    for (j, state) in hmm.states().iter().enumerate() {
        writeln!(s, "state {j}").unwrap();
        push_reals(&mut s, "weights", state.weights());
        for c in state.components() {
            push_reals(&mut s, "mean", c.mean());
            push_reals(&mut s, "var", c.variance());
        }
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        loop {
            match self.inner.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((i, l)) => return Ok((i + 1, l.trim())),
                None => return Err(Error::parse("end of file", "unexpected end of model file")),
            }
        }
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next_line()?;
        let rest = line
            .strip_prefix(key)
            .filter(|r| r.is_empty() || r.starts_with(' '))
            .ok_or_else(|| Error::parse(format!("line {n}"), format!("expected `{key}`")))?;
        Ok((n, rest.trim()))
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let (n, v) = self.keyed(key)?;
        v.parse()
            .map_err(|e| Error::parse(format!("line {n}"), format!("{key}: {e}")))
    }

    fn keyed_reals(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let (n, v) = self.keyed(key)?;
        parse_reals(n, v, expected)
    }
}

fn parse_reals(line: usize, text: &str, expected: usize) -> Result<Vec<f64>> {
    let xs = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::parse(format!("line {line}"), format!("{t}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if xs.len() != expected {
        return Err(Error::parse(
            format!("line {line}"),
            format!("expected {expected} values, found {}", xs.len()),
        ));
    }
    Ok(xs)
}

/// Parses a model, checking that its layer tag matches `layer`.
pub fn model_from_str(text: &str, layer: Layer) -> Result<LtrHmm> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, magic) = lines.next_line()?;
    if magic != MODEL_MAGIC {
        return Err(Error::parse("line 1", format!("unsupported model header `{magic}`")));
    }
    let (n, tag) = lines.keyed("layer")?;
    if tag != layer.tag() {
        return Err(Error::parse(
            format!("line {n}"),
            format!("expected a {} model, found `{tag}`", layer.tag()),
        ));
    }
    let states = lines.keyed_usize("states")?;
    let dim = lines.keyed_usize("dim")?;
    let mixtures = lines.keyed_usize("mixtures")?;
    let end_in_final = lines.keyed_usize("end_in_final")? == 1;
    lines.keyed("transitions")?;
    let mut log_trans = Vec::with_capacity(states);
    for _ in 0..states {
        let (n, l) = lines.next_line()?;
        log_trans.push(parse_reals(n, l, states)?);
    }
    let mut mixtures_out = Vec::with_capacity(states);
    for j in 0..states {
        let (n, idx) = lines.keyed("state")?;
        if idx.parse::<usize>().ok() != Some(j) {
            return Err(Error::parse(format!("line {n}"), format!("expected state {j}")));
        }
        let weights = lines.keyed_reals("weights", mixtures)?;
        let comps = (0..mixtures)
            .map(|_| {
                let mean = lines.keyed_reals("mean", dim)?;
                let var = lines.keyed_reals("var", dim)?;
                DiagGaussian::new(mean, var)
            })
            .collect::<Result<Vec<_>>>()?;
        mixtures_out.push(GaussianMixture::new(weights, comps)?);
    }
    lines.keyed("end")?;
    LtrHmm::new(log_trans, mixtures_out, end_in_final)
}

pub fn save_model(path: impl AsRef<Path>, hmm: &LtrHmm, layer: Layer) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_string(hmm, layer)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>, layer: Layer) -> Result<LtrHmm> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text, layer).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn save_acoustic(path: impl AsRef<Path>, hmm: &LtrHmm) -> Result<()> {
    save_model(path, hmm, Layer::Acoustic)
}

pub fn load_acoustic(path: impl AsRef<Path>) -> Result<LtrHmm> {
    load_model(path, Layer::Acoustic)
}

pub fn save_suprasegmental(path: impl AsRef<Path>, psi: &SuprasegmentalHmm) -> Result<()> {
    save_model(path, psi.hmm(), Layer::Suprasegmental)
}

pub fn load_suprasegmental(path: impl AsRef<Path>) -> Result<SuprasegmentalHmm> {
    SuprasegmentalHmm::new(load_model(path, Layer::Suprasegmental)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{baum_welch_train, TrainConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained(seed: u64, end_in_final: bool) -> LtrHmm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Vec<Vec<f64>>> = (0..6)
            .map(|_| {
                (0..12)
                    .map(|_| (0..3).map(|_| rng.random_range(-4.0..4.0)).collect())
                    .collect()
            })
            .collect();
        let refs: Vec<&[Vec<f64>]> = data.iter().map(Vec::as_slice).collect();
        let cfg = TrainConfig {
            num_states: 3,
            num_mixtures: 2,
            max_iters: 3,
            seed,
            end_in_final,
            ..TrainConfig::default()
        };
        baum_welch_train(&refs, &cfg).unwrap().model
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_is_exact(seed in 0u64..1000, end in any::<bool>()) {
            let m = trained(seed, end);
            let text = model_to_string(&m, Layer::Acoustic);
            let back = model_from_str(&text, Layer::Acoustic).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(model_to_string(&back, Layer::Acoustic), text);
        }
    }

    #[test]
    fn layer_tag_is_checked() {
        let m = trained(1, true);
        let text = model_to_string(&m, Layer::Suprasegmental);
        assert!(model_from_str(&text, Layer::Acoustic).is_err());
        assert!(model_from_str(&text, Layer::Suprasegmental).is_ok());
    }

    #[test]
    fn truncated_or_corrupt_files_fail() {
        let m = trained(2, false);
        let text = model_to_string(&m, Layer::Acoustic);
        let cut = &text[..text.len() / 2];
        assert!(model_from_str(cut, Layer::Acoustic).is_err());
        assert!(model_from_str(&text.replace("sphmm-model v1", "sphmm-model v9"), Layer::Acoustic).is_err());
    }

    #[test]
    fn files_round_trip_scores() {
        let dir = tempfile::tempdir().unwrap();
        let m = trained(3, false);
        let p = dir.path().join("m.model");
        save_acoustic(&p, &m).unwrap();
        let back = load_acoustic(&p).unwrap();
        let obs: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 0.3, -1.0, 0.5]).collect();
        let a = m.forward_log_likelihood(&obs).unwrap();
        let b = back.forward_log_likelihood(&obs).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
