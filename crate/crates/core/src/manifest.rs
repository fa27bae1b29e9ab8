//! Dataset manifests: one CSV row per utterance.
//!
//! Required columns are `path, speaker_id, gender, emotion, sentence_id,
//! session, split`; any other column is ignored. `split` is `train`, `test`
//! or `unused` (rows held out of both, e.g. training speakers reading test
//! sentences).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            _ => Err(Error::UnknownLabel {
                kind: "gender",
                label: s.to_string(),
            }),
        }
    }
}

/// The six emotions shared by both target databases.
pub const DEFAULT_EMOTIONS: [&str; 6] = ["neutral", "anger", "sadness", "happiness", "disgust", "fear"];

/// Maps database-specific spellings onto the default vocabulary
/// (`panic` -> `fear`, `hot anger` -> `anger`, ...). Unknown labels pass
/// through lowercased.
pub fn canonical_emotion(label: &str) -> String {
    let l = label.trim().to_ascii_lowercase().replace(['_', '-'], " ");
    match l.as_str() {
        "panic" | "fear/panic" | "afraid" | "fearful" => "fear".into(),
        "hot anger" | "angry" | "cold anger" => "anger".into(),
        "sad" => "sadness".into(),
        "happy" | "elation" => "happiness".into(),
        "disgusted" => "disgust".into(),
        _ => l.replace(' ', "_"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub emotion: String,
    pub sentence_id: String,
    pub session: String,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Training utterances per gender.
    pub fn gender_counts(&self, split: Split) -> BTreeMap<Gender, usize> {
        let mut out = BTreeMap::new();
        for r in self.split(split) {
            *out.entry(r.gender).or_insert(0) += 1;
        }
        out
    }

    /// Utterances per (gender, emotion) cell.
    pub fn cell_counts(&self, split: Split) -> BTreeMap<(Gender, String), usize> {
        let mut out = BTreeMap::new();
        for r in self.split(split) {
            *out.entry((r.gender, r.emotion.clone())).or_insert(0) += 1;
        }
        out
    }

    /// Checks that train and test share neither speakers nor sentences.
    pub fn check_speaker_independence(&self) -> Result<()> {
        let collect = |split, f: fn(&ManifestRow) -> &str| -> BTreeSet<String> {
            self.split(split).map(|r| f(r).to_string()).collect()
        };
        let checks: [(&'static str, fn(&ManifestRow) -> &str); 2] = [
            ("speakers", |r| r.speaker_id.as_str()),
            ("sentences", |r| r.sentence_id.as_str()),
        ];
        for (what, f) in checks {
            let train = collect(Split::Train, f);
            let test = collect(Split::Test, f);
            let shared: Vec<String> = train.intersection(&test).cloned().collect();
            if !shared.is_empty() {
                return Err(Error::OverlappingSplits {
                    what,
                    items: shared.join(", "),
                });
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers().map_err(|e| Error::Manifest(e.to_string()))?.clone();
        for required in [
            "path",
            "speaker_id",
            "gender",
            "emotion",
            "sentence_id",
            "session",
            "split",
        ] {
            if !headers.iter().any(|h| h == required) {
                return Err(Error::Manifest(format!("missing column `{required}`")));
            }
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<RawRow>().enumerate() {
            let raw = rec.map_err(|e| Error::Manifest(format!("row {}: {e}", i + 2)))?;
            rows.push(ManifestRow {
                path: raw.path,
                speaker_id: raw.speaker_id,
                gender: raw.gender.parse()?,
                emotion: canonical_emotion(&raw.emotion),
                sentence_id: raw.sentence_id,
                session: raw.session,
                split: match raw.split.trim().to_ascii_lowercase().as_str() {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    "unused" => Split::Unused,
                    other => return Err(Error::Manifest(format!("row {}: unknown split `{other}`", i + 2))),
                },
            });
        }
        Ok(Self { rows })
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Manifest(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<manifest>", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(std::io::BufWriter::new(f))
    }
}

#[derive(Deserialize)]
struct RawRow {
    path: String,
    speaker_id: String,
    gender: String,
    emotion: String,
    sentence_id: String,
    session: String,
    split: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
path,speaker_id,extra,gender,emotion,sentence_id,session,split
a.wav,m01,x,male,neutral,s1,1,train
b.wav,f01,y,Female,panic,s1,2,train
c.wav,m02,z,m,hot_anger,s5,1,test
d.wav,m01,z,male,sad,s5,1,unused
";

    #[test]
    fn parses_and_ignores_unknown_columns() {
        let m = DatasetManifest::read(SAMPLE.as_bytes()).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.rows[1].gender, Gender::Female);
        assert_eq!(m.rows[1].emotion, "fear");
        assert_eq!(m.rows[2].emotion, "anger");
        assert_eq!(m.rows[3].split, Split::Unused);
        assert_eq!(m.gender_counts(Split::Train)[&Gender::Male], 1);
        m.check_speaker_independence().unwrap();
    }

    #[test]
    fn round_trips() {
        let m = DatasetManifest::read(SAMPLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(DatasetManifest::read(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn missing_column_and_bad_values() {
        assert!(DatasetManifest::read("path,gender\na,male\n".as_bytes()).is_err());
        let bad = SAMPLE.replace("train\nc.wav", "validation\nc.wav");
        assert!(DatasetManifest::read(bad.as_bytes()).is_err());
        let bad = SAMPLE.replace("Female", "robot");
        assert!(DatasetManifest::read(bad.as_bytes()).is_err());
    }

    #[test]
    fn overlap_is_detected() {
        let overlapping = SAMPLE.replace("c.wav,m02", "c.wav,m01");
        let m = DatasetManifest::read(overlapping.as_bytes()).unwrap();
        assert!(matches!(
            m.check_speaker_independence(),
            Err(Error::OverlappingSplits { what: "speakers", .. })
        ));
        let overlapping = SAMPLE.replace("s5,1,test", "s1,1,test");
        let m = DatasetManifest::read(overlapping.as_bytes()).unwrap();
        assert!(matches!(
            m.check_speaker_independence(),
            Err(Error::OverlappingSplits { what: "sentences", .. })
        ));
    }

    #[test]
    fn gender_order_is_lexicographic() {
        assert!(Gender::Female < Gender::Male);
        assert!(Gender::Female.as_str() < Gender::Male.as_str());
    }
}
