use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SemanticSource;
use crate::error::{Error, Result};
use crate::scalar::{widen, Real};

#[derive(Serialize, Deserialize)]
struct EntryJson {
    class_id: u32,
    source: SemanticSource,
    vector: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct SetJson {
    encoder_name: String,
    text_dim: usize,
    entries: Vec<EntryJson>,
}

/// Text-encoder outputs, one vector per (class, semantic source).
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEmbeddingSet {
    encoder_name: String,
    text_dim: usize,
    entries: BTreeMap<(u32, SemanticSource), Vec<f32>>,
}

impl SemanticEmbeddingSet {
    pub fn new(encoder_name: impl Into<String>, text_dim: usize) -> Result<Self> {
        if text_dim == 0 {
            return Err(Error::Dimension("text_dim must be positive".into()));
        }
        Ok(Self {
            encoder_name: encoder_name.into(),
            text_dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn encoder_name(&self) -> &str {
        &self.encoder_name
    }

    pub fn text_dim(&self) -> usize {
        self.text_dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, class_id: u32, source: SemanticSource, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.text_dim {
            return Err(Error::Dimension(format!(
                "class {class_id} ({source}) vector has length {} but text_dim is {}",
                vector.len(),
                self.text_dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "class {class_id} ({source}) vector is not finite"
            )));
        }
        self.entries.insert((class_id, source), vector);
        Ok(())
    }

    pub fn get(&self, class_id: u32, source: SemanticSource) -> Option<&[f32]> {
        self.entries.get(&(class_id, source)).map(Vec::as_slice)
    }

    pub fn sources(&self) -> Vec<SemanticSource> {
        let mut out: Vec<SemanticSource> = self.entries.keys().map(|&(_, s)| s).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Vectors of one source, widened to `T`.
    pub fn table<T: Real>(&self, source: SemanticSource) -> SemanticTable<T> {
        SemanticTable {
            source,
            dim: self.text_dim,
            vectors: self
                .entries
                .iter()
                .filter(|((_, s), _)| *s == source)
                .map(|(&(c, _), v)| (c, widen(v)))
                .collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = SetJson {
            encoder_name: self.encoder_name.clone(),
            text_dim: self.text_dim,
            entries: self
                .entries
                .iter()
                .map(|(&(class_id, source), v)| EntryJson {
                    class_id,
                    source,
                    vector: v.clone(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&json)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: SetJson = serde_json::from_str(text)?;
        let mut set = Self::new(json.encoder_name, json.text_dim)?;
        for e in json.entries {
            if set.entries.contains_key(&(e.class_id, e.source)) {
                return Err(Error::Data(format!(
                    "duplicate entry for class {} ({})",
                    e.class_id, e.source
                )));
            }
            set.insert(e.class_id, e.source, e.vector)?;
        }
        Ok(set)
    }
}

/// Class-level semantic vectors for one source, ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTable<T> {
    source: SemanticSource,
    dim: usize,
    vectors: HashMap<u32, Vec<T>>,
}

impl<T: Real> SemanticTable<T> {
    pub fn source(&self) -> SemanticSource {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, class_id: u32) -> Result<&[T]> {
        self.vectors.get(&class_id).map(Vec::as_slice).ok_or_else(|| {
            Error::MissingSemantics(format!(
                "no {} embedding for class {class_id}",
                self.source
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        let mut set = SemanticEmbeddingSet::new("toy-encoder", 2).unwrap();
        set.insert(0, SemanticSource::Paraphrase, vec![0.5, -1.0]).unwrap();
        set.insert(1, SemanticSource::Definition, vec![1e-7, 3.25]).unwrap();
        set.save(&path).unwrap();
        assert_eq!(SemanticEmbeddingSet::load(&path).unwrap(), set);
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut set = SemanticEmbeddingSet::new("e", 2).unwrap();
        assert!(matches!(
            set.insert(0, SemanticSource::Paraphrase, vec![1.0, 2.0, 3.0]),
            Err(Error::Dimension(_))
        ));
        let json = r#"{"encoder_name":"e","text_dim":2,"entries":[{"class_id":0,"source":"paraphrase","vector":[1,2,3]}]}"#;
        assert!(matches!(
            SemanticEmbeddingSet::from_json(json),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let mut set = SemanticEmbeddingSet::new("e", 1).unwrap();
        assert!(matches!(
            set.insert(0, SemanticSource::Paraphrase, vec![f32::NAN]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn encoder_widths() {
        // contrastive vision-language text tower and bidirectional encoder widths
        for (name, dim) in [("clip-vit-b16-text", 512), ("bert-base", 768)] {
            let mut set = SemanticEmbeddingSet::new(name, dim).unwrap();
            set.insert(3, SemanticSource::Paraphrase, vec![0.1; dim]).unwrap();
            let back = SemanticEmbeddingSet::from_json(&{
                let dir = tempfile::tempdir().unwrap();
                let p = dir.path().join("e.json");
                set.save(&p).unwrap();
                std::fs::read_to_string(p).unwrap()
            })
            .unwrap();
            assert_eq!(back.text_dim(), dim);
        }
        assert!(SemanticEmbeddingSet::new("e", 0).is_err());
    }

    #[test]
    fn table_lookup() {
        let mut set = SemanticEmbeddingSet::new("e", 1).unwrap();
        set.insert(0, SemanticSource::Paraphrase, vec![2.0]).unwrap();
        set.insert(0, SemanticSource::Definition, vec![3.0]).unwrap();
        let t = set.table::<f64>(SemanticSource::Paraphrase);
        assert_eq!(t.get(0).unwrap(), &[2.0]);
        assert!(matches!(t.get(1), Err(Error::MissingSemantics(_))));
        assert_eq!(set.sources(), vec![SemanticSource::Definition, SemanticSource::Paraphrase]);
    }
}
