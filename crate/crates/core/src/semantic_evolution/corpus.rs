use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::llm::{retry_delays, BackendError, ChatBackend, LlmConfig};
use super::paraphrase_cache::{cache_key, ParaphraseCache};
use super::prompt::build_prompt;
use crate::error::{Error, Result};
use crate::feature_store::ClassTable;

/// Which text stands in for a class when it is embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticSource {
    NameTemplate,
    Definition,
    Paraphrase,
}

impl SemanticSource {
    pub const ALL: [SemanticSource; 3] = [
        SemanticSource::NameTemplate,
        SemanticSource::Definition,
        SemanticSource::Paraphrase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticSource::NameTemplate => "name_template",
            SemanticSource::Definition => "definition",
            SemanticSource::Paraphrase => "paraphrase",
        }
    }
}

impl fmt::Display for SemanticSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SemanticSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown semantic source `{s}`")))
    }
}

/// Sentence template with a `{class_name}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NameTemplate(pub String);

impl NameTemplate {
    pub const PLACEHOLDER: &'static str = "{class_name}";

    /// Template used for the fine-grained bird benchmark.
    pub fn birds() -> Self {
        Self("The Photo of a bird called {class_name}".into())
    }

    pub fn render(&self, class_name: &str) -> String {
        self.0.replace(Self::PLACEHOLDER, class_name)
    }
}

impl Default for NameTemplate {
    fn default() -> Self {
        Self("A photo of a {class_name}.".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSemantics {
    pub class_id: u32,
    pub class_name: String,
    pub definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase: Option<String>,
    #[serde(default)]
    pub name_template: NameTemplate,
}

/// Text of `entry` for the requested source.
pub fn semantic_text(entry: &ClassSemantics, source: SemanticSource) -> Result<String> {
    match source {
        SemanticSource::NameTemplate => Ok(entry.name_template.render(&entry.class_name)),
        SemanticSource::Definition => {
            if entry.definition.is_empty() {
                Err(Error::MissingSemantics(format!(
                    "class {} has no definition",
                    entry.class_id
                )))
            } else {
                Ok(entry.definition.clone())
            }
        }
        SemanticSource::Paraphrase => entry.paraphrase.clone().ok_or_else(|| {
            Error::MissingSemantics(format!("class {} has no paraphrase", entry.class_id))
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum DefinitionEntry {
    Text(String),
    Named { name: String, definition: String },
}

/// Curated `class_id -> definition` store (`definitions.json`).
///
/// Values are either the definition text, or `{name, definition}` when no
/// separate class table is supplied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DefinitionStore {
    entries: BTreeMap<u32, DefinitionEntry>,
}

impl DefinitionStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn insert(&mut self, class_id: u32, definition: impl Into<String>) {
        self.entries
            .insert(class_id, DefinitionEntry::Text(definition.into()));
    }

    pub fn insert_named(
        &mut self,
        class_id: u32,
        name: impl Into<String>,
        definition: impl Into<String>,
    ) {
        self.entries.insert(
            class_id,
            DefinitionEntry::Named {
                name: name.into(),
                definition: definition.into(),
            },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub classes: Vec<ClassSemantics>,
}

impl Corpus {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, class_id: u32) -> Option<&ClassSemantics> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }
}

/// Joins definitions with class names. Every class is assembled from its own
/// entries only.
pub fn build_corpus(
    definitions: &DefinitionStore,
    classes: Option<&ClassTable>,
    template: &NameTemplate,
) -> Result<Corpus> {
    let mut out = Vec::with_capacity(definitions.len());
    for (&class_id, entry) in &definitions.entries {
        let (name, definition) = match entry {
            DefinitionEntry::Named { name, definition } => (name.clone(), definition.clone()),
            DefinitionEntry::Text(definition) => {
                let name = classes
                    .and_then(|t| t.get(class_id))
                    .map(|e| e.name.clone())
                    .ok_or_else(|| {
                        Error::Data(format!("no class name known for class {class_id}"))
                    })?;
                (name, definition.clone())
            }
        };
        if name.trim().is_empty() {
            return Err(Error::Data(format!("class {class_id} has an empty name")));
        }
        out.push(ClassSemantics {
            class_id,
            class_name: name,
            definition: definition.trim().to_owned(),
            paraphrase: None,
            name_template: template.clone(),
        });
    }
    Ok(Corpus { classes: out })
}

/// Collapses the model's answer to a single paragraph.
fn single_paragraph(text: &str) -> Option<String> {
    let joined = text
        .split("\n\n")
        .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    (!joined.is_empty()).then_some(joined)
}

type Sleeper<'a> = Box<dyn Fn(Duration) + Send + Sync + 'a>;

/// Expands definitions through a chat backend, with an on-disk memo.
///
/// Without a backend the paraphraser is offline: cache hits are served and
/// misses fail with [`Error::OfflineCacheMiss`].
pub struct Paraphraser<'a> {
    config: LlmConfig,
    backend: Option<&'a dyn ChatBackend>,
    cache: ParaphraseCache,
    sleep: Sleeper<'a>,
}

impl<'a> Paraphraser<'a> {
    pub fn new(config: LlmConfig, backend: &'a dyn ChatBackend, cache: ParaphraseCache) -> Self {
        Self {
            config,
            backend: Some(backend),
            cache,
            sleep: Box::new(std::thread::sleep),
        }
    }

    pub fn offline(config: LlmConfig, cache: ParaphraseCache) -> Self {
        Self {
            config,
            backend: None,
            cache,
            sleep: Box::new(std::thread::sleep),
        }
    }

    /// Replaces the blocking sleep between retries (tests record delays instead).
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'a) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn paraphrase(&self, entry: &ClassSemantics) -> Result<ClassSemantics> {
        let prompt = build_prompt(&entry.class_name, &entry.definition)?;
        let key = cache_key(&prompt, &self.config.model_name);
        if let Some(hit) = self.cache.get(&key)? {
            return Ok(ClassSemantics {
                paraphrase: Some(hit),
                ..entry.clone()
            });
        }
        let backend = self.backend.ok_or(Error::OfflineCacheMiss {
            class_id: entry.class_id,
        })?;

        let request = self.config.request(&prompt);
        let delays = retry_delays(&self.config);
        let mut attempts = 0u32;
        let answer = loop {
            attempts += 1;
            match backend.complete(&request) {
                Ok(text) => break text,
                Err(BackendError::Malformed(msg)) => return Err(Error::LlmResponse(msg)),
                Err(BackendError::Transient(msg)) => match delays.get(attempts as usize - 1) {
                    Some(&delay) => (self.sleep)(delay),
                    None => {
                        return Err(Error::LlmUnavailable {
                            attempts,
                            last_error: msg,
                        })
                    }
                },
            }
        };
        let paraphrase = single_paragraph(&answer).ok_or_else(|| {
            Error::LlmResponse(format!("empty completion for class {}", entry.class_id))
        })?;
        self.cache.put(&key, &paraphrase)?;
        Ok(ClassSemantics {
            paraphrase: Some(paraphrase),
            ..entry.clone()
        })
    }

    pub fn evolve(&self, corpus: &Corpus) -> Result<Corpus> {
        let classes = corpus
            .classes
            .iter()
            .map(|entry| self.paraphrase(entry))
            .collect::<Result<_>>()?;
        Ok(Corpus { classes })
    }
}
