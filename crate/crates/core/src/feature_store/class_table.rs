use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wordnet_key: Option<String>,
}

/// `class_id -> {name, wordnet_key}`, stored as a JSON object keyed by the
/// decimal class id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassTable {
    entries: BTreeMap<u32, ClassEntry>,
}

impl ClassTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, class_id: u32, entry: ClassEntry) -> Result<()> {
        if entry.name.trim().is_empty() {
            return Err(Error::Data(format!("class {class_id} has an empty name")));
        }
        if self.entries.contains_key(&class_id) {
            return Err(Error::Data(format!("class id {class_id} is duplicated")));
        }
        self.entries.insert(class_id, entry);
        Ok(())
    }

    pub fn get(&self, class_id: u32) -> Option<&ClassEntry> {
        self.entries.get(&class_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &ClassEntry)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, ClassEntry> = serde_json::from_str(&text)?;
        let mut table = ClassTable::new();
        for (key, entry) in raw {
            let id: u32 = key
                .parse()
                .map_err(|_| Error::Format(format!("class id `{key}` is not an integer")))?;
            table.insert(id, entry)?;
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
