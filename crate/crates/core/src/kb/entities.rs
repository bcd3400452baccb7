use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{check_entity_id, KbError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: String,
    /// First sentence of the entity's encyclopedia page; may be empty.
    pub description: String,
}

impl Entity {
    pub fn new(entity_id: impl Into<String>, description: impl Into<String>) -> Self {
        Self { entity_id: entity_id.into(), description: description.into() }
    }

    /// Title with underscores shown as spaces.
    pub fn title(&self) -> String {
        self.entity_id.replace('_', " ")
    }
}

/// Entity ids and descriptions, ordered by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityStore {
    entities: BTreeMap<String, String>,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl EntityStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entities(entities: impl IntoIterator<Item = Entity>) -> Result<Self, KbError> {
        let mut store = Self::new();
        for e in entities {
            store.insert(e)?;
        }
        Ok(store)
    }

    /// Descriptions are stored on one line with whitespace runs collapsed.
    pub fn insert(&mut self, entity: Entity) -> Result<(), KbError> {
        check_entity_id(&entity.entity_id)?;
        if self.entities.contains_key(&entity.entity_id) {
            return Err(KbError::DuplicateEntity(entity.entity_id));
        }
        self.entities.insert(entity.entity_id, one_line(&entity.description));
        Ok(())
    }

    /// Add an entity with no description unless it is already present.
    pub fn ensure(&mut self, entity_id: &str) -> Result<(), KbError> {
        check_entity_id(entity_id)?;
        self.entities.entry(entity_id.to_string()).or_default();
        Ok(())
    }

    pub fn description(&self, entity_id: &str) -> Result<&str, KbError> {
        self.entities
            .get(entity_id)
            .map(String::as_str)
            .ok_or_else(|| KbError::UnknownEntity(entity_id.to_string()))
    }

    pub fn contains(&self, entity_id: &str) -> bool {
        self.entities.contains_key(entity_id)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Entity> + '_ {
        self.entities.iter().map(|(id, d)| Entity::new(id.clone(), d.clone()))
    }

    /// `entity_id \t description`, one per line, ordered by id.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, d) in &self.entities {
            writeln!(w, "{id}\t{d}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, KbError> {
        let mut store = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (id, desc) = line.split_once('\t').unwrap_or((line.as_str(), ""));
            store
                .insert(Entity::new(id, desc))
                .map_err(|e| KbError::Parse { line: i + 1, cause: e.to_string() })?;
        }
        Ok(store)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, KbError> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
