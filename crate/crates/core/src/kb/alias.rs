use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{check_entity_id, normalize_surface, KbError};

/// One hyperlink statistic: `count` anchors with text `surface` point at `entity_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCount {
    pub surface: String,
    pub entity_id: String,
    pub count: i64,
}

impl LinkCount {
    pub fn new(surface: impl Into<String>, entity_id: impl Into<String>, count: i64) -> Self {
        Self { surface: surface.into(), entity_id: entity_id.into(), count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasEntry {
    pub entity_id: String,
    pub prior: f64,
}

/// Map from normalized surface to `p(e|m)` entries, sorted by prior
/// descending and then entity id ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AliasTable {
    entries: BTreeMap<String, Vec<AliasEntry>>,
}

fn sort_entries(list: &mut [AliasEntry]) {
    list.sort_by(|a, b| {
        b.prior
            .total_cmp(&a.prior)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
}

impl AliasTable {
    /// Priors are raw count ratios per normalized surface, no smoothing.
    /// Counts for the same (surface, entity) pair are summed, including
    /// surfaces that only coincide after normalization.
    pub fn build(counts: &[LinkCount]) -> Result<Self, KbError> {
        let mut grouped: BTreeMap<String, HashMap<&str, u64>> = BTreeMap::new();
        for c in counts {
            if c.count <= 0 {
                return Err(KbError::NonPositiveCount {
                    surface: c.surface.clone(),
                    entity_id: c.entity_id.clone(),
                    count: c.count,
                });
            }
            check_entity_id(&c.entity_id)?;
            let key = normalize_surface(&c.surface);
            if key.is_empty() {
                return Err(KbError::EmptySurface(c.surface.clone()));
            }
            *grouped.entry(key).or_default().entry(&c.entity_id).or_default() += c.count as u64;
        }
        let entries = grouped
            .into_iter()
            .map(|(surface, per_entity)| {
                let total: u64 = per_entity.values().sum();
                let mut list: Vec<AliasEntry> = per_entity
                    .into_iter()
                    .map(|(id, n)| AliasEntry { entity_id: id.to_string(), prior: n as f64 / total as f64 })
                    .collect();
                sort_entries(&mut list);
                (surface, list)
            })
            .collect();
        Ok(Self { entries })
    }

    /// Top `k` entries for the normalized `surface`; empty when unknown.
    pub fn lookup(&self, surface: &str, k: usize) -> Vec<AliasEntry> {
        self.entries
            .get(&normalize_surface(surface))
            .map(|l| l.iter().take(k).cloned().collect())
            .unwrap_or_default()
    }

    /// The most frequent entity for a surface.
    pub fn top(&self, surface: &str) -> Option<AliasEntry> {
        self.lookup(surface, 1).pop()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = (&str, &[AliasEntry])> {
        self.entries.iter().map(|(s, l)| (s.as_str(), l.as_slice()))
    }

    /// `surface \t entity_id \t prior`, one entry per line, in canonical order.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (surface, list) in &self.entries {
            for e in list {
                writeln!(w, "{}\t{}\t{}", surface, e.entity_id, e.prior)?;
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("table content is UTF-8")
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, KbError> {
        let mut entries: BTreeMap<String, Vec<AliasEntry>> = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = |cause: &str| KbError::Parse { line: i + 1, cause: cause.to_string() };
            let mut parts = line.split('\t');
            let (Some(surface), Some(id), Some(prior), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad("expected 3 tab-separated fields"));
            };
            let prior: f64 = prior.parse().map_err(|_| bad("prior is not a number"))?;
            if !(prior > 0.0 && prior <= 1.0) {
                return Err(bad("prior outside (0, 1]"));
            }
            if surface.is_empty() || normalize_surface(surface) != surface {
                return Err(bad("surface is not normalized"));
            }
            check_entity_id(id).map_err(|_| bad("invalid entity id"))?;
            let list = entries.entry(surface.to_string()).or_default();
            if list.iter().any(|e| e.entity_id == id) {
                return Err(bad("duplicate entity for surface"));
            }
            list.push(AliasEntry { entity_id: id.to_string(), prior });
        }
        for (surface, list) in entries.iter_mut() {
            sort_entries(list);
            let sum: f64 = list.iter().map(|e| e.prior).sum();
            if sum > 1.0 + 1e-9 {
                return Err(KbError::Parse {
                    line: 0,
                    cause: format!("priors for {surface:?} sum to {sum}"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, KbError> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
