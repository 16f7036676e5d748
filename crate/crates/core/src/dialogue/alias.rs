use std::collections::HashMap;

use serde::Deserialize;

use super::CorpusError;
use crate::ontology::{canonicalize, Ontology, SlotName, SlotValue};

const GPT_NEGOCHAT_ALIASES: &str = include_str!("../../data/gpt-negochat.aliases.json");

#[derive(Debug, Deserialize)]
struct AliasDoc {
    #[serde(default)]
    slots: HashMap<String, String>,
    #[serde(default)]
    values: HashMap<String, HashMap<String, String>>,
}

/// Maps annotation surface forms onto ontology slots and values.
///
/// Keys are stored canonicalized, so lookups are case and whitespace
/// insensitive. Loaded from a data file; extend it when adapting a new corpus.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    slots: HashMap<String, SlotName>,
    values: HashMap<SlotName, HashMap<String, SlotValue>>,
}

impl AliasTable {
    /// The alias table shipped for the job negotiation corpus.
    pub fn gpt_negochat() -> Self {
        Self::from_json(GPT_NEGOCHAT_ALIASES).expect("embedded alias table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let doc: AliasDoc = serde_json::from_str(text)
            .map_err(|e| CorpusError::Schema(format!("alias table: {e}")))?;
        let bad = |s: &str| CorpusError::Schema(format!("alias table: empty entry near \"{s}\""));
        let mut table = AliasTable::default();
        for (surface, slot) in &doc.slots {
            let key = canonicalize(surface).map_err(|_| bad(surface))?;
            let slot = SlotName::new(slot).map_err(|_| bad(surface))?;
            table.slots.insert(key, slot);
        }
        for (slot, entries) in &doc.values {
            let slot = SlotName::new(slot).map_err(|_| bad(slot))?;
            let map = table.values.entry(slot).or_default();
            for (surface, value) in entries {
                let key = canonicalize(surface).map_err(|_| bad(surface))?;
                map.insert(key, SlotValue::new(value).map_err(|_| bad(surface))?);
            }
        }
        Ok(table)
    }

    /// Ontology slot for a surface slot name, if one matches directly or by alias.
    pub fn resolve_slot(&self, ontology: &Ontology, surface: &str) -> Option<SlotName> {
        let key = canonicalize(surface).ok()?;
        let direct = SlotName::new(&key).ok()?;
        if ontology.contains_slot(&direct) {
            return Some(direct);
        }
        self.slots
            .get(&key)
            .filter(|s| ontology.contains_slot(s))
            .cloned()
    }

    /// Canonical ontology value for `surface` in `slot`.
    ///
    /// Falls back to the canonicalized surface when neither the value
    /// itself nor a registered alias is legal for the slot.
    pub fn resolve_alias(
        &self,
        ontology: &Ontology,
        slot: &str,
        surface: &str,
    ) -> Result<SlotValue, CorpusError> {
        let slot = self
            .resolve_slot(ontology, slot)
            .ok_or_else(|| CorpusError::UnknownSlot(slot.to_string()))?;
        self.resolve_value(ontology, &slot, surface)
    }

    pub(crate) fn resolve_value(
        &self,
        ontology: &Ontology,
        slot: &SlotName,
        surface: &str,
    ) -> Result<SlotValue, CorpusError> {
        let value = SlotValue::new(surface)
            .map_err(|_| CorpusError::Schema(format!("empty value for slot \"{slot}\"")))?;
        if ontology.is_legal(slot, &value) {
            return Ok(value);
        }
        Ok(self
            .values
            .get(slot)
            .and_then(|m| m.get(value.as_str()))
            .filter(|v| ontology.is_legal(slot, v))
            .cloned()
            .unwrap_or(value))
    }
}
