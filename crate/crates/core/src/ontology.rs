//! The closed slot/value ontology every agreement is expressed over.
//!
//! Slot and value strings are kept in canonical form: trimmed, lowercased,
//! internal whitespace collapsed. No other normalization happens here;
//! surface-form conflation ("90,000" vs "90k usd") is the job of
//! [`crate::dialogue::AliasTable`].

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const GPT_NEGOCHAT_JSON: &str = include_str!("../data/gpt-negochat.ontology.json");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OntologyError {
    #[error("empty string after trimming")]
    EmptyString,
    #[error("malformed ontology document: {0}")]
    Schema(String),
    #[error("empty ontology")]
    EmptyOntology,
    #[error("duplicate slot \"{slot}\" (slot #{index})")]
    DuplicateSlot { slot: String, index: usize },
    #[error("slot \"{slot}\" (slot #{index}) has an empty value list")]
    EmptyValues { slot: String, index: usize },
    #[error("duplicate value \"{value}\" in slot \"{slot}\" (slot #{index})")]
    DuplicateValue {
        slot: String,
        value: String,
        index: usize,
    },
}

/// Lowercase, trim and collapse internal runs of whitespace to one space.
pub fn canonicalize(raw: &str) -> Result<String, OntologyError> {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    if out.is_empty() {
        Err(OntologyError::EmptyString)
    } else {
        Ok(out)
    }
}

macro_rules! canonical_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: &str) -> Result<Self, OntologyError> {
                canonicalize(raw).map(Self)
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }

        impl std::str::FromStr for $name {
            type Err = OntologyError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                Self::new(&raw).map_err(serde::de::Error::custom)
            }
        }
    };
}

canonical_newtype!(
    /// A negotiable issue, e.g. `salary`.
    SlotName
);
canonical_newtype!(
    /// A value a slot can be agreed on, e.g. `90k usd`.
    SlotValue
);

#[derive(Debug, Serialize, Deserialize)]
struct SlotDoc {
    name: String,
    values: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OntologyDoc {
    name: String,
    slots: Vec<SlotDoc>,
}

/// Slots in declaration order, each with its ordered list of legal values.
///
/// Immutable once built; share it freely between threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    name: String,
    slots: IndexMap<SlotName, Vec<SlotValue>>,
}

impl Ontology {
    /// The six-slot job negotiation ontology shipped with the crate.
    pub fn gpt_negochat() -> Self {
        Self::from_json(GPT_NEGOCHAT_JSON).expect("embedded ontology is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, OntologyError> {
        let doc: OntologyDoc =
            serde_json::from_str(text).map_err(|e| OntologyError::Schema(e.to_string()))?;
        Self::from_doc(doc)
    }

    /// Builds an ontology from `(slot, values)` pairs, validating as [`Ontology::from_json`] does.
    pub fn from_slots<S, V, I>(name: &str, slots: I) -> Result<Self, OntologyError>
    where
        S: AsRef<str>,
        V: AsRef<str>,
        I: IntoIterator<Item = (S, Vec<V>)>,
    {
        let doc = OntologyDoc {
            name: name.to_string(),
            slots: slots
                .into_iter()
                .map(|(s, vs)| SlotDoc {
                    name: s.as_ref().to_string(),
                    values: vs.iter().map(|v| v.as_ref().to_string()).collect(),
                })
                .collect(),
        };
        Self::from_doc(doc)
    }

    fn from_doc(doc: OntologyDoc) -> Result<Self, OntologyError> {
        if doc.slots.is_empty() {
            return Err(OntologyError::EmptyOntology);
        }
        let mut slots = IndexMap::with_capacity(doc.slots.len());
        for (index, slot) in doc.slots.into_iter().enumerate() {
            let name = SlotName::new(&slot.name)
                .map_err(|_| OntologyError::Schema(format!("slot #{index} has an empty name")))?;
            if slot.values.is_empty() {
                return Err(OntologyError::EmptyValues {
                    slot: name.0,
                    index,
                });
            }
            let mut values: Vec<SlotValue> = Vec::with_capacity(slot.values.len());
            for raw in &slot.values {
                let value = SlotValue::new(raw).map_err(|_| {
                    OntologyError::Schema(format!("slot \"{name}\" has an empty value"))
                })?;
                if values.contains(&value) {
                    return Err(OntologyError::DuplicateValue {
                        slot: name.0,
                        value: value.0,
                        index,
                    });
                }
                values.push(value);
            }
            if slots.contains_key(&name) {
                return Err(OntologyError::DuplicateSlot {
                    slot: name.0,
                    index,
                });
            }
            slots.insert(name, values);
        }
        Ok(Self {
            name: doc.name,
            slots,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = OntologyDoc {
            name: self.name.clone(),
            slots: self
                .slots
                .iter()
                .map(|(s, vs)| SlotDoc {
                    name: s.0.clone(),
                    values: vs.iter().map(|v| v.0.clone()).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("ontology serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> impl Iterator<Item = &SlotName> {
        self.slots.keys()
    }

    pub fn values(&self, slot: &SlotName) -> Option<&[SlotValue]> {
        self.slots.get(slot).map(Vec::as_slice)
    }

    pub fn contains_slot(&self, slot: &SlotName) -> bool {
        self.slots.contains_key(slot)
    }

    /// Declaration position of `slot`, if it belongs to the ontology.
    pub fn slot_index(&self, slot: &SlotName) -> Option<usize> {
        self.slots.get_index_of(slot)
    }

    pub fn slot_at(&self, index: usize) -> Option<(&SlotName, &[SlotValue])> {
        self.slots
            .get_index(index)
            .map(|(s, vs)| (s, vs.as_slice()))
    }

    pub fn is_legal(&self, slot: &SlotName, value: &SlotValue) -> bool {
        self.slots.get(slot).is_some_and(|vs| vs.contains(value))
    }

    /// Sort key placing ontology slots first in declaration order and
    /// unknown slots after them alphabetically.
    pub fn order_key<'a>(&self, slot: &'a SlotName) -> (usize, &'a str) {
        match self.slot_index(slot) {
            Some(i) => (i, ""),
            None => (usize::MAX, slot.as_str()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(s: &str) -> SlotName {
        SlotName::new(s).unwrap()
    }
    fn value(s: &str) -> SlotValue {
        SlotValue::new(s).unwrap()
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize("Working  Hours").unwrap(), "working hours");
        assert_eq!(canonicalize("90k USD").unwrap(), "90k usd");
        assert_eq!(canonicalize("  Programmer ").unwrap(), "programmer");
        assert_eq!(canonicalize(" \t\n "), Err(OntologyError::EmptyString));
    }

    #[test]
    fn builtin_matches_job_ontology() {
        let o = Ontology::gpt_negochat();
        assert_eq!(o.name(), "gpt-negochat");
        let slots: Vec<_> = o.slots().map(SlotName::as_str).collect();
        assert_eq!(
            slots,
            [
                "working hours",
                "pension fund",
                "job description",
                "promotion possibilities",
                "salary",
                "leased car"
            ]
        );
        let salary: Vec<_> = o
            .values(&slot("salary"))
            .unwrap()
            .iter()
            .map(SlotValue::as_str)
            .collect();
        assert_eq!(salary, ["90k usd", "60k usd", "120k usd"]);
        assert_eq!(o.values(&slot("leased car")).unwrap().len(), 3);
        assert!(o.is_legal(&slot("leased car"), &value("No agreement")));
    }

    #[test]
    fn legality() {
        let o = Ontology::gpt_negochat();
        assert!(o.is_legal(&slot("pension fund"), &value("20%")));
        assert!(!o.is_legal(&slot("pension fund"), &value("30%")));
        assert!(!o.is_legal(&slot("job description"), &value("quality assurance")));
        assert!(!o.is_legal(&slot("bonus"), &value("10%")));
        assert!(o.is_legal(&slot("Job  Description"), &value("Team Manager")));
    }

    #[test]
    fn legality_exhaustive_cross() {
        let o = Ontology::gpt_negochat();
        for s in o.slots() {
            for other in o.slots() {
                for v in o.values(other).unwrap() {
                    assert_eq!(o.is_legal(s, v), s == other, "{s} / {v}");
                }
            }
        }
    }

    #[test]
    fn load_errors() {
        assert_eq!(
            Ontology::from_json(r#"{"name":"x","slots":[]}"#),
            Err(OntologyError::EmptyOntology)
        );
        let dup = r#"{"name":"x","slots":[{"name":"pension fund","values":["10%","10%"]}]}"#;
        assert!(matches!(
            Ontology::from_json(dup),
            Err(OntologyError::DuplicateValue { ref slot, ref value, index: 0 }) if slot == "pension fund" && value == "10%"
        ));
        let dup_slot =
            r#"{"name":"x","slots":[{"name":"a","values":["1"]},{"name":"A ","values":["2"]}]}"#;
        assert!(matches!(
            Ontology::from_json(dup_slot),
            Err(OntologyError::DuplicateSlot { index: 1, .. })
        ));
        let empty = r#"{"name":"x","slots":[{"name":"a","values":[]}]}"#;
        assert!(matches!(
            Ontology::from_json(empty),
            Err(OntologyError::EmptyValues { index: 0, .. })
        ));
        assert!(matches!(
            Ontology::from_json(r#"{"slots":3}"#),
            Err(OntologyError::Schema(_))
        ));
    }

    #[test]
    fn json_round_trip_is_fixed_point() {
        let o = Ontology::gpt_negochat();
        let again = Ontology::from_json(&o.to_json()).unwrap();
        assert_eq!(o, again);
        assert_eq!(o.to_json(), again.to_json());
    }

    #[test]
    fn unknown_slots_order_last() {
        let o = Ontology::gpt_negochat();
        let mut slots = [
            slot("zeta"),
            slot("salary"),
            slot("alpha"),
            slot("working hours"),
        ];
        slots.sort_by(|a, b| o.order_key(a).cmp(&o.order_key(b)));
        let names: Vec<_> = slots.iter().map(SlotName::as_str).collect();
        assert_eq!(names, ["working hours", "salary", "alpha", "zeta"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn canonicalize_is_idempotent(s in "[ a-zA-Z0-9%\t]{0,24}") {
                if let Ok(once) = canonicalize(&s) {
                    prop_assert_eq!(canonicalize(&once).unwrap(), once);
                }
            }
        }
    }
}
