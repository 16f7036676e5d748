//! Levenshtein belief spans: slot-level edit scripts between two agreement
//! states, with a textual wire format.
//!
//! Wire format (version 1):
//!
//! ```text
//! span  := "[" domain "]" ( " " op ( " ; " op )* )?
//! op    := "insert " slot " = " value
//!        | "delete " slot
//!        | "substitute " slot " = " value
//! ```
//!
//! All tokens are canonical (lowercase, single spaces). Ops are listed in
//! ontology slot order, at most one op per slot. The full-state form used
//! for previous-state context is `slot = value ( " ; " slot " = " value )*`,
//! or `none` for the empty state.

use std::fmt;

use thiserror::Error;

use crate::dialogue::AgreementState;
use crate::ontology::{canonicalize, Ontology, SlotName, SlotValue};

pub const GPT_NEGOCHAT: &str = "gpt-negochat";
pub const MULTIWOZ: &str = "multiwoz";
pub const KNOWN_DOMAINS: [&str; 2] = [GPT_NEGOCHAT, MULTIWOZ];

pub const OP_SEPARATOR: &str = " ; ";
pub const EMPTY_STATE: &str = "none";

/// Dataset prefix carried by every span, e.g. `gpt-negochat`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Domain(String);

impl Domain {
    /// Canonicalizes `raw`; a domain may not contain brackets or spaces.
    pub fn new(raw: &str) -> Option<Self> {
        let canon = canonicalize(raw).ok()?;
        if canon.contains([' ', '[', ']', ';']) {
            return None;
        }
        Some(Self(canon))
    }

    pub fn gpt_negochat() -> Self {
        Self(GPT_NEGOCHAT.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `[domain]`
    pub fn prefix(&self) -> String {
        format!("[{}]", self.0)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Insert,
    Delete,
    Substitute,
}

impl OpKind {
    pub fn keyword(self) -> &'static str {
        match self {
            OpKind::Insert => "insert",
            OpKind::Delete => "delete",
            OpKind::Substitute => "substitute",
        }
    }

    fn from_keyword(kw: &str) -> Option<Self> {
        match kw {
            "insert" => Some(OpKind::Insert),
            "delete" => Some(OpKind::Delete),
            "substitute" => Some(OpKind::Substitute),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EditOp {
    Insert { slot: SlotName, value: SlotValue },
    Delete { slot: SlotName },
    Substitute { slot: SlotName, value: SlotValue },
}

impl EditOp {
    pub fn kind(&self) -> OpKind {
        match self {
            EditOp::Insert { .. } => OpKind::Insert,
            EditOp::Delete { .. } => OpKind::Delete,
            EditOp::Substitute { .. } => OpKind::Substitute,
        }
    }

    pub fn slot(&self) -> &SlotName {
        match self {
            EditOp::Insert { slot, .. }
            | EditOp::Delete { slot }
            | EditOp::Substitute { slot, .. } => slot,
        }
    }

    pub fn value(&self) -> Option<&SlotValue> {
        match self {
            EditOp::Insert { value, .. } | EditOp::Substitute { value, .. } => Some(value),
            EditOp::Delete { .. } => None,
        }
    }
}

impl fmt::Display for EditOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{} {} = {}", self.kind().keyword(), self.slot(), v),
            None => write!(f, "{} {}", self.kind().keyword(), self.slot()),
        }
    }
}

/// A domain prefix plus slot-level edit operations, one per slot, in
/// ontology slot order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LevSpan {
    domain: Domain,
    ops: Vec<EditOp>,
}

impl LevSpan {
    pub fn empty(domain: Domain) -> Self {
        Self {
            domain,
            ops: Vec::new(),
        }
    }

    /// Sorts `ops` into ontology order. Fails if a slot is touched twice.
    pub fn new(
        domain: Domain,
        mut ops: Vec<EditOp>,
        ontology: &Ontology,
    ) -> Result<Self, LevError> {
        ops.sort_by(|a, b| {
            ontology
                .order_key(a.slot())
                .cmp(&ontology.order_key(b.slot()))
        });
        if let Some(w) = ops.windows(2).find(|w| w[0].slot() == w[1].slot()) {
            return Err(LevError::DuplicateSlot(w[0].slot().to_string()));
        }
        Ok(Self { domain, ops })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn ops(&self) -> &[EditOp] {
        &self.ops
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for LevSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.domain)?;
        for (i, op) in self.ops.iter().enumerate() {
            f.write_str(if i == 0 { " " } else { OP_SEPARATOR })?;
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LevError {
    #[error("missing domain prefix")]
    MissingDomainPrefix,
    #[error("unterminated domain prefix")]
    UnterminatedDomainPrefix,
    #[error("unknown domain \"{0}\"")]
    UnknownDomain(String),
    #[error("empty op at position {0}")]
    EmptyOp(usize),
    #[error("unknown op keyword \"{0}\"")]
    UnknownOpKeyword(String),
    #[error("missing value in \"{0}\"")]
    MissingValue(String),
    #[error("unexpected value in \"{0}\"")]
    UnexpectedValue(String),
    #[error("malformed op \"{0}\"")]
    MalformedOp(String),
    #[error("slot \"{0}\" edited more than once")]
    DuplicateSlot(String),
    #[error("slot \"{0}\" not in ontology")]
    UnknownSlot(String),
    #[error("value \"{value}\" not legal for slot \"{slot}\"")]
    IllegalValue { slot: String, value: String },
}

/// Conflicts surfaced by [`apply_strict`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApplyConflict {
    #[error("insert on already agreed slot: {0}")]
    InsertExisting(EditOp),
    #[error("delete of unagreed slot: {0}")]
    DeleteMissing(EditOp),
    #[error("substitute of unagreed slot: {0}")]
    SubstituteMissing(EditOp),
}

/// Edit script turning `prev` into `cur`.
pub fn diff(
    prev: &AgreementState,
    cur: &AgreementState,
    domain: Domain,
    ontology: &Ontology,
) -> LevSpan {
    let mut ops = Vec::new();
    for (slot, value) in cur {
        match prev.get(slot) {
            None => ops.push(EditOp::Insert {
                slot: slot.clone(),
                value: value.clone(),
            }),
            Some(old) if old != value => ops.push(EditOp::Substitute {
                slot: slot.clone(),
                value: value.clone(),
            }),
            Some(_) => {}
        }
    }
    for (slot, _) in prev {
        if !cur.contains(slot) {
            ops.push(EditOp::Delete { slot: slot.clone() });
        }
    }
    LevSpan::new(domain, ops, ontology).expect("state maps hold one value per slot")
}

/// Applies `lev` to `prev`, tolerating conflicts: insert overwrites,
/// substitute on a missing slot inserts, delete of a missing slot is a no-op.
pub fn apply(prev: &AgreementState, lev: &LevSpan) -> AgreementState {
    let mut next = prev.clone();
    for op in lev.ops() {
        match op {
            EditOp::Insert { slot, value } | EditOp::Substitute { slot, value } => {
                next.insert(slot.clone(), value.clone());
            }
            EditOp::Delete { slot } => {
                next.remove(slot);
            }
        }
    }
    next
}

/// Like [`apply`] but every op must match the state it is applied to.
pub fn apply_strict(prev: &AgreementState, lev: &LevSpan) -> Result<AgreementState, ApplyConflict> {
    for op in lev.ops() {
        let present = prev.contains(op.slot());
        match op.kind() {
            OpKind::Insert if present => return Err(ApplyConflict::InsertExisting(op.clone())),
            OpKind::Delete if !present => return Err(ApplyConflict::DeleteMissing(op.clone())),
            OpKind::Substitute if !present => {
                return Err(ApplyConflict::SubstituteMissing(op.clone()))
            }
            _ => {}
        }
    }
    Ok(apply(prev, lev))
}

pub fn render(lev: &LevSpan) -> String {
    lev.to_string()
}

/// Result of a parse. `dropped` counts fragments a lenient parse discarded
/// (always zero in strict mode).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed<T> {
    pub value: T,
    pub dropped: usize,
}

struct OpParser<'a> {
    ontology: &'a Ontology,
    strict: bool,
    dropped: usize,
}

impl OpParser<'_> {
    /// Records a lenient drop, or returns the error in strict mode.
    fn fail<T>(&mut self, err: LevError) -> Result<Option<T>, LevError> {
        if self.strict {
            Err(err)
        } else {
            self.dropped += 1;
            Ok(None)
        }
    }

    fn check_legal(&self, slot: &SlotName, value: Option<&SlotValue>) -> Result<(), LevError> {
        if !self.strict {
            return Ok(());
        }
        if !self.ontology.contains_slot(slot) {
            return Err(LevError::UnknownSlot(slot.to_string()));
        }
        if let Some(v) = value {
            if !self.ontology.is_legal(slot, v) {
                return Err(LevError::IllegalValue {
                    slot: slot.to_string(),
                    value: v.to_string(),
                });
            }
        }
        Ok(())
    }

    fn op(&mut self, position: usize, fragment: &str) -> Result<Option<EditOp>, LevError> {
        let fragment = fragment.trim();
        if fragment.is_empty() {
            return self.fail(LevError::EmptyOp(position));
        }
        let (keyword, rest) = fragment
            .split_once(char::is_whitespace)
            .unwrap_or((fragment, ""));
        let Some(kind) = OpKind::from_keyword(&keyword.to_lowercase()) else {
            return self.fail(LevError::UnknownOpKeyword(keyword.to_string()));
        };
        let rest = rest.trim();
        match kind {
            OpKind::Delete => {
                if rest.contains('=') {
                    return self.fail(LevError::UnexpectedValue(fragment.to_string()));
                }
                let Ok(slot) = SlotName::new(rest) else {
                    return self.fail(LevError::MalformedOp(fragment.to_string()));
                };
                self.check_legal(&slot, None)?;
                Ok(Some(EditOp::Delete { slot }))
            }
            OpKind::Insert | OpKind::Substitute => {
                let Some((slot, value)) = rest.split_once('=') else {
                    return self.fail(LevError::MissingValue(fragment.to_string()));
                };
                let Ok(slot) = SlotName::new(slot) else {
                    return self.fail(LevError::MalformedOp(fragment.to_string()));
                };
                let Ok(value) = SlotValue::new(value) else {
                    return self.fail(LevError::MissingValue(fragment.to_string()));
                };
                self.check_legal(&slot, Some(&value))?;
                Ok(Some(if kind == OpKind::Insert {
                    EditOp::Insert { slot, value }
                } else {
                    EditOp::Substitute { slot, value }
                }))
            }
        }
    }
}

fn split_prefix(text: &str) -> Result<(&str, &str), LevError> {
    let text = text.trim();
    let Some(inner) = text.strip_prefix('[') else {
        return Err(LevError::MissingDomainPrefix);
    };
    let Some((domain, rest)) = inner.split_once(']') else {
        return Err(LevError::UnterminatedDomainPrefix);
    };
    Ok((domain, rest))
}

fn resolve_domain(raw: &str, ontology: &Ontology) -> Result<Domain, LevError> {
    Domain::new(raw)
        .filter(|d| KNOWN_DOMAINS.contains(&d.as_str()) || d.as_str() == ontology.name())
        .ok_or_else(|| LevError::UnknownDomain(raw.trim().to_string()))
}

/// Parses a rendered span.
///
/// Strict mode rejects any malformation, unknown slot or illegal value.
/// Lenient mode drops bad fragments (counting them), keeps unknown slot and
/// value strings as they are, keeps the first op on a repeated slot and
/// falls back to the ontology's domain when the prefix is missing or unknown.
pub fn parse(text: &str, ontology: &Ontology, strict: bool) -> Result<Parsed<LevSpan>, LevError> {
    let mut parser = OpParser {
        ontology,
        strict,
        dropped: 0,
    };
    let fallback = || Domain::new(ontology.name()).unwrap_or_else(Domain::gpt_negochat);
    let (domain, body) = match split_prefix(text) {
        Ok((raw, body)) => match resolve_domain(raw, ontology) {
            Ok(d) => (d, body),
            Err(e) => {
                parser.fail::<()>(e)?;
                (fallback(), body)
            }
        },
        Err(LevError::UnterminatedDomainPrefix) if !strict => {
            parser.dropped += 1;
            (fallback(), "")
        }
        Err(e) => {
            parser.fail::<()>(e)?;
            (fallback(), text)
        }
    };
    let mut ops: Vec<EditOp> = Vec::new();
    let body = body.trim();
    if !body.is_empty() {
        for (position, fragment) in body.split(';').enumerate() {
            if let Some(op) = parser.op(position, fragment)? {
                if ops.iter().any(|o| o.slot() == op.slot()) {
                    parser.fail::<()>(LevError::DuplicateSlot(op.slot().to_string()))?;
                } else {
                    ops.push(op);
                }
            }
        }
    }
    let span = LevSpan::new(domain, ops, ontology).expect("duplicates filtered above");
    Ok(Parsed {
        value: span,
        dropped: parser.dropped,
    })
}

/// Full-state belief span: `slot = value ; ...` in ontology order, `none` if empty.
pub fn render_state(state: &AgreementState, ontology: &Ontology) -> String {
    if state.is_empty() {
        return EMPTY_STATE.to_string();
    }
    state
        .ordered(ontology)
        .into_iter()
        .map(|(s, v)| format!("{s} = {v}"))
        .collect::<Vec<_>>()
        .join(OP_SEPARATOR)
}

/// Inverse of [`render_state`], with the same strict/lenient contract as [`parse`].
pub fn parse_state(
    text: &str,
    ontology: &Ontology,
    strict: bool,
) -> Result<Parsed<AgreementState>, LevError> {
    let text = text.trim();
    let mut state = AgreementState::new();
    let mut parser = OpParser {
        ontology,
        strict,
        dropped: 0,
    };
    if text.eq_ignore_ascii_case(EMPTY_STATE) {
        return Ok(Parsed {
            value: state,
            dropped: 0,
        });
    }
    for (position, fragment) in text.split(';').enumerate() {
        let fragment = fragment.trim();
        if fragment.is_empty() {
            parser.fail::<()>(LevError::EmptyOp(position))?;
            continue;
        }
        let Some((slot, value)) = fragment.split_once('=') else {
            parser.fail::<()>(LevError::MissingValue(fragment.to_string()))?;
            continue;
        };
        let (Ok(slot), Ok(value)) = (SlotName::new(slot), SlotValue::new(value)) else {
            parser.fail::<()>(LevError::MalformedOp(fragment.to_string()))?;
            continue;
        };
        parser.check_legal(&slot, Some(&value))?;
        if state.contains(&slot) {
            parser.fail::<()>(LevError::DuplicateSlot(slot.to_string()))?;
            continue;
        }
        state.insert(slot, value);
    }
    Ok(Parsed {
        value: state,
        dropped: parser.dropped,
    })
}
