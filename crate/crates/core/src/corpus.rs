//! Flattening of XML entry subtrees into tag sentences.
//!
//! A tier names the repeating element that delimits one entry and the
//! descendant elements whose branches are collapsed to a single token.
//! Each matching element yields one [`TagSentence`]: the tokens of its
//! descendants in depth-first preorder. Text, comments, processing
//! instructions and closing tags contribute nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde_json::Value;
use thiserror::Error;

/// Sentence boundary and unknown-word tokens. Never produced by extraction.
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const RESERVED_TOKENS: [&str; 3] = [BOS, EOS, UNK];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("invalid tier `{tier}`: {message}")]
    Validation { tier: String, message: String },
    #[error("invalid token {0:?}: tokens must be non-empty, whitespace-free and not reserved")]
    InvalidToken(String),
    #[error("no `{element}` elements found for tier {tier}")]
    EmptyCorpus { tier: String, element: String },
    #[error("XML error at byte {position}: {message}")]
    Xml { position: u64, message: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// How attributes of an element show up in its token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttributePolicy {
    /// Element name only.
    #[default]
    None,
    /// `name@attr1,attr2` with attribute names sorted.
    Names,
    /// `name@attr1=v1,attr2=v2`; whitespace in values becomes `_`.
    NamesAndValues,
}

impl FromStr for AttributePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "names" => Ok(Self::Names),
            "names_and_values" => Ok(Self::NamesAndValues),
            other => Err(format!(
                "unknown attribute policy {other:?}, expected one of none, names, names_and_values"
            )),
        }
    }
}

/// Extraction rules for one tier (ENTRY, FORM, SENSE, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TierSpec {
    pub name: String,
    pub entry_element: String,
    pub collapse_elements: BTreeSet<String>,
    pub attribute_policy: AttributePolicy,
    pub attribute_allowlist: Option<BTreeSet<String>>,
    /// Keep namespace prefixes on element and attribute names.
    pub keep_prefix: bool,
    /// Collapse entry elements nested inside another entry, as if the
    /// entry element were in `collapse_elements` for the enclosing entry.
    pub collapse_nested: bool,
}

impl TierSpec {
    pub fn new(name: impl Into<String>, entry_element: impl Into<String>) -> Self {
        TierSpec {
            name: name.into(),
            entry_element: entry_element.into(),
            collapse_elements: BTreeSet::new(),
            attribute_policy: AttributePolicy::None,
            attribute_allowlist: None,
            keep_prefix: false,
            collapse_nested: false,
        }
    }

    pub fn collapsing<I, S>(mut self, elements: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.collapse_elements = elements.into_iter().map(Into::into).collect();
        self
    }

    pub fn collapse_nested(mut self, yes: bool) -> Self {
        self.collapse_nested = yes;
        self
    }

    fn collapses(&self, element: &str) -> bool {
        self.collapse_elements.contains(element)
            || (self.collapse_nested && element == self.entry_element)
    }

    pub fn with_policy(mut self, policy: AttributePolicy) -> Self {
        self.attribute_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: &str| {
            Err(CorpusError::Validation {
                tier: self.name.clone(),
                message: message.to_string(),
            })
        };
        if !is_identifier(&self.name) {
            return fail("tier name must be a non-empty identifier without `:` or whitespace");
        }
        if self.entry_element.is_empty() {
            return fail("entry_element is empty");
        }
        if self.collapse_elements.contains(&self.entry_element) {
            return fail(&format!(
                "entry_element `{}` is listed in its own collapse set",
                self.entry_element
            ));
        }
        Ok(())
    }

    /// Token for an element under this tier's attribute rules.
    pub fn token_for(&self, element_name: &str, attributes: &BTreeMap<String, String>) -> TagToken {
        match &self.attribute_allowlist {
            None => tokenize_element(element_name, attributes, self.attribute_policy),
            Some(allow) => {
                let kept = attributes
                    .iter()
                    .filter(|(k, _)| allow.contains(*k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                tokenize_element(element_name, &kept, self.attribute_policy)
            }
        }
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c == ':' || c.is_whitespace())
}

/// Parses the JSON tier configuration file.
///
/// `{"tiers":[{"name":"ENTRY","entry_element":"entry","collapse":["sense","form"],
///   "attribute_policy":"none","attribute_allowlist":null,"keep_prefix":false}]}`
pub fn parse_tier_config(config_text: &str) -> Result<Vec<TierSpec>> {
    let root: Value = serde_json::from_str(config_text).map_err(|e| CorpusError::Config {
        key: "<document>".into(),
        message: e.to_string(),
    })?;
    let cfg_err = |key: String, message: &str| CorpusError::Config {
        key,
        message: message.to_string(),
    };
    let tiers = root
        .get("tiers")
        .ok_or_else(|| cfg_err("tiers".into(), "missing key"))?
        .as_array()
        .ok_or_else(|| cfg_err("tiers".into(), "expected an array"))?;

    let mut specs = Vec::with_capacity(tiers.len());
    let mut seen = BTreeSet::new();
    for (i, tier) in tiers.iter().enumerate() {
        let at = |field: &str| format!("tiers[{i}].{field}");
        let obj = tier
            .as_object()
            .ok_or_else(|| cfg_err(format!("tiers[{i}]"), "expected an object"))?;
        for key in obj.keys() {
            if !matches!(
                key.as_str(),
                "name"
                    | "entry_element"
                    | "collapse"
                    | "attribute_policy"
                    | "attribute_allowlist"
                    | "keep_prefix"
                    | "collapse_nested"
            ) {
                return Err(cfg_err(at(key), "unknown key"));
            }
        }
        let string = |field: &str| -> Result<String> {
            obj.get(field)
                .ok_or_else(|| cfg_err(at(field), "missing key"))?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| cfg_err(at(field), "expected a string"))
        };
        let string_list = |field: &str| -> Result<Option<Vec<String>>> {
            match obj.get(field) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .map(str::to_string)
                            .ok_or_else(|| cfg_err(at(field), "expected an array of strings"))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Some),
                Some(_) => Err(cfg_err(at(field), "expected an array of strings")),
            }
        };

        let mut spec = TierSpec::new(string("name")?, string("entry_element")?);
        let collapse = string_list("collapse")?.unwrap_or_default();
        let distinct: BTreeSet<String> = collapse.iter().cloned().collect();
        if distinct.len() != collapse.len() {
            return Err(cfg_err(at("collapse"), "duplicate element names"));
        }
        spec.collapse_elements = distinct;
        if obj.contains_key("attribute_policy") {
            spec.attribute_policy = string("attribute_policy")?
                .parse()
                .map_err(|m: String| cfg_err(at("attribute_policy"), &m))?;
        }
        spec.attribute_allowlist =
            string_list("attribute_allowlist")?.map(|v| v.into_iter().collect());
        let flag = |field: &str| -> Result<bool> {
            match obj.get(field) {
                None | Some(Value::Null) => Ok(false),
                Some(Value::Bool(b)) => Ok(*b),
                Some(_) => Err(cfg_err(at(field), "expected a boolean")),
            }
        };
        spec.keep_prefix = flag("keep_prefix")?;
        spec.collapse_nested = flag("collapse_nested")?;
        spec.validate()?;
        if !seen.insert(spec.name.clone()) {
            return Err(cfg_err(at("name"), "duplicate tier name"));
        }
        specs.push(spec);
    }
    Ok(specs)
}

/// One token of a tag sentence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagToken(String);

impl TagToken {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty()
            || text.chars().any(char::is_whitespace)
            || RESERVED_TOKENS.contains(&text.as_str())
        {
            return Err(CorpusError::InvalidToken(text));
        }
        Ok(TagToken(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TagToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for TagToken {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Builds the token for an element.
///
/// Attributes are emitted in lexicographic name order, so the map order
/// never matters. Element names are assumed to be valid XML names.
pub fn tokenize_element(
    element_name: &str,
    attributes: &BTreeMap<String, String>,
    policy: AttributePolicy,
) -> TagToken {
    let mut text = element_name.to_string();
    if policy != AttributePolicy::None && !attributes.is_empty() {
        text.push('@');
        for (i, (name, value)) in attributes.iter().enumerate() {
            if i > 0 {
                text.push(',');
            }
            text.push_str(name);
            if policy == AttributePolicy::NamesAndValues {
                text.push('=');
                text.extend(value.chars().map(|c| if c.is_whitespace() { '_' } else { c }));
            }
        }
    }
    TagToken(text)
}

/// Stable identity of one entry: its tier and document-order position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryRef {
    pub tier_name: String,
    pub ordinal: usize,
    pub source_id: Option<String>,
}

impl EntryRef {
    pub fn new(tier_name: impl Into<String>, ordinal: usize) -> Self {
        EntryRef {
            tier_name: tier_name.into(),
            ordinal,
            source_id: None,
        }
    }
}

impl fmt::Display for EntryRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.tier_name, self.ordinal)?;
        if let Some(id) = &self.source_id {
            write!(f, ":{id}")?;
        }
        Ok(())
    }
}

impl FromStr for EntryRef {
    type Err = String;

    /// Parses `TIER:ordinal[:source_id]`.
    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.splitn(3, ':');
        let tier = parts.next().unwrap_or_default();
        if !is_identifier(tier) {
            return Err(format!("bad tier name in entry ref {s:?}"));
        }
        let ordinal = parts
            .next()
            .ok_or_else(|| format!("missing ordinal in entry ref {s:?}"))?;
        let ordinal = ordinal
            .parse::<usize>()
            .map_err(|_| format!("malformed ordinal {ordinal:?} in entry ref {s:?}"))?;
        let source_id = parts.next().filter(|id| !id.is_empty()).map(str::to_string);
        Ok(EntryRef {
            tier_name: tier.to_string(),
            ordinal,
            source_id,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSentence {
    pub entry: EntryRef,
    pub tokens: Vec<TagToken>,
}

impl TagSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        let words: Vec<&str> = self.tokens.iter().map(TagToken::as_str).collect();
        words.join(" ")
    }
}

/// Tag sentences of one tier, in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagCorpus {
    pub tier_name: String,
    sentences: Vec<TagSentence>,
    vocabulary: BTreeSet<TagToken>,
}

impl TagCorpus {
    /// Builds a corpus, checking that ordinals run 0..N-1 and every entry
    /// belongs to `tier_name`.
    pub fn new(tier_name: impl Into<String>, sentences: Vec<TagSentence>) -> Result<Self> {
        let tier_name = tier_name.into();
        for (i, s) in sentences.iter().enumerate() {
            if s.entry.ordinal != i || s.entry.tier_name != tier_name {
                return Err(CorpusError::Format {
                    line: i + 1,
                    message: format!("expected entry {tier_name}:{i}, found {}", s.entry),
                });
            }
        }
        let vocabulary = sentences
            .iter()
            .flat_map(|s| s.tokens.iter().cloned())
            .collect();
        Ok(TagCorpus {
            tier_name,
            sentences,
            vocabulary,
        })
    }

    /// Builds a corpus from whitespace-separated sentences, mostly for tests.
    pub fn from_texts<S: AsRef<str>>(tier_name: &str, texts: &[S]) -> Result<Self> {
        let sentences = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                Ok(TagSentence {
                    entry: EntryRef::new(tier_name, i),
                    tokens: t
                        .as_ref()
                        .split_whitespace()
                        .map(TagToken::new)
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(tier_name, sentences)
    }

    pub fn sentences(&self) -> &[TagSentence] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<TagSentence> {
        self.sentences
    }

    pub fn vocabulary(&self) -> &BTreeSet<TagToken> {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Corpus file: `entry_ref<TAB>tok tok ...`, one sentence per line.
    pub fn to_file_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.entry.to_string());
            out.push('\t');
            out.push_str(&s.text());
            out.push('\n');
        }
        out
    }

    pub fn parse_file_text(text: &str) -> Result<Self> {
        let mut sentences = Vec::new();
        let mut tier: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let format_err = |message: String| CorpusError::Format {
                line: line_no,
                message,
            };
            let (entry, body) = line
                .split_once('\t')
                .ok_or_else(|| format_err("missing tab after entry ref".into()))?;
            let entry: EntryRef = entry.parse().map_err(format_err)?;
            match &tier {
                None => tier = Some(entry.tier_name.clone()),
                Some(t) if *t != entry.tier_name => {
                    return Err(format_err(format!(
                        "entry {entry} does not belong to tier {t}"
                    )))
                }
                Some(_) => {}
            }
            if entry.ordinal != sentences.len() {
                return Err(format_err(format!(
                    "expected ordinal {}, found {}",
                    sentences.len(),
                    entry.ordinal
                )));
            }
            let tokens = body
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(TagToken::new)
                .collect::<Result<_>>()
                .map_err(|e| format_err(e.to_string()))?;
            sentences.push(TagSentence { entry, tokens });
        }
        let tier = tier.ok_or(CorpusError::Format {
            line: 0,
            message: "corpus file is empty".into(),
        })?;
        Self::new(tier, sentences)
    }
}

struct OpenEntry {
    sentence: usize,
    depth: usize,
    /// Depth of the collapsed element whose descendants are being skipped.
    collapsed_at: Option<usize>,
}

struct Extractor<'t> {
    tier: &'t TierSpec,
    sentences: Vec<TagSentence>,
    open: Vec<OpenEntry>,
    depth: usize,
}

impl<'t> Extractor<'t> {
    fn name(&self, qname: &[u8]) -> String {
        let raw = String::from_utf8_lossy(qname);
        if self.tier.keep_prefix {
            raw.into_owned()
        } else {
            match raw.rsplit_once(':') {
                Some((_, local)) => local.to_string(),
                None => raw.into_owned(),
            }
        }
    }

    fn start(&mut self, e: &BytesStart<'_>) -> Result<()> {
        let name = self.name(e.name().as_ref());
        let mut attributes = BTreeMap::new();
        let mut source_id = None;
        for attr in e.attributes() {
            let attr = attr.map_err(|err| CorpusError::Xml {
                position: 0,
                message: err.to_string(),
            })?;
            let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
            if key == "xmlns" || key.starts_with("xmlns:") {
                continue;
            }
            let value = attr
                .unescape_value()
                .map_err(|err| CorpusError::Xml {
                    position: 0,
                    message: err.to_string(),
                })?
                .into_owned();
            if key == "xml:id" || (key == "id" && source_id.is_none()) {
                source_id = Some(value.clone());
            }
            attributes.insert(self.name(key.as_bytes()), value);
        }
        let token = self.tier.token_for(&name, &attributes);
        let collapses = self.tier.collapses(&name);
        for entry in self.open.iter_mut() {
            if entry.collapsed_at.is_none() {
                self.sentences[entry.sentence].tokens.push(token.clone());
                if collapses {
                    entry.collapsed_at = Some(self.depth);
                }
            }
        }
        if name == self.tier.entry_element {
            let ordinal = self.sentences.len();
            self.sentences.push(TagSentence {
                entry: EntryRef {
                    tier_name: self.tier.name.clone(),
                    ordinal,
                    source_id,
                },
                tokens: Vec::new(),
            });
            self.open.push(OpenEntry {
                sentence: ordinal,
                depth: self.depth,
                collapsed_at: None,
            });
        }
        self.depth += 1;
        Ok(())
    }

    fn end(&mut self) {
        self.depth = self.depth.saturating_sub(1);
        let depth = self.depth;
        if self.open.last().is_some_and(|e| e.depth == depth) {
            self.open.pop();
        }
        for entry in self.open.iter_mut() {
            if entry.collapsed_at == Some(depth) {
                entry.collapsed_at = None;
            }
        }
    }
}

/// Extracts one tag sentence per `tier.entry_element` from an XML stream.
pub fn extract_from_reader<R: BufRead>(input: R, tier: &TierSpec) -> Result<TagCorpus> {
    tier.validate()?;
    let mut reader = Reader::from_reader(input);
    let mut ex = Extractor {
        tier,
        sentences: Vec::new(),
        open: Vec::new(),
        depth: 0,
    };
    let mut buf = Vec::new();
    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| CorpusError::Xml {
            position: reader.error_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(e) => ex.start(&e)?,
            Event::Empty(e) => {
                ex.start(&e)?;
                ex.end();
            }
            Event::End(_) => ex.end(),
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if ex.sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            tier: tier.name.clone(),
            element: tier.entry_element.clone(),
        });
    }
    TagCorpus::new(tier.name.clone(), ex.sentences)
}

pub fn extract_sentences(xml: &str, tier: &TierSpec) -> Result<TagCorpus> {
    extract_from_reader(xml.as_bytes(), tier)
}
