//! Keyword-based screen type identification from scene descriptions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};
use crate::label::{Label, ScreenType};

#[derive(Debug, thiserror::Error)]
pub enum IdentifyError {
    #[error("phrase {0:?} is not in the lexicon")]
    UnknownPhrase(String),
    #[error("lexicon: {0}")]
    InvalidLexicon(String),
    #[error(transparent)]
    File(#[from] JsonlError),
}

/// Built-in keyword table.
pub const DEFAULT_LEXICON: &[(&str, ScreenType)] = &[
    ("tv", ScreenType::Tv),
    ("television", ScreenType::Tv),
    ("smartphone", ScreenType::Smartphone),
    ("phone", ScreenType::Smartphone),
    ("tablet", ScreenType::Smartphone),
    ("cellphone", ScreenType::Smartphone),
    ("ipad", ScreenType::Smartphone),
    ("cell phone", ScreenType::Smartphone),
    ("computer", ScreenType::Computer),
    ("laptop", ScreenType::Computer),
    ("computer monitor", ScreenType::Computer),
];

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    phrase: String,
    words: Vec<String>,
    screen: ScreenType,
}

/// Phrase → screen type table, matched case-insensitively on word boundaries
/// with longer phrases tried first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordLexicon {
    entries: Vec<Entry>,
    strip_plurals: bool,
}

impl Default for KeywordLexicon {
    fn default() -> Self {
        let mut lex = KeywordLexicon {
            entries: Vec::new(),
            strip_plurals: true,
        };
        for (p, t) in DEFAULT_LEXICON {
            lex.insert(p, *t).expect("built-in phrases are valid");
        }
        lex
    }
}

impl KeywordLexicon {
    pub fn empty() -> Self {
        KeywordLexicon {
            entries: Vec::new(),
            strip_plurals: true,
        }
    }

    /// Accept a trailing "s" on the last word of a phrase ("TVs", "laptops").
    pub fn with_plural_stripping(mut self, on: bool) -> Self {
        self.strip_plurals = on;
        self
    }

    /// Adds or re-maps a phrase. Phrases are normalised to lowercase words.
    pub fn insert(&mut self, phrase: &str, screen: ScreenType) -> Result<(), IdentifyError> {
        let w = words(phrase);
        if w.is_empty() {
            return Err(IdentifyError::InvalidLexicon(format!("phrase {phrase:?} has no words")));
        }
        let phrase = w.join(" ");
        self.entries.retain(|e| e.phrase != phrase);
        self.entries.push(Entry {
            phrase,
            words: w,
            screen,
        });
        self.entries.sort_by(|a, b| {
            b.words
                .len()
                .cmp(&a.words.len())
                .then_with(|| b.phrase.len().cmp(&a.phrase.len()))
                .then_with(|| a.phrase.cmp(&b.phrase))
        });
        Ok(())
    }

    /// Built-in table extended (or overridden) by a JSON object `{phrase: type}`.
    pub fn from_json_str(text: &str) -> Result<Self, IdentifyError> {
        let map: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| IdentifyError::InvalidLexicon(e.to_string()))?;
        let mut lex = KeywordLexicon::default();
        for (phrase, ty) in map {
            let t = ty.parse::<ScreenType>().map_err(IdentifyError::InvalidLexicon)?;
            lex.insert(&phrase, t)?;
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, IdentifyError> {
        let text = fs::read_to_string(path).map_err(|source| JsonlError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn lookup(&self, phrase: &str) -> Option<ScreenType> {
        let key = words(phrase).join(" ");
        self.entries.iter().find(|e| e.phrase == key).map(|e| e.screen)
    }

    pub fn phrases(&self) -> impl Iterator<Item = (&str, ScreenType)> {
        self.entries.iter().map(|e| (e.phrase.as_str(), e.screen))
    }

    fn matches_at(&self, entry: &Entry, tokens: &[String]) -> bool {
        if tokens.len() < entry.words.len() {
            return false;
        }
        let last = entry.words.len() - 1;
        entry.words.iter().zip(tokens).enumerate().all(|(i, (w, t))| {
            w == t
                || (self.strip_plurals
                    && i == last
                    && t.len() == w.len() + 1
                    && t.starts_with(w.as_str())
                    && t.ends_with('s'))
        })
    }
}

/// Lexicon phrases found in `text`, in order of first occurrence. Each word
/// position is consumed by at most one (the longest) phrase.
pub fn extract_keywords(text: &str, lexicon: &KeywordLexicon) -> Vec<String> {
    let tokens = words(text);
    let mut found = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        match lexicon.entries.iter().find(|e| lexicon.matches_at(e, &tokens[pos..])) {
            Some(e) => {
                found.push(e.phrase.clone());
                pos += e.words.len();
            }
            None => pos += 1,
        }
    }
    found
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Binary {
    Screen,
    NonScreen,
}

impl From<Label> for Binary {
    fn from(l: Label) -> Self {
        if l.is_screen() {
            Binary::Screen
        } else {
            Binary::NonScreen
        }
    }
}

/// Maps matched phrases to their type set and the type of the first phrase.
pub fn map_to_screen_type(
    phrases: &[String],
    lexicon: &KeywordLexicon,
) -> Result<(BTreeSet<ScreenType>, Label), IdentifyError> {
    let mut types = BTreeSet::new();
    let mut primary = Label::NonScreen;
    for p in phrases {
        let t = lexicon
            .lookup(p)
            .ok_or_else(|| IdentifyError::UnknownPhrase(p.clone()))?;
        if types.is_empty() {
            primary = t.into();
        }
        types.insert(t);
    }
    Ok((types, primary))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenVerdict {
    pub group_id: String,
    pub matched_phrases: Vec<String>,
    pub types: BTreeSet<ScreenType>,
    pub primary_type: Label,
    pub binary: Binary,
}

impl ScreenVerdict {
    /// Canonical type names, e.g. "TV, Computer"; "no screen" when empty.
    pub fn summary(&self) -> String {
        if self.types.is_empty() {
            return "no screen".to_owned();
        }
        // Primary first, then the rest in canonical order.
        let mut names = vec![self.primary_type.as_str()];
        names.extend(
            self.types
                .iter()
                .map(|t| t.as_str())
                .filter(|n| *n != self.primary_type.as_str()),
        );
        names.join(", ")
    }
}

impl fmt::Display for ScreenVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.group_id, self.summary())
    }
}

pub fn collapse_binary(verdict: &ScreenVerdict) -> Binary {
    if verdict.types.is_empty() {
        Binary::NonScreen
    } else {
        Binary::Screen
    }
}

pub fn identify(group_id: &str, text: &str, lexicon: &KeywordLexicon) -> ScreenVerdict {
    let matched_phrases = extract_keywords(text, lexicon);
    let (types, primary_type) =
        map_to_screen_type(&matched_phrases, lexicon).expect("extracted phrases come from the lexicon");
    let mut v = ScreenVerdict {
        group_id: group_id.to_owned(),
        matched_phrases,
        types,
        primary_type,
        binary: Binary::NonScreen,
    };
    v.binary = collapse_binary(&v);
    v
}

pub fn write_verdicts(path: &Path, verdicts: &[ScreenVerdict]) -> Result<(), IdentifyError> {
    Ok(jsonl::write(path, verdicts)?)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<ScreenVerdict>, IdentifyError> {
    Ok(jsonl::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kw(text: &str) -> Vec<String> {
        extract_keywords(text, &KeywordLexicon::default())
    }

    #[test]
    fn extraction_examples() {
        assert_eq!(kw("A television is mounted on the wall"), ["television"]);
        assert_eq!(
            kw("a computer monitor next to a laptop"),
            ["computer monitor", "laptop"]
        );
        assert!(kw("a child reads a book").is_empty());
    }

    #[test]
    fn word_boundaries() {
        assert!(kw("she answers the telephone").is_empty());
        assert!(kw("a tvstand and a smartphones2").is_empty());
        assert_eq!(kw("holding a cell phone"), ["cell phone"]);
        assert_eq!(kw("a cell-phone, a CELLPHONE"), ["cell phone", "cellphone"]);
        assert_eq!(kw("smartphone"), ["smartphone"]);
        assert_eq!(kw("TV's remote"), ["tv"]);
    }

    #[test]
    fn plurals() {
        assert_eq!(kw("two TVs and three laptops"), ["tv", "laptop"]);
        assert_eq!(kw("Computer monitors glow"), ["computer monitor"]);
        assert_eq!(kw("iPads"), ["ipad"]);
        let strict = KeywordLexicon::default().with_plural_stripping(false);
        assert!(extract_keywords("two TVs", &strict).is_empty());
    }

    #[test]
    fn mapping_examples() {
        let lex = KeywordLexicon::default();
        let (t, p) = map_to_screen_type(&["television".into()], &lex).unwrap();
        assert_eq!((t, p), (BTreeSet::from([ScreenType::Tv]), Label::Tv));
        let (t, _) = map_to_screen_type(&["iPad".into()], &lex).unwrap();
        assert_eq!(t, BTreeSet::from([ScreenType::Smartphone]));
        let (t, p) = map_to_screen_type(&["laptop".into(), "phone".into()], &lex).unwrap();
        assert_eq!(t, BTreeSet::from([ScreenType::Computer, ScreenType::Smartphone]));
        assert_eq!(p, Label::Computer);
        assert!(matches!(
            map_to_screen_type(&["radio".into()], &lex),
            Err(IdentifyError::UnknownPhrase(_))
        ));
        let (t, p) = map_to_screen_type(&[], &lex).unwrap();
        assert!(t.is_empty());
        assert_eq!(p, Label::NonScreen);
    }

    #[test]
    fn binary_collapse() {
        let mk = |types: &[ScreenType]| {
            let mut v = identify("g", "", &KeywordLexicon::default());
            v.types = types.iter().copied().collect();
            v
        };
        assert_eq!(collapse_binary(&mk(&[ScreenType::Tv])), Binary::Screen);
        assert_eq!(collapse_binary(&mk(&[])), Binary::NonScreen);
        assert_eq!(
            collapse_binary(&mk(&[ScreenType::Smartphone, ScreenType::Computer])),
            Binary::Screen
        );
    }

    #[test]
    fn config_extends_and_overrides() {
        let lex = KeywordLexicon::from_json_str(r#"{"Monitor": "Computer", "Tablet": "TV"}"#).unwrap();
        assert_eq!(lex.lookup("monitor"), Some(ScreenType::Computer));
        assert_eq!(lex.lookup("tablet"), Some(ScreenType::Tv));
        assert_eq!(lex.lookup("television"), Some(ScreenType::Tv));
        assert_eq!(extract_keywords("a computer monitor", &lex), ["computer monitor"]);
        assert!(KeywordLexicon::from_json_str(r#"{"radio": "Radio"}"#).is_err());
        assert!(KeywordLexicon::from_json_str(r#"{"  ": "TV"}"#).is_err());
    }

    #[test]
    fn summary_is_stable_under_reidentification() {
        let lex = KeywordLexicon::default();
        for text in [
            "a laptop beside a tv",
            "a phone",
            "nothing here",
            "a TV, a tablet and a computer",
        ] {
            let v = identify("g", text, &lex);
            let again = identify("g", &v.summary(), &lex);
            assert_eq!(again.types, v.types, "{text}");
            assert_eq!(again.primary_type, v.primary_type, "{text}");
            assert_eq!(again.binary, v.binary);
        }
    }

    proptest! {
        #[test]
        fn case_insensitive(words in proptest::collection::vec(
            prop_oneof![
                Just("tv"), Just("Television"), Just("cell"), Just("phone"), Just("computer"),
                Just("monitor"), Just("laptops"), Just("iPad"), Just("the"), Just("a"), Just("wall"),
            ],
            0..12,
        ), sep in prop_oneof![Just(" "), Just(", "), Just("-")]) {
            let text = words.join(sep);
            let lex = KeywordLexicon::default();
            let lower: BTreeSet<_> = extract_keywords(&text, &lex).into_iter().collect();
            let upper: BTreeSet<_> = extract_keywords(&text.to_uppercase(), &lex).into_iter().collect();
            prop_assert_eq!(lower, upper);
        }
    }
}
