//! Tokenization, stopword removal and lemmatization.
//!
//! All functions are pure. Tables are plain data: a stopword file (one token
//! per line), a lemma table (`surface<TAB>lemma`) and ordered suffix rules
//! (`suffix<TAB>replacement`). Portuguese starter tables are bundled.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_pt.txt");
const BUNDLED_LEMMAS: &str = include_str!("../data/lemmas_pt.tsv");
const BUNDLED_SUFFIXES: &str = include_str!("../data/suffixes_pt.tsv");

/// Suffix rules never shrink a word below this many characters.
const MIN_STEM_CHARS: usize = 2;

#[derive(Debug, Error)]
pub enum TextprepError {
    #[error("line {line}: expected `<left>\\t<right>`, got `{content}`")]
    BadTsvLine { line: usize, content: String },
    #[error("min_token_len must be at least 1")]
    BadMinTokenLen,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub min_token_len: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            min_token_len: 2,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<(), TextprepError> {
        if self.min_token_len == 0 {
            return Err(TextprepError::BadMinTokenLen);
        }
        Ok(())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Splits `text` into maximal runs of letters and digits. A hyphen joins two
/// runs when it sits directly between word characters.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let normalized: Vec<char> = text.nfc().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut flush = |current: &mut String| {
        if current.is_empty() {
            return;
        }
        let token: String = if config.lowercase {
            current.to_lowercase().nfc().collect()
        } else {
            current.clone()
        };
        if token.chars().count() >= config.min_token_len.max(1) {
            tokens.push(token);
        }
        current.clear();
    };
    for (i, &c) in normalized.iter().enumerate() {
        let inner_hyphen =
            c == '-' && !current.is_empty() && normalized.get(i + 1).is_some_and(|&n| is_word_char(n));
        if is_word_char(c) || inner_hyphen {
            current.push(c);
        } else {
            flush(&mut current);
        }
    }
    flush(&mut current);
    tokens
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StopwordList(BTreeSet<String>);

impl StopwordList {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(tokens.into_iter().map(Into::into).collect())
    }

    /// Bundled Portuguese list.
    pub fn portuguese() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    /// One token per line; blank lines and `#` comments are skipped.
    pub fn parse(content: &str) -> Self {
        Self(
            content
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.to_lowercase().nfc().collect())
                .collect(),
        )
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, TextprepError> {
        let mut s = String::new();
        BufReader::new(reader).read_to_string(&mut s)?;
        Ok(Self::parse(&s))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

pub fn remove_stopwords(tokens: &[String], stopwords: &StopwordList) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !stopwords.contains(t))
        .cloned()
        .collect()
}

/// Lexicon lookup with suffix-rule fallback.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaTable {
    pub lemmas: BTreeMap<String, String>,
    pub suffix_rules: Vec<(String, String)>,
}

fn parse_tsv(content: &str) -> Result<Vec<(String, String)>, TextprepError> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let mut parts = l.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() => Ok((
                    a.trim().nfc().collect::<String>(),
                    b.trim().nfc().collect::<String>(),
                )),
                _ => Err(TextprepError::BadTsvLine {
                    line: i + 1,
                    content: l.to_owned(),
                }),
            }
        })
        .collect()
}

impl LemmaTable {
    pub fn new(lemmas: BTreeMap<String, String>, suffix_rules: Vec<(String, String)>) -> Self {
        Self { lemmas, suffix_rules }
    }

    /// Bundled Portuguese table and plural/gender suffix rules.
    pub fn portuguese() -> Self {
        Self::parse(BUNDLED_LEMMAS, BUNDLED_SUFFIXES).expect("bundled lemma tables are well formed")
    }

    pub fn parse(lemmas: &str, suffixes: &str) -> Result<Self, TextprepError> {
        Ok(Self {
            lemmas: parse_tsv(lemmas)?.into_iter().collect(),
            suffix_rules: parse_tsv(suffixes)?,
        })
    }

    fn apply_rules(&self, token: &str) -> Option<String> {
        let chars = token.chars().count();
        let mut best: Option<&(String, String)> = None;
        for rule in &self.suffix_rules {
            let fits = token.ends_with(rule.0.as_str()) && chars - rule.0.chars().count() >= MIN_STEM_CHARS;
            if fits && best.is_none_or(|b| rule.0.chars().count() > b.0.chars().count()) {
                best = Some(rule);
            }
        }
        best.map(|(suffix, replacement)| {
            format!("{}{}", &token[..token.len() - suffix.len()], replacement)
        })
    }

    /// Table lookup, else longest suffix rule followed by a table lookup of
    /// the rewritten form, else the token itself.
    pub fn lemma(&self, token: &str) -> String {
        if let Some(l) = self.lemmas.get(token) {
            return l.clone();
        }
        match self.apply_rules(token) {
            Some(rewritten) => self.lemmas.get(&rewritten).cloned().unwrap_or(rewritten),
            None => token.to_owned(),
        }
    }
}

pub fn lemmatize(tokens: &[String], table: &LemmaTable) -> Vec<String> {
    tokens.iter().map(|t| table.lemma(t)).collect()
}

/// Tokenizer settings plus the tables applied after tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub tokenizer: TokenizerConfig,
    pub stopwords: StopwordList,
    pub lemmas: LemmaTable,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::portuguese()
    }
}

impl Preprocessor {
    pub fn portuguese() -> Self {
        Self {
            tokenizer: TokenizerConfig::default(),
            stopwords: StopwordList::portuguese(),
            lemmas: LemmaTable::portuguese(),
        }
    }

    /// Tokenization only.
    pub fn plain(tokenizer: TokenizerConfig) -> Self {
        Self {
            tokenizer,
            stopwords: StopwordList::default(),
            lemmas: LemmaTable::default(),
        }
    }

    pub fn run(&self, text: &str) -> Vec<String> {
        preprocess(text, &self.tokenizer, &self.stopwords, &self.lemmas)
    }

    pub fn fingerprint(&self) -> String {
        crate::fingerprint::fingerprint(self)
    }
}

/// tokenize → remove_stopwords → lemmatize.
pub fn preprocess(
    text: &str,
    config: &TokenizerConfig,
    stopwords: &StopwordList,
    lemmas: &LemmaTable,
) -> Vec<String> {
    let tokens = tokenize(text, config);
    let kept = remove_stopwords(&tokens, stopwords);
    lemmatize(&kept, lemmas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        let cfg = TokenizerConfig::default();
        assert_eq!(tokenize("Tem a palavra, Sr. Deputado.", &cfg), toks(&["tem", "palavra", "sr", "deputado"]));
        assert!(tokenize("", &cfg).is_empty());
        assert_eq!(tokenize("guarda-chuva 2021", &cfg), toks(&["guarda-chuva", "2021"]));
    }

    #[test]
    fn tokenize_edge_hyphens_and_nfc() {
        let cfg = TokenizerConfig::default();
        assert_eq!(tokenize("-- pré- -fim ab-", &cfg), toks(&["pré", "fim", "ab"]));
        // decomposed "é" composes to the same token as precomposed
        assert_eq!(tokenize("cafe\u{301}", &cfg), tokenize("café", &cfg));
        assert_eq!(tokenize("Sr.ª", &cfg), toks(&["sr"]));
        let keep_case = TokenizerConfig { lowercase: false, min_token_len: 1 };
        assert_eq!(tokenize("A Casa", &keep_case), toks(&["A", "Casa"]));
    }

    #[test]
    fn stopword_examples() {
        let sw = StopwordList::new(["a", "de"]);
        assert_eq!(remove_stopwords(&toks(&["a", "palavra", "de", "ordem"]), &sw), toks(&["palavra", "ordem"]));
        let all = toks(&["a", "de", "palavra"]);
        assert_eq!(remove_stopwords(&all, &StopwordList::default()), all);
        assert!(remove_stopwords(&toks(&["a", "de"]), &sw).is_empty());
    }

    #[test]
    fn lemma_rule_then_table() {
        let table = LemmaTable::new(
            [("deputada".to_string(), "deputado".to_string())].into(),
            vec![("as".into(), "a".into())],
        );
        assert_eq!(lemmatize(&toks(&["deputadas"]), &table), toks(&["deputado"]));
        assert_eq!(lemmatize(&toks(&["xyz"]), &table), toks(&["xyz"]));
    }

    #[test]
    fn longest_suffix_wins() {
        let table = LemmaTable::new(
            BTreeMap::new(),
            vec![("s".into(), "".into()), ("ões".into(), "ão".into())],
        );
        assert_eq!(table.lemma("votações"), "votação");
        assert_eq!(table.lemma("temas"), "tema");
        // stem would drop below two characters
        assert_eq!(table.lemma("as"), "as");
    }

    #[test]
    fn bundled_tables() {
        let p = Preprocessor::portuguese();
        assert!(p.stopwords.len() > 100);
        for w in p.stopwords.iter() {
            assert_eq!(tokenize(w, &p.tokenizer), vec![w.to_string()], "stopword `{w}` must survive tokenization");
        }
        assert_eq!(p.run("As Deputadas falaram das votações."), toks(&["deputado", "falaram", "votação"]));
        // lemma-closed: every table value and rule output is a fixed point
        for lemma in p.lemmas.lemmas.values() {
            assert_eq!(&p.lemmas.lemma(lemma), lemma);
            assert!(!p.stopwords.contains(lemma));
        }
    }

    #[test]
    fn tsv_errors() {
        assert!(LemmaTable::parse("a\tb\tc", "").is_err());
        assert!(LemmaTable::parse("", "nosep").is_err());
        assert!(TokenizerConfig { lowercase: true, min_token_len: 0 }.validate().is_err());
    }

    fn sentence() -> impl Strategy<Value = String> {
        let words = prop::sample::select(vec![
            "Deputadas", "votações", "a", "de", "Governo", "-", "guarda-chuva", "2021", "políticas",
            "Sr.", "senhoras", "nacionais", "é", "ministras", "encerradas", "!", "tem", "amigos",
        ]);
        prop::collection::vec(words, 0..20).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn lemmatize_preserves_length(s in sentence()) {
            let t = tokenize(&s, &TokenizerConfig::default());
            prop_assert_eq!(lemmatize(&t, &LemmaTable::portuguese()).len(), t.len());
        }

        #[test]
        fn shrinkage_and_no_empty_tokens(s in sentence()) {
            let p = Preprocessor::portuguese();
            let t = tokenize(&s, &p.tokenizer);
            prop_assert!(remove_stopwords(&t, &p.stopwords).len() <= t.len());
            prop_assert!(p.run(&s).iter().all(|tok| !tok.is_empty()));
        }

        #[test]
        fn preprocess_idempotent(s in sentence()) {
            let p = Preprocessor::portuguese();
            let once = p.run(&s);
            prop_assert_eq!(p.run(&once.join(" ")), once);
        }
    }
}
