//! Deterministic synthetic moderated debates.
//!
//! Each target agenda item is a run of topic blocks. Between blocks the
//! moderator utters a sentence from the trigger lexicon (label 1); inside a
//! block the moderator only hands the floor over with sentences from the
//! continuation lexicon (label 0). Debaters talk about the block's topic.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{AgendaItem, AgendaKey, Corpus, CorpusError, Minute, Speech, SpeechBlock, SpeechKey};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_minutes: usize,
    pub n_debaters: usize,
    /// Chairpersons; each minute is moderated by one of them.
    pub moderator_ids: Vec<String>,
    pub blocks_per_item: usize,
    /// Mean number of debater turns per block (geometric, support ≥ 1).
    pub mean_block_length: f64,
    /// Probability that an item opens with a trigger sentence at index 0.
    pub opening_prob: f64,
    pub trigger_lexicon: Vec<String>,
    pub continuation_lexicon: Vec<String>,
    /// Per moderator speech, probability that one content word is swapped for a topic word.
    pub noise_prob: f64,
    pub n_topics: usize,
    pub topic_vocab_size: usize,
    pub agenda_label: String,
    pub extra_agenda_items: Vec<String>,
    pub start_date: NaiveDate,
    pub seed: u64,
}

const TRIGGERS: [&str; 6] = [
    "Para uma declaração política, tem a palavra o Sr. Deputado {name}.",
    "Passamos à declaração política seguinte. Tem a palavra {name}.",
    "Terminado este debate, segue-se uma nova declaração política, a cargo de {name}.",
    "Srs. Deputados, vamos mudar de assunto. Para uma declaração política, tem a palavra {name}.",
    "Concluído este tema, dou a palavra a {name}, para proferir uma declaração política.",
    "Encerrado o debate desta declaração, passamos ao grupo parlamentar seguinte, com {name}.",
];

const CONTINUATIONS: [&str; 8] = [
    "Para pedir esclarecimentos, tem a palavra o Sr. Deputado {name}.",
    "Tem a palavra, para responder, {name}.",
    "Sr. Deputado, peço-lhe que conclua, pois já esgotou o seu tempo.",
    "Para formular perguntas, tem a palavra {name}.",
    "Faça favor de terminar, Sr.ª Deputada.",
    "Inscreveram-se, para pedir esclarecimentos, vários Srs. Deputados. Tem a palavra {name}.",
    "Tem a palavra {name}, para uma intervenção sobre o mesmo tema.",
    "Peço silêncio ao Plenário. Continue, Sr. Deputado.",
];

const OTHER_ITEM_LINES: [&str; 3] = [
    "Vamos agora proceder às votações regimentais.",
    "O requerimento foi aprovado por unanimidade.",
    "Está encerrada a sessão.",
];

const FILLER: [&str; 16] = [
    "governo", "país", "portugueses", "medidas", "proposta", "orçamento", "situação", "problema",
    "resposta", "população", "futuro", "compromisso", "partido", "responsabilidade", "apoio",
    "realidade",
];

const GLUE: [&str; 10] = ["o", "a", "de", "que", "e", "para", "com", "não", "uma", "os"];

const FIRST_NAMES: [&str; 12] = [
    "Ana", "João", "Maria", "Pedro", "Inês", "Rui", "Catarina", "Miguel", "Sofia", "Duarte",
    "Beatriz", "Tiago",
];

const SURNAMES: [&str; 12] = [
    "Silva", "Santos", "Ferreira", "Pereira", "Oliveira", "Costa", "Rodrigues", "Martins",
    "Sousa", "Fernandes", "Gonçalves", "Ribeiro",
];

const PARTIES: [&str; 8] = ["PS", "PSD", "BE", "PCP", "CDS-PP", "PAN", "IL", "PEV"];

const SYLLABLES: [&str; 24] = [
    "ba", "be", "bi", "bo", "ca", "co", "da", "de", "fa", "fi", "ga", "go", "la", "li", "lu", "ma",
    "mo", "na", "ne", "pa", "ri", "sa", "ta", "vo",
];

impl Default for SynthConfig {
    /// Shaped after the annotated political-statements data: about 590
    /// moderator speeches with roughly 7% subject interruptions, five chairs.
    fn default() -> Self {
        Self {
            n_minutes: 17,
            n_debaters: 40,
            moderator_ids: ["chair_pureza", "chair_rodrigues", "chair_estrela", "chair_filipe", "chair_negrao"]
                .into_iter()
                .map(String::from)
                .collect(),
            blocks_per_item: 3,
            mean_block_length: 12.0,
            opening_prob: 0.5,
            trigger_lexicon: TRIGGERS.iter().map(|s| s.to_string()).collect(),
            continuation_lexicon: CONTINUATIONS.iter().map(|s| s.to_string()).collect(),
            noise_prob: 0.1,
            n_topics: 8,
            topic_vocab_size: 30,
            agenda_label: crate::DEFAULT_AGENDA_LABEL.to_owned(),
            extra_agenda_items: vec!["votes".to_owned()],
            start_date: NaiveDate::from_ymd_opt(2020, 9, 16).expect("valid date"),
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |m: &str| Err(CorpusError::InvalidConfig(m.to_owned()));
        if self.n_minutes == 0 {
            return fail("n_minutes must be positive");
        }
        if self.n_debaters == 0 {
            return fail("n_debaters must be positive");
        }
        if self.moderator_ids.is_empty() {
            return fail("at least one moderator id is required");
        }
        if self.blocks_per_item == 0 {
            return fail("blocks_per_item must be positive");
        }
        if !(self.mean_block_length >= 1.0 && self.mean_block_length.is_finite()) {
            return fail("mean_block_length must be a finite real ≥ 1");
        }
        if !(0.0..=1.0).contains(&self.opening_prob) {
            return fail("opening_prob must lie in [0, 1]");
        }
        if !(0.0..0.5).contains(&self.noise_prob) {
            return fail("noise_prob must lie in [0, 0.5)");
        }
        if self.trigger_lexicon.is_empty() || self.continuation_lexicon.is_empty() {
            return fail("lexicons must be non-empty");
        }
        let triggers: BTreeSet<&String> = self.trigger_lexicon.iter().collect();
        if self.continuation_lexicon.iter().any(|c| triggers.contains(c)) {
            return fail("trigger and continuation lexicons must be disjoint");
        }
        if self.n_topics == 0 || self.topic_vocab_size == 0 {
            return fail("n_topics and topic_vocab_size must be positive");
        }
        if self.n_topics * self.topic_vocab_size > SYLLABLES.len().pow(3) / 2 {
            return fail("topic vocabulary too large for the word generator");
        }
        if self.agenda_label.is_empty() || self.extra_agenda_items.iter().any(|l| l.is_empty() || *l == self.agenda_label) {
            return fail("agenda labels must be non-empty and distinct from the target label");
        }
        Ok(())
    }
}

/// What the generator knows about its own output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Label of every moderator speech in the target agenda items.
    pub labels: BTreeMap<SpeechKey, u8>,
    /// True block partition of every target agenda item.
    pub blocks: BTreeMap<AgendaKey, Vec<SpeechBlock>>,
    /// Topic id of each block, parallel to `blocks`.
    pub block_topics: BTreeMap<AgendaKey, Vec<usize>>,
    /// Disjoint topic vocabularies.
    pub topic_words: Vec<Vec<String>>,
}

impl SynthTruth {
    pub fn n_positive(&self) -> usize {
        self.labels.values().filter(|&&l| l == 1).count()
    }

    pub fn positive_fraction(&self) -> f64 {
        self.n_positive() as f64 / self.labels.len().max(1) as f64
    }
}

struct Debater {
    id: String,
    name: String,
    party: String,
}

fn pseudo_words(rng: &mut Rng, n_topics: usize, per_topic: usize) -> Vec<Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut topics = vec![Vec::with_capacity(per_topic); n_topics];
    for topic in topics.iter_mut() {
        while topic.len() < per_topic {
            let word: String = (0..3)
                .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
                .collect();
            if seen.insert(word.clone()) {
                topic.push(word);
            }
        }
    }
    topics
}

fn geometric(rng: &mut Rng, mean: f64) -> usize {
    let p = 1.0 / mean;
    let mut n = 1;
    while rng.random::<f64>() >= p {
        n += 1;
    }
    n
}

fn pick<'a, T>(rng: &mut Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// Replaces the alphabetic core of one content word (≥ 4 letters) with `replacement`.
fn swap_content_word(rng: &mut Rng, text: &str, replacement: &str) -> String {
    let words: Vec<&str> = text.split(' ').collect();
    let candidates: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, w)| w.chars().filter(|c| c.is_alphabetic()).count() >= 4)
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return text.to_owned();
    }
    let target = *pick(rng, &candidates);
    words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if i != target {
                return (*w).to_owned();
            }
            let start = w.find(|c: char| c.is_alphabetic()).unwrap_or(0);
            let end = w
                .char_indices()
                .rfind(|(_, c)| c.is_alphabetic())
                .map(|(i, c)| i + c.len_utf8())
                .unwrap_or(w.len());
            format!("{}{}{}", &w[..start], replacement, &w[end..])
        })
        .collect::<Vec<_>>()
        .join(" ")
}

struct Builder<'a> {
    config: &'a SynthConfig,
    rng: Rng,
    debaters: Vec<Debater>,
    topic_words: Vec<Vec<String>>,
}

impl Builder<'_> {
    fn moderator_text(&mut self, lexicon_trigger: bool, next: Option<usize>, topic: usize) -> String {
        let lexicon = if lexicon_trigger {
            &self.config.trigger_lexicon
        } else {
            &self.config.continuation_lexicon
        };
        let template = lexicon[self.rng.random_range(0..lexicon.len())].clone();
        let name = next.map(|d| self.debaters[d].name.clone()).unwrap_or_default();
        let text = template.replace("{name}", &name);
        if self.rng.random::<f64>() < self.config.noise_prob {
            let word = pick(&mut self.rng, &self.topic_words[topic]).clone();
            swap_content_word(&mut self.rng, &text, &word)
        } else {
            text
        }
    }

    fn debater_text(&mut self, topic: usize) -> String {
        let len = self.rng.random_range(12..=30);
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            let roll: f64 = self.rng.random();
            let w = if roll < 0.5 {
                pick(&mut self.rng, &self.topic_words[topic]).clone()
            } else if roll < 0.7 {
                pick(&mut self.rng, &FILLER).to_string()
            } else {
                pick(&mut self.rng, &GLUE).to_string()
            };
            words.push(w);
        }
        let mut text = words.join(" ");
        if let Some(first) = text.get(..1) {
            text = first.to_uppercase() + &text[1..];
        }
        text.push('.');
        text
    }
}

/// Generates a synthetic corpus and its ground truth. Deterministic per seed.
pub fn generate_synthetic(config: &SynthConfig) -> Result<(Corpus, SynthTruth), CorpusError> {
    config.validate()?;
    let mut rng = rng::seeded(config.seed);
    let topic_words = pseudo_words(&mut rng, config.n_topics, config.topic_vocab_size);
    let debaters = (0..config.n_debaters)
        .map(|i| Debater {
            id: format!("dep_{:03}", i + 1),
            name: format!(
                "{} {}",
                FIRST_NAMES[i % FIRST_NAMES.len()],
                SURNAMES[(i / FIRST_NAMES.len() + i * 5) % SURNAMES.len()]
            ),
            party: PARTIES[i % PARTIES.len()].to_owned(),
        })
        .collect();
    let mut b = Builder {
        config,
        rng,
        debaters,
        topic_words,
    };
    let mut truth = SynthTruth {
        labels: BTreeMap::new(),
        blocks: BTreeMap::new(),
        block_topics: BTreeMap::new(),
        topic_words: b.topic_words.clone(),
    };
    let mut minutes = Vec::with_capacity(config.n_minutes);

    for m in 0..config.n_minutes {
        let minute_id = format!("m{:04}", m + 1);
        let date = config.start_date + Days::new(m as u64);
        let chair = pick(&mut b.rng, &config.moderator_ids).clone();
        let mut order = 0u32;
        let mut speeches: Vec<Speech> = Vec::new();
        let mut next_order = || {
            order += 1;
            order
        };
        let make = |order: u32, debater: &str, party: Option<&str>, text: String, label: &str, is_mod: bool| Speech {
            minute_id: minute_id.clone(),
            date,
            order,
            debater: debater.to_owned(),
            party: party.map(str::to_owned),
            text,
            agenda_item: label.to_owned(),
            is_moderator: is_mod,
        };

        let label = config.agenda_label.as_str();
        let mut starts = Vec::new();
        let mut topics = Vec::new();
        let opening = b.rng.random::<f64>() < config.opening_prob;
        for block in 0..config.blocks_per_item {
            let topic = b.rng.random_range(0..config.n_topics);
            topics.push(topic);
            let turns = geometric(&mut b.rng, config.mean_block_length);
            let mut speaker = b.rng.random_range(0..b.debaters.len());
            if block > 0 || opening {
                starts.push(speeches.len());
                let text = b.moderator_text(true, Some(speaker), topic);
                let s = make(next_order(), &chair, None, text, label, true);
                truth.labels.insert(s.key(), 1);
                speeches.push(s);
            } else {
                starts.push(0);
            }
            for t in 0..turns {
                let d = &b.debaters[speaker];
                let (id, party) = (d.id.clone(), d.party.clone());
                let text = b.debater_text(topic);
                speeches.push(make(next_order(), &id, Some(&party), text, label, false));
                if t + 1 < turns {
                    speaker = b.rng.random_range(0..b.debaters.len());
                    let text = b.moderator_text(false, Some(speaker), topic);
                    let s = make(next_order(), &chair, None, text, label, true);
                    truth.labels.insert(s.key(), 0);
                    speeches.push(s);
                }
            }
        }
        let n_target = speeches.len();
        let blocks: Vec<SpeechBlock> = starts
            .iter()
            .enumerate()
            .map(|(i, &s)| SpeechBlock::new(s, starts.get(i + 1).map_or(n_target, |&n| n) - 1))
            .collect();
        let key = AgendaKey::new(minute_id.clone(), label);
        truth.blocks.insert(key.clone(), blocks);
        truth.block_topics.insert(key, topics);

        let mut items = vec![AgendaItem {
            minute_id: minute_id.clone(),
            label: label.to_owned(),
            speeches,
        }];
        for extra in &config.extra_agenda_items {
            let mut extra_speeches = Vec::new();
            for (i, line) in OTHER_ITEM_LINES.iter().enumerate() {
                if i == 1 {
                    let d = b.rng.random_range(0..b.debaters.len());
                    let d = &b.debaters[d];
                    extra_speeches.push(make(
                        next_order(),
                        &d.id.clone(),
                        Some(&d.party.clone()),
                        "Peço a palavra para uma interpelação à mesa.".to_owned(),
                        extra,
                        false,
                    ));
                }
                extra_speeches.push(make(next_order(), &chair, None, (*line).to_owned(), extra, true));
            }
            items.push(AgendaItem {
                minute_id: minute_id.clone(),
                label: extra.clone(),
                speeches: extra_speeches,
            });
        }
        minutes.push(Minute {
            minute_id,
            date,
            agenda_items: items,
        });
    }
    Ok((Corpus::new(minutes), truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_transcripts, Format};

    fn bytes(config: &SynthConfig) -> Vec<u8> {
        let (c, _) = generate_synthetic(config).unwrap();
        let mut buf = Vec::new();
        write_transcripts(&c, &mut buf, Format::Jsonl).unwrap();
        buf
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = SynthConfig::default();
        assert_eq!(bytes(&cfg), bytes(&cfg));
        let other = SynthConfig { seed: 8, ..cfg.clone() };
        assert_ne!(bytes(&cfg), bytes(&other));
    }

    #[test]
    fn noiseless_boundaries_sit_on_triggers() {
        let cfg = SynthConfig {
            n_minutes: 1,
            mean_block_length: 3.0,
            noise_prob: 0.0,
            ..SynthConfig::default()
        };
        let (corpus, truth) = generate_synthetic(&cfg).unwrap();
        let item = corpus.select_agenda(&cfg.agenda_label)[0];
        let blocks = &truth.blocks[&item.key()];
        for (i, s) in item.speeches.iter().enumerate() {
            let is_trigger = cfg.trigger_lexicon.iter().any(|t| {
                let prefix = t.split("{name}").next().unwrap();
                s.is_moderator && s.text.starts_with(prefix)
            });
            let opens_block = blocks.iter().any(|b| b.start == i) && (i > 0 || is_trigger);
            assert_eq!(is_trigger, opens_block, "speech {i}: {}", s.text);
            if s.is_moderator {
                assert_eq!(truth.labels[&s.key()], u8::from(is_trigger));
            }
        }
    }

    #[test]
    fn table_one_shape() {
        let (corpus, truth) = generate_synthetic(&SynthConfig::default()).unwrap();
        let n = truth.labels.len();
        assert!((500..=700).contains(&n), "moderator speeches: {n}");
        let frac = truth.positive_fraction();
        assert!((frac - 41.0 / 590.0).abs() <= 0.02, "positive fraction {frac}");
        assert_eq!(corpus.moderator_speeches(crate::DEFAULT_AGENDA_LABEL).len(), n);
    }

    #[test]
    fn labels_only_on_moderator_speeches_and_block_counts_match() {
        let (corpus, truth) = generate_synthetic(&SynthConfig { seed: 99, ..Default::default() }).unwrap();
        for s in corpus.speeches() {
            match truth.labels.get(&s.key()) {
                Some(_) => assert!(s.is_moderator),
                None => assert!(!s.is_moderator || s.agenda_item != crate::DEFAULT_AGENDA_LABEL),
            }
        }
        for item in corpus.select_agenda(crate::DEFAULT_AGENDA_LABEL) {
            let positives = item
                .speeches
                .iter()
                .filter(|s| truth.labels.get(&s.key()) == Some(&1))
                .count();
            let first_is_trigger = truth.labels.get(&item.speeches[0].key()) == Some(&1);
            let expected = if first_is_trigger { positives } else { positives + 1 };
            assert_eq!(truth.blocks[&item.key()].len(), expected);
            crate::corpus::check_blocks(&truth.blocks[&item.key()], item.len()).unwrap();
        }
    }

    #[test]
    fn select_agenda_count_matches_config() {
        let cfg = SynthConfig { n_minutes: 10, ..Default::default() };
        let (corpus, _) = generate_synthetic(&cfg).unwrap();
        let items = corpus.select_agenda(&cfg.agenda_label);
        assert_eq!(items.len(), 10);
        assert!(items.windows(2).all(|w| w[0].minute_id < w[1].minute_id));
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig::default();
        let overlapping = SynthConfig {
            continuation_lexicon: vec![base.trigger_lexicon[0].clone()],
            ..base.clone()
        };
        assert!(generate_synthetic(&overlapping).is_err());
        assert!(generate_synthetic(&SynthConfig { noise_prob: 0.5, ..base.clone() }).is_err());
        assert!(generate_synthetic(&SynthConfig { mean_block_length: 0.5, ..base.clone() }).is_err());
        assert!(generate_synthetic(&SynthConfig { moderator_ids: vec![], ..base }).is_err());
    }

    #[test]
    fn swap_keeps_punctuation() {
        let mut r = rng::seeded(1);
        let out = swap_content_word(&mut r, "Tem a palavra, Sr.", "xyzw");
        assert!(out.contains("xyzw"));
        assert_eq!(out.split(' ').count(), 4);
    }
}
