//! Reading and writing transcripts, labels and partitions.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AgendaItem, AgendaKey, Corpus, CorpusError, Minute, Speech, SpeechBlock, SpeechKey};
use crate::partition::PartitionResult;

/// On-disk transcript layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension (`.csv` → CSV, anything else JSONL).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown transcript format `{other}`")),
        }
    }
}

const FIELDS: [&str; 8] = [
    "minute_id",
    "date",
    "order",
    "debater",
    "party",
    "text",
    "agenda_item",
    "is_moderator",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads and groups a transcript file into a [`Corpus`].
pub fn load_corpus(path: &Path, format: Format) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let speeches = read_transcripts(BufReader::new(file), format)?;
    group_speeches(speeches)
}

/// Parses transcript records without grouping them.
pub fn read_transcripts<R: Read>(reader: R, format: Format) -> Result<Vec<Speech>, CorpusError> {
    match format {
        Format::Jsonl => read_jsonl(BufReader::new(reader)),
        Format::Csv => read_csv(reader),
    }
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Speech>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let record = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: format!("<line {record}>"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Json { line: record, source })?;
        let obj = value.as_object().ok_or_else(|| CorpusError::BadField {
            record,
            field: "<record>".into(),
            reason: "expected a JSON object".into(),
        })?;
        let get = |field: &str| obj.get(field).filter(|v| !v.is_null());
        let string = |field: &str| -> Result<String, CorpusError> {
            match get(field) {
                None => Err(missing(record, field)),
                Some(Value::String(s)) => Ok(s.clone()),
                Some(other) => Err(bad(record, field, format!("expected string, got {other}"))),
            }
        };
        let order = match get("order") {
            None => return Err(missing(record, "order")),
            Some(v) => v
                .as_u64()
                .and_then(|o| u32::try_from(o).ok())
                .ok_or_else(|| bad(record, "order", format!("expected non-negative integer, got {v}")))?,
        };
        let is_moderator = match get("is_moderator") {
            None => return Err(missing(record, "is_moderator")),
            Some(Value::Bool(b)) => *b,
            Some(other) => return Err(bad(record, "is_moderator", format!("expected boolean, got {other}"))),
        };
        let party = match get("party") {
            None => None,
            Some(Value::String(s)) if s.is_empty() => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => return Err(bad(record, "party", format!("expected string, got {other}"))),
        };
        out.push(build_speech(
            record,
            string("minute_id")?,
            &string("date")?,
            order,
            string("debater")?,
            party,
            string("text")?,
            string("agenda_item")?,
            is_moderator,
        )?);
    }
    Ok(out)
}

fn read_csv<R: Read>(reader: R) -> Result<Vec<Speech>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let cols: Vec<Option<usize>> = FIELDS.iter().map(|f| column(f)).collect();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let record = i + 1;
        let row = row?;
        let field = |idx: usize| -> Result<&str, CorpusError> {
            cols[idx]
                .and_then(|c| row.get(c))
                .ok_or_else(|| missing(record, FIELDS[idx]))
        };
        let order = field(2)?
            .trim()
            .parse::<u32>()
            .map_err(|e| bad(record, "order", e.to_string()))?;
        let is_moderator = match field(7)?.trim().to_ascii_lowercase().as_str() {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(bad(record, "is_moderator", format!("expected boolean, got `{other}`"))),
        };
        let party = cols[4]
            .and_then(|c| row.get(c))
            .filter(|p| !p.is_empty())
            .map(str::to_owned);
        let required = |idx: usize| -> Result<String, CorpusError> {
            let v = field(idx)?;
            if v.is_empty() && idx != 5 {
                Err(missing(record, FIELDS[idx]))
            } else {
                Ok(v.to_owned())
            }
        };
        out.push(build_speech(
            record,
            required(0)?,
            field(1)?,
            order,
            required(3)?,
            party,
            field(5)?.to_owned(),
            required(6)?,
            is_moderator,
        )?);
    }
    Ok(out)
}

fn missing(record: usize, field: &str) -> CorpusError {
    CorpusError::MissingField {
        record,
        field: field.to_owned(),
    }
}

fn bad(record: usize, field: &str, reason: String) -> CorpusError {
    CorpusError::BadField {
        record,
        field: field.to_owned(),
        reason,
    }
}

#[allow(clippy::too_many_arguments)]
fn build_speech(
    record: usize,
    minute_id: String,
    date: &str,
    order: u32,
    debater: String,
    party: Option<String>,
    text: String,
    agenda_item: String,
    is_moderator: bool,
) -> Result<Speech, CorpusError> {
    let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
        .map_err(|e| bad(record, "date", format!("`{date}` is not an ISO-8601 date: {e}")))?;
    if text.trim().is_empty() {
        return Err(CorpusError::EmptyText(record));
    }
    if agenda_item.is_empty() {
        return Err(missing(record, "agenda_item"));
    }
    Ok(Speech {
        minute_id,
        date,
        order,
        debater,
        party,
        text,
        agenda_item,
        is_moderator,
    })
}

/// Groups speeches by minute then agenda item.
///
/// Minutes are ordered by (date, id); agenda items by their first speaking order.
pub fn group_speeches(speeches: Vec<Speech>) -> Result<Corpus, CorpusError> {
    let mut by_minute: BTreeMap<String, (NaiveDate, Vec<Speech>)> = BTreeMap::new();
    let mut seen: HashSet<(String, u32)> = HashSet::new();
    for s in speeches {
        if !seen.insert((s.minute_id.clone(), s.order)) {
            return Err(CorpusError::DuplicateOrder {
                minute_id: s.minute_id,
                order: s.order,
            });
        }
        let entry = by_minute
            .entry(s.minute_id.clone())
            .or_insert_with(|| (s.date, Vec::new()));
        if entry.0 != s.date {
            return Err(CorpusError::InconsistentDate {
                minute_id: s.minute_id,
                first: entry.0,
                second: s.date,
            });
        }
        entry.1.push(s);
    }
    let mut minutes: Vec<Minute> = by_minute
        .into_iter()
        .map(|(minute_id, (date, mut speeches))| {
            speeches.sort_by_key(|s| s.order);
            let mut items: Vec<AgendaItem> = Vec::new();
            for s in speeches {
                match items.iter_mut().find(|a| a.label == s.agenda_item) {
                    Some(item) => item.speeches.push(s),
                    None => items.push(AgendaItem {
                        minute_id: minute_id.clone(),
                        label: s.agenda_item.clone(),
                        speeches: vec![s],
                    }),
                }
            }
            Minute {
                minute_id,
                date,
                agenda_items: items,
            }
        })
        .collect();
    minutes.sort_by(|a, b| (a.date, &a.minute_id).cmp(&(b.date, &b.minute_id)));
    Ok(Corpus::new(minutes))
}

/// Writes every speech of `corpus` in the requested format.
pub fn write_transcripts<W: Write>(corpus: &Corpus, writer: W, format: Format) -> Result<(), CorpusError> {
    match format {
        Format::Jsonl => {
            let mut w = BufWriter::new(writer);
            for s in corpus.speeches() {
                let line = serde_json::to_string(s).map_err(|source| CorpusError::Json { line: 0, source })?;
                writeln!(w, "{line}").map_err(|source| CorpusError::Io {
                    path: "<writer>".into(),
                    source,
                })?;
            }
            w.flush().map_err(|source| CorpusError::Io {
                path: "<writer>".into(),
                source,
            })
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            w.write_record(FIELDS)?;
            for s in corpus.speeches() {
                let order = s.order.to_string();
                let date = s.date.format("%Y-%m-%d").to_string();
                w.write_record([
                    s.minute_id.as_str(),
                    date.as_str(),
                    order.as_str(),
                    s.debater.as_str(),
                    s.party.as_deref().unwrap_or(""),
                    s.text.as_str(),
                    s.agenda_item.as_str(),
                    if s.is_moderator { "true" } else { "false" },
                ])?;
            }
            w.flush().map_err(|source| CorpusError::Io {
                path: "<writer>".into(),
                source,
            })
        }
    }
}

/// Writes `minute_id,order,label` rows.
pub fn write_labels_csv<W: Write>(labels: &BTreeMap<SpeechKey, u8>, writer: W) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["minute_id", "order", "label"])?;
    for (key, label) in labels {
        w.write_record([key.minute_id.clone(), key.order.to_string(), label.to_string()])?;
    }
    w.flush().map_err(|source| CorpusError::Io {
        path: "<writer>".into(),
        source,
    })
}

pub fn read_labels_csv<R: Read>(reader: R) -> Result<BTreeMap<SpeechKey, u8>, CorpusError> {
    #[derive(Deserialize)]
    struct Row {
        minute_id: String,
        order: u32,
        label: String,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<Row>() {
        let row = row?;
        let key = SpeechKey::new(row.minute_id, row.order);
        let label = match row.label.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(CorpusError::BadLabel {
                    key,
                    value: other.to_owned(),
                })
            }
        };
        out.insert(key, label);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct BlocksLine {
    minute_id: String,
    agenda_item: String,
    blocks: Vec<SpeechBlock>,
}

/// One line per stored partition: `{"minute_id","agenda_item","blocks":[[s,e],..]}`.
pub fn write_blocks_jsonl<W: Write>(
    blocks: &BTreeMap<AgendaKey, PartitionResult>,
    writer: W,
) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(writer);
    for (key, part) in blocks {
        let line = BlocksLine {
            minute_id: key.minute_id.clone(),
            agenda_item: key.agenda_item.clone(),
            blocks: part.blocks.clone(),
        };
        let json = serde_json::to_string(&line).map_err(|source| CorpusError::Json { line: 0, source })?;
        writeln!(w, "{json}").map_err(|source| CorpusError::Io {
            path: "<writer>".into(),
            source,
        })?;
    }
    w.flush().map_err(|source| CorpusError::Io {
        path: "<writer>".into(),
        source,
    })
}

/// Reads a blocks file. Classifier fingerprints and decisions are not part of
/// the format and come back empty.
pub fn read_blocks_jsonl<R: Read>(reader: R) -> Result<BTreeMap<AgendaKey, PartitionResult>, CorpusError> {
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: format!("<line {}>", i + 1),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: BlocksLine =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?;
        let agenda = AgendaKey::new(parsed.minute_id, parsed.agenda_item);
        out.insert(
            agenda.clone(),
            PartitionResult {
                agenda,
                blocks: parsed.blocks,
                classifier_fingerprint: String::new(),
                decisions: Vec::new(),
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = r#"{"minute_id":"m1","date":"2020-09-16","order":2,"debater":"d1","party":"PS","text":"Obrigado.","agenda_item":"political statements","is_moderator":false}
{"minute_id":"m1","date":"2020-09-16","order":1,"debater":"chair","party":null,"text":"Tem a palavra.","agenda_item":"political statements","is_moderator":true}
{"minute_id":"m1","date":"2020-09-16","order":3,"debater":"chair","party":null,"text":"Segue-se outro tema.","agenda_item":"political statements","is_moderator":true}
"#;

    #[test]
    fn groups_three_records() {
        let speeches = read_transcripts(THREE.as_bytes(), Format::Jsonl).unwrap();
        let c = group_speeches(speeches).unwrap();
        assert_eq!(c.minutes.len(), 1);
        assert_eq!(c.minutes[0].agenda_items.len(), 1);
        let orders: Vec<u32> = c.speeches().map(|s| s.order).collect();
        assert_eq!(orders, vec![1, 2, 3]);
        assert_eq!(c.minutes[0].agenda_items[0].speeches[0].party, None);
    }

    #[test]
    fn missing_debater_is_reported() {
        let line = r#"{"minute_id":"m1","date":"2020-09-16","order":1,"party":null,"text":"x","agenda_item":"a","is_moderator":true}"#;
        let err = read_transcripts(line.as_bytes(), Format::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { record: 1, ref field } if field == "debater"));
    }

    #[test]
    fn duplicate_order_is_reported() {
        let dup = THREE.replace("\"order\":3", "\"order\":2");
        let speeches = read_transcripts(dup.as_bytes(), Format::Jsonl).unwrap();
        let err = group_speeches(speeches).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateOrder { order: 2, .. }));
    }

    #[test]
    fn empty_text_and_bad_date_are_errors() {
        let blank = THREE.replace("\"Obrigado.\"", "\"   \"");
        assert!(matches!(
            read_transcripts(blank.as_bytes(), Format::Jsonl),
            Err(CorpusError::EmptyText(1))
        ));
        let bad_date = THREE.replacen("2020-09-16", "16/09/2020", 1);
        assert!(matches!(
            read_transcripts(bad_date.as_bytes(), Format::Jsonl),
            Err(CorpusError::BadField { ref field, .. }) if field == "date"
        ));
    }

    #[test]
    fn csv_and_jsonl_agree() {
        let c = group_speeches(read_transcripts(THREE.as_bytes(), Format::Jsonl).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_transcripts(&c, &mut buf, Format::Csv).unwrap();
        let back = group_speeches(read_transcripts(&buf[..], Format::Csv).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn csv_missing_column() {
        let csv = "minute_id,date,order,party,text,agenda_item,is_moderator\nm1,2020-09-16,1,,hi,a,true\n";
        assert!(matches!(
            read_transcripts(csv.as_bytes(), Format::Csv),
            Err(CorpusError::MissingField { ref field, .. }) if field == "debater"
        ));
    }

    #[test]
    fn labels_round_trip_and_reject_non_binary() {
        let mut labels = BTreeMap::new();
        labels.insert(SpeechKey::new("m1", 1), 1);
        labels.insert(SpeechKey::new("m1", 3), 0);
        let mut buf = Vec::new();
        write_labels_csv(&labels, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("minute_id,order,label\n"));
        assert_eq!(read_labels_csv(&buf[..]).unwrap(), labels);
        assert!(read_labels_csv("minute_id,order,label\nm1,1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn blocks_line_format() {
        let mut store = BTreeMap::new();
        let agenda = AgendaKey::new("m1", "political statements");
        store.insert(
            agenda.clone(),
            PartitionResult {
                agenda,
                blocks: vec![SpeechBlock::new(0, 2), SpeechBlock::new(3, 5)],
                classifier_fingerprint: "f".into(),
                decisions: vec![],
            },
        );
        let mut buf = Vec::new();
        write_blocks_jsonl(&store, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"minute_id\":\"m1\",\"agenda_item\":\"political statements\",\"blocks\":[[0,2],[3,5]]}\n"
        );
        let back = read_blocks_jsonl(&buf[..]).unwrap();
        assert_eq!(back.values().next().unwrap().blocks, store.values().next().unwrap().blocks);
    }
}
