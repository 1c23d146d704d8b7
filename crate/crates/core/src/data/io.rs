//! Transaction log files.
//!
//! JSONL (canonical): one object per line,
//! `{"sender": "A", "recipients": ["B", "D"], "id": "optional"}`.
//! An optional first line `{"nodes": ["A", "B", ...]}` fixes the node order
//! and declares nodes that never appear in a transaction.
//!
//! CSV: header `sender,recipients`, recipients joined with `;`. An optional
//! first line `# nodes: A;B;...` plays the same role as the JSONL node line.
//!
//! Without a node declaration, names are indexed in order of first appearance.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TmmsbError};
use crate::model::{Transaction, TransactionLog};

const CSV_NODES_PREFIX: &str = "# nodes:";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for LogFormat {
    type Err = TmmsbError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            _ => Err(TmmsbError::UnknownFormat(s.to_string())),
        }
    }
}

impl LogFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .parse()
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum JsonLine {
    Nodes {
        nodes: Vec<String>,
    },
    Transaction {
        sender: String,
        recipients: Vec<String>,
        #[allow(dead_code)]
        #[serde(default)]
        id: Option<serde_json::Value>,
    },
}

#[derive(Serialize)]
struct JsonTransaction<'a> {
    sender: &'a str,
    recipients: Vec<&'a str>,
}

#[derive(Serialize)]
struct JsonNodes<'a> {
    nodes: &'a [String],
}

#[derive(Default)]
struct NodeIndex {
    names: Vec<String>,
    index: HashMap<String, usize>,
    fixed: bool,
}

impl NodeIndex {
    fn declare(&mut self, names: Vec<String>, line: usize) -> Result<()> {
        if !self.names.is_empty() || self.fixed {
            return Err(TmmsbError::Parse {
                line,
                message: "node declaration must be the first line".into(),
            });
        }
        for (i, name) in names.iter().enumerate() {
            if self.index.insert(name.clone(), i).is_some() {
                return Err(TmmsbError::Parse {
                    line,
                    message: format!("duplicate node `{name}` in declaration"),
                });
            }
        }
        self.names = names;
        self.fixed = true;
        Ok(())
    }

    fn get(&mut self, name: &str, line: usize) -> Result<usize> {
        if let Some(&i) = self.index.get(name) {
            return Ok(i);
        }
        if self.fixed {
            return Err(TmmsbError::Parse {
                line,
                message: format!("node `{name}` is not in the node declaration"),
            });
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        Ok(i)
    }

    fn transaction(
        &mut self,
        sender: &str,
        recipients: &[&str],
        line: usize,
    ) -> Result<Transaction> {
        if recipients.is_empty() {
            return Err(TmmsbError::Parse {
                line,
                message: "empty recipient list".into(),
            });
        }
        if recipients.contains(&sender) {
            return Err(TmmsbError::Parse {
                line,
                message: format!("self-send: `{sender}` lists itself as a recipient"),
            });
        }
        let s = self.get(sender, line)?;
        let rs = recipients
            .iter()
            .map(|r| self.get(r, line))
            .collect::<Result<Vec<_>>>()?;
        Transaction::new(s, rs).map_err(|e| TmmsbError::Parse {
            line,
            message: e.to_string(),
        })
    }

    fn finish(self, transactions: Vec<Transaction>) -> Result<TransactionLog> {
        let m = self.names.len();
        TransactionLog::with_labels(m, transactions, Some(self.names))
    }
}

pub fn load_log(path: impl AsRef<Path>, format: LogFormat) -> Result<TransactionLog> {
    let file = fs::File::open(path)?;
    read_log(BufReader::new(file), format)
}

pub fn read_log<R: Read>(reader: R, format: LogFormat) -> Result<TransactionLog> {
    match format {
        LogFormat::Jsonl => read_jsonl(BufReader::new(reader)),
        LogFormat::Csv => read_csv(reader),
    }
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<TransactionLog> {
    let mut nodes = NodeIndex::default();
    let mut transactions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonLine = serde_json::from_str(&line).map_err(|e| TmmsbError::Parse {
            line: line_no,
            message: format!("malformed record: {e}"),
        })?;
        match parsed {
            JsonLine::Nodes { nodes: names } => nodes.declare(names, line_no)?,
            JsonLine::Transaction {
                sender, recipients, ..
            } => {
                let rs: Vec<&str> = recipients.iter().map(String::as_str).collect();
                transactions.push(nodes.transaction(&sender, &rs, line_no)?);
            }
        }
    }
    finish(nodes, transactions)
}

fn finish(nodes: NodeIndex, transactions: Vec<Transaction>) -> Result<TransactionLog> {
    if nodes.names.len() < 2 {
        return Err(TmmsbError::InsufficientData(format!(
            "log mentions {} node(s); at least 2 are required",
            nodes.names.len()
        )));
    }
    nodes.finish(transactions)
}

fn read_csv<R: Read>(mut reader: R) -> Result<TransactionLog> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut nodes = NodeIndex::default();
    let mut body = text.as_str();
    let mut line_offset = 0;
    if let Some(rest) = body.strip_prefix(CSV_NODES_PREFIX) {
        let (decl, remainder) = rest.split_once('\n').unwrap_or((rest, ""));
        let names = decl
            .trim()
            .split(';')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        nodes.declare(names, 1)?;
        body = remainder;
        line_offset = 1;
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| TmmsbError::Parse {
        line: line_offset + 1,
        message: format!("malformed header: {e}"),
    })?;
    let sender_col = headers.iter().position(|h| h == "sender");
    let recip_col = headers.iter().position(|h| h == "recipients");
    let (Some(sc), Some(rc)) = (sender_col, recip_col) else {
        return Err(TmmsbError::Parse {
            line: line_offset + 1,
            message: "header must contain `sender` and `recipients` columns".into(),
        });
    };
    let mut transactions = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| TmmsbError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize) + line_offset,
            message: format!("malformed row: {e}"),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize) + line_offset;
        let sender = record.get(sc).unwrap_or_default();
        if sender.is_empty() {
            return Err(TmmsbError::Parse {
                line,
                message: "missing sender".into(),
            });
        }
        let recipients: Vec<&str> = record
            .get(rc)
            .unwrap_or_default()
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        transactions.push(nodes.transaction(sender, &recipients, line)?);
    }
    finish(nodes, transactions)
}

fn names(log: &TransactionLog) -> Vec<String> {
    (0..log.num_nodes()).map(|i| log.node_name(i)).collect()
}

pub fn save_log(log: &TransactionLog, path: impl AsRef<Path>, format: LogFormat) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    write_log(log, &mut file, format)?;
    file.flush()?;
    Ok(())
}

/// Writes a log with a leading node declaration so that reading it back
/// reproduces the node indexing exactly.
pub fn write_log<W: Write>(log: &TransactionLog, mut w: W, format: LogFormat) -> Result<()> {
    let names = names(log);
    match format {
        LogFormat::Jsonl => {
            serde_json::to_writer(&mut w, &JsonNodes { nodes: &names })?;
            writeln!(w)?;
            for t in log.transactions() {
                let rec = JsonTransaction {
                    sender: &names[t.sender()],
                    recipients: t.recipients().iter().map(|&r| names[r].as_str()).collect(),
                };
                serde_json::to_writer(&mut w, &rec)?;
                writeln!(w)?;
            }
        }
        LogFormat::Csv => {
            if let Some(bad) = names.iter().find(|n| n.contains(';') || n.contains('\n')) {
                return Err(TmmsbError::InvalidParameter(format!(
                    "node name `{bad}` cannot be written to CSV"
                )));
            }
            writeln!(w, "{CSV_NODES_PREFIX} {}", names.join(";"))?;
            let mut wtr = csv::Writer::from_writer(&mut w);
            wtr.write_record(["sender", "recipients"])
                .map_err(std::io::Error::other)?;
            for t in log.transactions() {
                let rs: Vec<&str> = t.recipients().iter().map(|&r| names[r].as_str()).collect();
                wtr.write_record([names[t.sender()].as_str(), rs.join(";").as_str()])
                    .map_err(std::io::Error::other)?;
            }
            wtr.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_assigns_first_appearance_indices() {
        let text = r#"{"sender":"A","recipients":["B","D"]}
{"sender":"C","recipients":["A"],"id":7}
"#;
        let log = read_log(text.as_bytes(), LogFormat::Jsonl).unwrap();
        assert_eq!(log.num_nodes(), 4);
        assert_eq!(log.transactions()[0].sender(), 0);
        assert_eq!(log.transactions()[0].recipients(), &[1, 2]);
        assert_eq!(log.node_labels().unwrap(), &["A", "B", "D", "C"]);
    }

    #[test]
    fn jsonl_with_declared_nodes() {
        let text = "{\"nodes\":[\"A\",\"B\",\"C\",\"D\"]}\n{\"sender\":\"A\",\"recipients\":[\"B\",\"D\"]}\n";
        let log = read_log(text.as_bytes(), LogFormat::Jsonl).unwrap();
        assert_eq!(log.transactions()[0].recipients(), &[1, 3]);
        assert_eq!(log.num_nodes(), 4);
    }

    #[test]
    fn errors_name_the_line_and_rule() {
        let cases = [
            (
                "{\"sender\":\"A\",\"recipients\":[\"B\"]}\n{\"sender\":\"A\",\"recipients\":[]}\n",
                "line 2: empty recipient",
            ),
            (
                "{\"sender\":\"A\",\"recipients\":[\"A\"]}\n",
                "line 1: self-send",
            ),
            (
                "{\"sender\":\"A\",\"recipients\":[\"B\"]}\nnot json\n",
                "line 2: malformed",
            ),
        ];
        for (text, expected) in cases {
            let err = read_log(text.as_bytes(), LogFormat::Jsonl).unwrap_err();
            assert!(err.to_string().starts_with(expected), "{err}");
        }
    }

    #[test]
    fn undeclared_node_is_rejected() {
        let text = "{\"nodes\":[\"A\",\"B\"]}\n{\"sender\":\"A\",\"recipients\":[\"C\"]}\n";
        let err = read_log(text.as_bytes(), LogFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn csv_reads_semicolon_recipients() {
        let text = "sender,recipients\nA,B;D\nB,A\n";
        let log = read_log(text.as_bytes(), LogFormat::Csv).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.transactions()[0].recipients(), &[1, 2]);
        let bad = "sender,recipients\nA,B\nB,\n";
        let err = read_log(bad.as_bytes(), LogFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("line 3: empty recipient"), "{err}");
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(
            "xml".parse::<LogFormat>(),
            Err(TmmsbError::UnknownFormat(_))
        ));
    }
}
