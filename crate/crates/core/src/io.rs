//! File formats shared by the pipeline stages.
//!
//! CSV outputs may start with `#`-prefixed provenance lines; readers skip them.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, CovariateVocabulary, DesignRow, SparseRow};

/// Writes `# <json>` as the first line of a CSV stream.
pub fn write_provenance<W: Write>(out: &mut W, provenance: &Value) -> Result<()> {
    writeln!(out, "# {provenance}")?;
    Ok(())
}

pub fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(input)
}

/// Dense CSV: `player_id,match_id,response,<kind>:<name>...`.
pub fn write_design_csv<W: Write>(
    mut out: W,
    rows: &[DesignRow],
    vocab: &CovariateVocabulary,
    provenance: &Value,
) -> Result<()> {
    write_provenance(&mut out, provenance)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "player_id".to_string(),
        "match_id".into(),
        "response".into(),
    ];
    header.extend(
        vocab
            .labels()
            .into_iter()
            .map(|l| format!("{}:{}", l.kind.as_str(), l.name)),
    );
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![
            row.player_id.clone(),
            row.match_id.clone(),
            format!("{}", row.response),
        ];
        rec.extend(row.covariates.to_dense().iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_design_csv<R: Read>(input: R) -> Result<Vec<DesignRow>> {
    let mut r = csv_reader(input);
    let width = r.headers()?.len().checked_sub(3).ok_or_else(|| {
        Error::invalid("design CSV needs player_id, match_id and response columns")
    })?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Malformed {
                line: i + 2,
                message: format!("`{s}`: {e}"),
            })
        };
        let dense: Vec<f64> = rec.iter().skip(3).map(num).collect::<Result<_>>()?;
        if dense.len() != width {
            return Err(Error::WidthMismatch {
                expected: width,
                got: dense.len(),
            });
        }
        rows.push(DesignRow {
            player_id: rec[0].to_string(),
            match_id: rec[1].to_string(),
            response: num(&rec[2])?,
            covariates: SparseRow::from_dense(&dense),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEntry {
    pub index: usize,
    pub kind: ColumnKind,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyFile {
    pub roles: Vec<String>,
    pub game_types: Vec<String>,
    pub maps: Vec<String>,
    pub total_width: usize,
    pub columns: Vec<ColumnEntry>,
    #[serde(default)]
    pub provenance: Value,
}

impl VocabularyFile {
    pub fn new(vocab: &CovariateVocabulary, provenance: Value) -> Self {
        VocabularyFile {
            roles: vocab.roles.clone(),
            game_types: vocab.game_types.clone(),
            maps: vocab.maps.clone(),
            total_width: vocab.total_width(),
            columns: vocab
                .labels()
                .into_iter()
                .enumerate()
                .map(|(index, l)| ColumnEntry {
                    index,
                    kind: l.kind,
                    name: l.name,
                })
                .collect(),
            provenance,
        }
    }

    pub fn vocabulary(&self) -> Result<CovariateVocabulary> {
        let vocab = CovariateVocabulary::new(
            self.roles.clone(),
            self.game_types.clone(),
            self.maps.clone(),
        );
        if vocab.roles.len() != self.roles.len()
            || vocab.game_types.len() != self.game_types.len()
            || vocab.maps.len() != self.maps.len()
        {
            return Err(Error::invalid("vocabulary file contains duplicate names"));
        }
        Ok(vocab)
    }
}
