use std::io::{BufRead, Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{sparsity, InvertedFile, OwnerKind, SparseVector};
use crate::{Error, Result};

/// Tolerance on the unit-norm invariant of a normalized dataset.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// A set of sparse object vectors over a `dim`-term vocabulary, with per-term
/// document frequencies `(no)_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    vectors: Vec<SparseVector>,
    dim: usize,
    doc_freq: Vec<u64>,
    normalized: bool,
}

impl Dataset {
    pub fn new(vectors: Vec<SparseVector>, dim: usize) -> Result<Self> {
        let mut doc_freq = vec![0u64; dim];
        for (i, v) in vectors.iter().enumerate() {
            for &t in v.terms() {
                if t as usize > dim {
                    return Err(Error::domain(format!(
                        "object {} holds term {t} beyond dimension {dim}",
                        i + 1
                    )));
                }
                doc_freq[t as usize - 1] += 1;
            }
        }
        Ok(Self {
            vectors,
            dim,
            doc_freq,
            normalized: false,
        })
    }

    /// Like [`new`](Self::new) but requires every vector to have unit L2 norm.
    pub fn new_normalized(vectors: Vec<SparseVector>, dim: usize) -> Result<Self> {
        for (i, v) in vectors.iter().enumerate() {
            let n = v.norm();
            if (n - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::domain(format!(
                    "object {} has norm {n}, expected 1",
                    i + 1
                )));
            }
        }
        let mut ds = Self::new(vectors, dim)?;
        ds.normalized = true;
        Ok(ds)
    }

    /// L2-normalizes every vector. Zero vectors are an error.
    pub fn normalize(vectors: Vec<SparseVector>, dim: usize) -> Result<Self> {
        let vectors = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.normalized()
                    .ok_or_else(|| Error::domain(format!("object {} is the zero vector", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new_normalized(vectors, dim)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn vectors(&self) -> &[SparseVector] {
        &self.vectors
    }

    #[inline]
    pub fn vector(&self, i: usize) -> &SparseVector {
        &self.vectors[i]
    }

    /// `(no)_p` for `p = 1..=dim` at index `p - 1`.
    pub fn doc_freq(&self) -> &[u64] {
        &self.doc_freq
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `Σ (nt)_i`.
    pub fn sum_nnz(&self) -> u64 {
        self.vectors.iter().map(|v| v.nnz() as u64).sum()
    }

    pub fn avg_nnz(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.sum_nnz() as f64 / self.len() as f64
        }
    }

    /// Mean of per-vector sparsities.
    pub fn avg_sparsity(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::domain("average sparsity of an empty dataset"));
        }
        let mut total = 0.0;
        for v in &self.vectors {
            total += sparsity(v, self.dim)?;
        }
        Ok(total / self.len() as f64)
    }

    pub fn inverted(&self) -> InvertedFile {
        InvertedFile::build(&self.vectors, self.dim, OwnerKind::Objects)
            .expect("dataset terms are within dim")
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            n: self.len(),
            d: self.dim,
            sum_nnz: self.sum_nnz(),
            avg_nnz: self.avg_nnz(),
            avg_sparsity: self.avg_sparsity().unwrap_or(0.0),
        }
    }

    /// Writes `doc_id,term_id,value` rows (with a header line), 1-based ids.
    pub fn write_native_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["doc_id", "term_id", "value"])?;
        for (i, v) in self.vectors.iter().enumerate() {
            for (t, x) in v.iter() {
                // `{:?}` on f64 prints the shortest round-tripping form
                w.write_record([(i + 1).to_string(), t.to_string(), format!("{x:?}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the native `doc_id,term_id,value` format. Doc ids must cover
    /// `1..=N` without gaps; `dim` defaults to the largest term id seen.
    /// Vectors are taken as stored (no reweighting); when every vector already
    /// has unit norm the dataset is flagged normalized.
    pub fn read_native_csv<R: Read>(reader: R, dim: Option<usize>) -> Result<Self> {
        let docs = read_value_rows(reader)?;
        let max_term = docs
            .iter()
            .filter_map(|d| d.max_term())
            .max()
            .unwrap_or(0) as usize;
        let dim = match dim {
            Some(d) if d < max_term => {
                return Err(Error::domain(format!(
                    "declared dimension {d} is below max term id {max_term}"
                )))
            }
            Some(d) => d,
            None => max_term,
        };
        let all_unit = docs
            .iter()
            .all(|v| (v.norm() - 1.0).abs() <= NORM_TOLERANCE);
        if all_unit && !docs.is_empty() {
            Self::new_normalized(docs, dim)
        } else {
            Self::new(docs, dim)
        }
    }
}

/// Sidecar statistics written next to an ingested dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct DatasetSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub sum_nnz: u64,
    pub avg_nnz: f64,
    pub avg_sparsity: f64,
}

#[derive(Debug, Deserialize)]
struct ValueRow {
    doc_id: u32,
    term_id: u32,
    value: f64,
}

/// Parses `doc_id,term_id,value` rows into one vector per document.
pub fn read_value_rows<R: Read>(reader: R) -> Result<Vec<SparseVector>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<(u32, u32, f64, usize)> = Vec::new();
    for (idx, rec) in rdr.deserialize::<ValueRow>().enumerate() {
        // header is line 1
        let line = idx + 2;
        let row = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        if row.doc_id == 0 || row.term_id == 0 {
            return Err(Error::parse(line, "ids are 1-based"));
        }
        if !row.value.is_finite() || row.value == 0.0 {
            return Err(Error::parse(line, format!("bad value {}", row.value)));
        }
        rows.push((row.doc_id, row.term_id, row.value, line));
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut docs: Vec<Vec<(u32, f64)>> = Vec::new();
    for (h, &(doc, term, value, line)) in rows.iter().enumerate() {
        if h > 0 && rows[h - 1].0 == doc && rows[h - 1].1 == term {
            return Err(Error::parse(line, format!("duplicate (doc {doc}, term {term})")));
        }
        let doc = doc as usize;
        if doc > docs.len() + 1 {
            return Err(Error::parse(
                line,
                format!("doc ids must be contiguous; doc {} has no rows", docs.len() + 1),
            ));
        }
        if doc == docs.len() + 1 {
            docs.push(Vec::new());
        }
        docs[doc - 1].push((term, value));
    }
    docs.into_iter()
        .map(SparseVector::from_entries)
        .collect()
}

/// Raw term counts from a UCI bag-of-words file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawCounts {
    pub n_docs: usize,
    pub dim: usize,
    /// `(doc, term, count)`, 1-based, sorted by doc then term.
    pub triples: Vec<(u32, u32, u32)>,
}

/// The three header values of a UCI bag-of-words file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct UciHeader {
    #[serde(rename = "N")]
    pub n_docs: usize,
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "NNZ")]
    pub nnz: usize,
}

fn next_header_value<I>(lines: &mut I, line_no: &mut usize, name: &str) -> Result<usize>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let line = match lines.next() {
        Some(l) => l?,
        None if *line_no == 0 => return Err(Error::EmptyInput),
        None => return Err(Error::parse(*line_no + 1, format!("missing {name} header"))),
    };
    *line_no += 1;
    line.trim()
        .parse::<usize>()
        .map_err(|_| Error::parse(*line_no, format!("expected {name}, got {:?}", line.trim())))
}

fn read_header<I>(lines: &mut I, line_no: &mut usize) -> Result<UciHeader>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let n_docs = next_header_value(lines, line_no, "N")?;
    let dim = next_header_value(lines, line_no, "D")?;
    let nnz = next_header_value(lines, line_no, "NNZ")?;
    Ok(UciHeader { n_docs, dim, nnz })
}

/// Reads only the three header lines.
pub fn parse_uci_header<R: BufRead>(reader: R) -> Result<UciHeader> {
    let mut lines = reader.lines();
    let mut line_no = 0;
    read_header(&mut lines, &mut line_no)
}

/// Parses a UCI bag-of-words `docword` stream: three header lines `N`, `D`,
/// `NNZ`, then `doc term count` triples.
pub fn parse_uci_bow<R: BufRead>(reader: R) -> Result<RawCounts> {
    let mut lines = reader.lines();
    let mut line_no = 0;
    let header = read_header(&mut lines, &mut line_no)?;
    let mut triples: Vec<(u32, u32, u32, usize)> = Vec::with_capacity(header.nnz);
    for line in lines {
        let line = line?;
        line_no += 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let mut fields = text.split_whitespace();
        let mut field = |name: &str| -> Result<u32> {
            let f = fields
                .next()
                .ok_or_else(|| Error::parse(line_no, format!("missing {name}")))?;
            f.parse::<u32>()
                .map_err(|_| Error::parse(line_no, format!("bad {name} {f:?}")))
        };
        let (doc, term, count) = (field("doc id")?, field("term id")?, field("count")?);
        if fields.next().is_some() {
            return Err(Error::parse(line_no, "expected exactly three fields"));
        }
        if doc == 0 || doc as usize > header.n_docs {
            return Err(Error::parse(
                line_no,
                format!("doc id {doc} outside 1..={}", header.n_docs),
            ));
        }
        if term == 0 || term as usize > header.dim {
            return Err(Error::parse(
                line_no,
                format!("term id {term} outside 1..={}", header.dim),
            ));
        }
        if count == 0 {
            return Err(Error::parse(line_no, "zero count"));
        }
        triples.push((doc, term, count, line_no));
    }
    if triples.len() != header.nnz {
        return Err(Error::parse(
            line_no,
            format!("header declares {} entries, found {}", header.nnz, triples.len()),
        ));
    }
    triples.sort_by_key(|t| (t.0, t.1, t.3));
    for w in triples.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
            return Err(Error::parse(
                w[1].3,
                format!("duplicate (doc {}, term {})", w[1].0, w[1].1),
            ));
        }
    }
    Ok(RawCounts {
        n_docs: header.n_docs,
        dim: header.dim,
        triples: triples.into_iter().map(|(d, t, c, _)| (d, t, c)).collect(),
    })
}

/// Result of tf-idf weighting: the normalized dataset plus the original ids
/// of the surviving and dropped documents.
#[derive(Clone, Debug)]
pub struct TfIdf {
    pub dataset: Dataset,
    /// Original 1-based doc id of each surviving vector.
    pub doc_ids: Vec<u32>,
    /// Original ids of documents whose weighted vector was all zero.
    pub dropped: Vec<u32>,
}

/// `count × ln(N / df)` weighting followed by L2 normalization. Terms present
/// in every document get weight zero and vanish; documents left empty are
/// dropped.
pub fn tfidf_normalize(raw: &RawCounts) -> Result<TfIdf> {
    if raw.n_docs == 0 {
        return Err(Error::domain("tf-idf needs at least one document"));
    }
    let mut df = vec![0u64; raw.dim];
    for &(_, t, _) in &raw.triples {
        df[t as usize - 1] += 1;
    }
    let n = raw.n_docs as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&f| if f == 0 { 0.0 } else { (n / f as f64).ln() })
        .collect();

    let mut per_doc: Vec<Vec<(u32, f64)>> = vec![Vec::new(); raw.n_docs];
    for &(d, t, c) in &raw.triples {
        let w = c as f64 * idf[t as usize - 1];
        if w != 0.0 {
            per_doc[d as usize - 1].push((t, w));
        }
    }

    let mut vectors = Vec::with_capacity(raw.n_docs);
    let mut doc_ids = Vec::with_capacity(raw.n_docs);
    let mut dropped = Vec::new();
    for (d, entries) in per_doc.into_iter().enumerate() {
        let v = SparseVector::from_entries(entries)?;
        match v.normalized() {
            Some(u) => {
                vectors.push(u);
                doc_ids.push(d as u32 + 1);
            }
            None => dropped.push(d as u32 + 1),
        }
    }
    if !dropped.is_empty() {
        warn!(
            "dropped {} of {} documents with all-zero tf-idf vectors",
            dropped.len(),
            raw.n_docs
        );
    }
    let mut dataset = Dataset::new(vectors, raw.dim)?;
    dataset.normalized = true;
    Ok(TfIdf {
        dataset,
        doc_ids,
        dropped,
    })
}
