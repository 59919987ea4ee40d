//! The memory bank: unit-norm rows over training units, exact cosine top-k,
//! mean aggregation, retrieval statistics, and the on-disk format.
//!
//! Rows are quantized to f32 at build time and that quantized form is what
//! the file stores; the in-memory f64 rows are re-derived from it by
//! normalizing, so a bank built in memory and a bank reloaded from disk are
//! bitwise identical.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::provider::{fnv1a, EmbeddingProvider};
use crate::text::Instance;

const BANK_VERSION: u32 = 1;

/// Immutable store of embedded training units.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    d_s: usize,
    seed: u64,
    /// Embeddings exactly as persisted, row-major N×d_s.
    quantized: Vec<f32>,
    /// Unit-norm f64 rows derived from `quantized`, row-major.
    rows: Vec<f64>,
    ids: Vec<String>,
    labels: Vec<u8>,
}

/// Result of a top-k query: bank row indices in rank order with their
/// cosine similarities. `clamped` reports that fewer than k rows were
/// available after exclusion.
#[derive(Debug, Clone)]
pub struct TopK {
    pub indices: Vec<usize>,
    pub similarities: Vec<f64>,
    pub clamped: bool,
}

/// Mean of selected rows. An empty selection yields the zero vector and
/// sets `knowledge_absent`, which downstream treats as "no evidence".
#[derive(Debug, Clone)]
pub struct Aggregated {
    pub vector: Vec<f64>,
    pub knowledge_absent: bool,
}

/// Distribution of retrieval similarity over a query set: the top-1
/// similarity and the mean over the top k, each reported as mean ± std
/// (population) across queries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalStats {
    pub n_queries: usize,
    pub k: usize,
    pub top1_mean: f64,
    pub top1_std: f64,
    pub topk_mean: f64,
    pub topk_std: f64,
}

#[derive(Serialize, Deserialize)]
struct BankHeader {
    n: usize,
    d_s: usize,
    seed: u64,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct BankEntry {
    id: String,
    label: u8,
}

impl MemoryBank {
    /// Embed every training unit and freeze the bank.
    pub fn build(provider: &dyn EmbeddingProvider, train: &[Instance]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset("memory bank input".into()));
        }
        let rows = train.iter().map(|inst| provider.embed(&inst.text)).collect();
        let ids = train.iter().map(|i| i.id.clone()).collect();
        let labels = train.iter().map(|i| i.label).collect();
        Self::from_rows(rows, ids, labels, provider.seed())
    }

    /// Construct from precomputed embeddings (alternate providers, tests).
    /// Rows are quantized to f32 and renormalized; an exactly-zero row is
    /// replaced by a deterministic basis vector keyed on the instance id.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        ids: Vec<String>,
        labels: Vec<u8>,
        seed: u64,
    ) -> Result<Self> {
        assert_eq!(rows.len(), ids.len(), "one id per row");
        assert_eq!(rows.len(), labels.len(), "one label per row");
        let d_s = rows.first().map_or(0, Vec::len);
        if d_s == 0 {
            return Err(Error::EmptyDataset("memory bank input".into()));
        }
        let mut unique = HashSet::new();
        for id in &ids {
            if !unique.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let mut quantized = Vec::with_capacity(rows.len() * d_s);
        for (row, id) in rows.iter().zip(&ids) {
            assert_eq!(row.len(), d_s, "ragged embedding rows");
            let q: Vec<f32> = row.iter().map(|&v| v as f32).collect();
            if q.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt() < 1e-12 {
                log::warn!("row for {id} quantized to zero; substituting basis vector");
                let mut basis = vec![0.0f32; d_s];
                basis[(fnv1a(id.as_bytes()) % d_s as u64) as usize] = 1.0;
                quantized.extend_from_slice(&basis);
            } else {
                quantized.extend_from_slice(&q);
            }
        }
        let derived = derive_rows(&quantized, d_s);
        Ok(MemoryBank {
            d_s,
            seed,
            quantized,
            rows: derived,
            ids,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d_s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        &self.rows[idx * self.d_s..(idx + 1) * self.d_s]
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn label(&self, idx: usize) -> usize {
        usize::from(self.labels[idx])
    }

    /// Exact top-k rows by cosine similarity against an embedded query.
    ///
    /// Ranks descend by similarity with ties broken by ascending instance
    /// id; a row whose id equals `exclude_id` is skipped (the train-time
    /// self-leakage guard). Requests larger than the available rows clamp
    /// and flag rather than fail.
    pub fn topk(&self, query: &[f64], k: usize, exclude_id: Option<&str>) -> Result<TopK> {
        if query.len() != self.d_s {
            return Err(Error::ShapeMismatch {
                op: "topk",
                lhs: vec![query.len()],
                rhs: vec![self.d_s],
            });
        }
        if k == 0 {
            return Err(Error::Config("retrieval k must be at least 1".into()));
        }
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .filter(|&i| exclude_id != Some(self.ids[i].as_str()))
            .map(|i| {
                let s = self
                    .row(i)
                    .iter()
                    .zip(query)
                    .map(|(&m, &q)| m * q)
                    .sum::<f64>();
                (i, s)
            })
            .collect();
        if scored.is_empty() {
            return Err(Error::EmptyDataset(
                "memory bank has no rows after exclusion".into(),
            ));
        }
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.ids[a.0].cmp(&self.ids[b.0]))
        });
        let clamped = k > scored.len();
        if clamped {
            log::warn!(
                "requested top-{k} but only {} rows available; clamping",
                scored.len()
            );
        }
        let take = k.min(scored.len());
        Ok(TopK {
            indices: scored[..take].iter().map(|&(i, _)| i).collect(),
            similarities: scored[..take].iter().map(|&(_, s)| s).collect(),
            clamped,
        })
    }

    /// Embed `text` with `provider` and query. The provider must match the
    /// bank's fingerprint; mixing providers silently would make every
    /// similarity meaningless.
    pub fn retrieve(
        &self,
        provider: &dyn EmbeddingProvider,
        text: &str,
        k: usize,
        exclude_id: Option<&str>,
    ) -> Result<TopK> {
        if provider.seed() != self.seed || provider.dim() != self.d_s {
            return Err(Error::FingerprintMismatch {
                bank_seed: self.seed,
                bank_dim: self.d_s,
                ckpt_seed: provider.seed(),
                ckpt_dim: provider.dim(),
            });
        }
        self.topk(&provider.embed(text), k, exclude_id)
    }

    // ── persistence ─────────────────────────────────────────────────

    /// Write the bank: a JSON header line, the raw little-endian f32 block,
    /// then a JSON array of per-row id/label entries.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        let header = BankHeader {
            n: self.len(),
            d_s: self.d_s,
            seed: self.seed,
            version: BANK_VERSION,
        };
        serde_json::to_writer(&mut f, &header)?;
        f.write_all(b"\n")?;
        let mut block = Vec::with_capacity(self.quantized.len() * 4);
        for &v in &self.quantized {
            block.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&block)?;
        f.write_all(b"\n")?;
        let entries: Vec<BankEntry> = self
            .ids
            .iter()
            .zip(&self.labels)
            .map(|(id, &label)| BankEntry {
                id: id.clone(),
                label,
            })
            .collect();
        serde_json::to_writer(&mut f, &entries)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let header_end = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::BadBankFile("missing header line".into()))?;
        let header: BankHeader = serde_json::from_slice(&bytes[..header_end])
            .map_err(|e| Error::BadBankFile(format!("bad header: {e}")))?;
        if header.version != BANK_VERSION {
            return Err(Error::BadBankFile(format!(
                "unsupported version {}",
                header.version
            )));
        }
        if header.n == 0 || header.d_s == 0 {
            return Err(Error::BadBankFile("empty bank".into()));
        }
        let block_start = header_end + 1;
        let block_len = header.n * header.d_s * 4;
        let block_end = block_start + block_len;
        if bytes.len() < block_end {
            return Err(Error::BadBankFile(format!(
                "embedding block truncated: need {block_len} bytes, have {}",
                bytes.len().saturating_sub(block_start)
            )));
        }
        let quantized: Vec<f32> = bytes[block_start..block_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if quantized.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadBankFile("non-finite embedding value".into()));
        }
        let tail = &bytes[block_end..];
        let tail = tail.strip_prefix(b"\n").unwrap_or(tail);
        let entries: Vec<BankEntry> = serde_json::from_slice(tail)
            .map_err(|e| Error::BadBankFile(format!("bad id/label block: {e}")))?;
        if entries.len() != header.n {
            return Err(Error::BadBankFile(format!(
                "{} entries for {} rows",
                entries.len(),
                header.n
            )));
        }
        let mut unique = HashSet::new();
        for e in &entries {
            if e.label > 1 {
                return Err(Error::BadBankFile(format!(
                    "label {} out of range for {}",
                    e.label, e.id
                )));
            }
            if !unique.insert(e.id.as_str()) {
                return Err(Error::BadBankFile(format!("duplicate id {}", e.id)));
            }
        }
        let rows = derive_rows(&quantized, header.d_s);
        let (ids, labels) = entries.into_iter().map(|e| (e.id, e.label)).unzip();
        Ok(MemoryBank {
            d_s: header.d_s,
            seed: header.seed,
            quantized,
            rows,
            ids,
            labels,
        })
    }
}

/// Normalize the quantized block into f64 unit rows. Shared by build and
/// load so the two paths cannot drift.
fn derive_rows(quantized: &[f32], d_s: usize) -> Vec<f64> {
    let mut rows = Vec::with_capacity(quantized.len());
    for chunk in quantized.chunks_exact(d_s) {
        let as_f64: Vec<f64> = chunk.iter().map(|&v| f64::from(v)).collect();
        let norm = as_f64.iter().map(|v| v * v).sum::<f64>().sqrt();
        debug_assert!(norm > 1e-12, "zero rows are replaced before this point");
        rows.extend(as_f64.iter().map(|v| v / norm));
    }
    rows
}

/// Mean of the selected bank rows (not renormalized).
pub fn aggregate(bank: &MemoryBank, indices: &[usize]) -> Aggregated {
    if indices.is_empty() {
        return Aggregated {
            vector: vec![0.0; bank.dim()],
            knowledge_absent: true,
        };
    }
    debug_assert_eq!(
        indices.iter().collect::<HashSet<_>>().len(),
        indices.len(),
        "aggregate indices must be distinct"
    );
    let mut out = vec![0.0; bank.dim()];
    for &idx in indices {
        for (o, &v) in out.iter_mut().zip(bank.row(idx)) {
            *o += v;
        }
    }
    let n = indices.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Aggregated {
        vector: out,
        knowledge_absent: false,
    }
}

/// Top-1 and mean-top-k similarity distributions over a query set.
pub fn retrieval_stats(
    bank: &MemoryBank,
    provider: &dyn EmbeddingProvider,
    queries: &[String],
    k: usize,
) -> Result<RetrievalStats> {
    if queries.is_empty() {
        return Err(Error::EmptyDataset("retrieval stats query set".into()));
    }
    let mut top1 = Vec::with_capacity(queries.len());
    let mut meank = Vec::with_capacity(queries.len());
    for q in queries {
        let hit = bank.retrieve(provider, q, k, None)?;
        top1.push(hit.similarities[0]);
        meank.push(hit.similarities.iter().sum::<f64>() / hit.similarities.len() as f64);
    }
    let (top1_mean, top1_std) = mean_std(&top1);
    let (topk_mean, topk_std) = mean_std(&meank);
    Ok(RetrievalStats {
        n_queries: queries.len(),
        k,
        top1_mean,
        top1_std,
        topk_mean,
        topk_std,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
