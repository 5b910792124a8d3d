//! Sparse symmetric Dice similarity between vocabulary terms.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::vocabulary::Vocabulary;

pub const DEFAULT_CUTOFF: f64 = 0.05;

const MAGIC: &[u8; 8] = b"CVXSIM\0\0";
const FORMAT_VERSION: u64 = 1;

/// `2·codf / (df_i + df_j)`.
pub fn dice(df_i: u64, df_j: u64, codf: u64) -> Result<f64> {
    if df_i == 0 || df_j == 0 || codf > df_i.min(df_j) {
        return Err(Error::param(format!(
            "dice({df_i}, {df_j}, {codf}): need df >= 1 and codf <= min(df)"
        )));
    }
    Ok(2.0 * codf as f64 / (df_i + df_j) as f64)
}

/// Row-compressed symmetric matrix with a unit diagonal. Absent entries are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSimilarity {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    cutoff: f64,
}

impl SparseSimilarity {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Column ids (ascending) and values of row `i`. Since the matrix is
    /// symmetric this is also column `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn density(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.n as f64 * self.n as f64)
    }

    /// Assembles from per-row `(column, value)` lists, checking every
    /// structural invariant.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, cutoff: f64) -> Result<Self> {
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::param(format!("row {i} repeats column {}", w[0].0)));
                }
            }
            for (j, v) in row {
                if j >= n {
                    return Err(Error::DimensionMismatch { expected: n, got: j + 1 });
                }
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::param(format!("s[{i}][{j}] = {v} outside (0, 1]")));
                }
                cols.push(j as u32);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        let s = SparseSimilarity {
            n,
            offsets,
            cols,
            vals,
            cutoff,
        };
        s.check()?;
        Ok(s)
    }

    /// Dense input; zeros are dropped.
    pub fn from_dense(dense: &[Vec<f64>]) -> Result<Self> {
        let rows = dense
            .iter()
            .map(|r| {
                if r.len() != dense.len() {
                    return Err(Error::DimensionMismatch {
                        expected: dense.len(),
                        got: r.len(),
                    });
                }
                Ok(r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows, 0.0)
    }

    pub fn identity(n: usize) -> Self {
        SparseSimilarity {
            n,
            offsets: (0..=n).collect(),
            cols: (0..n as u32).collect(),
            vals: vec![1.0; n],
            cutoff: 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j as usize] = v;
            }
        }
        out
    }

    /// Symmetry, unit diagonal, sorted duplicate-free rows.
    pub fn check(&self) -> Result<()> {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param(format!("row {i} is not strictly sorted")));
            }
            if self.get(i, i) != 1.0 {
                return Err(Error::param(format!("diagonal entry {i} is not 1")));
            }
            for (&j, &v) in cols.iter().zip(vals) {
                if self.get(j as usize, i).to_bits() != v.to_bits() {
                    return Err(Error::param(format!("entry ({i}, {j}) has no symmetric partner")));
                }
            }
        }
        Ok(())
    }

    /// Binary cache: magic, then `version, n, nnz` as little-endian u64 and
    /// the cutoff as little-endian f64, followed by `n + 1` row offsets and
    /// `nnz` column ids (u64 each) and `nnz` f64 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * (self.n + 1 + 2 * self.nnz()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.nnz() as u64).to_le_bytes());
        out.extend_from_slice(&self.cutoff.to_le_bytes());
        for &o in &self.offsets {
            out.extend_from_slice(&(o as u64).to_le_bytes());
        }
        for &c in &self.cols {
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
        for &v in &self.vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::Malformed {
            record: "similarity cache".into(),
            reason: reason.into(),
        };
        let mut words = bytes
            .get(8..)
            .ok_or_else(|| bad("truncated header"))?
            .chunks_exact(8)
            .map(|c| <[u8; 8]>::try_from(c).expect("chunk of 8"));
        if &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut next = || words.next().ok_or_else(|| bad("truncated"));
        let version = u64::from_le_bytes(next()?);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(next()?) as usize;
        let nnz = u64::from_le_bytes(next()?) as usize;
        let cutoff = f64::from_le_bytes(next()?);
        if bytes.len() != 40 + 8 * (n + 1 + 2 * nnz) {
            return Err(bad("length does not match header"));
        }
        let offsets = (0..=n)
            .map(|_| next().map(|w| u64::from_le_bytes(w) as usize))
            .collect::<Result<Vec<_>>>()?;
        let cols = (0..nnz)
            .map(|_| next().map(|w| u64::from_le_bytes(w) as u32))
            .collect::<Result<Vec<_>>>()?;
        let vals = (0..nnz)
            .map(|_| next().map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        if offsets.first() != Some(&0)
            || offsets.last() != Some(&nnz)
            || offsets.windows(2).any(|w| w[0] > w[1])
            || cols.iter().any(|&c| c as usize >= n)
        {
            return Err(bad("inconsistent row structure"));
        }
        let s = SparseSimilarity {
            n,
            offsets,
            cols,
            vals,
            cutoff,
        };
        s.check()?;
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Dice similarity over posting sets, keeping pairs at or above `cutoff`.
///
/// Co-occurrence counts come from walking each term's postings through the
/// document → terms inverted index; rows are independent, so the result is
/// the same for every thread count.
pub fn build_similarity(vocab: &Vocabulary, cutoff: f64) -> Result<SparseSimilarity> {
    if !(0.0..1.0).contains(&cutoff) {
        return Err(Error::param(format!("cutoff must be in [0, 1), got {cutoff}")));
    }
    let n = vocab.len();
    let mut doc_terms: Vec<Vec<u32>> = vec![Vec::new(); vocab.n_docs];
    for (t, posting) in vocab.postings.iter().enumerate() {
        for &d in posting {
            doc_terms[d as usize].push(t as u32);
        }
    }

    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0u32; n], Vec::<u32>::new()),
            |(counts, touched), i| {
                for &d in &vocab.postings[i] {
                    for &j in &doc_terms[d as usize] {
                        if counts[j as usize] == 0 {
                            touched.push(j);
                        }
                        counts[j as usize] += 1;
                    }
                }
                touched.sort_unstable();
                let df_i = vocab.df[i] as u64;
                let mut row = Vec::with_capacity(touched.len());
                for &j in touched.iter() {
                    let co = std::mem::take(&mut counts[j as usize]) as u64;
                    if j as usize == i {
                        row.push((j, 1.0));
                        continue;
                    }
                    let s = 2.0 * co as f64 / (df_i + vocab.df[j as usize] as u64) as f64;
                    if s >= cutoff {
                        row.push((j, s));
                    }
                }
                touched.clear();
                if row.binary_search_by_key(&(i as u32), |e| e.0).is_err() {
                    // term with an empty posting list
                    let at = row.partition_point(|e| e.0 < i as u32);
                    row.insert(at, (i as u32, 1.0));
                }
                row
            },
        )
        .collect();

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let nnz: usize = rows.iter().map(Vec::len).sum();
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    for row in rows {
        for (j, v) in row {
            cols.push(j);
            vals.push(v);
        }
        offsets.push(cols.len());
    }
    Ok(SparseSimilarity {
        n,
        offsets,
        cols,
        vals,
        cutoff,
    })
}
