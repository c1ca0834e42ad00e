//! Latent sets, their on-disk formats, state-keyed pairing and train-split
//! standardization.
//!
//! A [`LatentSet`] stores `N` latent vectors of dimension `d` as the columns of
//! a `d x N` matrix, each column keyed by an opaque state identifier. Two sets
//! exported from different models are joined by exact identifier match into a
//! [`PairedDataset`], whose train/test split is assigned per state.
//!
//! Standard deviations use the population convention (divide by `N`) and are
//! floored at [`SCALE_FLOOR`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::container::Reader;
use crate::error::{Error, Result};
use crate::seed::unit_hash;

/// Lower bound applied to per-dimension standard deviations.
pub const SCALE_FLOOR: f64 = 1e-8;

const LATENT_MAGIC: &[u8; 4] = b"LTNT";
const LATENT_VERSION: u8 = 0x01;

/// `d x N` matrix of latent vectors with one state identifier per column.
#[derive(Debug, Clone)]
pub struct LatentSet {
    values: DMatrix<f64>,
    state_ids: Vec<String>,
    view_tag: String,
    index: HashMap<String, usize>,
}

impl PartialEq for LatentSet {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
            && self.state_ids == other.state_ids
            && self.view_tag == other.view_tag
    }
}

impl LatentSet {
    pub fn new(
        values: DMatrix<f64>,
        state_ids: Vec<String>,
        view_tag: impl Into<String>,
    ) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "latent set must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if state_ids.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} state ids for {} columns",
                state_ids.len(),
                values.ncols()
            )));
        }
        check_finite(&values)?;
        let mut index = HashMap::with_capacity(state_ids.len());
        for (n, id) in state_ids.iter().enumerate() {
            if index.insert(id.clone(), n).is_some() {
                return Err(Error::DuplicateStateId(id.clone()));
            }
        }
        Ok(Self {
            values,
            state_ids,
            view_tag: view_tag.into(),
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn count(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn state_ids(&self) -> &[String] {
        &self.state_ids
    }

    pub fn view_tag(&self) -> &str {
        &self.view_tag
    }

    pub fn column_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Columns for `ids`, in the order given.
    pub fn gather<S: AsRef<str>>(&self, ids: &[S]) -> Result<DMatrix<f64>> {
        let cols = ids
            .iter()
            .map(|id| {
                self.column_of(id.as_ref())
                    .ok_or_else(|| Error::UnknownStateId(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.values.select_columns(cols.iter()))
    }

    /// New set restricted to `ids`, in the order given.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<LatentSet> {
        let values = self.gather(ids)?;
        let ids = ids.iter().map(|s| s.as_ref().to_string()).collect();
        LatentSet::new(values, ids, self.view_tag.clone())
    }

    /// Same identifiers and tag with replaced values.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<LatentSet> {
        LatentSet::new(values, self.state_ids.clone(), self.view_tag.clone())
    }
}

pub(crate) fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Bin,
}

impl Format {
    /// Infers the format from a file extension (`.csv`, anything else is bin).
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Bin,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "bin" => Ok(Format::Bin),
            other => Err(Error::InvalidArgument(format!("unknown latent format {other:?}"))),
        }
    }
}

fn tag_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads a latent set. The view tag is taken from the file stem.
pub fn load_latents(path: &Path, format: Format) -> Result<LatentSet> {
    let tag = tag_from_path(path);
    match format {
        Format::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            decode_csv(&text, tag)
        }
        Format::Bin => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_bin(&bytes, tag)
        }
    }
}

pub fn save_latents(set: &LatentSet, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => encode_csv(set)?,
        Format::Bin => encode_bin(set)?,
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Formats a float with 17 significant digits (exact decimal round trip).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn encode_csv(set: &LatentSet) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = Vec::with_capacity(set.dim() + 1);
    header.push("state_id".to_string());
    header.extend((0..set.dim()).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    for (n, id) in set.state_ids.iter().enumerate() {
        let mut rec = Vec::with_capacity(set.dim() + 1);
        rec.push(id.clone());
        rec.extend(set.values.column(n).iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| Error::MalformedPayload(format!("csv flush: {e}")))
}

fn decode_csv(text: &str, tag: String) -> Result<LatentSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?
        .clone();
    if header.get(0) != Some("state_id") {
        return Err(Error::MalformedHeader("first column must be state_id".into()));
    }
    let d = header.len() - 1;
    if d == 0 {
        return Err(Error::MalformedHeader("no latent columns".into()));
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != format!("z{i}") {
            return Err(Error::MalformedHeader(format!(
                "column {} is {name:?}, expected \"z{i}\"",
                i + 1
            )));
        }
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::DimensionMismatch(format!(
                "row {} has {} values, header declares {d}",
                line + 1,
                rec.len().saturating_sub(1)
            )));
        }
        ids.push(rec[0].to_string());
        for (row, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::MalformedPayload(format!("row {}: cannot parse {field:?}", line + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col: line });
            }
            data.push(v);
        }
    }
    if ids.is_empty() {
        return Err(Error::MalformedPayload("no latent rows".into()));
    }
    let n = ids.len();
    LatentSet::new(DMatrix::from_vec(d, n, data), ids, tag)
}

fn encode_bin(set: &LatentSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(13 + 8 * set.values.len());
    out.extend_from_slice(LATENT_MAGIC);
    out.push(LATENT_VERSION);
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(set.count() as u32).to_le_bytes());
    for id in &set.state_ids {
        if id.as_bytes().contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "state_id {id:?} contains a NUL byte"
            )));
        }
        out.extend_from_slice(id.as_bytes());
        out.push(0);
    }
    for v in set.values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn decode_bin(bytes: &[u8], tag: String) -> Result<LatentSet> {
    let mut r = Reader::new(bytes);
    let magic = r
        .take(4)
        .map_err(|_| Error::MalformedHeader("missing magic".into()))?;
    if magic != LATENT_MAGIC {
        return Err(Error::MalformedHeader("bad magic, expected LTNT".into()));
    }
    let version = r.u8().map_err(|_| Error::MalformedHeader("missing version".into()))?;
    if version != LATENT_VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {version}")));
    }
    let d = r.u32().map_err(|_| Error::MalformedHeader("missing d".into()))? as usize;
    let n = r.u32().map_err(|_| Error::MalformedHeader("missing N".into()))? as usize;
    if d == 0 || n == 0 {
        return Err(Error::MalformedHeader(format!("empty latent set {d}x{n}")));
    }
    let mut ids = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let raw = r.cstr()?;
        let id = std::str::from_utf8(raw)
            .map_err(|_| Error::MalformedPayload("state_id is not UTF-8".into()))?;
        ids.push(id.to_string());
    }
    let expected = d * n * 8;
    let remaining = r.remaining();
    if remaining != expected {
        return Err(Error::DimensionMismatch(format!(
            "header declares {d}x{n} ({expected} payload bytes), found {remaining}"
        )));
    }
    let mut data = Vec::with_capacity(d * n);
    for _ in 0..d * n {
        data.push(r.f64()?);
    }
    r.finish()?;
    LatentSet::new(DMatrix::from_vec(d, n, data), ids, tag)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Two views joined on shared state identifiers, with a per-state split.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    view1: LatentSet,
    view2: LatentSet,
    pairs: Vec<String>,
    split: HashMap<String, Split>,
}

impl PairedDataset {
    /// Builds a dataset from an explicit split. Every pair must exist in both
    /// views and be assigned exactly one split.
    pub fn from_split(
        view1: LatentSet,
        view2: LatentSet,
        train: Vec<String>,
        test: Vec<String>,
    ) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::EmptySplit(
                train.len() as f64 / (train.len() + test.len()).max(1) as f64,
            ));
        }
        let mut split = HashMap::with_capacity(train.len() + test.len());
        for (ids, s) in [(&train, Split::Train), (&test, Split::Test)] {
            for id in ids {
                if !view1.contains(id) || !view2.contains(id) {
                    return Err(Error::UnknownStateId(id.clone()));
                }
                if split.insert(id.clone(), s).is_some() {
                    return Err(Error::DuplicateStateId(id.clone()));
                }
            }
        }
        // keep view-1 column order for determinism
        let pairs = view1
            .state_ids()
            .iter()
            .filter(|id| split.contains_key(*id))
            .cloned()
            .collect();
        Ok(Self {
            view1,
            view2,
            pairs,
            split,
        })
    }

    /// Every shared state in the test split and none in train, for sets that
    /// are only ever evaluated (e.g. distribution-shift data).
    pub fn eval_only(view1: LatentSet, view2: LatentSet) -> Result<Self> {
        let pairs: Vec<String> = view1
            .state_ids()
            .iter()
            .filter(|id| view2.contains(id))
            .cloned()
            .collect();
        if pairs.len() < 2 {
            return Err(Error::InsufficientSharedStates);
        }
        let split = pairs.iter().map(|id| (id.clone(), Split::Test)).collect();
        Ok(Self {
            view1,
            view2,
            pairs,
            split,
        })
    }

    pub fn view1(&self) -> &LatentSet {
        &self.view1
    }

    pub fn view2(&self) -> &LatentSet {
        &self.view2
    }

    pub fn pairs(&self) -> &[String] {
        &self.pairs
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split.get(id).copied()
    }

    pub fn ids(&self, which: Split) -> Vec<String> {
        self.pairs
            .iter()
            .filter(|id| self.split[*id] == which)
            .cloned()
            .collect()
    }

    pub fn train_ids(&self) -> Vec<String> {
        self.ids(Split::Train)
    }

    pub fn test_ids(&self) -> Vec<String> {
        self.ids(Split::Test)
    }

    /// `(view1, view2)` matrices for the given split, columns in pair order.
    pub fn matrices(&self, which: Split) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let ids = self.ids(which);
        Ok((self.view1.gather(&ids)?, self.view2.gather(&ids)?))
    }

    /// Same pairs and split with both views replaced (ids must be unchanged).
    pub fn with_views(&self, view1: LatentSet, view2: LatentSet) -> Result<Self> {
        PairedDataset::from_split(view1, view2, self.train_ids(), self.test_ids())
    }

    /// Serializable split manifest.
    pub fn split_manifest(&self) -> SplitManifest {
        SplitManifest {
            train: self.train_ids(),
            test: self.test_ids(),
        }
    }
}

/// On-disk pair manifest: explicit train and test state identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn apply(self, view1: LatentSet, view2: LatentSet) -> Result<PairedDataset> {
        PairedDataset::from_split(view1, view2, self.train, self.test)
    }
}

/// Joins two views on exact `state_id` match and assigns each shared state to
/// train when `unit_hash(state_id, seed) < split_fraction`.
pub fn pair_by_state(
    view1: LatentSet,
    view2: LatentSet,
    split_fraction: f64,
    seed: u64,
) -> Result<PairedDataset> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split_fraction must lie in (0, 1), got {split_fraction}"
        )));
    }
    let shared: Vec<String> = view1
        .state_ids()
        .iter()
        .filter(|id| view2.contains(id))
        .cloned()
        .collect();
    if shared.len() < 2 {
        return Err(Error::InsufficientSharedStates);
    }
    let (train, test): (Vec<String>, Vec<String>) = shared
        .into_iter()
        .partition(|id| unit_hash(id, seed) < split_fraction);
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptySplit(split_fraction));
    }
    PairedDataset::from_split(view1, view2, train, test)
}

/// Per-dimension mean and (floored, population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub source_split: Split,
}

impl StandardizationStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            source_split: Split::Train,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Statistics over all columns of `m`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() == 0 {
            return Err(Error::EmptyTrain);
        }
        let n = m.ncols() as f64;
        let mut mean = Vec::with_capacity(m.nrows());
        let mut scale = Vec::with_capacity(m.nrows());
        for row in m.row_iter() {
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            mean.push(mu);
            scale.push(var.sqrt().max(SCALE_FLOOR));
        }
        Ok(Self {
            mean,
            scale,
            source_split: Split::Train,
        })
    }

    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "stats have dim {}, data has dim {}",
                self.dim(),
                m.nrows()
            )));
        }
        Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            (m[(i, j)] - self.mean[i]) / self.scale[i]
        }))
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }
}

pub fn fit_standardizer<S: AsRef<str>>(
    set: &LatentSet,
    train_ids: &[S],
) -> Result<StandardizationStats> {
    if train_ids.is_empty() {
        return Err(Error::EmptyTrain);
    }
    StandardizationStats::from_matrix(&set.gather(train_ids)?)
}

pub fn apply_standardizer(set: &LatentSet, stats: &StandardizationStats) -> Result<LatentSet> {
    set.with_values(stats.apply_matrix(set.values())?)
}

/// Per-state split counts, handy for manifests.
pub fn split_counts(data: &PairedDataset) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    m.insert("train", data.train_ids().len());
    m.insert("test", data.test_ids().len());
    m
}

/// Identifiers present in both slices.
pub fn overlap<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    let set: HashSet<&str> = a.iter().map(|s| s.as_ref()).collect();
    b.iter().filter(|s| set.contains(s.as_ref())).count()
}
