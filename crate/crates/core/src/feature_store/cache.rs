use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SFEW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "f32")]
    F32,
}

/// JSON block stored after the magic and version words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCacheHeader {
    pub visual_dim: usize,
    pub record_count: usize,
    pub dtype: DType,
    pub dataset_name: String,
    /// split name (`base`, `val`, `novel`) to class ids
    pub split_table: BTreeMap<String, Vec<u32>>,
}

impl FeatureCacheHeader {
    pub fn new(dataset_name: impl Into<String>, visual_dim: usize) -> Self {
        Self {
            visual_dim,
            record_count: 0,
            dtype: DType::F32,
            dataset_name: dataset_name.into(),
            split_table: BTreeMap::new(),
        }
    }

    pub fn with_split(mut self, name: impl Into<String>, classes: Vec<u32>) -> Self {
        self.split_table.insert(name.into(), classes);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.visual_dim == 0 {
            return Err(Error::Format("visual_dim must be positive".into()));
        }
        let mut owner: HashMap<u32, &str> = HashMap::new();
        for (split, classes) in &self.split_table {
            for &c in classes {
                if let Some(prev) = owner.insert(c, split) {
                    if prev != split {
                        return Err(Error::Format(format!(
                            "class {c} appears in splits `{prev}` and `{split}`"
                        )));
                    }
                    return Err(Error::Format(format!(
                        "class {c} listed twice in split `{split}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub class_id: u32,
    pub vector: Vec<f32>,
}

/// Immutable in-memory view of a cache file.
///
/// Vectors are stored contiguously in file order; record `i` occupies
/// `data[i * dim..(i + 1) * dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    header: FeatureCacheHeader,
    class_ids: Vec<u32>,
    data: Vec<f32>,
}

impl FeatureCache {
    /// Builds a cache from records, filling in `record_count`.
    pub fn new(mut header: FeatureCacheHeader, records: &[FeatureRecord]) -> Result<Self> {
        header.record_count = records.len();
        header.validate()?;
        let dim = header.visual_dim;
        let mut class_ids = Vec::with_capacity(records.len());
        let mut data = Vec::with_capacity(records.len() * dim);
        for (i, r) in records.iter().enumerate() {
            if r.vector.len() != dim {
                return Err(Error::Dimension(format!(
                    "record {i} has length {} but visual_dim is {dim}",
                    r.vector.len()
                )));
            }
            if let Some(j) = r.vector.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("record {i} entry {j} is not finite")));
            }
            class_ids.push(r.class_id);
            data.extend_from_slice(&r.vector);
        }
        Ok(Self {
            header,
            class_ids,
            data,
        })
    }

    pub fn header(&self) -> &FeatureCacheHeader {
        &self.header
    }

    pub fn dim(&self) -> usize {
        self.header.visual_dim
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn class_id(&self, index: usize) -> u32 {
        self.class_ids[index]
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn vector(&self, index: usize) -> &[f32] {
        let dim = self.dim();
        &self.data[index * dim..(index + 1) * dim]
    }

    pub fn records(&self) -> impl Iterator<Item = FeatureRecord> + '_ {
        (0..self.len()).map(|i| FeatureRecord {
            class_id: self.class_id(i),
            vector: self.vector(i).to_vec(),
        })
    }

    pub fn split_classes(&self, split: &str) -> Result<&[u32]> {
        self.header
            .split_table
            .get(split)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Argument(format!("split `{split}` not present in cache")))
    }

    /// Record indices per class id, in file order.
    pub fn records_by_class(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.class_ids.iter().enumerate() {
            out.entry(c).or_default().push(i);
        }
        out
    }

    pub fn records_of(&self, class_id: u32) -> Vec<usize> {
        self.class_ids
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == class_id).then_some(i))
            .collect()
    }
}

fn header_bytes(header: &FeatureCacheHeader) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let len = u32::try_from(json.len())
        .map_err(|_| Error::Format("header block exceeds 4 GiB".into()))?;
    let mut out = Vec::with_capacity(12 + json.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    Ok(out)
}

/// Writes `magic | version | header_len | header JSON | records`, all little-endian.
/// Each record is a `u32` class id followed by `visual_dim` `f32` values.
pub fn write_cache(
    header: &FeatureCacheHeader,
    records: &[FeatureRecord],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if header.record_count != records.len() {
        return Err(Error::Dimension(format!(
            "header.record_count is {} but {} records were given",
            header.record_count,
            records.len()
        )));
    }
    header.validate()?;
    for (i, r) in records.iter().enumerate() {
        if r.vector.len() != header.visual_dim {
            return Err(Error::Dimension(format!(
                "record {i} has length {} but visual_dim is {}",
                r.vector.len(),
                header.visual_dim
            )));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(&header_bytes(header)?).map_err(io)?;
    for r in records {
        w.write_all(&r.class_id.to_le_bytes()).map_err(io)?;
        for v in &r.vector {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

impl FeatureCache {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let records: Vec<FeatureRecord> = self.records().collect();
        write_cache(&self.header, &records, path)
    }
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| Error::Format(format!("file truncated while reading {what}")))?;
    let out = &buf[*pos..end];
    *pos = end;
    Ok(out)
}

fn u32_at(bytes: &[u8]) -> u32 {
    u32::from_le_bytes(bytes.try_into().expect("4-byte slice"))
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<FeatureCache> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

fn decode(buf: &[u8]) -> Result<FeatureCache> {
    let mut pos = 0;
    let magic = take(buf, &mut pos, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"SFEW\"")));
    }
    let version = u32_at(take(buf, &mut pos, 4, "version")?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let header_len = u32_at(take(buf, &mut pos, 4, "header length")?) as usize;
    let header: FeatureCacheHeader =
        serde_json::from_slice(take(buf, &mut pos, header_len, "header")?)
            .map_err(|e| Error::Format(format!("header JSON: {e}")))?;
    header.validate()?;

    let dim = header.visual_dim;
    let record_bytes = 4 + 4 * dim;
    let expected = header
        .record_count
        .checked_mul(record_bytes)
        .ok_or_else(|| Error::Format("record_count overflows".into()))?;
    let remaining = buf.len() - pos;
    if remaining < expected {
        return Err(Error::Format(format!(
            "file truncated: {remaining} payload bytes, expected {expected}"
        )));
    }
    if remaining > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after last record",
            remaining - expected
        )));
    }

    let mut class_ids = Vec::with_capacity(header.record_count);
    let mut data = Vec::with_capacity(header.record_count * dim);
    for i in 0..header.record_count {
        class_ids.push(u32_at(take(buf, &mut pos, 4, "class id")?));
        let payload = take(buf, &mut pos, 4 * dim, "vector")?;
        for (j, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            if !v.is_finite() {
                return Err(Error::Data(format!("record {i} entry {j} is {v}")));
            }
            data.push(v);
        }
    }
    Ok(FeatureCache {
        header,
        class_ids,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(dim: usize, n: usize) -> FeatureCacheHeader {
        let mut h = FeatureCacheHeader::new("toy", dim)
            .with_split("base", vec![0])
            .with_split("novel", vec![1]);
        h.record_count = n;
        h
    }

    #[test]
    fn single_record_file_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.sfew");
        let h = header(2, 1);
        let records = [FeatureRecord {
            class_id: 0,
            vector: vec![1.0, 0.0],
        }];
        write_cache(&h, &records, &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(len, header_bytes(&h).unwrap().len() + 12);
    }

    #[test]
    fn wrong_vector_length_is_dimension_error() {
        let dir = tempfile::tempdir().unwrap();
        let records = [FeatureRecord {
            class_id: 0,
            vector: vec![1.0, 0.0, 2.0],
        }];
        let err = write_cache(&header(2, 1), &records, dir.path().join("a.sfew")).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)), "{err}");
    }

    #[test]
    fn record_count_mismatch_is_dimension_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_cache(&header(2, 3), &[], dir.path().join("a.sfew")).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    fn two_record_bytes() -> Vec<u8> {
        let h = header(2, 2);
        let cache = FeatureCache::new(
            h,
            &[
                FeatureRecord {
                    class_id: 0,
                    vector: vec![1.0, 2.0],
                },
                FeatureRecord {
                    class_id: 1,
                    vector: vec![-3.0, 0.5],
                },
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.sfew");
        cache.write(&path).unwrap();
        std::fs::read(path).unwrap()
    }

    #[test]
    fn valid_file_reads_back() {
        let cache = decode(&two_record_bytes()).unwrap();
        assert_eq!(cache.header().record_count, 2);
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.vector(1), &[-3.0, 0.5]);
        assert_eq!(cache.class_id(1), 1);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = two_record_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_version_rejected() {
        let mut bytes = two_record_bytes();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_mid_record_rejected() {
        let bytes = two_record_bytes();
        let cut = &bytes[..bytes.len() - 5];
        assert!(matches!(decode(cut), Err(Error::Format(_))));
        assert!(matches!(decode(&bytes[..6]), Err(Error::Format(_))));
    }

    #[test]
    fn trailing_garbage_rejected() {
        let mut bytes = two_record_bytes();
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_entry_rejected() {
        let mut bytes = two_record_bytes();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Data(_))));
        bytes[n - 4..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Data(_))));
    }

    #[test]
    fn unknown_dtype_rejected() {
        let bytes = two_record_bytes();
        let text = String::from_utf8_lossy(&bytes).replace("\"f32\"", "\"f64\"");
        assert!(matches!(decode(text.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn overlapping_splits_rejected() {
        let h = FeatureCacheHeader::new("toy", 2)
            .with_split("base", vec![0, 1])
            .with_split("novel", vec![1]);
        assert!(matches!(FeatureCache::new(h, &[]), Err(Error::Format(_))));

        // same check on the read path
        let mut bytes = two_record_bytes();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let patched = text.replace("\"novel\":[1]", "\"novel\":[0]");
        assert_ne!(text, patched);
        bytes = patched.into_bytes();
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }
}
