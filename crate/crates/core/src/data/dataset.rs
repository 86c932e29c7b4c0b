use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    assign_category, assign_quadrant, normalize_rating, CategoryMap, DataConfig, DataError, Quadrant,
};

/// Columns of an input manifest.
pub const MANIFEST_HEADER: [&str; 4] = ["image_path", "source", "valence_raw", "arousal_raw"];

#[derive(Debug, Clone, PartialEq)]
pub struct AffectiveRecord {
    pub image_path: PathBuf,
    pub source: String,
    pub valence_raw: f64,
    pub arousal_raw: f64,
    pub valence: f64,
    pub arousal: f64,
    pub quadrant: Quadrant,
    pub category: String,
    /// Name of the augmentation that produced this record, `None` for originals.
    pub augmentation: Option<String>,
}

impl AffectiveRecord {
    pub fn provenance_key(&self) -> String {
        match self.augmentation {
            Some(_) => format!("{}+augmented", self.source),
            None => self.source.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    image_path: String,
    source: String,
    valence_raw: f64,
    arousal_raw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    image_path: String,
    source: String,
    valence_raw: f64,
    arousal_raw: f64,
    valence: f64,
    arousal: f64,
    quadrant: String,
    category: String,
    #[serde(default)]
    augmentation: String,
}

/// An immutable, fully labelled corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct AffectiveDataset {
    records: Vec<AffectiveRecord>,
    category_map: CategoryMap,
    provenance: BTreeMap<String, usize>,
}

impl AffectiveDataset {
    /// Validates the records against `category_map` and tallies provenance.
    pub fn new(records: Vec<AffectiveRecord>, category_map: CategoryMap) -> Result<Self, DataError> {
        category_map.validate()?;
        let mut seen = BTreeSet::new();
        let mut provenance = BTreeMap::new();
        for r in &records {
            if !seen.insert(r.image_path.clone()) {
                return Err(DataError::DuplicatePath(r.image_path.clone()));
            }
            if !(-1.0..=1.0).contains(&r.valence) || !(-1.0..=1.0).contains(&r.arousal) {
                return Err(DataError::Invariant(format!(
                    "{}: normalized ratings ({}, {}) outside [-1, 1]",
                    r.image_path.display(),
                    r.valence,
                    r.arousal
                )));
            }
            if assign_quadrant(r.valence, r.arousal) != r.quadrant {
                return Err(DataError::Invariant(format!(
                    "{}: quadrant {} inconsistent with ratings",
                    r.image_path.display(),
                    r.quadrant
                )));
            }
            if assign_category(r.valence, r.arousal, &category_map) != r.category {
                return Err(DataError::Invariant(format!(
                    "{}: category `{}` inconsistent with the category map",
                    r.image_path.display(),
                    r.category
                )));
            }
            *provenance.entry(r.provenance_key()).or_insert(0) += 1;
        }
        Ok(Self {
            records,
            category_map,
            provenance,
        })
    }

    pub fn empty(category_map: CategoryMap) -> Result<Self, DataError> {
        Self::new(Vec::new(), category_map)
    }

    pub fn records(&self) -> &[AffectiveRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<AffectiveRecord> {
        self.records
    }

    pub fn category_map(&self) -> &CategoryMap {
        &self.category_map
    }

    pub fn provenance(&self) -> &BTreeMap<String, usize> {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Class index of every record in `category_map().classes()` order.
    pub fn class_indices(&self) -> Vec<usize> {
        self.records
            .iter()
            .map(|r| {
                self.category_map
                    .class_index(&r.category)
                    .expect("category validated on construction")
            })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Self::new(records, self.category_map.clone())
    }

    pub fn quadrant_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for r in &self.records {
            counts[r.quadrant.index()] += 1;
        }
        counts
    }

    /// Quadrant histogram per source, keyed like `provenance`.
    pub fn quadrant_counts_by_source(&self) -> BTreeMap<String, [usize; 4]> {
        let mut table: BTreeMap<String, [usize; 4]> = BTreeMap::new();
        for r in &self.records {
            table.entry(r.provenance_key()).or_default()[r.quadrant.index()] += 1;
        }
        table
    }

    /// Counts for all thirteen classes (zeros included), alphabetical by label.
    pub fn category_counts(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> = self
            .category_map
            .classes()
            .into_iter()
            .map(|c| (c.to_string(), 0))
            .collect();
        for r in &self.records {
            *counts.get_mut(&r.category).expect("validated category") += 1;
        }
        counts
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>, DataError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            writer
                .serialize(DatasetRow {
                    image_path: r.image_path.to_string_lossy().into_owned(),
                    source: r.source.clone(),
                    valence_raw: r.valence_raw,
                    arousal_raw: r.arousal_raw,
                    valence: r.valence,
                    arousal: r.arousal,
                    quadrant: r.quadrant.to_string(),
                    category: r.category.clone(),
                    augmentation: r.augmentation.clone().unwrap_or_default(),
                })
                .map_err(|source| DataError::Csv {
                    path: PathBuf::from("<memory>"),
                    source,
                })?;
        }
        if self.records.is_empty() {
            writer
                .write_record([
                    "image_path",
                    "source",
                    "valence_raw",
                    "arousal_raw",
                    "valence",
                    "arousal",
                    "quadrant",
                    "category",
                    "augmentation",
                ])
                .map_err(|source| DataError::Csv {
                    path: PathBuf::from("<memory>"),
                    source,
                })?;
        }
        writer
            .into_inner()
            .map_err(|e| DataError::Parse(format!("flushing dataset csv: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let bytes = self.to_csv_bytes()?;
        let mut file = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        file.write_all(&bytes).map_err(|e| DataError::io(path, e))
    }

    /// Reads a serialized dataset, re-checking every label against `category_map`.
    pub fn read_csv(path: &Path, category_map: &CategoryMap) -> Result<Self, DataError> {
        let csv_err = |source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut records = Vec::new();
        for row in reader.deserialize::<DatasetRow>() {
            let row = row.map_err(csv_err)?;
            records.push(AffectiveRecord {
                image_path: PathBuf::from(row.image_path),
                source: row.source,
                valence_raw: row.valence_raw,
                arousal_raw: row.arousal_raw,
                valence: row.valence,
                arousal: row.arousal,
                quadrant: row.quadrant.parse()?,
                category: row.category,
                augmentation: (!row.augmentation.is_empty()).then_some(row.augmentation),
            });
        }
        Self::new(records, category_map.clone())
    }

    /// Git-style content hash (`sha256("blob <len>\0" ++ csv)`) of the serialized form.
    pub fn content_hash(&self) -> Result<String, DataError> {
        let bytes = self.to_csv_bytes()?;
        let mut hasher = Sha256::new();
        hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
        hasher.update(&bytes);
        Ok(format!("{:x}", hasher.finalize()))
    }
}

fn resolve(manifest: &Path, image_path: &str) -> PathBuf {
    let p = PathBuf::from(image_path);
    if p.is_absolute() {
        return p;
    }
    match manifest.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(p),
        _ => p,
    }
}

/// Reads manifests (`image_path,source,valence_raw,arousal_raw`), normalizes
/// ratings with the per-source scales and labels every record.
///
/// Relative image paths resolve against the manifest's directory.
pub fn build_dataset<P: AsRef<Path>>(manifests: &[P], config: &DataConfig) -> Result<AffectiveDataset, DataError> {
    config.validate()?;
    let map = &config.category_map;
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    let mut missing = Vec::new();

    for manifest in manifests {
        let manifest = manifest.as_ref();
        let csv_err = |source| DataError::Csv {
            path: manifest.to_path_buf(),
            source,
        };
        let mut reader = csv::Reader::from_path(manifest).map_err(csv_err)?;
        let headers = reader.headers().map_err(csv_err)?.clone();
        for col in MANIFEST_HEADER {
            if !headers.iter().any(|h| h == col) {
                return Err(DataError::Parse(format!(
                    "{}: missing column `{col}`",
                    manifest.display()
                )));
            }
        }
        for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
            let row = row.map_err(csv_err)?;
            let line = i as u64 + 2;
            let scales = config.scales.get(&row.source).ok_or_else(|| DataError::UnknownSource {
                source_id: row.source.clone(),
                manifest: manifest.to_path_buf(),
                line,
            })?;
            let image_path = resolve(manifest, &row.image_path);
            let name = image_path.display().to_string();
            let named = |e: DataError| match e {
                DataError::RatingOutOfRange { value, min, max, .. } => DataError::RatingOutOfRange {
                    record: name.clone(),
                    value,
                    min,
                    max,
                },
                other => other,
            };
            let valence = normalize_rating(row.valence_raw, &scales.valence).map_err(named)?;
            let arousal = normalize_rating(row.arousal_raw, &scales.arousal).map_err(named)?;
            if !seen.insert(image_path.clone()) {
                return Err(DataError::DuplicatePath(image_path));
            }
            if !image_path.is_file() {
                missing.push(image_path.clone());
            }
            records.push(AffectiveRecord {
                quadrant: assign_quadrant(valence, arousal),
                category: assign_category(valence, arousal, map).to_string(),
                image_path,
                source: row.source,
                valence_raw: row.valence_raw,
                arousal_raw: row.arousal_raw,
                valence,
                arousal,
                augmentation: None,
            });
        }
    }
    if !missing.is_empty() {
        return Err(DataError::MissingImages(missing));
    }
    AffectiveDataset::new(records, map.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_manifest(dir: &Path, name: &str, rows: &[(&str, &str, f64, f64)]) -> PathBuf {
        let path = dir.join(name);
        let mut text = String::from("image_path,source,valence_raw,arousal_raw\n");
        for (img, source, v, a) in rows {
            std::fs::write(dir.join(img), b"not really a png").unwrap();
            text.push_str(&format!("{img},{source},{v},{a}\n"));
        }
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn builds_and_labels_records() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_manifest(
            dir.path(),
            "m.csv",
            &[
                ("a.png", "IAPS", 9.0, 5.0),
                ("b.png", "GAPED", 0.0, 0.0),
                ("c.png", "OASIS", 4.0, 4.0),
            ],
        );
        let ds = build_dataset(&[m], &DataConfig::default()).unwrap();
        assert_eq!(ds.len(), 3);
        let r = &ds.records()[0];
        assert_eq!((r.valence, r.arousal), (1.0, 0.0));
        assert_eq!(r.quadrant, Quadrant::QI);
        assert_eq!(r.category, "Happy");
        assert_eq!(ds.records()[1].quadrant, Quadrant::QIII);
        assert_eq!(ds.records()[2].category, "Neutral");
        assert_eq!(ds.provenance()["IAPS"], 1);
        assert_eq!(ds.quadrant_counts().iter().sum::<usize>(), 3);
        assert_eq!(ds.category_counts().values().sum::<usize>(), 3);
        assert_eq!(ds.category_counts().len(), 13);
    }

    #[test]
    fn empty_manifest_list() {
        let ds = build_dataset::<PathBuf>(&[], &DataConfig::default()).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.quadrant_counts(), [0; 4]);
        assert!(ds.category_counts().values().all(|&c| c == 0));
    }

    #[test]
    fn duplicate_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_manifest(dir.path(), "m.csv", &[("a.png", "IAPS", 5.0, 5.0), ("a.png", "IAPS", 6.0, 5.0)]);
        assert!(matches!(
            build_dataset(&[m], &DataConfig::default()),
            Err(DataError::DuplicatePath(_))
        ));
    }

    #[test]
    fn unknown_source_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_manifest(dir.path(), "m.csv", &[("a.png", "Mystery", 5.0, 5.0)]);
        assert!(matches!(
            build_dataset(&[m], &DataConfig::default()),
            Err(DataError::UnknownSource { line: 2, .. })
        ));

        let m = dir.path().join("gone.csv");
        std::fs::write(&m, "image_path,source,valence_raw,arousal_raw\nx.png,IAPS,1,1\ny.png,IAPS,2,2\n").unwrap();
        match build_dataset(&[m], &DataConfig::default()) {
            Err(DataError::MissingImages(paths)) => assert_eq!(paths.len(), 2),
            other => panic!("expected missing images, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_manifest(dir.path(), "m.csv", &[("a.png", "OASIS", 8.0, 5.0)]);
        let err = build_dataset(&[m], &DataConfig::default()).unwrap_err();
        assert!(err.to_string().contains("a.png"), "{err}");
    }

    #[test]
    fn serialization_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_manifest(
            dir.path(),
            "m.csv",
            &[("a.png", "IAPS", 2.5, 7.25), ("b.png", "EmoMadrid", -1.3, 0.7)],
        );
        let cfg = DataConfig::default();
        let ds = build_dataset(&[&m], &cfg).unwrap();
        let again = build_dataset(&[&m], &cfg).unwrap();
        assert_eq!(ds.to_csv_bytes().unwrap(), again.to_csv_bytes().unwrap());
        let out = dir.path().join("ds.csv");
        ds.write_csv(&out).unwrap();
        let back = AffectiveDataset::read_csv(&out, &cfg.category_map).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.content_hash().unwrap(), ds.content_hash().unwrap());
    }

    #[test]
    fn read_rejects_inconsistent_labels() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("ds.csv");
        std::fs::write(
            &out,
            "image_path,source,valence_raw,arousal_raw,valence,arousal,quadrant,category,augmentation\n\
             a.png,IAPS,9,5,1,0,QI,Tired,\n",
        )
        .unwrap();
        assert!(matches!(
            AffectiveDataset::read_csv(&out, &CategoryMap::default()),
            Err(DataError::Invariant(_))
        ));
    }
}
