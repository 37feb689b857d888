//! FSC-147-style dataset directories.
//!
//! Layout consumed by training and evaluation:
//!
//! ```text
//! <root>/images/<id>          image files, id = file name
//! <root>/annotations.json     {"<id>": {"points": [[x, y], ...]}, ...}
//! <root>/splits.json          {"train": [ids], "val": [ids], "test": [ids]}
//! ```
//!
//! [`prepare_official`] converts the layout of the official release
//! (`annotation_FSC147_384.json`, `Train_Test_Val_FSC_147.json`,
//! `images_384_VarV2/`) into this one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dinocount_core::sample::SampleSource;
use dinocount_core::{ImageSample, Point, Split};
use serde::{Deserialize, Serialize};

use crate::image_io::{load_rgb, save_rgb};
use crate::{Error, Result};

pub const IMAGES_DIR: &str = "images";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub points: Vec<[f64; 2]>,
}

pub type Annotations = BTreeMap<String, Annotation>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    #[serde(default)]
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
}

impl Splits {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    crate::image_io::ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    std::fs::write(path, text).map_err(Error::io(path))
}

#[derive(Debug, Clone)]
struct Entry {
    id: String,
    points: Vec<Point>,
}

/// Lazily loaded split of a dataset root. Images are decoded on access;
/// ids are in lexicographic order.
#[derive(Debug, Clone)]
pub struct Fsc147Index {
    root: PathBuf,
    split: Split,
    entries: Vec<Entry>,
}

impl Fsc147Index {
    /// Opens `split` under `root`, checking that every listed id has an
    /// annotation and an image file. Point bounds are checked when an
    /// image is loaded.
    pub fn open(root: &Path, split: Split) -> Result<Self> {
        let annotations: Annotations = read_json(&root.join(ANNOTATIONS_FILE))?;
        let splits: Splits = read_json(&root.join(SPLITS_FILE))?;
        let mut ids: Vec<String> = splits.ids(split).to_vec();
        ids.sort();
        ids.dedup();
        let images = root.join(IMAGES_DIR);
        let missing: Vec<String> = ids.iter().filter(|id| !images.join(id).is_file()).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingImages(missing));
        }
        let mut entries = Vec::with_capacity(ids.len());
        for id in ids {
            let ann = annotations.get(&id).ok_or_else(|| {
                Error::format(root.join(ANNOTATIONS_FILE), format!("no annotation for `{id}`"))
            })?;
            let points = ann.points.iter().map(|&[x, y]| Point::new(x, y)).collect();
            entries.push(Entry { id, points });
        }
        Ok(Self {
            root: root.to_path_buf(),
            split,
            entries,
        })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn image_path(&self, index: usize) -> PathBuf {
        self.root.join(IMAGES_DIR).join(&self.entries[index].id)
    }

    pub fn gt_count(&self, index: usize) -> usize {
        self.entries[index].points.len()
    }

    /// Loads and validates a sample with a dataset-level error.
    pub fn load(&self, index: usize) -> Result<ImageSample> {
        let e = &self.entries[index];
        let pixels = load_rgb(&self.image_path(index))?;
        ImageSample::new(e.id.clone(), pixels, e.points.clone(), self.split).map_err(|source| Error::Annotation {
            id: e.id.clone(),
            source,
        })
    }
}

impl SampleSource for Fsc147Index {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn id(&self, index: usize) -> String {
        self.entries[index].id.clone()
    }

    fn get(&self, index: usize) -> dinocount_core::Result<ImageSample> {
        self.load(index).map_err(|e| match e {
            Error::Core(c) | Error::Annotation { source: c, .. } => c,
            other => dinocount_core::Error::InvalidParameter(other.to_string()),
        })
    }
}

/// Checks a dataset root end to end: every split opens and every image
/// decodes with in-bounds points. Returns per-split sizes.
pub fn validate_root(root: &Path) -> Result<BTreeMap<Split, usize>> {
    let mut sizes = BTreeMap::new();
    for split in Split::ALL {
        let idx = Fsc147Index::open(root, split)?;
        for i in 0..idx.len() {
            idx.load(i)?;
        }
        sizes.insert(split, idx.len());
    }
    Ok(sizes)
}

#[derive(Deserialize)]
struct OfficialAnnotation {
    points: Vec<[f64; 2]>,
}

/// Converts an official FSC-147 release directory into the layout above.
/// Images are copied byte for byte.
pub fn prepare_official(source: &Path, root: &Path) -> Result<BTreeMap<Split, usize>> {
    let ann: BTreeMap<String, OfficialAnnotation> = read_json(&source.join("annotation_FSC147_384.json"))?;
    let splits: Splits = read_json(&source.join("Train_Test_Val_FSC_147.json"))?;
    let src_images = source.join("images_384_VarV2");
    let dst_images = root.join(IMAGES_DIR);
    std::fs::create_dir_all(&dst_images).map_err(Error::io(&dst_images))?;
    let mut annotations = Annotations::new();
    let mut missing = Vec::new();
    for split in Split::ALL {
        for id in splits.ids(split) {
            let src = src_images.join(id);
            if !src.is_file() {
                missing.push(id.clone());
                continue;
            }
            let a = ann
                .get(id)
                .ok_or_else(|| Error::format(source.join("annotation_FSC147_384.json"), format!("no entry for `{id}`")))?;
            let dst = dst_images.join(id);
            std::fs::copy(&src, &dst).map_err(Error::io(&dst))?;
            annotations.insert(id.clone(), Annotation { points: a.points.clone() });
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingImages(missing));
    }
    write_json(&root.join(ANNOTATIONS_FILE), &annotations)?;
    write_json(&root.join(SPLITS_FILE), &splits)?;
    validate_root(root)
}

/// Writes samples as a dataset root; images are saved as `<id>.png`.
/// Returns the image paths in input order.
pub fn write_dataset(root: &Path, samples: &[ImageSample]) -> Result<Vec<PathBuf>> {
    let mut annotations = Annotations::new();
    let mut splits = Splits::default();
    let mut paths = Vec::with_capacity(samples.len());
    for s in samples {
        let file = format!("{}.png", s.id);
        let path = root.join(IMAGES_DIR).join(&file);
        save_rgb(&path, &s.pixels)?;
        annotations.insert(
            file.clone(),
            Annotation {
                points: s.points.iter().map(|p| [p.x, p.y]).collect(),
            },
        );
        match s.split {
            Split::Train => splits.train.push(file),
            Split::Val => splits.val.push(file),
            Split::Test => splits.test.push(file),
        }
        paths.push(path);
    }
    write_json(&root.join(ANNOTATIONS_FILE), &annotations)?;
    write_json(&root.join(SPLITS_FILE), &splits)?;
    Ok(paths)
}
