//! On-disk datasets: one PFM per buffer per frame plus a JSON manifest.
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ngi_core::scenegen::{Camera, FrameRecord, Image};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fsutil::write_atomic;
use crate::pfm::{self, PfmError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_DIR: &str = "frames";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("unsupported dataset version {0}")]
    Version(u32),
    #[error("frame `{id}`: missing file {file}")]
    MissingFile { id: String, file: PathBuf },
    #[error("frame `{id}`: {file}: {source}")]
    Pfm { id: String, file: PathBuf, source: PfmError },
    #[error("frame `{id}`: {file} does not match its recorded hash")]
    HashMismatch { id: String, file: PathBuf },
    #[error("duplicate frame id `{0}`")]
    DuplicateId(String),
    #[error("frame `{id}`: {what} is {found:?}, dataset is {expected:?}")]
    Resolution {
        id: String,
        what: String,
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("no frame `{0}` in dataset")]
    UnknownFrame(String),
}

/// A file of the dataset and the SHA-256 of its bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

/// The seven buffers of a frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameFiles {
    pub l_d: FileRef,
    pub l_ind: FileRef,
    pub s_ind: FileRef,
    pub r: FileRef,
    pub n: FileRef,
    pub d: FileRef,
    pub p: FileRef,
}

impl FrameFiles {
    fn all(&self) -> [(&'static str, &FileRef, usize); 7] {
        [
            ("l_d", &self.l_d, 3),
            ("l_ind", &self.l_ind, 3),
            ("s_ind", &self.s_ind, 3),
            ("r", &self.r, 3),
            ("n", &self.n, 3),
            ("d", &self.d, 1),
            ("p", &self.p, 3),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: String,
    pub scene_seed: u64,
    pub render_seed: u64,
    pub spp: usize,
    pub scene_diagonal: f64,
    pub camera: Camera,
    pub files: FrameFiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    /// Echo of the configuration that generated the data.
    pub generation: serde_json::Value,
    pub frames: Vec<FrameEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Write the buffers of `frame` under `root/frames/` and return its entry.
pub fn write_frame(root: &Path, id: &str, frame: &FrameRecord) -> Result<FrameEntry, DatasetError> {
    let dir = root.join(FRAMES_DIR);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let write = |name: &str, img: &Image| -> Result<FileRef, DatasetError> {
        let rel = format!("{FRAMES_DIR}/{id}.{name}.pfm");
        let path = root.join(&rel);
        let bytes = pfm::encode(img).map_err(|source| DatasetError::Pfm {
            id: id.to_owned(),
            file: path.clone(),
            source,
        })?;
        write_atomic(&path, &bytes).map_err(io_err(&path))?;
        Ok(FileRef {
            path: rel,
            sha256: sha256_hex(&bytes),
        })
    };
    Ok(FrameEntry {
        id: id.to_owned(),
        scene_seed: frame.scene_seed,
        render_seed: frame.render_seed,
        spp: frame.spp,
        scene_diagonal: frame.scene_diagonal,
        camera: frame.camera,
        files: FrameFiles {
            l_d: write("l_d", &frame.l_d)?,
            l_ind: write("l_ind", &frame.l_ind)?,
            s_ind: write("s_ind", &frame.s_ind)?,
            r: write("r", &frame.r)?,
            n: write("n", &frame.n)?,
            d: write("d", &frame.d)?,
            p: write("p", &frame.p)?,
        },
    })
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<(), DatasetError> {
    let path = root.join(MANIFEST_FILE);
    let mut bytes = serde_json::to_vec_pretty(manifest).map_err(|source| DatasetError::Json {
        path: path.clone(),
        source,
    })?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes).map_err(io_err(&path))
}

/// A loaded dataset. Frame headers are validated on load; pixel data is
/// read (and hash-checked) on access.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
    index: BTreeMap<String, usize>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self, DatasetError> {
        let path = root.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|source| DatasetError::Json {
            path: path.clone(),
            source,
        })?;
        if manifest.version != DATASET_VERSION {
            return Err(DatasetError::Version(manifest.version));
        }
        let mut index = BTreeMap::new();
        for (i, e) in manifest.frames.iter().enumerate() {
            if index.insert(e.id.clone(), i).is_some() {
                return Err(DatasetError::DuplicateId(e.id.clone()));
            }
        }
        let ds = Dataset {
            root: root.to_owned(),
            manifest,
            index,
        };
        ds.manifest.frames.par_iter().try_for_each(|e| ds.check_headers(e))?;
        Ok(ds)
    }

    fn check_headers(&self, e: &FrameEntry) -> Result<(), DatasetError> {
        let (w, h) = (self.manifest.width, self.manifest.height);
        if (e.camera.width, e.camera.height) != (w, h) {
            return Err(DatasetError::Resolution {
                id: e.id.clone(),
                what: "camera".into(),
                expected: [w, h, 0],
                found: [e.camera.width, e.camera.height, 0],
            });
        }
        for (name, f, channels) in e.files.all() {
            let file = self.root.join(&f.path);
            if !file.is_file() {
                return Err(DatasetError::MissingFile { id: e.id.clone(), file });
            }
            let hd = pfm::read_header(&file).map_err(|source| DatasetError::Pfm {
                id: e.id.clone(),
                file: file.clone(),
                source,
            })?;
            if [hd.width, hd.height, hd.channels] != [w, h, channels] {
                return Err(DatasetError::Resolution {
                    id: e.id.clone(),
                    what: name.into(),
                    expected: [w, h, channels],
                    found: [hd.width, hd.height, hd.channels],
                });
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.manifest.width, self.manifest.height)
    }

    /// Frame ids in sorted order (independent of manifest order).
    pub fn ids(&self) -> Vec<&str> {
        self.index.keys().map(String::as_str).collect()
    }

    pub fn entry(&self, id: &str) -> Result<&FrameEntry, DatasetError> {
        self.index
            .get(id)
            .map(|&i| &self.manifest.frames[i])
            .ok_or_else(|| DatasetError::UnknownFrame(id.to_owned()))
    }

    pub fn frame(&self, id: &str) -> Result<FrameRecord, DatasetError> {
        let e = self.entry(id)?;
        let read = |f: &FileRef, channels: usize| -> Result<Image, DatasetError> {
            let file = self.root.join(&f.path);
            let bytes = fs::read(&file).map_err(|source| match source.kind() {
                std::io::ErrorKind::NotFound => DatasetError::MissingFile {
                    id: id.to_owned(),
                    file: file.clone(),
                },
                _ => DatasetError::Io {
                    path: file.clone(),
                    source,
                },
            })?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(DatasetError::HashMismatch { id: id.to_owned(), file });
            }
            let pfm_err = |source| DatasetError::Pfm {
                id: id.to_owned(),
                file: file.clone(),
                source,
            };
            let img = pfm::decode(&bytes).map_err(pfm_err)?;
            if img.channels != channels {
                return Err(pfm_err(PfmError::Channels {
                    expected: channels,
                    found: img.channels,
                }));
            }
            Ok(img)
        };
        let fs = &e.files;
        Ok(FrameRecord {
            l_d: read(&fs.l_d, 3)?,
            l_ind: read(&fs.l_ind, 3)?,
            r: read(&fs.r, 3)?,
            n: read(&fs.n, 3)?,
            d: read(&fs.d, 1)?,
            p: read(&fs.p, 3)?,
            s_ind: read(&fs.s_ind, 3)?,
            camera: e.camera,
            scene_seed: e.scene_seed,
            render_seed: e.render_seed,
            spp: e.spp,
            scene_diagonal: e.scene_diagonal,
        })
    }

    /// Frames in the order of `ids`, read in parallel.
    pub fn frames(&self, ids: &[&str]) -> Result<Vec<FrameRecord>, DatasetError> {
        ids.par_iter().map(|id| self.frame(id)).collect()
    }

    /// SHA-256 of the manifest with frames sorted by id: identifies the
    /// dataset content (every file hash is part of it) independent of entry order.
    pub fn content_hash(&self) -> String {
        let mut canonical = self.manifest.clone();
        canonical.frames.sort_by(|a, b| a.id.cmp(&b.id));
        sha256_hex(&serde_json::to_vec(&canonical).expect("manifest serializes"))
    }
}
