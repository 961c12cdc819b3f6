//! Dataset ingestion, degradation and synthesis: attribute-annotated face
//! images, bicubic up/down-sampling, [-1, 1] normalization, attribute masking
//! and a procedurally drawn face set for desk-scale experiments.

mod bicubic;
mod imageio;
mod synth;

pub use bicubic::{bicubic_resize, bicubic_resize_tensor, cubic_kernel};
pub use imageio::{load_gray_png, load_image, save_gray_png, save_image};
pub use synth::{
    attr_names_38, draw_face, face_params, synth_face_dataset, synth_faces, AttrKind, FaceParams,
    SynthAttr, SynthRecord, SynthSpec,
};

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::attributes::{AttributeVector, ATTR_COUNT};
use crate::error::{Error, Result};
use crate::tensor::{SeededRng, Tensor};

/// 8-bit interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageU8 {
    pub w: usize,
    pub h: usize,
    /// Row-major, 3 bytes per pixel.
    pub data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(w: usize, h: usize) -> Self {
        ImageU8 {
            w,
            h,
            data: vec![0; w * h * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Maps 8-bit values to [-1, 1]: x / 127.5 - 1.
pub fn normalize(img: &ImageU8) -> Tensor {
    let (w, h) = (img.w, img.h);
    let mut data = vec![0.0f32; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let px = img.pixel(x, y);
            for c in 0..3 {
                data[(c * h + y) * w + x] = px[c] as f32 / 127.5 - 1.0;
            }
        }
    }
    Tensor::new(vec![1, 3, h, w], data).expect("length matches by construction")
}

/// Stacks images into an (N, 3, H, W) batch in [-1, 1].
pub fn normalize_batch(imgs: &[ImageU8]) -> Result<Tensor> {
    if imgs.is_empty() {
        return Err(Error::Data("cannot batch zero images".into()));
    }
    let (w, h) = (imgs[0].w, imgs[0].h);
    let mut data = Vec::with_capacity(imgs.len() * 3 * w * h);
    for img in imgs {
        if img.w != w || img.h != h {
            return Err(Error::Data(format!(
                "batch images differ in size: {w}x{h} vs {}x{}",
                img.w, img.h
            )));
        }
        let t = normalize(img);
        data.extend_from_slice(t.data());
    }
    Tensor::new(vec![imgs.len(), 3, h, w], data)
}

/// Inverse of [`normalize`]: clamps to [0, 255] and rounds half up. Returns
/// one image per batch element.
pub fn denormalize(t: &Tensor) -> Result<Vec<ImageU8>> {
    let (n, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(Error::shape(
            "denormalize",
            format!("expected 3 channels, got {c}"),
        ));
    }
    let mut out = Vec::with_capacity(n);
    for ni in 0..n {
        let mut img = ImageU8::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut px = [0u8; 3];
                for ch in 0..3 {
                    let v = t.data()[((ni * 3 + ch) * h + y) * w + x];
                    let level = ((v + 1.0) * 127.5).clamp(0.0, 255.0);
                    px[ch] = (level + 0.5).floor() as u8;
                }
                img.set_pixel(x, y, px);
            }
        }
        out.push(img);
    }
    Ok(out)
}

/// Marks a seeded uniformly random subset of floor(fraction * 38) attributes
/// unknown (neutral value, known = false).
pub fn mask_attributes(att: &AttributeVector, fraction: f32, seed: u64) -> Result<AttributeVector> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "mask fraction must be in [0, 1], got {fraction}"
        )));
    }
    let k = (fraction * ATTR_COUNT as f32).floor() as usize;
    let mut rng = SeededRng::new(seed);
    let mut indices: Vec<usize> = (0..ATTR_COUNT).collect();
    rng.shuffle(&mut indices);
    let mut masked = att.clone();
    for idx in indices.into_iter().take(k) {
        masked.forget(idx);
    }
    Ok(masked)
}

#[derive(Debug, Clone)]
pub struct ManifestRecord {
    pub file: String,
    pub attrs: AttributeVector,
}

/// Dataset description: image root, attribute records and degradation
/// geometry.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: String,
    pub hr_side: usize,
    pub scale: usize,
    pub attr_names: Vec<String>,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn image_path(&self, record: &ManifestRecord) -> PathBuf {
        self.root.join(&record.file)
    }
}

#[derive(Debug, Clone)]
pub struct ManifestOptions {
    pub hr_side: usize,
    pub scale: usize,
    pub split: String,
    /// Names to drop from a 40-column file to reach 38.
    pub drop_names: Vec<String>,
    /// Verify each image decodes to hr_side x hr_side x 3.
    pub check_images: bool,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        ManifestOptions {
            hr_side: 128,
            scale: 4,
            split: "train".into(),
            drop_names: vec![],
            check_images: true,
        }
    }
}

/// Loads an attribute CSV ("filename,<38 or 40 names>"; rows of +-1 values).
/// A 40-column file needs exactly two drop names to reach 38.
pub fn load_manifest(
    csv_path: &Path,
    image_root: &Path,
    opts: &ManifestOptions,
) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", csv_path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("bad CSV header: {e}")))?
        .clone();
    if headers.len() < 2 || headers.get(0).map(str::to_ascii_lowercase).as_deref() != Some("filename")
    {
        return Err(Error::Data(
            "CSV header must start with 'filename' followed by attribute names".into(),
        ));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let keep: Vec<usize> = match names.len() {
        ATTR_COUNT => {
            if !opts.drop_names.is_empty() {
                return Err(Error::Data(format!(
                    "drop list given but file already has {ATTR_COUNT} attribute columns"
                )));
            }
            (0..ATTR_COUNT).collect()
        }
        40 => {
            let drop: HashSet<&str> = opts.drop_names.iter().map(String::as_str).collect();
            if drop.len() != 2 {
                return Err(Error::Data(format!(
                    "40-column file needs exactly 2 distinct drop names, got {:?}",
                    opts.drop_names
                )));
            }
            let keep: Vec<usize> = names
                .iter()
                .enumerate()
                .filter(|(_, n)| !drop.contains(n.as_str()))
                .map(|(i, _)| i)
                .collect();
            if keep.len() != ATTR_COUNT {
                return Err(Error::Data(format!(
                    "drop names {:?} not found among attribute columns",
                    opts.drop_names
                )));
            }
            keep
        }
        other => {
            return Err(Error::Data(format!(
                "expected {ATTR_COUNT} or 40 attribute columns, got {other}"
            )))
        }
    };
    let kept_names: Vec<String> = keep.iter().map(|i| names[*i].clone()).collect();

    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Data(format!("CSV row {}: {e}", line + 2)))?;
        if row.len() != names.len() + 1 {
            return Err(Error::Data(format!(
                "CSV row {}: expected {} fields, got {}",
                line + 2,
                names.len() + 1,
                row.len()
            )));
        }
        let file = row.get(0).unwrap_or_default().to_string();
        if !seen.insert(file.clone()) {
            return Err(Error::Data(format!("duplicate filename '{file}'")));
        }
        let mut vals = Vec::with_capacity(ATTR_COUNT);
        for i in &keep {
            let raw = row.get(i + 1).unwrap_or_default();
            let v: i32 = raw
                .parse()
                .map_err(|_| Error::Data(format!("row {}: bad value '{raw}'", line + 2)))?;
            vals.push(v);
        }
        let attrs = AttributeVector::from_pm1(&vals)?;
        if opts.check_images {
            let path = image_root.join(&file);
            let (w, h) = imageio::image_dims(&path)?;
            if w != opts.hr_side || h != opts.hr_side {
                return Err(Error::Data(format!(
                    "{}: expected {side}x{side} image, got {w}x{h}",
                    path.display(),
                    side = opts.hr_side,
                )));
            }
        }
        records.push(ManifestRecord { file, attrs });
    }
    Ok(DatasetManifest {
        root: image_root.to_path_buf(),
        split: opts.split.clone(),
        hr_side: opts.hr_side,
        scale: opts.scale,
        attr_names: kept_names,
        records,
    })
}

/// Writes a manifest back to CSV in the same +-1 format (unknown attributes
/// are written as -1).
pub fn save_manifest(manifest: &DatasetManifest, csv_path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(csv_path)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", csv_path.display())))?;
    let mut header = vec!["filename".to_string()];
    header.extend(manifest.attr_names.iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| Error::Data(format!("csv write: {e}")))?;
    for rec in &manifest.records {
        let mut row = vec![rec.file.clone()];
        for v in rec.attrs.values() {
            row.push(if *v >= 0.5 { "1".into() } else { "-1".into() });
        }
        writer
            .write_record(&row)
            .map_err(|e| Error::Data(format!("csv write: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::Data(format!("csv flush: {e}")))?;
    Ok(())
}
