//! Image datasets, the train/validation/calibration split, the synthetic
//! task generator, and the LASD / CSV codecs.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LasError, Result};
use crate::nn::{Scalar, Tensor};

/// Labelled 8-bit images of a common `(channels, height, width)` shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    shape: [usize; 3],
    pixels: Vec<u8>,
    labels: Vec<u16>,
    ids: Vec<u32>,
}

impl Dataset {
    pub fn new(shape: [usize; 3], pixels: Vec<u8>, labels: Vec<u16>, ids: Vec<u32>) -> Result<Self> {
        let per = shape.iter().product::<usize>();
        if per == 0 {
            return Err(LasError::shape(format!("degenerate sample shape {shape:?}")));
        }
        if pixels.len() != per * labels.len() || ids.len() != labels.len() {
            return Err(LasError::shape(format!(
                "{} pixels, {} labels and {} ids do not describe samples of shape {shape:?}",
                pixels.len(),
                labels.len(),
                ids.len()
            )));
        }
        Ok(Dataset {
            shape,
            pixels,
            labels,
            ids,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    fn sample_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn sample_pixels(&self, i: usize) -> &[u8] {
        let n = self.sample_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut pixels = Vec::with_capacity(idx.len() * self.sample_len());
        for &i in idx {
            pixels.extend_from_slice(self.sample_pixels(i));
        }
        Dataset {
            shape: self.shape,
            pixels,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Concatenate two datasets of the same shape.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.shape != other.shape {
            return Err(LasError::shape("cannot concatenate datasets of different shapes"));
        }
        let mut out = self.clone();
        out.pixels.extend_from_slice(&other.pixels);
        out.labels.extend_from_slice(&other.labels);
        out.ids.extend_from_slice(&other.ids);
        Ok(out)
    }

    pub fn max_label(&self) -> Option<u16> {
        self.labels.iter().copied().max()
    }

    /// Float batch with pixels scaled to `[0, 1]`.
    pub fn batch<T: Scalar>(&self, idx: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let [c, h, w] = self.shape;
        let scale = T::of(1.0 / 255.0);
        let mut data = Vec::with_capacity(idx.len() * self.sample_len());
        for &i in idx {
            data.extend(self.sample_pixels(i).iter().map(|&p| T::of(p as f64) * scale));
        }
        let labels = idx.iter().map(|&i| self.labels[i] as usize).collect();
        (Tensor::from_vec([idx.len(), c, h, w], data), labels)
    }

    /// Like [`Dataset::batch`], with random horizontal flips and zero-padded
    /// random crops drawn from `rng`.
    pub fn batch_augmented<T: Scalar, R: Rng>(
        &self,
        idx: &[usize],
        hflip: bool,
        pad: usize,
        rng: &mut R,
    ) -> (Tensor<T>, Vec<usize>) {
        let (mut x, labels) = self.batch::<T>(idx);
        if !hflip && pad == 0 {
            return (x, labels);
        }
        let [c, h, w] = self.shape;
        for i in 0..idx.len() {
            let flip = hflip && rng.gen::<bool>();
            let (dy, dx) = if pad > 0 {
                (
                    rng.gen_range(0..=2 * pad) as isize - pad as isize,
                    rng.gen_range(0..=2 * pad) as isize - pad as isize,
                )
            } else {
                (0, 0)
            };
            let src = x.sample(i).to_vec();
            let dst = x.sample_mut(i);
            for ch in 0..c {
                for y in 0..h {
                    for xo in 0..w {
                        let sy = y as isize + dy;
                        let sx0 = xo as isize + dx;
                        let sx = if flip { w as isize - 1 - sx0 } else { sx0 };
                        let v = if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                            T::zero()
                        } else {
                            src[(ch * h + sy as usize) * w + sx as usize]
                        };
                        dst[(ch * h + y) * w + xo] = v;
                    }
                }
            }
        }
        (x, labels)
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for d in self.shape {
            h.update((d as u64).to_le_bytes());
        }
        h.update(&self.pixels);
        for l in &self.labels {
            h.update(l.to_le_bytes());
        }
        for id in &self.ids {
            h.update(id.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Training (`D_t`), validation (`D_v`) and BN-calibration (`D_s`) sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Dataset,
    pub val: Dataset,
    pub calib: Dataset,
}

/// Calibration subset policy: `min(size, train / 5)` samples drawn from the
/// training pool with `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibSpec {
    pub size: usize,
    pub seed: u64,
}

impl Default for CalibSpec {
    fn default() -> Self {
        CalibSpec { size: 1000, seed: 0 }
    }
}

impl DatasetSplit {
    /// Split a pool positionally: the first four fifths train, the rest validate.
    pub fn from_pool(pool: &Dataset, calib: CalibSpec) -> Result<Self> {
        if pool.len() < 5 {
            return Err(LasError::domain(format!(
                "need at least 5 samples to split, got {}",
                pool.len()
            )));
        }
        let cut = pool.len() * 4 / 5;
        let train_idx: Vec<usize> = (0..cut).collect();
        let val_idx: Vec<usize> = (cut..pool.len()).collect();
        let train = pool.subset(&train_idx);
        let val = pool.subset(&val_idx);
        let calib = calibration_subset(&train, calib);
        Ok(DatasetSplit { train, val, calib })
    }

    /// Train followed by validation samples, the order `from_pool` expects.
    pub fn pool(&self) -> Dataset {
        self.train.concat(&self.val).expect("split shares one shape")
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let train_ids: std::collections::HashSet<u32> = self.train.ids().iter().copied().collect();
        if self.val.ids().iter().any(|id| train_ids.contains(id)) {
            return Err(LasError::domain("train and validation sets overlap"));
        }
        if self.calib.ids().iter().any(|id| !train_ids.contains(id)) {
            return Err(LasError::domain("calibration samples must come from the training pool"));
        }
        for (name, ds) in [("train", &self.train), ("val", &self.val), ("calib", &self.calib)] {
            if let Some(max) = ds.max_label() {
                if max as usize >= num_classes {
                    return Err(LasError::domain(format!(
                        "{name} label {max} out of range for {num_classes} classes"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.train.digest());
        h.update(self.val.digest());
        h.update(self.calib.digest());
        h.finalize().into()
    }
}

pub fn calibration_subset(train: &Dataset, spec: CalibSpec) -> Dataset {
    let size = spec.size.min(train.len() / 5).max(1).min(train.len());
    let mut idx: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xCA11_B5A7);
    idx.shuffle(&mut rng);
    idx.truncate(size);
    idx.sort_unstable();
    train.subset(&idx)
}

/// Parameters of a synthetic classification task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTask {
    pub seed: u64,
    pub num_classes: usize,
    pub samples_per_class: usize,
    /// `(channels, height, width)`.
    pub shape: [usize; 3],
    /// Standard deviation of additive pixel noise, in units of full scale.
    #[serde(default)]
    pub noise: f64,
    /// Maximum random translation in pixels (wrap-around).
    #[serde(default)]
    pub max_shift: usize,
    /// Weight of a random other-class template blended into each sample.
    #[serde(default)]
    pub distractor: f64,
}

impl SyntheticTask {
    pub fn new(seed: u64, num_classes: usize, samples_per_class: usize, shape: [usize; 3]) -> Self {
        SyntheticTask {
            seed,
            num_classes,
            samples_per_class,
            shape,
            noise: 0.0,
            max_shift: 0,
            distractor: 0.0,
        }
    }
}

/// Per-class template images in `[0, 255]`, one `c*h*w` vector per class.
pub fn class_templates(task: &SyntheticTask) -> Vec<Vec<f64>> {
    let [c, h, w] = task.shape;
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
    (0..task.num_classes)
        .map(|_| {
            let mut img = vec![0.0f64; c * h * w];
            for ch in 0..c {
                let plane = &mut img[ch * h * w..(ch + 1) * h * w];
                // Low-frequency gratings give the coarse layout.
                for _ in 0..3 {
                    let fy = rng.gen_range(-3i32..=3) as f64;
                    let fx = rng.gen_range(-3i32..=3) as f64;
                    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                    let amp = rng.gen_range(15.0..40.0);
                    for y in 0..h {
                        for x in 0..w {
                            let t = std::f64::consts::TAU * (fy * y as f64 / h as f64 + fx * x as f64 / w as f64);
                            plane[y * w + x] += amp * (t + phase).cos();
                        }
                    }
                }
                // A few sharp blobs carry fine detail.
                for _ in 0..3 {
                    let cy = rng.gen_range(0.0..h as f64);
                    let cx = rng.gen_range(0.0..w as f64);
                    let r = rng.gen_range(1.0..(h.min(w) as f64 / 6.0).max(1.5));
                    let amp = rng.gen_range(-70.0..70.0);
                    for y in 0..h {
                        for x in 0..w {
                            let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                            plane[y * w + x] += amp * (-d2 / (2.0 * r * r)).exp();
                        }
                    }
                }
            }
            img.iter().map(|v| (v + 128.0).clamp(0.0, 255.0)).collect()
        })
        .collect()
}

/// Generate the full sample pool. Samples are interleaved by class so that any
/// positional split stays stratified.
pub fn generate_pool(task: &SyntheticTask) -> Result<Dataset> {
    let [c, h, w] = task.shape;
    if c == 0 || h == 0 || w == 0 {
        return Err(LasError::shape(format!("invalid image shape {:?}", task.shape)));
    }
    if task.num_classes < 2 || task.num_classes > u16::MAX as usize {
        return Err(LasError::domain("need between 2 and 65535 classes"));
    }
    if task.samples_per_class == 0 {
        return Err(LasError::domain("samples_per_class must be >= 1"));
    }
    let templates = class_templates(task);
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed.wrapping_add(0x5A3D_17E5));
    let total = task.num_classes * task.samples_per_class;
    let mut pixels = Vec::with_capacity(total * c * h * w);
    let mut labels = Vec::with_capacity(total);
    let mut img = vec![0.0f64; c * h * w];
    for _ in 0..task.samples_per_class {
        for (class, tpl) in templates.iter().enumerate() {
            let s = task.max_shift as isize;
            let (sy, sx) = if s > 0 {
                (rng.gen_range(-s..=s), rng.gen_range(-s..=s))
            } else {
                (0, 0)
            };
            let other = if task.distractor > 0.0 {
                let o = rng.gen_range(0..task.num_classes - 1);
                Some(if o >= class { o + 1 } else { o })
            } else {
                None
            };
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let yy = (y as isize - sy).rem_euclid(h as isize) as usize;
                        let xx = (x as isize - sx).rem_euclid(w as isize) as usize;
                        let src = (ch * h + yy) * w + xx;
                        let mut v = tpl[src];
                        if let Some(o) = other {
                            v = (1.0 - task.distractor) * v + task.distractor * templates[o][src];
                        }
                        img[(ch * h + y) * w + x] = v;
                    }
                }
            }
            for v in img.iter_mut() {
                if task.noise > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += z * task.noise * 255.0;
                }
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
            labels.push(class as u16);
        }
    }
    let ids = (0..total as u32).collect();
    Dataset::new(task.shape, pixels, labels, ids)
}

/// Deterministic synthetic stand-in for an image benchmark.
pub fn generate_synthetic_task(task: &SyntheticTask, calib: CalibSpec) -> Result<DatasetSplit> {
    DatasetSplit::from_pool(&generate_pool(task)?, calib)
}

/// On-disk dataset encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Lasd,
    Csv,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DataFormat::Csv,
            _ => DataFormat::Lasd,
        }
    }
}

const LASD_MAGIC: &[u8; 4] = b"LASD";
const LABEL_MAGIC: &[u8; 4] = b"LABL";
const LASD_VERSION: u8 = 1;

/// Encode a pool as LASD: magic, version, dtype, ndim, `u32` dims, pixels,
/// then `LABL`, a `u32` count and `u16` labels, all little-endian.
pub fn encode_lasd(ds: &Dataset) -> Vec<u8> {
    let [c, h, w] = ds.shape();
    let mut out = Vec::with_capacity(4 + 3 + 16 + ds.pixels().len() + 8 + 2 * ds.len());
    out.extend_from_slice(LASD_MAGIC);
    out.push(LASD_VERSION);
    out.push(0);
    out.push(4);
    for d in [ds.len(), c, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(ds.pixels());
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    for l in ds.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < self.pos + n {
            return Err(LasError::Truncated {
                what: what.to_string(),
                expected: self.pos + n,
                actual: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_lasd(bytes: &[u8], num_classes: Option<usize>) -> Result<Dataset> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "LASD header")?;
    if magic != LASD_MAGIC {
        return Err(LasError::format(format!("bad magic {magic:?}, expected \"LASD\"")));
    }
    let version = r.u8("LASD header")?;
    if version != LASD_VERSION {
        return Err(LasError::format(format!(
            "unsupported LASD version {version}, expected {LASD_VERSION}"
        )));
    }
    let dtype = r.u8("LASD header")?;
    if dtype != 0 {
        return Err(LasError::format(format!("unsupported dtype {dtype}, expected 0 (u8)")));
    }
    let ndim = r.u8("LASD header")? as usize;
    if ndim != 4 {
        return Err(LasError::format(format!("expected 4 dims (N, C, H, W), found {ndim}")));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = r.u32("LASD dims")? as usize;
    }
    let [n, c, h, w] = dims;
    let pixels = r.take(n * c * h * w, "pixel payload")?.to_vec();
    let magic = r.take(4, "label block")?;
    if magic != LABEL_MAGIC {
        return Err(LasError::format(format!("bad label magic {magic:?}, expected \"LABL\"")));
    }
    let count = r.u32("label block")? as usize;
    if count != n {
        return Err(LasError::format(format!("label count {count} does not match {n} samples")));
    }
    let raw = r.take(2 * count, "labels")?;
    let labels: Vec<u16> = raw
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    if r.pos != bytes.len() {
        return Err(LasError::format(format!(
            "{} trailing bytes after label block",
            bytes.len() - r.pos
        )));
    }
    check_labels(&labels, num_classes)?;
    Dataset::new([c, h, w], pixels, labels, (0..n as u32).collect())
}

fn check_labels(labels: &[u16], num_classes: Option<usize>) -> Result<()> {
    if let Some(k) = num_classes {
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= k) {
            return Err(LasError::format(format!(
                "label {l} of sample {i} out of range for {k} classes"
            )));
        }
    }
    Ok(())
}

/// CSV encoding: a `dims,C,H,W` header line, then `label,pixel,...` rows.
pub fn encode_csv(ds: &Dataset) -> String {
    let [c, h, w] = ds.shape();
    let mut out = format!("dims,{c},{h},{w}\n");
    for i in 0..ds.len() {
        out.push_str(&ds.labels()[i].to_string());
        for p in ds.sample_pixels(i) {
            out.push(',');
            out.push_str(&p.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn decode_csv(text: &str, num_classes: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| LasError::format("empty CSV dataset"))??;
    if header.get(0) != Some("dims") || header.len() != 4 {
        return Err(LasError::format("CSV header must be `dims,C,H,W`"));
    }
    let mut shape = [0usize; 3];
    for (i, d) in shape.iter_mut().enumerate() {
        *d = header[i + 1]
            .trim()
            .parse()
            .map_err(|_| LasError::format(format!("bad dimension {:?}", &header[i + 1])))?;
    }
    let per: usize = shape.iter().product();
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != per + 1 {
            return Err(LasError::format(format!(
                "row {} has {} pixel values, expected {per}",
                row + 1,
                rec.len().saturating_sub(1)
            )));
        }
        let label: u16 = rec[0]
            .trim()
            .parse()
            .map_err(|_| LasError::format(format!("row {}: bad label {:?}", row + 1, &rec[0])))?;
        labels.push(label);
        for v in rec.iter().skip(1) {
            pixels.push(
                v.trim()
                    .parse::<u8>()
                    .map_err(|_| LasError::format(format!("row {}: bad pixel {v:?}", row + 1)))?,
            );
        }
    }
    check_labels(&labels, num_classes)?;
    let n = labels.len() as u32;
    Dataset::new(shape, pixels, labels, (0..n).collect())
}

pub fn write_dataset(path: &Path, ds: &Dataset, format: DataFormat) -> Result<()> {
    let mut f = fs::File::create(path)?;
    match format {
        DataFormat::Lasd => f.write_all(&encode_lasd(ds))?,
        DataFormat::Csv => f.write_all(encode_csv(ds).as_bytes())?,
    }
    Ok(())
}

/// Load a pool from disk and split it; see [`DatasetSplit::from_pool`].
pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    num_classes: Option<usize>,
    calib: CalibSpec,
) -> Result<DatasetSplit> {
    let pool = match format {
        DataFormat::Lasd => decode_lasd(&fs::read(path)?, num_classes)?,
        DataFormat::Csv => decode_csv(&fs::read_to_string(path)?, num_classes)?,
    };
    DatasetSplit::from_pool(&pool, calib)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> SyntheticTask {
        SyntheticTask::new(3, 4, 10, [2, 8, 8])
    }

    #[test]
    fn noiseless_task_is_solved_by_nearest_template() {
        let t = task();
        let pool = generate_pool(&t).unwrap();
        let templates: Vec<Vec<u8>> = class_templates(&t)
            .iter()
            .map(|tpl| tpl.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect())
            .collect();
        let correct = (0..pool.len())
            .filter(|&i| {
                let s = pool.sample_pixels(i);
                let best = (0..templates.len())
                    .min_by_key(|&k| {
                        s.iter()
                            .zip(&templates[k])
                            .map(|(&a, &b)| (a as i64 - b as i64).pow(2))
                            .sum::<i64>()
                    })
                    .unwrap();
                best == pool.labels()[i] as usize
            })
            .count();
        assert_eq!(correct, pool.len());
    }

    #[test]
    fn generation_is_deterministic() {
        let mut t = task();
        t.noise = 0.1;
        t.max_shift = 2;
        let a = generate_synthetic_task(&t, CalibSpec::default()).unwrap();
        let b = generate_synthetic_task(&t, CalibSpec::default()).unwrap();
        assert_eq!(encode_lasd(&a.pool()), encode_lasd(&b.pool()));
        assert_eq!(a.train.len(), 32);
        assert_eq!(a.val.len(), 8);
        a.validate(4).unwrap();
    }

    #[test]
    fn lasd_round_trip_and_truncation() {
        let split = generate_synthetic_task(&task(), CalibSpec { size: 3, seed: 9 }).unwrap();
        let bytes = encode_lasd(&split.pool());
        let back = DatasetSplit::from_pool(&decode_lasd(&bytes, Some(4)).unwrap(), CalibSpec { size: 3, seed: 9 }).unwrap();
        assert_eq!(back.digest(), split.digest());

        let err = decode_lasd(&bytes[..bytes.len() - 7], Some(4)).unwrap_err();
        match err {
            LasError::Truncated { expected, actual, .. } => {
                assert_eq!(expected, bytes.len());
                assert_eq!(actual, bytes.len() - 7);
            }
            other => panic!("unexpected {other}"),
        }
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(decode_lasd(&bad, None).unwrap_err().to_string().contains("version"));
        bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_lasd(&bad, None).unwrap_err().to_string().contains("magic"));
        assert!(decode_lasd(&bytes, Some(3)).unwrap_err().to_string().contains("out of range"));
    }

    #[test]
    fn csv_matches_lasd() {
        let pool = generate_pool(&task()).unwrap();
        let from_csv = decode_csv(&encode_csv(&pool), Some(4)).unwrap();
        let from_lasd = decode_lasd(&encode_lasd(&pool), Some(4)).unwrap();
        assert_eq!(from_csv, from_lasd);
        assert_eq!(from_csv, pool);
    }

    #[test]
    fn calibration_is_capped_and_drawn_from_train() {
        let split = generate_synthetic_task(&task(), CalibSpec { size: 1000, seed: 1 }).unwrap();
        assert_eq!(split.calib.len(), split.train.len() / 5);
        split.validate(4).unwrap();
    }
}
