//! Grayscale corpora on disk, area resampling and the synthetic dead-leaves
//! generator used for desk-scale runs.

use std::fmt;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, IoContext, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn from_gray(id: impl Into<String>, gray: &GrayImage) -> Self {
        Self {
            id: id.into(),
            rows: gray.height() as usize,
            cols: gray.width() as usize,
            pixels: gray.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    /// Area-average resampling to `rows × cols`: each output pixel is the mean
    /// of the source over its footprint, with fractional pixel weights.
    pub fn resample(&self, rows: usize, cols: usize) -> Image {
        let wr = area_weights(self.rows, rows);
        let wc = area_weights(self.cols, cols);
        let src = DMatrix::from_row_slice(self.rows, self.cols, &self.pixels);
        let out = wr * src * wc.transpose();
        Image {
            id: self.id.clone(),
            rows,
            cols,
            pixels: (0..rows)
                .flat_map(|r| (0..cols).map(move |c| (r, c)))
                .map(|(r, c)| out[(r, c)])
                .collect(),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        let raw = self
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        GrayImage::from_raw(self.cols as u32, self.rows as u32, raw).expect("buffer matches dimensions")
    }
}

/// `to × from` matrix whose row `i` averages the source interval
/// `[i·from/to, (i+1)·from/to)`.
fn area_weights(from: usize, to: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(to, from);
    let scale = from as f64 / to as f64;
    for i in 0..to {
        let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
        let first = lo.floor() as usize;
        let last = (hi.ceil() as usize).min(from);
        for j in first..last {
            let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
            w[(i, j)] = overlap / scale;
        }
    }
    w
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub split: Split,
    pub images: Vec<Image>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["pgm", "pnm", "png", "ppm"];

impl Corpus {
    /// Loads every PGM/PNG file directly under `dir`, ordered by file name.
    pub fn load(dir: &Path, split: Split) -> Result<Self> {
        let mut paths = Vec::new();
        for entry in std::fs::read_dir(dir).at(dir)? {
            let path = entry.at(dir)?.path();
            let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
                paths.push(path);
            }
        }
        paths.sort();
        if paths.is_empty() {
            return Err(HarnessError::Corpus {
                path: dir.to_path_buf(),
                reason: "no PGM or PNG images".into(),
            });
        }
        let mut images = Vec::with_capacity(paths.len());
        for path in paths {
            let gray = image::open(&path)
                .map_err(|source| HarnessError::Image {
                    path: path.clone(),
                    source,
                })?
                .to_luma8();
            let id = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            images.push(Image::from_gray(id, &gray));
        }
        Ok(Self {
            root: dir.to_path_buf(),
            split,
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Each image area-averaged down to a single `side × side` block.
    pub fn downsampled_blocks(&self, side: usize) -> Vec<Vec<f64>> {
        self.images.iter().map(|im| im.resample(side, side).pixels).collect()
    }

    pub fn expect_split(&self, split: Split) -> Result<()> {
        if self.split == split {
            Ok(())
        } else {
            Err(HarnessError::Hygiene(format!(
                "{} corpus used where a {split} corpus is required",
                self.split
            )))
        }
    }
}

/// Fails when the two corpora share a directory or an image id.
pub fn check_disjoint(train: &Corpus, test: &Corpus) -> Result<()> {
    train.expect_split(Split::Train)?;
    test.expect_split(Split::Test)?;
    let same_root = match (train.root.canonicalize(), test.root.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => train.root == test.root,
    };
    if same_root {
        return Err(HarnessError::Hygiene(format!(
            "train and test both read {}",
            train.root.display()
        )));
    }
    if let Some(shared) = train.images.iter().find(|a| test.images.iter().any(|b| b.id == a.id)) {
        return Err(HarnessError::Hygiene(format!(
            "image {} appears in both splits",
            shared.id
        )));
    }
    Ok(())
}

/// Binary (`P5`) graymap.
pub fn write_pgm(path: &Path, gray: &GrayImage) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path).at(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(gray.as_raw(), gray.width(), gray.height(), ExtendedColorType::L8)
        .map_err(|source| HarnessError::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn save_pgm(image: &Image, path: &Path) -> Result<()> {
    write_pgm(path, &image.to_gray())
}

/// Dead-leaves image: occluding discs and squares with radius density `∝ r⁻³`
/// on `[0.5, side/2]` over a uniform background, plus ±0.01 uniform noise,
/// quantised to 8 bits.
pub fn dead_leaves<R: Rng>(rng: &mut R, side: usize) -> Vec<f64> {
    let s = side as f64;
    let mut v = vec![rng.random_range(0.0..1.0); side * side];
    let (rmin, rmax) = (0.5f64, s / 2.0);
    let (a, b) = (1.0 / (rmin * rmin), 1.0 / (rmax * rmax));
    for _ in 0..(side * side / 4).max(50) {
        let u: f64 = rng.random_range(0.0..1.0);
        let r = 1.0 / (a - u * (a - b)).sqrt();
        let (cr, cc): (f64, f64) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        let value: f64 = rng.random_range(0.0..1.0);
        let square = rng.random_bool(0.5);
        let (r0, r1) = ((cr - r).floor().max(0.0) as usize, (cr + r).ceil().min(s) as usize);
        let (c0, c1) = ((cc - r).floor().max(0.0) as usize, (cc + r).ceil().min(s) as usize);
        for y in r0..r1 {
            for x in c0..c1 {
                let (dy, dx) = (y as f64 + 0.5 - cr, x as f64 + 0.5 - cc);
                if square || dy * dy + dx * dx <= r * r {
                    v[y * side + x] = value;
                }
            }
        }
    }
    v.iter()
        .map(|x| ((x + rng.random_range(-0.01..0.01)).clamp(0.0, 1.0) * 255.0).round() / 255.0)
        .collect()
}

/// In-memory dead-leaves corpus; ids are `dl_<seed>_<index>.pgm`.
pub fn synthetic_corpus(count: usize, side: usize, seed: u64, split: Split) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..count)
        .map(|i| Image {
            id: format!("dl_{seed}_{i:05}.pgm"),
            rows: side,
            cols: side,
            pixels: dead_leaves(&mut rng, side),
        })
        .collect();
    Corpus {
        root: PathBuf::from(format!("synthetic-{split}-{seed}")),
        split,
        images,
    }
}

/// Writes a synthetic corpus of `count` images to `dir`.
pub fn write_synthetic_corpus(dir: &Path, count: usize, side: usize, seed: u64, split: Split) -> Result<Corpus> {
    std::fs::create_dir_all(dir).at(dir)?;
    let mut corpus = synthetic_corpus(count, side, seed, split);
    for im in &corpus.images {
        save_pgm(im, &dir.join(&im.id))?;
    }
    corpus.root = dir.to_path_buf();
    Ok(corpus)
}
