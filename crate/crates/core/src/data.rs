//! Datasets: PGM ingestion, seeded splits and synthetic generators.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::forward;
use crate::params::WeightSet;
use crate::topology::DagTopology;

/// Name of the file order listing written next to exported images.
pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Full,
    Train,
    Test,
}

/// Equal-length sample vectors, optionally flattened row-major images.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Vec<f64>>,
    image_shape: Option<(usize, usize)>,
    split: Split,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Vec<Vec<f64>>, image_shape: Option<(usize, usize)>) -> Result<Self> {
        let names = (0..samples.len()).map(|i| format!("{i:04}")).collect();
        Self::with_names(samples, image_shape, names)
    }

    pub fn with_names(
        samples: Vec<Vec<f64>>,
        image_shape: Option<(usize, usize)>,
        names: Vec<String>,
    ) -> Result<Self> {
        if names.len() != samples.len() {
            return Err(Error::DimensionMismatch {
                what: "sample names",
                expected: samples.len(),
                found: names.len(),
            });
        }
        if let Some(first) = samples.first() {
            if let Some(s) = samples.iter().find(|s| s.len() != first.len()) {
                return Err(Error::DimensionMismatch {
                    what: "sample length",
                    expected: first.len(),
                    found: s.len(),
                });
            }
            if let Some((rows, cols)) = image_shape {
                if rows * cols != first.len() {
                    return Err(Error::DimensionMismatch {
                        what: "image size",
                        expected: first.len(),
                        found: rows * cols,
                    });
                }
            }
        }
        Ok(Self {
            samples,
            image_shape,
            split: Split::Full,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample length, or `None` for an empty dataset without an image shape.
    pub fn dim(&self) -> Option<usize> {
        self.samples
            .first()
            .map(Vec::len)
            .or(self.image_shape.map(|(r, c)| r * c))
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Sample `i` as an image matrix.
    pub fn image(&self, i: usize) -> Option<Matrix> {
        let (rows, cols) = self.image_shape?;
        Some(Matrix::from_vec(rows, cols, self.samples.get(i)?.clone()))
    }

    /// Seeded shuffle, then the first `train_count` samples become the
    /// training set and the rest the test set.
    pub fn split_train_test(&self, train_count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if train_count >= self.len() {
            return Err(Error::CountTooLarge {
                requested: train_count,
                available: self.len(),
            });
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pick = |idx: &[usize], split: Split| Dataset {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            image_shape: self.image_shape,
            split,
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
        };
        let (train, test) = order.split_at(train_count);
        Ok((pick(train, Split::Train), pick(test, Split::Test)))
    }

    /// Writes every sample as an 8-bit binary PGM plus a manifest of the file
    /// order. Requires an image shape.
    pub fn write_pgm_directory(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let (rows, cols) = self
            .image_shape
            .ok_or_else(|| Error::Config("dataset has no image shape".into()))?;
        fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.len());
        for (sample, name) in self.samples.iter().zip(&self.names) {
            let path = dir.join(format!("{name}.pgm"));
            Pgm::from_unit(rows, cols, sample, 255).write_to(&path, PgmFormat::Binary)?;
            paths.push(path);
        }
        write_manifest(dir.join(MANIFEST_NAME), &paths)?;
        Ok(paths)
    }
}

/// Writes one file name per line.
pub fn write_manifest(path: impl AsRef<Path>, files: &[PathBuf]) -> Result<()> {
    let mut text = String::new();
    for f in files {
        let name = f.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
        text.push_str(&name);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// `P2`
    Ascii,
    /// `P5`
    Binary,
}

/// A portable graymap with raw integer samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub rows: usize,
    pub cols: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok().filter(|t| !t.is_empty())
    }
}

impl Pgm {
    /// Quantizes values in `[0, 1]` (clamped) to `0..=maxval`.
    pub fn from_unit(rows: usize, cols: usize, values: &[f64], maxval: u16) -> Self {
        let m = f64::from(maxval);
        Self {
            rows,
            cols,
            maxval,
            pixels: values.iter().map(|v| (v.clamp(0.0, 1.0) * m).round() as u16).collect(),
        }
    }

    /// Pixels divided by `maxval`.
    pub fn to_unit(&self) -> Vec<f64> {
        let m = f64::from(self.maxval);
        self.pixels.iter().map(|&p| f64::from(p) / m).collect()
    }

    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut cur = Cursor { bytes, pos: 0 };
        let format = match cur.token() {
            Some("P2") => PgmFormat::Ascii,
            Some("P5") => PgmFormat::Binary,
            _ => return Err(bad("missing P2/P5 magic number")),
        };
        let mut number = |what: &str| -> Result<usize> {
            cur.token()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| bad(&format!("invalid {what}")))
        };
        let cols = number("width")?;
        let rows = number("height")?;
        let maxval = number("maxval")?;
        if maxval == 0 {
            return Err(Error::MaxvalZero(path.to_path_buf()));
        }
        if maxval > 65535 {
            return Err(bad("maxval above 65535"));
        }
        if rows == 0 || cols == 0 {
            return Err(bad("zero image dimension"));
        }
        let n = rows * cols;
        let pixels = match format {
            PgmFormat::Ascii => {
                let mut px = Vec::with_capacity(n);
                for _ in 0..n {
                    let v = cur
                        .token()
                        .and_then(|t| t.parse::<u32>().ok())
                        .ok_or_else(|| bad("truncated or invalid pixel data"))?;
                    if v as usize > maxval {
                        return Err(bad("pixel exceeds maxval"));
                    }
                    px.push(v as u16);
                }
                px
            }
            PgmFormat::Binary => {
                // exactly one whitespace byte separates maxval from the raster
                let start = cur.pos + 1;
                let width = if maxval < 256 { 1 } else { 2 };
                let raster = bytes
                    .get(start..start + n * width)
                    .ok_or_else(|| bad("truncated pixel data"))?;
                let px: Vec<u16> = if width == 1 {
                    raster.iter().map(|&b| u16::from(b)).collect()
                } else {
                    raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
                };
                if px.iter().any(|&p| p as usize > maxval) {
                    return Err(bad("pixel exceeds maxval"));
                }
                px
            }
        };
        Ok(Self {
            rows,
            cols,
            maxval: maxval as u16,
            pixels,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read(path)?, path)
    }

    pub fn to_bytes(&self, format: PgmFormat) -> Vec<u8> {
        let magic = match format {
            PgmFormat::Ascii => "P2",
            PgmFormat::Binary => "P5",
        };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.cols, self.rows, self.maxval).into_bytes();
        match format {
            PgmFormat::Ascii => {
                for row in self.pixels.chunks(self.cols) {
                    let line: Vec<String> = row.iter().map(u16::to_string).collect();
                    out.extend_from_slice(line.join(" ").as_bytes());
                    out.push(b'\n');
                }
            }
            PgmFormat::Binary => {
                for &p in &self.pixels {
                    if self.maxval < 256 {
                        out.push(p as u8);
                    } else {
                        out.extend_from_slice(&p.to_be_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn write_to(&self, path: impl AsRef<Path>, format: PgmFormat) -> Result<()> {
        fs::write(path, self.to_bytes(format))?;
        Ok(())
    }
}

/// Loads every `.pgm` file in `dir`, in file-name order, scaled to `[0, 1]`.
pub fn load_pgm_directory(dir: impl AsRef<Path>) -> Result<Dataset> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let mut shape = None;
    let mut samples = Vec::with_capacity(files.len());
    let mut names = Vec::with_capacity(files.len());
    for path in &files {
        let img = Pgm::read(path)?;
        let found = (img.rows, img.cols);
        match shape {
            None => shape = Some(found),
            Some(expected) if expected != found => {
                return Err(Error::InconsistentDimensions {
                    path: path.clone(),
                    expected,
                    found,
                })
            }
            Some(_) => {}
        }
        samples.push(img.to_unit());
        names.push(
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    Dataset::with_names(samples, shape, names)
}

/// Smooth images built from a few random 2-d Gaussian bumps, each rescaled to
/// span exactly `[0, 1]`.
pub fn synthetic_faces(count: usize, rows: usize, cols: usize, seed: u64) -> Result<Dataset> {
    if rows < 8 || cols < 8 {
        return Err(Error::DomainError(format!(
            "synthetic images must be at least 8x8, got {rows}x{cols}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fr, fc) = (rows as f64, cols as f64);
    let mut samples = Vec::with_capacity(count);
    while samples.len() < count {
        let bumps: Vec<(f64, f64, f64, f64, f64)> = (0..rng.gen_range(3..=5))
            .map(|_| {
                let amplitude = rng.gen_range(0.3..1.0) * if rng.gen_bool(0.75) { 1.0 } else { -1.0 };
                (
                    rng.gen_range(0.15 * fr..0.85 * fr),
                    rng.gen_range(0.15 * fc..0.85 * fc),
                    rng.gen_range(0.08 * fr..0.3 * fr),
                    rng.gen_range(0.08 * fc..0.3 * fc),
                    amplitude,
                )
            })
            .collect();
        let mut img = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let v: f64 = bumps
                    .iter()
                    .map(|&(cr, cc, sr, sc, a)| {
                        let (dr, dc) = ((r as f64 - cr) / sr, (c as f64 - cc) / sc);
                        a * (-0.5 * (dr * dr + dc * dc)).exp()
                    })
                    .sum();
                img.push(v);
            }
        }
        let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-6 {
            continue;
        }
        samples.push(img.into_iter().map(|v| (v - lo) / (hi - lo)).collect());
    }
    Dataset::new(samples, Some((rows, cols)))
}

/// Inputs paired with targets, for supervised training.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

/// Uniform inputs in `[-1, 1]` labelled by a random teacher network of the
/// given topology, so an exact fit exists.
pub fn teacher_regression(
    topology: &DagTopology,
    activation: Activation,
    count: usize,
    weight_scale: f64,
    seed: u64,
) -> Result<Regression> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teacher = WeightSet::random(topology, weight_scale, &mut rng);
    let inputs: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..topology.input_width()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let targets = inputs
        .iter()
        .map(|x| Ok(forward(topology, &teacher, activation, x)?.output().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Regression { inputs, targets })
}
