//! Small labelled datasets: generators, CSV files and IDX ingest.
//!
//! CSV rows are `label,feature,feature,...` with an integer label; a header
//! line is allowed and skipped when its first field is not an integer.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LnsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(LnsError::EmptyDataset);
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(LnsError::Dataset(format!(
                "{} features for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(x) = features.iter().find(|x| !x.is_finite()) {
            return Err(LnsError::Dataset(format!("non-finite feature {x}")));
        }
        Ok(Dataset {
            features,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Features and labels of the given samples, in order.
    pub fn gather(&self, idx: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.sample(i));
            y.push(self.labels[i]);
        }
        (x, y)
    }

    fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let (x, y) = self.gather(idx);
        Dataset::new(x, y, self.dim)
    }

    /// Shuffles with `seed` and holds out `round(test_fraction * n)` samples.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
            return Err(LnsError::Config(format!(
                "test fraction {test_fraction} outside (0, 1)"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test =
            ((self.len() as f64 * test_fraction).round() as usize).clamp(1, self.len() - 1);
        let (test, train) = idx.split_at(n_test);
        Ok((self.subset(train)?, self.subset(test)?))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.len() {
            write!(s, "{}", self.labels[i]).unwrap();
            for x in self.sample(i) {
                write!(s, ",{x}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Dataset> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut dim = None;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let Ok(label) = fields[0].parse::<usize>() else {
                if labels.is_empty() && dim.is_none() && fields[0].parse::<f64>().is_err() {
                    // header
                    continue;
                }
                return Err(LnsError::DatasetRow {
                    line: line_no,
                    msg: format!("label {:?} is not a non-negative integer", fields[0]),
                });
            };
            let width = fields.len() - 1;
            match dim {
                None if width == 0 => {
                    return Err(LnsError::DatasetRow {
                        line: line_no,
                        msg: "row has no features".into(),
                    })
                }
                None => dim = Some(width),
                Some(d) if d != width => {
                    return Err(LnsError::DatasetRow {
                        line: line_no,
                        msg: format!("expected {} columns, found {}", d + 1, fields.len()),
                    })
                }
                _ => {}
            }
            for f in &fields[1..] {
                let x: f64 = f.parse().map_err(|_| LnsError::DatasetRow {
                    line: line_no,
                    msg: format!("feature {f:?} is not a number"),
                })?;
                if !x.is_finite() {
                    return Err(LnsError::DatasetRow {
                        line: line_no,
                        msg: format!("feature {f:?} is not finite"),
                    });
                }
                features.push(x);
            }
            labels.push(label);
        }
        Dataset::new(features, labels, dim.unwrap_or(0))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        Dataset::from_csv(&fs::read_to_string(path)?)
    }
}

/// Two interleaved half circles, half the samples per class, with Gaussian
/// noise of standard deviation `noise`. Samples are shuffled.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(LnsError::Config(
            "two_moons needs at least 2 samples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let mut pts: Vec<([f64; 2], usize)> = Vec::with_capacity(n);
    let t = |i: usize, m: usize| {
        if m <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (m - 1) as f64
        }
    };
    for i in 0..n_outer {
        let a = t(i, n_outer);
        pts.push(([a.cos(), a.sin()], 0));
    }
    for i in 0..n_inner {
        let a = t(i, n_inner);
        pts.push(([1.0 - a.cos(), 0.5 - a.sin()], 1));
    }
    add_noise(&mut pts, noise, &mut rng)?;
    pts.shuffle(&mut rng);
    collect(pts)
}

/// `centers` Gaussian clusters evenly spaced on a circle of radius 3.
pub fn blobs(n: usize, centers: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || centers < 2 {
        return Err(LnsError::Config(
            "blobs needs samples and at least 2 centers".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<([f64; 2], usize)> = (0..n)
        .map(|i| {
            let k = i % centers;
            let a = std::f64::consts::TAU * k as f64 / centers as f64;
            ([3.0 * a.cos(), 3.0 * a.sin()], k)
        })
        .collect();
    add_noise(&mut pts, noise, &mut rng)?;
    pts.shuffle(&mut rng);
    collect(pts)
}

fn add_noise(pts: &mut [([f64; 2], usize)], noise: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(LnsError::Config(format!(
            "noise {noise} must be non-negative"
        )));
    }
    if noise == 0.0 {
        return Ok(());
    }
    let dist = Normal::new(0.0, noise).map_err(|e| LnsError::Config(e.to_string()))?;
    for (p, _) in pts.iter_mut() {
        p[0] += dist.sample(rng);
        p[1] += dist.sample(rng);
    }
    Ok(())
}

fn collect(pts: Vec<([f64; 2], usize)>) -> Result<Dataset> {
    let features = pts.iter().flat_map(|(p, _)| *p).collect();
    let labels = pts.iter().map(|(_, l)| *l).collect();
    Dataset::new(features, labels, 2)
}

fn idx_file(bytes: &[u8], what: &str) -> Result<(Vec<usize>, Vec<u8>)> {
    let bad = |m: String| LnsError::Dataset(format!("{what}: {m}"));
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(bad("not an IDX file".into()));
    }
    if bytes[2] != 0x08 {
        return Err(bad(format!("unsupported element type 0x{:02x}", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if ndim == 0 || bytes.len() < header {
        return Err(bad("truncated header".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let n: usize = dims.iter().product();
    if bytes.len() != header + n {
        return Err(bad(format!(
            "expected {} data bytes, found {}",
            n,
            bytes.len() - header
        )));
    }
    Ok((dims, bytes[header..].to_vec()))
}

/// Reads an IDX image file and label file (unsigned-byte data) and scales
/// pixel values min-max to `[-1, 1]`.
pub fn ingest_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (idims, pixels) = idx_file(&fs::read(images)?, "images")?;
    let (ldims, lab) = idx_file(&fs::read(labels)?, "labels")?;
    if ldims.len() != 1 || ldims[0] != idims[0] {
        return Err(LnsError::Dataset(format!(
            "{} labels for {} images",
            ldims.iter().product::<usize>(),
            idims[0]
        )));
    }
    let dim: usize = idims[1..].iter().product::<usize>().max(1);
    let feats: Vec<f64> = pixels.iter().map(|&p| p as f64).collect();
    Dataset::new(
        minmax_scale(&feats),
        lab.into_iter().map(usize::from).collect(),
        dim,
    )
}

/// Maps the global range of `xs` onto `[-1, 1]`; a constant input maps to 0.
pub fn minmax_scale(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // also catches an empty or NaN input
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return vec![0.0; xs.len()];
    }
    xs.iter()
        .map(|&x| 2.0 * (x - lo) / (hi - lo) - 1.0)
        .collect()
}

/// Where a training run gets its data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    TwoMoons {
        n: usize,
        noise: f64,
        seed: u64,
    },
    Blobs {
        n: usize,
        centers: usize,
        noise: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
}

impl DataSource {
    /// Loads or generates the data. Relative CSV paths resolve against `base`.
    pub fn load(&self, base: Option<&Path>) -> Result<Dataset> {
        match self {
            DataSource::TwoMoons { n, noise, seed } => two_moons(*n, *noise, *seed),
            DataSource::Blobs {
                n,
                centers,
                noise,
                seed,
            } => blobs(*n, *centers, *noise, *seed),
            DataSource::Csv { path } => match base {
                Some(b) if path.is_relative() => Dataset::read_csv(b.join(path)),
                _ => Dataset::read_csv(path),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seed_stable() {
        let a = two_moons(200, 0.2, 5).unwrap();
        assert_eq!(a.to_csv(), two_moons(200, 0.2, 5).unwrap().to_csv());
        assert_ne!(a.to_csv(), two_moons(200, 0.2, 6).unwrap().to_csv());
        assert_eq!(a.len(), 200);
        assert_eq!(a.labels().iter().filter(|&&l| l == 1).count(), 100);
    }

    #[test]
    fn csv_round_trip() {
        let a = blobs(30, 3, 0.5, 1).unwrap();
        let b = Dataset::from_csv(&a.to_csv()).unwrap();
        assert_eq!(a, b);
        let with_header = format!("label,x,y\n{}", a.to_csv());
        assert_eq!(Dataset::from_csv(&with_header).unwrap(), a);
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let err = Dataset::from_csv("0,1.0,2.0\n1,3.0\n").unwrap_err();
        assert!(matches!(err, LnsError::DatasetRow { line: 2, .. }), "{err}");
        let err = Dataset::from_csv("0,1.0\n1,abc\n").unwrap_err();
        assert!(matches!(err, LnsError::DatasetRow { line: 2, .. }), "{err}");
        let err = Dataset::from_csv("0,1.0\n-1,2.0\n").unwrap_err();
        assert!(matches!(err, LnsError::DatasetRow { line: 2, .. }), "{err}");
        assert!(matches!(Dataset::from_csv(""), Err(LnsError::EmptyDataset)));
    }

    #[test]
    fn split_partitions() {
        let a = two_moons(100, 0.1, 2).unwrap();
        let (tr, te) = a.split(0.2, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        assert!(a.split(1.0, 3).is_err());
    }

    #[test]
    fn idx_ingest_scales() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let mut ib = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 1];
        ib.extend([0u8, 255, 51, 102]);
        fs::write(&img, ib).unwrap();
        fs::write(&lab, [0, 0, 8, 1, 0, 0, 0, 2, 3, 7]).unwrap();
        let d = ingest_idx(&img, &lab).unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.sample(0), &[-1.0, 1.0]);
        assert_eq!(d.labels(), &[3, 7]);
        fs::write(&lab, [0, 0, 8, 1, 0, 0, 0, 3, 3, 7, 1]).unwrap();
        assert!(ingest_idx(&img, &lab).is_err());
    }
}
