//! MNIST-format (IDX) data loading and the fold-feeding schemes.
//!
//! A [`Dataset`] is an immutable pile of flattened images in `[0, 1]` plus
//! class labels. A [`FoldFeeder`] is a small cursor over it implementing the
//! three feeding modes: the whole set every call, a rotation over `k` separate
//! contiguous folds, or a fixed-size window sliding by a stride (with
//! wrap-around at the end of the data).

use std::fs::File;
use std::io::{self, BufReader, Read};
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const IMAGES_MAGIC: u32 = 2051;
const LABELS_MAGIC: u32 = 2049;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: bad magic {found} (expected {expected})")]
    BadMagic {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("{path}: file truncated ({detail})")]
    Truncated { path: String, detail: String },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u8, classes: usize },
    #[error("subset of {requested} samples requested from a dataset of {available}")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("invalid feeder: {0}")]
    InvalidFeeder(String),
}

/// Immutable dataset: `n` flattened images (rows) with pixels in `[0, 1]`
/// and one label per row.
#[derive(Clone, Debug)]
pub struct Dataset {
    images: Array2<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    /// Builds a dataset from a row-major pixel matrix and labels.
    pub fn new(images: Array2<f64>, labels: Vec<u8>) -> Result<Self, DataError> {
        if images.nrows() != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.nrows(),
                labels: labels.len(),
            });
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Width of one flattened image (network input size).
    pub fn input_dim(&self) -> usize {
        self.images.ncols()
    }

    pub fn images(&self) -> ArrayView2<'_, f64> {
        self.images.view()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Contiguous row range `[start, end)` as a zero-copy view.
    pub fn segment(&self, range: Range<usize>) -> (ArrayView2<'_, f64>, &[u8]) {
        (
            self.images.slice(ndarray::s![range.clone(), ..]),
            &self.labels[range],
        )
    }

    /// Gathers the given rows into an owned batch, preserving order.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Deterministic seeded sample of `count` rows without replacement.
    pub fn subset(&self, count: usize, seed: u64) -> Result<Dataset, DataError> {
        if count > self.len() {
            return Err(DataError::SubsetTooLarge {
                requested: count,
                available: self.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = rand::seq::index::sample(&mut rng, self.len(), count).into_vec();
        let batch = self.batch(&picked);
        Ok(Dataset {
            images: batch.images,
            labels: batch.labels,
        })
    }
}

/// An owned batch of samples in dataset order.
#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Array2<f64>,
    pub labels: Vec<u8>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Opens a file, transparently decompressing gzip (detected by its two magic
/// bytes, not the file name).
fn open_maybe_gzip(path: &Path) -> Result<Box<dyn Read>, DataError> {
    let err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = File::open(path).map_err(err)?;
    let mut head = [0u8; 2];
    let got = file.read(&mut head).map_err(err)?;
    let plain = File::open(path).map_err(err)?;
    if got == 2 && head == [0x1f, 0x8b] {
        Ok(Box::new(flate2::read::GzDecoder::new(BufReader::new(plain))))
    } else {
        Ok(Box::new(BufReader::new(plain)))
    }
}

fn read_exact_or_truncated(
    reader: &mut dyn Read,
    buf: &mut [u8],
    path: &Path,
    what: &str,
) -> Result<(), DataError> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            DataError::Truncated {
                path: path.display().to_string(),
                detail: format!("while reading {what}"),
            }
        } else {
            DataError::Io {
                path: path.display().to_string(),
                source: e,
            }
        }
    })
}

fn read_u32(reader: &mut dyn Read, path: &Path, what: &str) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    read_exact_or_truncated(reader, &mut buf, path, what)?;
    Ok(u32::from_be_bytes(buf))
}

/// Parses an IDX image file: big-endian magic 2051, then item/row/column
/// counts, then unsigned pixel bytes. Pixels are divided by 255 so every
/// value lands in `[0, 1]`.
pub fn load_idx_images(path: &Path) -> Result<Array2<f64>, DataError> {
    let mut reader = open_maybe_gzip(path)?;
    let magic = read_u32(reader.as_mut(), path, "magic")?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            found: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let n = read_u32(reader.as_mut(), path, "item count")? as usize;
    let rows = read_u32(reader.as_mut(), path, "row count")? as usize;
    let cols = read_u32(reader.as_mut(), path, "column count")? as usize;
    let dim = rows * cols;
    let mut bytes = vec![0u8; n * dim];
    read_exact_or_truncated(reader.as_mut(), &mut bytes, path, "pixel data")?;
    let pixels: Vec<f64> = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
    // Shape is n x dim by construction; from_shape_vec cannot fail here.
    Ok(Array2::from_shape_vec((n, dim), pixels).expect("pixel buffer shape"))
}

/// Parses an IDX label file: big-endian magic 2049, item count, label bytes.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut reader = open_maybe_gzip(path)?;
    let magic = read_u32(reader.as_mut(), path, "magic")?;
    if magic != LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            found: magic,
            expected: LABELS_MAGIC,
        });
    }
    let n = read_u32(reader.as_mut(), path, "item count")? as usize;
    let mut labels = vec![0u8; n];
    read_exact_or_truncated(reader.as_mut(), &mut labels, path, "label data")?;
    Ok(labels)
}

/// Loads an image/label IDX pair into a [`Dataset`], failing if the counts
/// disagree.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    Dataset::new(images, labels)
}

/// How training data is served to the fitness function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeedMode {
    /// Every call sees the full dataset.
    Whole,
    /// The data is split into `k` contiguous folds served round-robin.
    SeparateFolds { k: usize },
    /// A window of fixed size slides by `stride`, wrapping at the end.
    SlidingFold { window: usize, stride: usize },
}

/// Which rows of the dataset the current fold covers.
///
/// A sliding window that crosses the end of the data wraps around, so a
/// selection is at most two contiguous ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FoldSelection {
    All,
    Contiguous(Range<usize>),
    Wrapped(Range<usize>, Range<usize>),
}

impl FoldSelection {
    /// The selection as explicit ranges (one or two).
    pub fn ranges(&self, n: usize) -> Vec<Range<usize>> {
        match self {
            FoldSelection::All => vec![0..n],
            FoldSelection::Contiguous(r) => vec![r.clone()],
            FoldSelection::Wrapped(a, b) => vec![a.clone(), b.clone()],
        }
    }

    pub fn sample_count(&self, n: usize) -> usize {
        self.ranges(n).iter().map(|r| r.len()).sum()
    }

    /// The selected row indices in serving order.
    pub fn indices(&self, n: usize) -> Vec<usize> {
        self.ranges(n).into_iter().flatten().collect()
    }
}

/// Cursor over a dataset implementing the three feeding schemes.
///
/// The feeder is a plain value: [`FoldFeeder::selection`] is a pure read of
/// the current fold and [`FoldFeeder::advance`] moves the cursor. The
/// optimizer owns advancement; fitness evaluations only read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FoldFeeder {
    mode: FeedMode,
    cursor: usize,
    n: usize,
}

impl FoldFeeder {
    /// Validates the mode against the dataset size `n`.
    pub fn new(mode: FeedMode, n: usize) -> Result<Self, DataError> {
        if n == 0 {
            return Err(DataError::InvalidFeeder("empty dataset".into()));
        }
        match mode {
            FeedMode::Whole => {}
            FeedMode::SeparateFolds { k } => {
                if k == 0 || k > n {
                    return Err(DataError::InvalidFeeder(format!(
                        "fold count {k} must be in 1..={n}"
                    )));
                }
            }
            FeedMode::SlidingFold { window, stride } => {
                if window == 0 || window > n {
                    return Err(DataError::InvalidFeeder(format!(
                        "window {window} must be in 1..={n}"
                    )));
                }
                if stride == 0 {
                    return Err(DataError::InvalidFeeder("stride must be >= 1".into()));
                }
            }
        }
        Ok(Self { mode, cursor: 0, n })
    }

    pub fn mode(&self) -> FeedMode {
        self.mode
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// The rows the current fold covers. Does not move the cursor.
    pub fn selection(&self) -> FoldSelection {
        match self.mode {
            FeedMode::Whole => FoldSelection::All,
            FeedMode::SeparateFolds { k } => {
                let f = self.cursor % k;
                // Balanced contiguous partition: fold f is [f*n/k, (f+1)*n/k).
                let start = f * self.n / k;
                let end = (f + 1) * self.n / k;
                FoldSelection::Contiguous(start..end)
            }
            FeedMode::SlidingFold { window, .. } => {
                let start = self.cursor % self.n;
                if start + window <= self.n {
                    FoldSelection::Contiguous(start..start + window)
                } else {
                    let tail = self.n - start;
                    FoldSelection::Wrapped(start..self.n, 0..window - tail)
                }
            }
        }
    }

    /// Moves to the next fold: a no-op for whole-data feeding, the next fold
    /// for separate folds, `stride` samples forward for a sliding window.
    pub fn advance(&mut self) {
        match self.mode {
            FeedMode::Whole => {}
            FeedMode::SeparateFolds { k } => {
                self.cursor = (self.cursor + 1) % k;
            }
            FeedMode::SlidingFold { stride, .. } => {
                self.cursor = (self.cursor + stride) % self.n;
            }
        }
    }

    /// Returns the current fold as an owned batch plus the advanced feeder.
    pub fn next_fold(&self, dataset: &Dataset) -> (Batch, FoldFeeder) {
        debug_assert_eq!(dataset.len(), self.n, "feeder built for another dataset");
        let batch = dataset.batch(&self.selection().indices(self.n));
        let mut advanced = *self;
        advanced.advance();
        (batch, advanced)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Builds an IDX image file in memory: `n` images of `rows x cols`.
    pub(crate) fn idx_images_bytes(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        buf.extend_from_slice(&n.to_be_bytes());
        buf.extend_from_slice(&rows.to_be_bytes());
        buf.extend_from_slice(&cols.to_be_bytes());
        buf.extend_from_slice(pixels);
        buf
    }

    pub(crate) fn idx_labels_bytes(labels: &[u8]) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        buf.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        buf.extend_from_slice(labels);
        buf
    }

    fn write_temp(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let path = dir.path().join(name);
        File::create(&path).unwrap().write_all(bytes).unwrap();
        path
    }

    fn tiny_dataset(n: usize) -> Dataset {
        let images =
            Array2::from_shape_fn((n, 4), |(i, j)| (i * 4 + j) as f64 / (n * 4) as f64);
        let labels = (0..n).map(|i| (i % 10) as u8).collect();
        Dataset::new(images, labels).unwrap()
    }

    #[test]
    fn loads_hand_built_idx_pair() {
        let dir = tempfile::tempdir().unwrap();
        // Two 2x2 images; one pixel at full intensity.
        let img = write_temp(
            &dir,
            "img",
            &idx_images_bytes(2, 2, 2, &[0, 255, 10, 20, 30, 40, 50, 60]),
        );
        let lab = write_temp(&dir, "lab", &idx_labels_bytes(&[7, 3]));
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_dim(), 4);
        assert_eq!(ds.images()[[0, 1]], 1.0);
        assert_eq!(ds.images()[[0, 0]], 0.0);
        assert_eq!(ds.labels(), &[7, 3]);
    }

    #[test]
    fn gzip_detected_by_magic_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let raw = idx_labels_bytes(&[1, 2, 3]);
        let mut enc =
            flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        // Deliberately no .gz extension: detection is content-based.
        let path = write_temp(&dir, "labels.bin", &enc.finish().unwrap());
        assert_eq!(load_idx_labels(&path).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn bad_magic_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = idx_images_bytes(1, 2, 2, &[0; 4]);
        bytes[3] = 0xff;
        let path = write_temp(&dir, "img", &bytes);
        match load_idx_images(&path) {
            Err(DataError::BadMagic { expected: 2051, .. }) => {}
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_pixels_reported() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = idx_images_bytes(2, 2, 2, &[0; 5]); // needs 8 pixel bytes
        let path = write_temp(&dir, "img", &bytes);
        assert!(matches!(
            load_idx_images(&path),
            Err(DataError::Truncated { .. })
        ));
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_temp(&dir, "img", &idx_images_bytes(2, 1, 1, &[1, 2]));
        let lab = write_temp(&dir, "lab", &idx_labels_bytes(&[0]));
        assert!(matches!(
            load_idx(&img, &lab),
            Err(DataError::CountMismatch { images: 2, labels: 1 })
        ));
    }

    #[test]
    fn subset_is_seeded_and_without_replacement() {
        let ds = tiny_dataset(50);
        let a = ds.subset(20, 9).unwrap();
        let b = ds.subset(20, 9).unwrap();
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.images(), b.images());
        let c = ds.subset(20, 10).unwrap();
        assert_ne!(a.images(), c.images());

        // Without replacement: recover original row ids from pixel values.
        let full = ds.subset(50, 3).unwrap();
        let mut seen: Vec<usize> = full
            .images()
            .rows()
            .into_iter()
            .map(|r| (r[0] * 200.0).round() as usize / 4)
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..50).collect::<Vec<_>>());

        assert!(matches!(
            ds.subset(51, 0),
            Err(DataError::SubsetTooLarge { .. })
        ));
    }

    #[test]
    fn separate_folds_cycle_in_order() {
        let ds = tiny_dataset(60);
        let mut feeder = FoldFeeder::new(FeedMode::SeparateFolds { k: 6 }, 60).unwrap();
        for f in 0..12 {
            let sel = feeder.selection();
            assert_eq!(sel, FoldSelection::Contiguous((f % 6) * 10..(f % 6) * 10 + 10));
            feeder.advance();
        }
        let (batch, _) = FoldFeeder::new(FeedMode::SeparateFolds { k: 6 }, 60)
            .unwrap()
            .next_fold(&ds);
        assert_eq!(batch.len(), 10);
        assert_eq!(batch.labels, ds.labels()[0..10]);
    }

    #[test]
    fn sliding_fold_wraps_around() {
        let mut feeder =
            FoldFeeder::new(FeedMode::SlidingFold { window: 4, stride: 2 }, 10).unwrap();
        for _ in 0..4 {
            feeder.advance();
        }
        assert_eq!(feeder.cursor(), 8);
        let sel = feeder.selection();
        assert_eq!(sel, FoldSelection::Wrapped(8..10, 0..2));
        assert_eq!(sel.indices(10), vec![8, 9, 0, 1]);
        feeder.advance();
        assert_eq!(feeder.cursor(), 0);
    }

    #[test]
    fn whole_mode_serves_everything_every_call() {
        let ds = tiny_dataset(7);
        let feeder = FoldFeeder::new(FeedMode::Whole, 7).unwrap();
        let (b1, f2) = feeder.next_fold(&ds);
        let (b2, _) = f2.next_fold(&ds);
        assert_eq!(b1.len(), 7);
        assert_eq!(b2.labels, b1.labels);
        assert_eq!(f2.cursor(), 0);
    }

    #[test]
    fn feeder_validation() {
        assert!(FoldFeeder::new(FeedMode::SeparateFolds { k: 0 }, 10).is_err());
        assert!(FoldFeeder::new(FeedMode::SeparateFolds { k: 11 }, 10).is_err());
        assert!(FoldFeeder::new(FeedMode::SlidingFold { window: 11, stride: 1 }, 10).is_err());
        assert!(FoldFeeder::new(FeedMode::SlidingFold { window: 4, stride: 0 }, 10).is_err());
        assert!(FoldFeeder::new(FeedMode::Whole, 0).is_err());
    }

    #[test]
    fn separate_folds_partition_exactly_once_per_sweep() {
        for (n, k) in [(60usize, 6usize), (61, 6), (10, 7), (10, 10), (5, 1)] {
            let mut feeder = FoldFeeder::new(FeedMode::SeparateFolds { k }, n).unwrap();
            let mut served = vec![0u32; n];
            for _ in 0..k {
                for i in feeder.selection().indices(n) {
                    served[i] += 1;
                }
                feeder.advance();
            }
            assert!(served.iter().all(|&c| c == 1), "n={n} k={k}: {served:?}");
        }
    }
}
