//! MNIST IDX ingestion and a deterministic synthetic fallback dataset.
//!
//! IDX files are big-endian: magic 0x00000803 for images (n × 28 × 28,
//! flattened to n × 784 and scaled by 1/255) and 0x00000801 for labels.
//! Gzip-compressed files are detected by their 0x1f8b prefix and inflated
//! transparently.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    MnistIdx,
    Synthetic,
}

/// A fully split classification dataset with features in [0, 1].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train_x: Matrix,
    pub train_y: Vec<usize>,
    pub val_x: Matrix,
    pub val_y: Vec<usize>,
    pub test_x: Matrix,
    pub test_y: Vec<usize>,
    pub num_classes: usize,
    pub source: DataSource,
}

impl Dataset {
    pub fn feature_dim(&self) -> usize {
        self.train_x.cols()
    }

    /// Keeps the first `fraction` of every split. Used by desk-scale presets.
    pub fn truncate(&self, fraction: f64) -> Dataset {
        let cut = |x: &Matrix, y: &[usize]| {
            let n = ((x.rows() as f64 * fraction).floor() as usize).max(1);
            let m = Matrix::from_fn(n, x.cols(), |i, j| x.get(i, j));
            (m, y[..n].to_vec())
        };
        let (train_x, train_y) = cut(&self.train_x, &self.train_y);
        let (val_x, val_y) = cut(&self.val_x, &self.val_y);
        let (test_x, test_y) = cut(&self.test_x, &self.test_y);
        Dataset {
            train_x,
            train_y,
            val_x,
            val_y,
            test_x,
            test_y,
            num_classes: self.num_classes,
            source: self.source,
        }
    }
}

fn read_file_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], pos: usize, path: &Path) -> Result<u32> {
    if pos + 4 > bytes.len() {
        return Err(Error::Truncated {
            path: path.display().to_string(),
            expected: pos + 4,
            actual: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[pos],
        bytes[pos + 1],
        bytes[pos + 2],
        bytes[pos + 3],
    ]))
}

/// Parses an IDX image/label file pair into a feature matrix (pixels scaled
/// by 1/255) and class labels. The two files must agree on example count.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<(Matrix, Vec<usize>)> {
    // Images: magic, count, rows, cols, then count*rows*cols bytes.
    let img = read_file_maybe_gz(images_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.display().to_string(),
            expected: IMAGES_MAGIC,
            actual: magic,
        });
    }
    let n = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let payload = n * rows * cols;
    if img.len() < 16 + payload {
        return Err(Error::Truncated {
            path: images_path.display().to_string(),
            expected: payload,
            actual: img.len() - 16.min(img.len()),
        });
    }
    let data: Vec<f64> = img[16..16 + payload]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let x = Matrix::from_vec(n, rows * cols, data)?;

    // Labels: magic, count, then count bytes.
    let lab = read_file_maybe_gz(labels_path)?;
    let magic = be_u32(&lab, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.display().to_string(),
            expected: LABELS_MAGIC,
            actual: magic,
        });
    }
    let n_labels = be_u32(&lab, 4, labels_path)? as usize;
    if lab.len() < 8 + n_labels {
        return Err(Error::Truncated {
            path: labels_path.display().to_string(),
            expected: n_labels,
            actual: lab.len() - 8.min(lab.len()),
        });
    }
    if n_labels != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    let y = lab[8..8 + n_labels].iter().map(|&b| b as usize).collect();
    Ok((x, y))
}

/// Writes an IDX image tensor (u8 pixels). Used for fixtures and round-trip
/// tests; values are expected in [0, 1] and quantized back to bytes.
pub fn write_idx_images(path: &Path, x: &Matrix, rows: usize, cols: usize) -> Result<()> {
    assert_eq!(rows * cols, x.cols(), "image dims must match feature count");
    let mut buf = Vec::with_capacity(16 + x.data().len());
    buf.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    buf.extend_from_slice(&(x.rows() as u32).to_be_bytes());
    buf.extend_from_slice(&(rows as u32).to_be_bytes());
    buf.extend_from_slice(&(cols as u32).to_be_bytes());
    for &v in x.data() {
        buf.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, y: &[usize]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + y.len());
    buf.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    buf.extend_from_slice(&(y.len() as u32).to_be_bytes());
    for &v in y {
        buf.push(v as u8);
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Deterministic tail split: the last ⌊n·val_fraction⌋ examples become
/// validation, order preserved, no shuffle.
pub fn split(x: &Matrix, y: &[usize], val_fraction: f64) -> Result<(Matrix, Vec<usize>, Matrix, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 0.5) {
        return Err(Error::Config(format!(
            "val_fraction must be in (0, 0.5), got {val_fraction}"
        )));
    }
    let n = x.rows();
    let n_val = (n as f64 * val_fraction).floor() as usize;
    let n_train = n - n_val;
    let train_x = Matrix::from_fn(n_train, x.cols(), |i, j| x.get(i, j));
    let val_x = Matrix::from_fn(n_val, x.cols(), |i, j| x.get(n_train + i, j));
    Ok((
        train_x,
        y[..n_train].to_vec(),
        val_x,
        y[n_train..].to_vec(),
    ))
}

/// Locates one of the four standard MNIST files under `dir`, trying the
/// dash and dot spellings plus `.gz` variants.
fn find_mnist_file(dir: &Path, stem_dash: &str, stem_dot: &str) -> Result<PathBuf> {
    for name in [
        stem_dash.to_string(),
        stem_dot.to_string(),
        format!("{stem_dash}.gz"),
        format!("{stem_dot}.gz"),
    ] {
        let p = dir.join(&name);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::Config(format!(
        "MNIST file {stem_dash} (or {stem_dot}, optionally .gz) not found in {}",
        dir.display()
    )))
}

/// Loads the standard four-file MNIST distribution from `dir` and splits
/// the last 10% of the training set off for validation.
pub fn load_mnist(dir: &Path) -> Result<Dataset> {
    let train_images = find_mnist_file(dir, "train-images-idx3-ubyte", "train-images.idx3-ubyte")?;
    let train_labels = find_mnist_file(dir, "train-labels-idx1-ubyte", "train-labels.idx1-ubyte")?;
    let test_images = find_mnist_file(dir, "t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte")?;
    let test_labels = find_mnist_file(dir, "t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte")?;
    let (x, y) = load_idx(&train_images, &train_labels)?;
    let (test_x, test_y) = load_idx(&test_images, &test_labels)?;
    let (train_x, train_y, val_x, val_y) = split(&x, &y, 0.1)?;
    Ok(Dataset {
        train_x,
        train_y,
        val_x,
        val_y,
        test_x,
        test_y,
        num_classes: 10,
        source: DataSource::MnistIdx,
    })
}

/// Deterministic Gaussian-blob dataset: class means sit on a sphere, noise
/// is isotropic, and features are min-max squashed to [0, 1]. Separable
/// enough that small MLPs clear 90% accuracy, so the full experiment
/// pipeline runs with no MNIST download.
pub fn synthetic_dataset(
    seed: u64,
    n_per_class: usize,
    num_classes: usize,
    dim: usize,
) -> Dataset {
    synthetic_dataset_with(seed, n_per_class, num_classes, dim, 3.2, 0.55)
}

/// As [`synthetic_dataset`], with explicit class-mean radius and noise
/// standard deviation for tuning task difficulty.
pub fn synthetic_dataset_with(
    seed: u64,
    n_per_class: usize,
    num_classes: usize,
    dim: usize,
    radius: f64,
    noise: f64,
) -> Dataset {
    assert!(n_per_class > 0 && num_classes > 0 && dim > 0);
    let mut rng = Rng::new(seed);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter().map(|x| x / norm * radius).collect()
        })
        .collect();

    let sample_split = |n_each: usize, rng: &mut Rng| {
        let n = n_each * num_classes;
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut x = Matrix::zeros(n, dim);
        let mut y = vec![0usize; n];
        for (slot, &idx) in order.iter().enumerate() {
            let class = idx % num_classes;
            y[slot] = class;
            for j in 0..dim {
                x.set(slot, j, means[class][j] + noise * rng.normal());
            }
        }
        (x, y)
    };

    let (mut train_x, train_y) = sample_split(n_per_class, &mut rng);
    let n_eval = (n_per_class / 5).max(1);
    let (mut val_x, val_y) = sample_split(n_eval, &mut rng);
    let (mut test_x, test_y) = sample_split(n_eval, &mut rng);

    // Min-max squash to [0, 1] using the training split's bounds.
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for i in 0..train_x.rows() {
        for j in 0..dim {
            lo[j] = lo[j].min(train_x.get(i, j));
            hi[j] = hi[j].max(train_x.get(i, j));
        }
    }
    let squash = |m: &mut Matrix| {
        for i in 0..m.rows() {
            for j in 0..dim {
                let range = (hi[j] - lo[j]).max(1e-12);
                let v = ((m.get(i, j) - lo[j]) / range).clamp(0.0, 1.0);
                m.set(i, j, v);
            }
        }
    };
    squash(&mut train_x);
    squash(&mut val_x);
    squash(&mut test_x);

    Dataset {
        train_x,
        train_y,
        val_x,
        val_y,
        test_x,
        test_y,
        num_classes,
        source: DataSource::Synthetic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_round_trip() {
        let mut rng = Rng::new(31);
        let x = Matrix::from_fn(5, 6, |_, _| (rng.below(256) as f64) / 255.0);
        let y = vec![0, 1, 2, 3, 4];
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("imgs");
        let lp = dir.path().join("labels");
        write_idx_images(&ip, &x, 2, 3).unwrap();
        write_idx_labels(&lp, &y).unwrap();
        let (x2, y2) = load_idx(&ip, &lp).unwrap();
        assert_eq!(x, x2);
        assert_eq!(y, y2);
    }

    #[test]
    fn idx_wrong_magic_names_both_values() {
        let mut rng = Rng::new(1);
        let x = Matrix::from_fn(2, 4, |_, _| rng.next_f64());
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("imgs");
        let lp = dir.path().join("labels");
        // Label magic where an image magic should be.
        write_idx_labels(&ip, &[0, 1]).unwrap();
        write_idx_images(&lp, &x, 2, 2).unwrap();
        match load_idx(&ip, &lp) {
            Err(Error::BadMagic { expected, actual, .. }) => {
                assert_eq!(expected, IMAGES_MAGIC);
                assert_eq!(actual, LABELS_MAGIC);
            }
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn idx_truncated_by_one_byte() {
        let mut rng = Rng::new(2);
        let x = Matrix::from_fn(3, 4, |_, _| rng.next_f64());
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("imgs");
        let lp = dir.path().join("labels");
        write_idx_images(&ip, &x, 2, 2).unwrap();
        write_idx_labels(&lp, &[0, 1, 2]).unwrap();
        let bytes = std::fs::read(&ip).unwrap();
        std::fs::write(&ip, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Truncated { .. })));
    }

    #[test]
    fn idx_count_mismatch() {
        let mut rng = Rng::new(3);
        let x = Matrix::from_fn(3, 4, |_, _| rng.next_f64());
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("imgs");
        let lp = dir.path().join("labels");
        write_idx_images(&ip, &x, 2, 2).unwrap();
        write_idx_labels(&lp, &[0, 1]).unwrap();
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(Error::CountMismatch { images: 3, labels: 2 })
        ));
    }

    #[test]
    fn gzip_transparent() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let mut rng = Rng::new(4);
        let x = Matrix::from_fn(4, 4, |_, _| (rng.below(256) as f64) / 255.0);
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("imgs");
        let lp = dir.path().join("labels.gz");
        write_idx_images(&ip, &x, 2, 2).unwrap();
        let mut lab_plain = Vec::new();
        lab_plain.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab_plain.extend_from_slice(&4u32.to_be_bytes());
        lab_plain.extend_from_slice(&[0, 1, 2, 3]);
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&lab_plain).unwrap();
        std::fs::write(&lp, enc.finish().unwrap()).unwrap();
        let (_, y) = load_idx(&ip, &lp).unwrap();
        assert_eq!(y, vec![0, 1, 2, 3]);
    }

    #[test]
    fn split_preserves_order_and_is_deterministic() {
        let x = Matrix::from_fn(100, 2, |i, j| (i * 2 + j) as f64);
        let y: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let (tx, ty, vx, vy) = split(&x, &y, 0.1).unwrap();
        assert_eq!(tx.rows(), 90);
        assert_eq!(vx.rows(), 10);
        assert_eq!(ty[..5], y[..5]);
        assert_eq!(vy[..5], y[90..95]);
        assert_eq!(vx.get(0, 0), 180.0);
        let (tx2, ..) = split(&x, &y, 0.1).unwrap();
        assert_eq!(tx, tx2);
    }

    #[test]
    fn split_rejects_half_or_more() {
        let x = Matrix::zeros(10, 1);
        let y = vec![0; 10];
        assert!(split(&x, &y, 0.5).is_err());
        assert!(split(&x, &y, 0.0).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_bounded() {
        let a = synthetic_dataset(42, 50, 4, 8);
        let b = synthetic_dataset(42, 50, 4, 8);
        assert_eq!(a.train_x, b.train_x);
        assert_eq!(a.train_y, b.train_y);
        for v in a
            .train_x
            .data()
            .iter()
            .chain(a.val_x.data())
            .chain(a.test_x.data())
        {
            assert!((0.0..=1.0).contains(v));
        }
        assert!(a.train_y.iter().all(|&y| y < 4));
    }

    #[test]
    fn synthetic_separable_by_softmax_regression() {
        use crate::network::{softmax_cross_entropy, LayerSpec, Network, NetworkSpec};
        use crate::optim::SgdState;
        let ds = synthetic_dataset(7, 100, 2, 6);
        let spec = NetworkSpec::new(vec![LayerSpec::Dense {
            input: 6,
            output: 2,
        }])
        .unwrap();
        let mut net = Network::init(&spec, &mut Rng::new(0)).unwrap();
        let mut sgd = SgdState::new(0.5, 0.0).unwrap();
        for _ in 0..200 {
            let (logits, caches) = net.forward(&ds.train_x, &mut Rng::new(0)).unwrap();
            let (_, dlogits) = softmax_cross_entropy(&logits, &ds.train_y).unwrap();
            let grads = net.backward(&caches, &dlogits).unwrap();
            sgd.step(&mut net, &grads).unwrap();
        }
        let logits = net.infer(&ds.train_x).unwrap();
        let correct = (0..logits.rows())
            .filter(|&i| {
                let row = logits.row(i);
                let pred = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                pred == ds.train_y[i]
            })
            .count();
        let acc = correct as f64 / logits.rows() as f64;
        assert!(acc > 0.95, "train accuracy {acc}");
    }
}
