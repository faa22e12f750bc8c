//! Dataset ingestion and the transformations that define each experiment:
//! IDX file parsing, disjoint class splits, fixed pixel permutations, and
//! random subset sampling.

use crate::error::{ImmError, Result};
use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// An immutable classification dataset: inputs in `[0,1]` plus integer
/// labels. Safe for concurrent reads once constructed.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    name: String,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        inputs: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(ImmError::Data("dataset is empty".into()));
        }
        if inputs.nrows() != labels.len() {
            return Err(ImmError::Data(format!(
                "{} inputs but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if !inputs.iter().all(|&v| (0.0..=1.0).contains(&v)) {
            return Err(ImmError::Data("input value outside [0,1]".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(ImmError::Data(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            name: name.into(),
            n_classes,
        })
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// New dataset from a subset of row indices.
    pub fn select(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let inputs = crate::mlp::gather_batch(&self.inputs, indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(inputs, labels, self.n_classes, name)
    }

    /// Concatenates datasets with identical input dimension and class count.
    pub fn concat(sets: &[&LabeledDataset], name: impl Into<String>) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| ImmError::Data("nothing to concatenate".into()))?;
        let dim = first.input_dim();
        let n_classes = first.n_classes;
        let total: usize = sets.iter().map(|d| d.len()).sum();
        let mut inputs = Array2::zeros((total, dim));
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for ds in sets {
            if ds.input_dim() != dim || ds.n_classes != n_classes {
                return Err(ImmError::Data("incompatible datasets".into()));
            }
            for (src, &y) in ds.inputs.rows().into_iter().zip(&ds.labels) {
                inputs.row_mut(row).assign(&src);
                labels.push(y);
                row += 1;
            }
        }
        Self::new(inputs, labels, n_classes, name)
    }
}

/// A fixed bijection on pixel indices, drawn by Fisher-Yates from a seeded
/// PRNG so it is reproducible across runs and platforms.
#[derive(Debug, Clone)]
pub struct PixelPermutation {
    perm: Vec<usize>,
    seed: u64,
}

impl PixelPermutation {
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..dim).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        perm.shuffle(&mut rng);
        Self { perm, seed }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            perm: (0..dim).collect(),
            seed: 0,
        }
    }

    pub fn from_vec(perm: Vec<usize>, seed: u64) -> Result<Self> {
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        if sorted.iter().enumerate().any(|(i, &v)| i != v) {
            return Err(ImmError::Data("permutation is not a bijection".into()));
        }
        Ok(Self { perm, seed })
    }

    pub fn indices(&self) -> &[usize] {
        &self.perm
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        Self {
            perm: inv,
            seed: self.seed,
        }
    }
}

fn idx_err(path: &Path, reason: impl Into<String>) -> ImmError {
    ImmError::IdxFormat {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Loads an MNIST-style IDX image/label file pair. Pixel bytes are divided
/// by 255 so inputs land in `[0,1]`.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let mut r = BufReader::new(File::open(images_path)?);
    let magic = r
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(images_path, "truncated header"))?;
    if magic != IMAGES_MAGIC {
        return Err(idx_err(
            images_path,
            format!("bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let n = r
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(images_path, "truncated header"))? as usize;
    let rows = r
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(images_path, "truncated header"))? as usize;
    let cols = r
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(images_path, "truncated header"))? as usize;
    let dim = rows * cols;
    let mut bytes = vec![0u8; n * dim];
    r.read_exact(&mut bytes)
        .map_err(|_| idx_err(images_path, "truncated image data"))?;

    let mut lr = BufReader::new(File::open(labels_path)?);
    let lmagic = lr
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(labels_path, "truncated header"))?;
    if lmagic != LABELS_MAGIC {
        return Err(idx_err(
            labels_path,
            format!("bad magic {lmagic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let ln = lr
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(labels_path, "truncated header"))? as usize;
    if ln != n {
        return Err(idx_err(
            labels_path,
            format!("label count {ln} does not match image count {n}"),
        ));
    }
    let mut label_bytes = vec![0u8; ln];
    lr.read_exact(&mut label_bytes)
        .map_err(|_| idx_err(labels_path, "truncated label data"))?;

    let inputs = Array2::from_shape_vec(
        (n, dim),
        bytes.iter().map(|&b| b as f64 / 255.0).collect(),
    )
    .expect("shape follows from header");
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let n_classes = labels.iter().max().map_or(1, |&m| m + 1).max(10);
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    LabeledDataset::new(inputs, labels, n_classes, name)
}

/// Writes a dataset as an IDX image/label file pair (inverse of
/// [`load_mnist_idx`], quantizing inputs back to bytes).
pub fn write_mnist_idx(
    ds: &LabeledDataset,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if rows * cols != ds.input_dim() {
        return Err(ImmError::Data(format!(
            "{rows}x{cols} does not match input dimension {}",
            ds.input_dim()
        )));
    }
    let mut w = BufWriter::new(File::create(images_path.as_ref())?);
    w.write_u32::<BigEndian>(IMAGES_MAGIC)?;
    w.write_u32::<BigEndian>(ds.len() as u32)?;
    w.write_u32::<BigEndian>(rows as u32)?;
    w.write_u32::<BigEndian>(cols as u32)?;
    for row in ds.inputs().rows() {
        for &v in row {
            w.write_all(&[(v * 255.0).round() as u8])?;
        }
    }
    w.flush()?;

    let mut lw = BufWriter::new(File::create(labels_path.as_ref())?);
    lw.write_u32::<BigEndian>(LABELS_MAGIC)?;
    lw.write_u32::<BigEndian>(ds.len() as u32)?;
    for &y in ds.labels() {
        lw.write_all(&[y as u8])?;
    }
    lw.flush()?;
    Ok(())
}

/// Splits a dataset into (examples whose label is in `first_classes`, rest).
/// Original joint labels are preserved on both sides.
pub fn disjoint_split(
    ds: &LabeledDataset,
    first_classes: &[usize],
) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (i, &y) in ds.labels().iter().enumerate() {
        if first_classes.contains(&y) {
            first.push(i);
        } else {
            second.push(i);
        }
    }
    if first.is_empty() || second.is_empty() {
        return Err(ImmError::Data(
            "disjoint split produced an empty side".into(),
        ));
    }
    Ok((
        ds.select(&first, format!("{}-first", ds.name()))?,
        ds.select(&second, format!("{}-second", ds.name()))?,
    ))
}

/// Applies a fixed pixel permutation: `out[i][j] = in[i][perm[j]]`. Labels
/// are unchanged. The same permutation must be applied to a task's train and
/// test sets.
pub fn permute_pixels(ds: &LabeledDataset, perm: &PixelPermutation) -> Result<LabeledDataset> {
    if perm.indices().len() != ds.input_dim() {
        return Err(ImmError::Data(format!(
            "permutation length {} does not match input dimension {}",
            perm.indices().len(),
            ds.input_dim()
        )));
    }
    let mut inputs = Array2::zeros(ds.inputs().dim());
    for (mut dst, src) in inputs.rows_mut().into_iter().zip(ds.inputs().rows()) {
        for (j, &p) in perm.indices().iter().enumerate() {
            dst[j] = src[p];
        }
    }
    LabeledDataset::new(
        inputs,
        ds.labels().to_vec(),
        ds.n_classes(),
        format!("{}-perm{}", ds.name(), perm.seed()),
    )
}

/// Draws `k` pairwise-disjoint subsets of size `n` without replacement,
/// deterministically in `seed`.
pub fn random_subsets(
    ds: &LabeledDataset,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<LabeledDataset>> {
    if k * n > ds.len() {
        return Err(ImmError::Data(format!(
            "{k} subsets of {n} exceed dataset size {}",
            ds.len()
        )));
    }
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    (0..k)
        .map(|i| {
            ds.select(
                &indices[i * n..(i + 1) * n],
                format!("{}-subset{}", ds.name(), i),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::collections::BTreeSet;

    fn toy(n: usize) -> LabeledDataset {
        let inputs = Array2::from_shape_fn((n, 4), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        let labels = (0..n).map(|i| i % 10).collect();
        LabeledDataset::new(inputs, labels, 10, "toy").unwrap()
    }

    #[test]
    fn idx_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let inputs = array![
            [0.0, 1.0, 128.0 / 255.0, 0.5019607843137255],
            [1.0, 0.0, 0.0, 1.0],
            [3.0 / 255.0, 0.0, 1.0, 200.0 / 255.0]
        ];
        let ds = LabeledDataset::new(inputs, vec![1, 7, 9], 10, "synthetic").unwrap();
        let imgs = dir.path().join("imgs");
        let labs = dir.path().join("labs");
        write_mnist_idx(&ds, &imgs, &labs, 2, 2).unwrap();
        let back = load_mnist_idx(&imgs, &labs).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.inputs().iter().zip(ds.inputs().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn byte_255_maps_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let ds = LabeledDataset::new(array![[1.0, 0.0, 0.0, 0.0]], vec![0], 10, "x").unwrap();
        let imgs = dir.path().join("i");
        let labs = dir.path().join("l");
        write_mnist_idx(&ds, &imgs, &labs, 2, 2).unwrap();
        let back = load_mnist_idx(&imgs, &labs).unwrap();
        assert_eq!(back.inputs()[[0, 0]], 1.0);
    }

    #[test]
    fn wrong_magic_reported_distinctly() {
        let dir = tempfile::tempdir().unwrap();
        let ds = LabeledDataset::new(array![[0.5, 0.5, 0.5, 0.5]], vec![0], 10, "x").unwrap();
        let imgs = dir.path().join("i");
        let labs = dir.path().join("l");
        write_mnist_idx(&ds, &imgs, &labs, 2, 2).unwrap();
        // labels file handed in as images: magic 0x801 is rejected
        let err = load_mnist_idx(&labs, &imgs).unwrap_err();
        match err {
            ImmError::IdxFormat { reason, .. } => assert!(reason.contains("bad magic")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_file_reported() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = dir.path().join("i");
        std::fs::write(&imgs, [0u8, 0, 8, 3, 0, 0]).unwrap();
        let labs = dir.path().join("l");
        std::fs::write(&labs, [0u8, 0, 8, 1, 0, 0, 0, 0]).unwrap();
        let err = load_mnist_idx(&imgs, &labs).unwrap_err();
        match err {
            ImmError::IdxFormat { reason, .. } => assert!(reason.contains("truncated")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_reported() {
        let dir = tempfile::tempdir().unwrap();
        let ds = LabeledDataset::new(array![[0.1, 0.1, 0.1, 0.1]], vec![2], 10, "x").unwrap();
        let two = LabeledDataset::new(
            array![[0.1, 0.1, 0.1, 0.1], [0.2, 0.2, 0.2, 0.2]],
            vec![2, 3],
            10,
            "y",
        )
        .unwrap();
        let (i1, l1) = (dir.path().join("i1"), dir.path().join("l1"));
        let (i2, l2) = (dir.path().join("i2"), dir.path().join("l2"));
        write_mnist_idx(&ds, &i1, &l1, 2, 2).unwrap();
        write_mnist_idx(&two, &i2, &l2, 2, 2).unwrap();
        let err = load_mnist_idx(&i1, &l2).unwrap_err();
        match err {
            ImmError::IdxFormat { reason, .. } => assert!(reason.contains("does not match")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn disjoint_split_is_a_partition() {
        let ds = toy(100);
        let (a, b) = disjoint_split(&ds, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(a.len() + b.len(), 100);
        let la: BTreeSet<_> = a.labels().iter().collect();
        let lb: BTreeSet<_> = b.labels().iter().collect();
        assert!(la.is_disjoint(&lb));
        assert!(!a.labels().contains(&7));
        assert!(b.labels().contains(&7));
    }

    #[test]
    fn disjoint_split_empty_side_is_error() {
        let ds = toy(50);
        let all: Vec<usize> = (0..10).collect();
        assert!(disjoint_split(&ds, &all).is_err());
    }

    #[test]
    fn identity_permutation_is_noop() {
        let ds = toy(10);
        let out = permute_pixels(&ds, &PixelPermutation::identity(4)).unwrap();
        assert_eq!(out.inputs(), ds.inputs());
        assert_eq!(out.labels(), ds.labels());
    }

    #[test]
    fn permutation_then_inverse_restores() {
        let ds = toy(10);
        let perm = PixelPermutation::random(4, 42);
        let fwd = permute_pixels(&ds, &perm).unwrap();
        let back = permute_pixels(&fwd, &perm.inverse()).unwrap();
        assert_eq!(back.inputs(), ds.inputs());
    }

    #[test]
    fn distinct_seeds_give_distinct_permutations() {
        let a = PixelPermutation::random(784, 1);
        let b = PixelPermutation::random(784, 2);
        assert_ne!(a.indices(), b.indices());
    }

    #[test]
    fn permutation_preserves_pixel_multiset() {
        let ds = toy(5);
        let perm = PixelPermutation::random(4, 9);
        let out = permute_pixels(&ds, &perm).unwrap();
        for (a, b) in ds.inputs().rows().into_iter().zip(out.inputs().rows()) {
            let mut ma: Vec<_> = a.to_vec();
            let mut mb: Vec<_> = b.to_vec();
            ma.sort_by(f64::total_cmp);
            mb.sort_by(f64::total_cmp);
            assert_eq!(ma, mb);
        }
    }

    #[test]
    fn non_bijective_permutation_rejected() {
        assert!(PixelPermutation::from_vec(vec![0, 0, 1], 0).is_err());
        assert!(PixelPermutation::from_vec(vec![2, 0, 1], 0).is_ok());
    }

    #[test]
    fn random_subsets_disjoint_and_deterministic() {
        let ds = toy(100);
        let subs = random_subsets(&ds, 3, 30, 7).unwrap();
        assert_eq!(subs.len(), 3);
        // deterministic
        let again = random_subsets(&ds, 3, 30, 7).unwrap();
        for (a, b) in subs.iter().zip(&again) {
            assert_eq!(a.inputs(), b.inputs());
            assert_eq!(a.labels(), b.labels());
        }
        assert!(random_subsets(&ds, 4, 30, 7).is_err());
    }

    #[test]
    fn single_full_subset_is_shuffled_copy() {
        let ds = toy(20);
        let subs = random_subsets(&ds, 1, 20, 3).unwrap();
        assert_eq!(subs[0].len(), 20);
        let mut orig: Vec<_> = ds.labels().to_vec();
        let mut got: Vec<_> = subs[0].labels().to_vec();
        orig.sort_unstable();
        got.sort_unstable();
        assert_eq!(orig, got);
    }
}
