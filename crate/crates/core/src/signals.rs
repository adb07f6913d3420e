//! Ground-truth signals, Gaussian sensing matrices, and magnitude measurements.
//!
//! The synthetic protocol: the signal support is uniformly random with
//! i.i.d. standard normal entries on it, the sensing matrix has i.i.d.
//! standard normal entries, and measurements are `y_i = |<a_i, x>| + eta_i`
//! with `eta ~ N(0, sigma^2 ||x||^2 I)`. Everything is a pure function of
//! `(dimensions, sigma, seed)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::norm2;

/// An exactly `s`-sparse ground-truth vector with explicit support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    values: Array1<f64>,
    support: Vec<usize>,
}

impl SparseSignal {
    /// Validates the sparsity invariants: `support` sorted, unique and in
    /// range; every off-support entry exactly zero; all values finite; norm
    /// positive.
    pub fn from_parts(values: Array1<f64>, support: Vec<usize>) -> Result<Self> {
        let n = values.len();
        if support.is_empty() || support.len() > n {
            return Err(Error::invalid_argument(format!(
                "support size {} out of range for dimension {n}",
                support.len()
            )));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid_argument(
                "support must be sorted and duplicate-free",
            ));
        }
        if *support.last().unwrap() >= n {
            return Err(Error::invalid_argument("support index out of range"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("signal entries must be finite"));
        }
        let mut in_support = vec![false; n];
        for &j in &support {
            in_support[j] = true;
        }
        for (j, &v) in values.iter().enumerate() {
            if !in_support[j] && v != 0.0 {
                return Err(Error::invalid_argument(format!(
                    "entry {j} outside support is nonzero"
                )));
            }
        }
        if norm2(&values.view()) <= 0.0 {
            return Err(Error::invalid_argument("signal norm must be positive"));
        }
        Ok(SparseSignal { values, support })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values.view())
    }

    /// `x / ||x||_2`.
    pub fn normalized(&self) -> Array1<f64> {
        &self.values / self.norm()
    }

    pub fn negated(&self) -> SparseSignal {
        SparseSignal {
            values: self.values.mapv(|v| -v),
            support: self.support.clone(),
        }
    }
}

/// Dense row-major Gaussian sensing matrix, regenerable from `(m, n, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    entries: Array2<f64>,
    seed: u64,
}

impl SensingMatrix {
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.entries.row(i)
    }

    pub(crate) fn from_entries(entries: Array2<f64>, seed: u64) -> Self {
        SensingMatrix { entries, seed }
    }
}

/// Noise level relative to the signal norm: `eta ~ N(0, sigma^2 ||x||^2 I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    sigma: f64,
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid_argument(format!(
                "noise level must be >= 0, got {sigma}"
            )));
        }
        Ok(NoiseSpec { sigma })
    }

    pub fn noiseless() -> Self {
        NoiseSpec { sigma: 0.0 }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Amplitudes `y`, retained noise `eta`, and a handle to the sensing matrix.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    y: Array1<f64>,
    eta: Array1<f64>,
    matrix: Arc<SensingMatrix>,
}

impl MeasurementSet {
    pub fn amplitudes(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn noise(&self) -> ArrayView1<'_, f64> {
        self.eta.view()
    }

    pub fn matrix(&self) -> &Arc<SensingMatrix> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Draws an `s`-sparse signal: support uniform among size-`s` subsets,
/// nonzeros i.i.d. standard normal.
pub fn gen_sparse_signal<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Result<SparseSignal> {
    if s == 0 || s > n {
        return Err(Error::invalid_argument(format!(
            "sparsity {s} out of range for dimension {n}"
        )));
    }
    loop {
        let mut support: Vec<usize> = rand::seq::index::sample(rng, n, s).into_vec();
        support.sort_unstable();
        let mut values = Array1::<f64>::zeros(n);
        for &j in &support {
            values[j] = rng.sample(StandardNormal);
        }
        // An all-zero draw has probability zero but would break the norm
        // invariant, so redraw if it ever happens.
        if norm2(&values.view()) > 0.0 {
            return Ok(SparseSignal { values, support });
        }
    }
}

fn fill_row<R: Rng + ?Sized>(row: &mut [f64], rng: &mut R) {
    for v in row.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

fn row_rng(seed: u64, row: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Generates the dense `m x n` sensing matrix. Each row uses its own ChaCha
/// stream keyed by `(seed, row)`, so [`sensing_rows`] yields bit-identical
/// rows without materializing the matrix.
pub fn gen_sensing_matrix(m: usize, n: usize, seed: u64) -> Result<SensingMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::invalid_argument(format!(
            "matrix dimensions must be positive, got {m}x{n}"
        )));
    }
    let mut entries = Array2::<f64>::zeros((m, n));
    for (i, mut row) in entries.rows_mut().into_iter().enumerate() {
        let mut rng = row_rng(seed, i);
        fill_row(row.as_slice_mut().expect("row-major layout"), &mut rng);
    }
    Ok(SensingMatrix { entries, seed })
}

/// Streaming row generator for sweeps too large to hold densely; row `i`
/// equals row `i` of [`gen_sensing_matrix`] bit-for-bit.
pub fn sensing_rows(m: usize, n: usize, seed: u64) -> impl Iterator<Item = Array1<f64>> {
    (0..m).map(move |i| {
        let mut rng = row_rng(seed, i);
        let mut row = Array1::<f64>::zeros(n);
        fill_row(row.as_slice_mut().unwrap(), &mut rng);
        row
    })
}

/// Inner products `A x` exploiting the signal's support.
fn sparse_products(matrix: &SensingMatrix, signal: &SparseSignal) -> Array1<f64> {
    let m = matrix.rows();
    let mut out = Array1::<f64>::zeros(m);
    let values = signal.values();
    for i in 0..m {
        let row = matrix.row(i);
        let mut acc = 0.0;
        for &j in signal.support() {
            acc += row[j] * values[j];
        }
        out[i] = acc;
    }
    out
}

/// Takes noisy magnitude measurements `y_i = |<a_i, x>| + eta_i`.
///
/// Negative `y_i` are possible for `sigma > 0` and are passed through
/// unmodified.
pub fn measure<R: Rng + ?Sized>(
    matrix: &Arc<SensingMatrix>,
    signal: &SparseSignal,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<MeasurementSet> {
    if matrix.cols() != signal.n() {
        return Err(Error::dimension_mismatch(format!(
            "matrix has {} columns but signal has dimension {}",
            matrix.cols(),
            signal.n()
        )));
    }
    let m = matrix.rows();
    let scale = noise.sigma() * signal.norm();
    let mut eta = Array1::<f64>::zeros(m);
    if scale > 0.0 {
        for v in eta.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = scale * g;
        }
    }
    let products = sparse_products(matrix, signal);
    let y = Array1::from_iter(products.iter().zip(eta.iter()).map(|(p, e)| p.abs() + e));
    Ok(MeasurementSet {
        y,
        eta,
        matrix: Arc::clone(matrix),
    })
}

const FIXTURE_MAGIC: &[u8; 8] = b"PRFIXT01";

/// Writes `(x, A, y, eta)` as a little-endian binary fixture for cross-run
/// regression comparisons.
pub fn dump_fixture(
    path: &Path,
    signal: &SparseSignal,
    measurements: &MeasurementSet,
) -> Result<()> {
    let matrix = measurements.matrix();
    if matrix.cols() != signal.n() || measurements.len() != matrix.rows() {
        return Err(Error::dimension_mismatch(
            "fixture components disagree on dimensions",
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FIXTURE_MAGIC)?;
    for v in [
        signal.n() as u64,
        matrix.rows() as u64,
        signal.sparsity() as u64,
        matrix.seed(),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for &j in signal.support() {
        w.write_all(&(j as u64).to_le_bytes())?;
    }
    for &v in signal.values().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in matrix.entries().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in measurements.amplitudes().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in measurements.noise().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64_vec(r: &mut impl Read, len: usize) -> Result<Array1<f64>> {
    let mut out = Array1::<f64>::zeros(len);
    let mut buf = [0u8; 8];
    for v in out.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(out)
}

/// Reads a fixture written by [`dump_fixture`], bit-identically.
pub fn load_fixture(path: &Path) -> Result<(SparseSignal, MeasurementSet)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FIXTURE_MAGIC {
        return Err(Error::Parse("fixture magic mismatch".into()));
    }
    let n = read_u64(&mut r)? as usize;
    let m = read_u64(&mut r)? as usize;
    let s = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let mut support = Vec::with_capacity(s);
    for _ in 0..s {
        support.push(read_u64(&mut r)? as usize);
    }
    let values = read_f64_vec(&mut r, n)?;
    let flat = read_f64_vec(&mut r, m * n)?;
    let entries = Array2::from_shape_vec((m, n), flat.to_vec())
        .map_err(|e| Error::Parse(format!("fixture matrix shape: {e}")))?;
    let y = read_f64_vec(&mut r, m)?;
    let eta = read_f64_vec(&mut r, m)?;
    let signal = SparseSignal::from_parts(values, support)?;
    let matrix = Arc::new(SensingMatrix::from_entries(entries, seed));
    Ok((signal, MeasurementSet { y, eta, matrix }))
}
