//! Toy-scale Lipschitz generative models and brute-force latent-net
//! optimizers.
//!
//! These verify, exhaustively over a covering net of the latent ball, that
//! (i) the amplitude-loss minimizer over the model range lands near the
//! signal, and (ii) the spectral quadratic form maximized over the
//! normalized range recovers the signal direction. Latent dimension is
//! capped at 3: the whole point of this module is exhaustive search.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{min_singular_value, norm2, spectral_norm};
use crate::signals::SensingMatrix;
use crate::spectral::{build_truncated_operator, OperatorRepresentation, TruncationBand};

const NET_SIZE_LIMIT: u64 = 10_000_000;
const DEFAULT_LATENT_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
enum GeneratorKind {
    Linear { b: Array2<f64> },
    Relu { w1: Array2<f64>, w2: Array2<f64> },
}

/// An L-Lipschitz map from the latent ball `B_2^k(r)` into `R^n`.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    k: usize,
    n: usize,
    r: f64,
    lipschitz_bound: f64,
    r_min: Option<f64>,
    kind: GeneratorKind,
}

impl GenerativeModel {
    pub fn latent_dim(&self) -> usize {
        self.k
    }

    pub fn output_dim(&self) -> usize {
        self.n
    }

    pub fn latent_radius(&self) -> f64 {
        self.r
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// Norm floor for the normalized-model domain, when configured.
    pub fn r_min(&self) -> Option<f64> {
        self.r_min
    }

    pub fn set_r_min(&mut self, r_min: f64) {
        self.r_min = Some(r_min);
    }

    /// Evaluates `G(z)`; inputs outside the latent ball are rejected (with a
    /// tiny relative slack for boundary points produced by net scaling).
    pub fn evaluate(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        if z.len() != self.k {
            return Err(Error::dimension_mismatch(format!(
                "latent input has {} entries, model expects {}",
                z.len(),
                self.k
            )));
        }
        let nrm = norm2(&z);
        if nrm > self.r * (1.0 + 1e-9) {
            return Err(Error::invalid_argument(format!(
                "latent point norm {nrm} exceeds radius {}",
                self.r
            )));
        }
        Ok(self.evaluate_unchecked(z))
    }

    fn evaluate_unchecked(&self, z: ArrayView1<f64>) -> Array1<f64> {
        match &self.kind {
            GeneratorKind::Linear { b } => b.dot(&z),
            GeneratorKind::Relu { w1, w2 } => {
                let hidden = w1.dot(&z).mapv(|v| v.max(0.0));
                w2.dot(&hidden)
            }
        }
    }
}

/// Linear model `G(z) = B z`; the Lipschitz constant is the spectral norm of
/// `B`, exactly, and the norm floor defaults to `sigma_min(B)` times a small
/// latent floor.
pub fn make_linear_generator(b: Array2<f64>, r: f64) -> Result<GenerativeModel> {
    let (n, k) = (b.nrows(), b.ncols());
    if k == 0 || n < k {
        return Err(Error::invalid_argument(format!(
            "linear generator needs n >= k >= 1, got {n}x{k}"
        )));
    }
    if r.is_nan() || r <= 0.0 {
        return Err(Error::invalid_argument("latent radius must be positive"));
    }
    let l = spectral_norm(&b.view());
    if l == 0.0 {
        return Err(Error::invalid_argument(
            "zero matrix is not a valid generator",
        ));
    }
    let r_min = min_singular_value(&b.view()) * DEFAULT_LATENT_FLOOR;
    Ok(GenerativeModel {
        k,
        n,
        r,
        lipschitz_bound: l,
        r_min: Some(r_min),
        kind: GeneratorKind::Linear { b },
    })
}

/// Two-layer ReLU model `G(z) = W2 max(W1 z, 0)` with no offsets; the
/// product of spectral norms is a valid Lipschitz bound since the entrywise
/// max is 1-Lipschitz.
pub fn make_relu_generator(w1: Array2<f64>, w2: Array2<f64>, r: f64) -> Result<GenerativeModel> {
    let (h, k) = (w1.nrows(), w1.ncols());
    let (n, h2) = (w2.nrows(), w2.ncols());
    if h == 0 || k == 0 || n == 0 || h2 != h {
        return Err(Error::dimension_mismatch(format!(
            "relu generator layer shapes disagree: {h}x{k} then {n}x{h2}"
        )));
    }
    if r.is_nan() || r <= 0.0 {
        return Err(Error::invalid_argument("latent radius must be positive"));
    }
    let l = spectral_norm(&w1.view()) * spectral_norm(&w2.view());
    Ok(GenerativeModel {
        k,
        n,
        r,
        lipschitz_bound: l,
        r_min: None,
        kind: GeneratorKind::Relu { w1, w2 },
    })
}

/// A delta-covering of the latent ball by an axis-aligned grid of pitch
/// `delta / sqrt(k)`, with out-of-ball grid points pulled back to the
/// boundary.
#[derive(Debug, Clone)]
pub struct LatentNet {
    delta: f64,
    points: Vec<Array1<f64>>,
}

impl LatentNet {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn points(&self) -> &[Array1<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn build_latent_net(model: &GenerativeModel, delta: f64) -> Result<LatentNet> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::invalid_argument("net resolution must be positive"));
    }
    let k = model.latent_dim();
    if k > 3 {
        return Err(Error::invalid_argument(format!(
            "latent dimension {k} exceeds the brute-force cap of 3"
        )));
    }
    let r = model.latent_radius();
    let pitch = delta / (k as f64).sqrt();
    let reach = r + pitch / 2.0;
    let imax = (reach / pitch).floor() as i64;
    let side = 2 * imax as u128 + 1;
    let estimated = side.saturating_pow(k as u32);
    if estimated > NET_SIZE_LIMIT as u128 {
        return Err(Error::NetTooLarge {
            estimated,
            limit: NET_SIZE_LIMIT,
        });
    }
    let mut points = Vec::new();
    let mut index = vec![-imax; k];
    'outer: loop {
        let mut p = Array1::<f64>::zeros(k);
        for (d, &i) in index.iter().enumerate() {
            p[d] = i as f64 * pitch;
        }
        let nrm = norm2(&p.view());
        if nrm <= r {
            points.push(p);
        } else if nrm <= reach {
            // Pull back to the boundary: the scaled point stays within
            // pitch/2 of the original, preserving the delta cover.
            points.push(p.mapv(|v| v * (r / nrm)));
        }
        for slot in index.iter_mut() {
            *slot += 1;
            if *slot <= imax {
                continue 'outer;
            }
            *slot = -imax;
        }
        break;
    }
    Ok(LatentNet { delta, points })
}

/// Result of the brute-force amplitude-loss scan over the net image.
#[derive(Debug, Clone)]
pub struct AmplitudeMinResult {
    /// Minimizer of `||y - |A w||_2^2` over the net image.
    pub q: Array1<f64>,
    /// Achieved objective at `q`.
    pub objective: f64,
    /// Optimality slack over the net: zero by construction (exhaustive scan).
    pub tau: f64,
    /// Bound on how far the net optimum can sit above the continuum optimum,
    /// from the Lipschitz image spacing: `2 sqrt(f(q)) ||A|| L delta +
    /// (||A|| L delta)^2`.
    pub continuum_slack: f64,
    pub net_index: usize,
}

fn scan_net<F>(
    model: &GenerativeModel,
    net: &LatentNet,
    mut score: F,
) -> Result<(usize, f64, Array1<f64>)>
where
    F: FnMut(&Array1<f64>) -> Option<f64>,
{
    if net.is_empty() {
        return Err(Error::invalid_argument("latent net is empty"));
    }
    let mut best: Option<(usize, f64, Array1<f64>)> = None;
    for (idx, z) in net.points().iter().enumerate() {
        let w = model.evaluate_unchecked(z.view());
        if let Some(val) = score(&w) {
            let better = match &best {
                None => true,
                Some((_, cur, _)) => val < *cur,
            };
            if better {
                best = Some((idx, val, w));
            }
        }
    }
    best.ok_or_else(|| Error::InvalidConfiguration("no admissible net point".into()))
}

/// Exhaustively minimizes the amplitude loss `f(w) = ||y - |A w||_2^2` over
/// the net image; ties go to the first net index.
pub fn brute_force_amplitude_min(
    model: &GenerativeModel,
    net: &LatentNet,
    matrix: &SensingMatrix,
    y: ArrayView1<f64>,
) -> Result<AmplitudeMinResult> {
    if matrix.cols() != model.output_dim() {
        return Err(Error::dimension_mismatch(
            "matrix columns disagree with the model output",
        ));
    }
    if y.len() != matrix.rows() {
        return Err(Error::dimension_mismatch(
            "y length differs from matrix rows",
        ));
    }
    let a = matrix.entries();
    let (net_index, objective, q) = scan_net(model, net, |w| {
        let mut f = 0.0;
        for (i, row) in a.rows().into_iter().enumerate() {
            let d = y[i] - row.dot(w).abs();
            f += d * d;
        }
        Some(f)
    })?;
    let spacing = spectral_norm(&a) * model.lipschitz_bound() * net.delta();
    let continuum_slack = 2.0 * objective.sqrt() * spacing + spacing * spacing;
    Ok(AmplitudeMinResult {
        q,
        objective,
        tau: 0.0,
        continuum_slack,
        net_index,
    })
}

/// Nearest point of the net image to `x`; ties go to the first net index.
#[derive(Debug, Clone)]
pub struct RangeProjection {
    pub p: Array1<f64>,
    pub distance: f64,
    pub net_index: usize,
}

pub fn range_projection(
    model: &GenerativeModel,
    net: &LatentNet,
    x: ArrayView1<f64>,
) -> Result<RangeProjection> {
    if x.len() != model.output_dim() {
        return Err(Error::dimension_mismatch(
            "x dimension differs from the model output",
        ));
    }
    let (net_index, dist_sq, p) = scan_net(model, net, |w| {
        let d = x
            .iter()
            .zip(w.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>();
        Some(d)
    })?;
    Ok(RangeProjection {
        p,
        distance: dist_sq.sqrt(),
        net_index,
    })
}

/// Spectral initialization over the normalized net image: maximize the
/// truncated-operator quadratic form over `G(z)/||G(z)||` with
/// `||G(z)|| > R_min`, then scale the maximizer by `lambda`.
#[derive(Debug, Clone)]
pub struct GenerativeSpectralInit {
    pub xhat: Array1<f64>,
    pub x0: Array1<f64>,
    pub lambda: f64,
    pub net_index: usize,
    /// Net points excluded by the norm floor.
    pub excluded: usize,
}

pub fn generative_spectral_init(
    model: &GenerativeModel,
    net: &LatentNet,
    matrix: &Arc<SensingMatrix>,
    y: ArrayView1<f64>,
    band: &TruncationBand,
) -> Result<GenerativeSpectralInit> {
    if matrix.cols() != model.output_dim() {
        return Err(Error::dimension_mismatch(
            "matrix columns disagree with the model output",
        ));
    }
    if net.is_empty() {
        return Err(Error::invalid_argument("latent net is empty"));
    }
    let repr = OperatorRepresentation::auto_for(matrix.cols());
    let op = build_truncated_operator(matrix, y, band, repr)?;
    let r_min = match model.r_min() {
        Some(v) => v,
        None => {
            // Default floor: a small fraction of the median image norm.
            let mut norms: Vec<f64> = net
                .points()
                .iter()
                .map(|z| norm2(&model.evaluate_unchecked(z.view()).view()))
                .collect();
            norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
            DEFAULT_LATENT_FLOOR * norms[norms.len() / 2]
        }
    };
    let mut excluded = 0usize;
    let scan = scan_net(model, net, |w| {
        let nrm = norm2(&w.view());
        if nrm <= r_min {
            excluded += 1;
            return None;
        }
        let unit = w.mapv(|v| v / nrm);
        // scan_net minimizes; negate the quadratic form to maximize.
        Some(-op.quadratic_form(unit.view()).expect("dimensions checked"))
    });
    let (net_index, _, w) = scan.map_err(|e| match e {
        Error::InvalidConfiguration(_) => {
            Error::InvalidConfiguration("every net point was excluded by the norm floor".into())
        }
        other => other,
    })?;
    let xhat = &w / norm2(&w.view());
    let lambda = op.lambda();
    let x0 = xhat.mapv(|v| lambda * v);
    Ok(GenerativeSpectralInit {
        xhat,
        x0,
        lambda,
        net_index,
        excluded,
    })
}

/// Aggregate of the toy-scale verification quantities for one instance.
#[derive(Debug, Clone)]
pub struct GenOptResult {
    /// Amplitude-loss minimizer over the net image.
    pub q: Array1<f64>,
    /// Net projection of the signal (representation point).
    pub p: Array1<f64>,
    /// Optimality slack over the net (zero: the scan is exhaustive).
    pub tau: f64,
    /// Lipschitz bound on the net-vs-continuum optimization slack.
    pub continuum_slack: f64,
    /// Maximizer of the spectral quadratic form over the normalized image.
    pub xhat: Array1<f64>,
    /// `lambda * xhat`.
    pub x0: Array1<f64>,
    pub lambda: f64,
}

/// Runs all three brute-force verifications on one instance.
pub fn verify_instance(
    model: &GenerativeModel,
    net: &LatentNet,
    matrix: &Arc<SensingMatrix>,
    y: ArrayView1<f64>,
    x_true: ArrayView1<f64>,
    band: &TruncationBand,
) -> Result<GenOptResult> {
    let amp = brute_force_amplitude_min(model, net, matrix, y)?;
    let proj = range_projection(model, net, x_true)?;
    let spec = generative_spectral_init(model, net, matrix, y, band)?;
    Ok(GenOptResult {
        q: amp.q,
        p: proj.p,
        tau: amp.tau,
        continuum_slack: amp.continuum_slack,
        xhat: spec.xhat,
        x0: spec.x0,
        lambda: spec.lambda,
    })
}

/// Uniform sample from the annulus `{lo_frac * r <= ||z|| <= r}` of the
/// latent ball; used by the toy experiments to keep signals bounded away
/// from zero.
pub fn sample_latent_annulus<R: Rng + ?Sized>(
    k: usize,
    r: f64,
    lo_frac: f64,
    rng: &mut R,
) -> Array1<f64> {
    assert!(k >= 1 && r > 0.0 && (0.0..1.0).contains(&lo_frac));
    loop {
        let g = Array1::from_iter((0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let nrm = norm2(&g.view());
        if nrm == 0.0 {
            continue;
        }
        // Uniform radius in the ball: r * U^(1/k).
        let u: f64 = rng.random();
        let radius = r * u.powf(1.0 / k as f64);
        if radius >= lo_frac * r {
            return g.mapv(|v| v * radius / nrm);
        }
    }
}
