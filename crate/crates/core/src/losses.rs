//! Reference implementations of the training losses: pairwise similarity
//! distillation and masked binary cross entropy, with analytic gradients.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub patch_grid: (usize, usize),
    pub epsilon_clip: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            patch_grid: (4, 4),
            epsilon_clip: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.patch_grid.0 == 0 || self.patch_grid.1 == 0 {
            return Err(Error::InvalidInput("patch grid must be at least 1x1".into()));
        }
        if !(self.epsilon_clip > 0.0 && self.epsilon_clip < 0.5) {
            return Err(Error::InvalidInput(format!("epsilon_clip must be in (0, 0.5), got {}", self.epsilon_clip)));
        }
        Ok(())
    }
}

/// A `width × height × channels` feature map, row-major with channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidInput("feature grid dimensions must be positive".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "feature grid {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("feature values must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a `n × 1 × C` grid from patch vectors.
    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        let channels = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != channels) {
            return Err(Error::InvalidInput("patch vectors differ in length".into()));
        }
        Self::new(vectors.len(), 1, channels, vectors.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Channel vector of cell `i` in row-major cell order.
    pub fn cell(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        self.cell(y * self.width + x)
    }
}

/// Per-patch channel means over a `grid.0 × grid.1` partition into
/// near-equal rectangles. Patch `(px, py)` covers columns
/// `⌊px·W/gw⌋ .. ⌊(px+1)·W/gw⌋`, and likewise for rows.
pub fn patch_pool(feat: &FeatureGrid, grid: (usize, usize)) -> Result<FeatureGrid> {
    let (gw, gh) = grid;
    if gw == 0 || gh == 0 || gw > feat.width || gh > feat.height {
        return Err(Error::InvalidInput(format!(
            "patch grid {gw}x{gh} does not fit a {}x{} feature map",
            feat.width, feat.height
        )));
    }
    let c = feat.channels;
    let mut out = Vec::with_capacity(gw * gh * c);
    for py in 0..gh {
        let (y0, y1) = (py * feat.height / gh, (py + 1) * feat.height / gh);
        for px in 0..gw {
            let (x0, x1) = (px * feat.width / gw, (px + 1) * feat.width / gw);
            let mut acc = vec![0.0; c];
            for y in y0..y1 {
                for x in x0..x1 {
                    for (a, v) in acc.iter_mut().zip(feat.at(x, y)) {
                        *a += v;
                    }
                }
            }
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            out.extend(acc.into_iter().map(|a| a / n));
        }
    }
    FeatureGrid::new(gw, gh, c, out)
}

/// Cosine similarity matrix between patch vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    pub matrix: DMatrix<f64>,
    /// Patches whose vector has zero norm; their off-diagonal entries are 0.
    pub zero_norm: Vec<usize>,
}

impl Similarity {
    pub fn is_degenerate(&self) -> bool {
        !self.zero_norm.is_empty()
    }
}

pub fn pairwise_similarity(f: &FeatureGrid) -> Similarity {
    let n = f.cells();
    let norms: Vec<f64> = (0..n).map(|i| norm(f.cell(i))).collect();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else {
            (dot(f.cell(i), f.cell(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    });
    Similarity {
        matrix,
        zero_norm: (0..n).filter(|&i| norms[i] == 0.0).collect(),
    }
}

/// Mean squared difference over all ordered pairs, diagonal included.
pub fn kd_loss(a_teacher: &DMatrix<f64>, a_student: &DMatrix<f64>) -> Result<f64> {
    if a_teacher.shape() != a_student.shape() || !a_teacher.is_square() {
        return Err(Error::InvalidInput(format!(
            "similarity matrices differ: {:?} vs {:?}",
            a_teacher.shape(),
            a_student.shape()
        )));
    }
    let n = a_teacher.nrows() as f64;
    Ok((a_student - a_teacher).norm_squared() / (n * n))
}

/// Distillation loss and its gradient with respect to the student's patch
/// vectors. Zero-norm student patches receive a zero gradient.
pub fn kd_loss_with_grad(a_teacher: &DMatrix<f64>, student: &FeatureGrid) -> Result<(f64, FeatureGrid)> {
    let sim = pairwise_similarity(student);
    let a = &sim.matrix;
    let loss = kd_loss(a_teacher, a)?;
    let n = a.nrows();
    let c = student.channels;
    let norms: Vec<f64> = (0..n).map(|i| norm(student.cell(i))).collect();
    let mut grad = vec![0.0; n * c];
    let coef = 2.0 / (n * n) as f64;
    for k in 0..n {
        if norms[k] == 0.0 {
            continue;
        }
        let fk = student.cell(k);
        let g = &mut grad[k * c..(k + 1) * c];
        for j in (0..n).filter(|&j| j != k && norms[j] > 0.0) {
            // a_kj appears at (k, j) and (j, k).
            let w = coef * ((a[(k, j)] - a_teacher[(k, j)]) + (a[(j, k)] - a_teacher[(j, k)]));
            let fj = student.cell(j);
            let inv = 1.0 / (norms[k] * norms[j]);
            let self_term = a[(k, j)] / (norms[k] * norms[k]);
            for ch in 0..c {
                g[ch] += w * (fj[ch] * inv - self_term * fk[ch]);
            }
        }
    }
    Ok((loss, FeatureGrid::new(student.width, student.height, c, grad)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BceOutput {
    pub loss: f64,
    /// d loss / d b; zero outside V and where the clamp is active.
    pub grad: Raster<f64>,
}

/// Binary cross entropy over the pixels of `visibility`, normalized by `|V|`,
/// with `b` clamped to `[ε, 1−ε]`.
pub fn bce_loss(omega: &BinaryMask, b: &Raster<f64>, visibility: &BinaryMask, epsilon_clip: f64) -> Result<BceOutput> {
    omega.ensure_same_size(b)?;
    omega.ensure_same_size(visibility)?;
    if !(epsilon_clip > 0.0 && epsilon_clip < 0.5) {
        return Err(Error::InvalidInput(format!("epsilon_clip must be in (0, 0.5), got {epsilon_clip}")));
    }
    if let Some(p) = b.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("probability {p} outside [0, 1]")));
    }
    let count = visibility.count_ones();
    if count == 0 {
        return Err(Error::EmptyVisibility);
    }
    let norm = 1.0 / count as f64;
    let (lo, hi) = (epsilon_clip, 1.0 - epsilon_clip);
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(b.len());
    for ((&w, &p), &vis) in omega.iter().zip(b.iter()).zip(visibility.iter()) {
        if !vis {
            grad.push(0.0);
            continue;
        }
        let q = p.clamp(lo, hi);
        sum += if w { -q.ln() } else { -(1.0 - q).ln() };
        let active = p >= lo && p <= hi;
        grad.push(match (active, w) {
            (false, _) => 0.0,
            (true, true) => -norm / q,
            (true, false) => norm / (1.0 - q),
        });
    }
    Ok(BceOutput {
        loss: sum * norm,
        grad: Raster::from_vec(b.width(), b.height(), grad)?,
    })
}

/// `bce + lambda · kd`.
pub fn total_loss(bce: f64, kd: f64, lambda: f64) -> f64 {
    bce + lambda * kd
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of [`self_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct SelfCheckReport {
    pub kd_hand_case: f64,
    pub bce_single_pixel: f64,
    pub kd_scale_invariant: bool,
    pub kd_max_rel_error: f64,
    pub bce_max_rel_error: f64,
    pub instances: usize,
}

impl SelfCheckReport {
    pub const GRADIENT_TOLERANCE: f64 = 1e-5;

    pub fn passed(&self) -> bool {
        self.kd_hand_case == 0.5
            && (self.bce_single_pixel - std::f64::consts::LN_2).abs() < 1e-12
            && self.kd_scale_invariant
            && self.kd_max_rel_error < Self::GRADIENT_TOLERANCE
            && self.bce_max_rel_error < Self::GRADIENT_TOLERANCE
    }
}

/// Relative gradient error: largest absolute deviation divided by the
/// largest numerical component.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let dev = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = numeric.iter().map(|n| n.abs()).fold(0.0, f64::max).max(1e-12);
    dev / scale
}

/// Runs the hand-computed cases and compares analytic gradients against
/// central finite differences (step 1e-4) on `instances` random problems.
pub fn self_check(instances: usize, seed: u64) -> Result<SelfCheckReport> {
    const STEP: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let teacher = FeatureGrid::from_vectors(&[vec![1.0, 0.0], vec![0.0, 1.0]])?;
    let student = FeatureGrid::from_vectors(&[vec![1.0, 0.0], vec![1.0, 0.0]])?;
    let kd_hand_case = kd_loss(&pairwise_similarity(&teacher).matrix, &pairwise_similarity(&student).matrix)?;

    let one = BinaryMask::full(1, 1);
    let bce_single_pixel = bce_loss(&one, &Raster::filled(1, 1, 0.5), &one, 1e-7)?.loss;

    let mut kd_scale_invariant = true;
    let (mut kd_err, mut bce_err) = (0.0f64, 0.0f64);
    for _ in 0..instances {
        // One channel makes every similarity ±1 with a vanishing gradient.
        let (w, h, c) = (rng.random_range(2..5), rng.random_range(2..5), rng.random_range(2..6));
        let mut gen = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-2.0..2.0)).collect() };
        let t = FeatureGrid::new(w, h, c, gen(w * h * c))?;
        let s = FeatureGrid::new(w, h, c, gen(w * h * c))?;
        let a_t = pairwise_similarity(&t).matrix;

        let mut rescaled = t.clone();
        for i in 0..t.cells() {
            // Powers of two rescale without rounding, so equality is exact.
            let k = 2f64.powi(rng.random_range(-4..5));
            for x in &mut rescaled.as_mut_slice()[i * c..(i + 1) * c] {
                *x *= k;
            }
        }
        kd_scale_invariant &= kd_loss(&a_t, &pairwise_similarity(&rescaled).matrix)? == 0.0;

        let (_, grad) = kd_loss_with_grad(&a_t, &s)?;
        let numeric: Vec<f64> = (0..s.as_slice().len())
            .map(|i| {
                let eval = |delta: f64| {
                    let mut p = s.clone();
                    p.as_mut_slice()[i] += delta;
                    kd_loss(&a_t, &pairwise_similarity(&p).matrix)
                };
                Ok((eval(STEP)? - eval(-STEP)?) / (2.0 * STEP))
            })
            .collect::<Result<_>>()?;
        kd_err = kd_err.max(relative_error(grad.as_slice(), &numeric));

        let (bw, bh) = (rng.random_range(3..9), rng.random_range(3..9));
        let omega = Raster::from_fn(bw, bh, |_, _| rng.random_bool(0.4));
        let mut vis = Raster::from_fn(bw, bh, |_, _| rng.random_bool(0.7));
        vis.set(0, 0, true);
        let b = Raster::from_fn(bw, bh, |_, _| rng.random_range(0.05..0.95));
        let out = bce_loss(&omega, &b, &vis, 1e-7)?;
        let numeric: Vec<f64> = (0..b.len())
            .map(|i| {
                let eval = |delta: f64| {
                    let mut p = b.clone();
                    p.as_mut_slice()[i] += delta;
                    bce_loss(&omega, &p, &vis, 1e-7).map(|o| o.loss)
                };
                Ok((eval(STEP)? - eval(-STEP)?) / (2.0 * STEP))
            })
            .collect::<Result<_>>()?;
        bce_err = bce_err.max(relative_error(out.grad.as_slice(), &numeric));
    }
    Ok(SelfCheckReport {
        kd_hand_case,
        bce_single_pixel,
        kd_scale_invariant,
        kd_max_rel_error: kd_err,
        bce_max_rel_error: bce_err,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vectors(v: &[&[f64]]) -> FeatureGrid {
        FeatureGrid::from_vectors(&v.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn pool_identity_and_constant() {
        let f = FeatureGrid::new(3, 2, 2, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(patch_pool(&f, (3, 2)).unwrap(), f);
        let k = FeatureGrid::new(5, 7, 3, vec![2.5; 105]).unwrap();
        let p = patch_pool(&k, (2, 3)).unwrap();
        assert!(p.as_slice().iter().all(|&x| (x - 2.5).abs() < 1e-15));
        assert!(patch_pool(&f, (4, 1)).is_err());
    }

    #[test]
    fn pool_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..8 * 8 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = FeatureGrid::new(8, 8, 3, data.clone()).unwrap();
        let p = patch_pool(&f, (2, 2)).unwrap();
        for py in 0..2 {
            for px in 0..2 {
                for ch in 0..3 {
                    let mut s = 0.0;
                    for y in 4 * py..4 * py + 4 {
                        for x in 4 * px..4 * px + 4 {
                            s += data[(y * 8 + x) * 3 + ch];
                        }
                    }
                    assert!((p.at(px, py)[ch] - s / 16.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn similarity_examples() {
        let a = pairwise_similarity(&vectors(&[&[1.0, 0.0], &[0.0, 1.0]]));
        assert_eq!(a.matrix[(0, 1)], 0.0);
        let b = pairwise_similarity(&vectors(&[&[1.0, 2.0], &[5.0, 10.0]]));
        assert!((b.matrix[(0, 1)] - 1.0).abs() < 1e-15);
        let z = pairwise_similarity(&vectors(&[&[0.0, 0.0], &[1.0, 1.0]]));
        assert_eq!(z.zero_norm, vec![0]);
        assert_eq!(z.matrix[(0, 1)], 0.0);
        assert_eq!(z.matrix[(0, 0)], 1.0);
        assert!(!b.is_degenerate() && z.is_degenerate());
    }

    #[test]
    fn similarity_matches_reference_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let a = pairwise_similarity(&FeatureGrid::from_vectors(&v).unwrap()).matrix;
        for i in 0..6 {
            for j in 0..6 {
                let (mut d, mut ni, mut nj) = (0.0, 0.0, 0.0);
                for (x, y) in v[i].iter().zip(&v[j]) {
                    d += x * y;
                    ni += x * x;
                    nj += y * y;
                }
                let expected = if i == j { 1.0 } else { d / (ni.sqrt() * nj.sqrt()) };
                assert!((a[(i, j)] - expected).abs() < 1e-12);
                assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
    }

    #[test]
    fn kd_hand_case() {
        let t = pairwise_similarity(&vectors(&[&[1.0, 0.0], &[0.0, 1.0]])).matrix;
        let s = pairwise_similarity(&vectors(&[&[1.0, 0.0], &[1.0, 0.0]])).matrix;
        assert_eq!(kd_loss(&t, &s).unwrap(), 0.5);
        assert_eq!(kd_loss(&t, &t).unwrap(), 0.0);
        assert!(kd_loss(&t, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn bce_examples() {
        let one = BinaryMask::full(1, 1);
        let out = bce_loss(&one, &Raster::filled(1, 1, 0.5), &one, 1e-7).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);

        let omega = Raster::from_vec(2, 2, vec![true, false, true, false]).unwrap();
        let b = omega.map(|&w| if w { 1.0 } else { 0.0 });
        let full = BinaryMask::full(2, 2);
        let out = bce_loss(&omega, &b, &full, 1e-7).unwrap();
        assert!((out.loss + (1.0f64 - 1e-7).ln()).abs() < 1e-15);
        assert!(out.grad.iter().all(|&g| g == 0.0));

        assert!(matches!(
            bce_loss(&omega, &b, &BinaryMask::empty(2, 2), 1e-7),
            Err(Error::EmptyVisibility)
        ));
        assert!(bce_loss(&omega, &Raster::filled(2, 2, 1.5), &full, 1e-7).is_err());
    }

    #[test]
    fn bce_matches_reference_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let omega = Raster::from_fn(16, 16, |_, _| rng.random_bool(0.3));
        let vis = Raster::from_fn(16, 16, |_, _| rng.random_bool(0.8));
        let b = Raster::from_fn(16, 16, |_, _| rng.random::<f64>());
        let eps = 1e-7;
        let out = bce_loss(&omega, &b, &vis, eps).unwrap();
        let (mut s, mut n) = (0.0, 0.0);
        for i in 0..256 {
            if vis.as_slice()[i] {
                let p = b.as_slice()[i].max(eps).min(1.0 - eps);
                s -= if omega.as_slice()[i] { p.ln() } else { (1.0 - p).ln() };
                n += 1.0;
            }
        }
        assert!((out.loss - s / n).abs() < 1e-12);
        for (g, &v) in out.grad.iter().zip(vis.iter()) {
            if !v {
                assert_eq!(*g, 0.0);
            }
        }
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.3, 0.5, 0.0), 0.3);
        assert!((total_loss(0.3, 0.5, 1.0) - 0.8).abs() < 1e-15);
        assert_eq!(LossConfig::default().lambda, 1.0);
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { epsilon_clip: 0.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let report = self_check(20, 7).unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
