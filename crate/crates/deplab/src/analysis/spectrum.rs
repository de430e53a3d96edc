//! Spectrum of the linearized loop matrix R = M·C.
//!
//! C maps sensors to motors and M maps sensor derivatives back to motor
//! space, so with matching dimensions R is square and its eigenstructure
//! describes the closed loop's linearized modes. Delayed sensor channels are
//! folded onto their source columns first: column `base + t` of both M and C
//! is added into column `indices[t]`, which keeps R square when the sensor
//! vector is longer than the motor vector.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{DelayedSensorConfig, ModelMatrix};

/// Relative modulus below which an eigenvalue counts as zero.
pub const NONZERO_RATIO: f64 = 1e-6;

/// Maximum number of eigenvectors computed per sample.
pub const LEADING_VECTORS: usize = 3;

/// Eigenstructure of the loop matrix at one instant.
#[derive(Debug, Clone)]
pub struct SpectrumSample {
    pub time: f64,
    /// Sorted by descending modulus; ties by descending real part, then
    /// descending imaginary part. Conjugate pairs are bitwise exact.
    pub eigenvalues: Vec<Complex<f64>>,
    /// Unit eigenvectors for the leading eigenvalues, phase-fixed so the
    /// largest component is real and positive.
    pub eigenvectors: Vec<DVector<Complex<f64>>>,
}

impl SpectrumSample {
    pub fn max_modulus(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |l| l.norm())
    }

    /// Number of eigenvalues with modulus above `NONZERO_RATIO` times the
    /// largest modulus.
    pub fn nonzero_count(&self) -> usize {
        let floor = NONZERO_RATIO * self.max_modulus();
        self.eigenvalues.iter().filter(|l| l.norm() > floor).count()
    }
}

/// Maps each delayed column of the extended sensor vector to its source
/// column: `(base + t, indices[t])`.
pub fn delayed_column_map(cfg: &DelayedSensorConfig, base: usize) -> Vec<(usize, usize)> {
    cfg.indices
        .iter()
        .enumerate()
        .map(|(t, &src)| (base + t, src))
        .collect()
}

fn fold_columns(mat: &DMatrix<f64>, base: usize, map: &[(usize, usize)]) -> Result<DMatrix<f64>> {
    let mut folded = mat.columns(0, base).into_owned();
    for &(col, src) in map {
        if col >= mat.ncols() || src >= base {
            return Err(Error::dim("fold column", mat.ncols(), col.max(src)));
        }
        for r in 0..mat.nrows() {
            folded[(r, src)] += mat[(r, col)];
        }
    }
    Ok(folded)
}

/// Composes the square loop matrix from M and C, folding delayed channels.
///
/// `base` is the raw sensor count; it must equal the motor count once the
/// delayed columns are folded away.
pub fn loop_matrix(
    model: &ModelMatrix,
    c: &DMatrix<f64>,
    base: usize,
    map: &[(usize, usize)],
) -> Result<DMatrix<f64>> {
    let m = model.motors();
    if c.nrows() != m || c.ncols() != model.sensors() {
        return Err(Error::dim("loop matrix controller", model.sensors(), c.ncols()));
    }
    if base != m {
        return Err(Error::dim("loop matrix base sensors", m, base));
    }
    if model.sensors() != base + map.len() {
        return Err(Error::dim(
            "loop matrix delayed channels",
            model.sensors() - base,
            map.len(),
        ));
    }
    let m_fold = fold_columns(model.matrix(), base, map)?;
    let c_fold = fold_columns(c, base, map)?;
    Ok(m_fold * c_fold)
}

fn sort_eigenvalues(vals: &mut [Complex<f64>]) {
    vals.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
}

/// Forces numerically-paired complex eigenvalues into bitwise conjugate
/// pairs: each value with positive imaginary part donates its bits to its
/// nearest negative-imaginary partner.
fn canonicalize_conjugates(vals: &mut [Complex<f64>]) {
    let scale = vals.iter().map(|l| l.norm()).fold(0.0f64, f64::max);
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let mut used = vec![false; vals.len()];
    for i in 0..vals.len() {
        if vals[i].im <= 0.0 || used[i] {
            continue;
        }
        let target = vals[i].conj();
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in vals.iter().enumerate() {
            if j == i || used[j] || v.im >= 0.0 {
                continue;
            }
            let d = (v - target).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, d)) = best {
            if d <= tol {
                vals[j] = target;
                used[i] = true;
                used[j] = true;
            }
        }
    }
}

/// One inverse-iteration eigenvector for eigenvalue `lambda` of `r`.
fn eigenvector_for(
    r: &DMatrix<Complex<f64>>,
    lambda: Complex<f64>,
    scale: f64,
) -> DVector<Complex<f64>> {
    let n = r.nrows();
    let mut delta = 1e-8 * scale.max(1e-12);
    for _ in 0..6 {
        let shift = lambda + Complex::new(delta, delta);
        let shifted = r - DMatrix::<Complex<f64>>::identity(n, n) * shift;
        let lu = shifted.lu();
        let mut v = DVector::from_element(n, Complex::new(1.0 / (n as f64).sqrt(), 0.0));
        let mut converged = false;
        for _ in 0..50 {
            let Some(next) = lu.solve(&v) else { break };
            let norm = next.norm();
            if !norm.is_finite() || norm == 0.0 {
                break;
            }
            v = next / Complex::new(norm, 0.0);
            let residual = (r * &v - &v * lambda).norm();
            if residual <= 1e-9 * scale.max(1e-12) {
                converged = true;
                break;
            }
        }
        if converged {
            return fix_phase(v);
        }
        delta *= 10.0;
    }
    // Deterministic fallback: the iteration state after the last pass.
    let shift = lambda + Complex::new(delta, delta);
    let shifted = r - DMatrix::<Complex<f64>>::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = DVector::from_element(n, Complex::new(1.0 / (n as f64).sqrt(), 0.0));
    for _ in 0..50 {
        let Some(next) = lu.solve(&v) else { break };
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        v = next / Complex::new(norm, 0.0);
    }
    fix_phase(v)
}

/// Rotates the vector so its largest-modulus component is real positive.
fn fix_phase(mut v: DVector<Complex<f64>>) -> DVector<Complex<f64>> {
    let mut idx = 0;
    let mut best = 0.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best {
            best = m;
            idx = i;
        }
    }
    if best > 0.0 {
        let rot = v[idx].conj() / best;
        v *= rot;
    }
    v
}

/// Full eigen-decomposition of a square loop matrix.
pub fn spectrum_of(r: &DMatrix<f64>, time: f64) -> Result<SpectrumSample> {
    if r.nrows() != r.ncols() {
        return Err(Error::dim("spectrum matrix", r.nrows(), r.ncols()));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectrum matrix"));
    }
    // The zero matrix is the loop matrix of every freshly initialized
    // controller; its spectrum is exact by definition, so skip the solver.
    if r.iter().all(|v| *v == 0.0) {
        let n = r.nrows();
        let eigenvectors = (0..LEADING_VECTORS.min(n))
            .map(|i| {
                let mut v = DVector::from_element(n, Complex::new(0.0, 0.0));
                v[i] = Complex::new(1.0, 0.0);
                v
            })
            .collect();
        return Ok(SpectrumSample {
            time,
            eigenvalues: vec![Complex::new(0.0, 0.0); n],
            eigenvectors,
        });
    }
    let a = faer::Mat::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)]);
    let mut vals: Vec<Complex<f64>> = a
        .eigenvalues()
        .map_err(|_| Error::invalid("eigenvalue iteration did not converge"))?;
    canonicalize_conjugates(&mut vals);
    sort_eigenvalues(&mut vals);
    let scale = vals.first().map_or(0.0, |l| l.norm());
    let rc = r.map(|x| Complex::new(x, 0.0));
    let eigenvectors = vals
        .iter()
        .take(LEADING_VECTORS.min(vals.len()))
        .map(|&l| eigenvector_for(&rc, l, scale))
        .collect();
    Ok(SpectrumSample {
        time,
        eigenvalues: vals,
        eigenvectors,
    })
}

/// Spectrum of R = M·C with delayed-channel folding.
pub fn spectrum(
    model: &ModelMatrix,
    c: &DMatrix<f64>,
    base: usize,
    map: &[(usize, usize)],
    time: f64,
) -> Result<SpectrumSample> {
    let r = loop_matrix(model, c, base, map)?;
    spectrum_of(&r, time)
}

/// Angle in [0, π/2] between the lines spanned by two complex vectors.
pub fn principal_angle(a: &DVector<Complex<f64>>, b: &DVector<Complex<f64>>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("principal angle", a.len(), b.len()));
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("principal angle of zero vector"));
    }
    let inner = a.dotc(b).norm() / (na * nb);
    Ok(inner.clamp(0.0, 1.0).acos())
}
