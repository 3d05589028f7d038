//! Fabrication-tolerance models: per-element LC thickness fields and
//! metallization misalignment.
//!
//! Thickness fields come in three flavors: uniform, tilted (linear in the
//! element coordinates) and correlated random. The random field is exact
//! at prototype scale: a dense exponential-kernel covariance is factored
//! by Cholesky decomposition for up to [`CHOLESKY_LIMIT`] elements. Larger
//! layouts fall back to a moving-average approximation (white noise
//! smoothed with an exponential kernel), which matches mean and variance
//! exactly and the correlation shape approximately.
//!
//! All generators are deterministic given (layout, parameters, seed).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aperture::ApertureLayout;
use crate::error::{Error, Result};

/// Largest element count factored exactly; beyond this the moving-average
/// approximation is used.
pub const CHOLESKY_LIMIT: usize = 2000;

/// Thickness values are clamped below at this floor (m) and the clamp
/// events counted on the field.
pub const THICKNESS_FLOOR: f64 = 0.5e-6;

/// Reference metallization offset (m) at which the misalignment window
/// width is specified.
pub const MISALIGN_REF_OFFSET: f64 = 30e-6;

/// Fitted half-width of the misalignment frequency window at the reference
/// offset, as a fraction of the center frequency. Pinned so that a 30 um
/// offset narrows the steered system's -3 dB fractional bandwidth from the
/// ideal ~24% to around 9%.
pub const MISALIGN_BW_COEFF: f64 = 0.085;

/// Generator descriptor for a thickness field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ToleranceDescriptor {
    Uniform,
    /// Linear tilt, gradients in m per m.
    Tilted { gx: f64, gy: f64 },
    /// Correlated Gaussian disorder: marginal std sigma (m), isotropic
    /// exponential correlation exp(-d / corr_len).
    Random { sigma: f64, corr_len: f64 },
}

/// Per-element LC thickness map plus a metallization offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceField {
    /// Thickness per element (m), layout order.
    pub t_lc_per_element: Vec<f64>,
    /// Metallization offset (dx, dy) in meters.
    pub misalignment: (f64, f64),
    /// Seed used for random generation (0 for deterministic kinds).
    pub seed: u64,
    pub descriptor: ToleranceDescriptor,
    /// Number of values raised to the thickness floor.
    pub clamp_events: usize,
}

impl ToleranceField {
    pub fn mean_thickness(&self) -> f64 {
        self.t_lc_per_element.iter().sum::<f64>() / self.t_lc_per_element.len() as f64
    }

    /// CSV export: index, x, y, t_lc.
    pub fn to_csv(&self, layout: &ApertureLayout) -> String {
        let mut out = String::from("index,x_m,y_m,t_lc_m\n");
        for (i, &t) in self.t_lc_per_element.iter().enumerate() {
            let (x, y) = layout.positions()[i];
            out.push_str(&format!("{i},{x:.12e},{y:.12e},{t:.12e}\n"));
        }
        out
    }
}

/// Every element at the nominal thickness; no misalignment.
pub fn uniform_field(layout: &ApertureLayout, t_nom: f64) -> Result<ToleranceField> {
    if t_nom <= 0.0 {
        return Err(Error::Domain(format!(
            "nominal thickness must be positive, got {t_nom}"
        )));
    }
    Ok(ToleranceField {
        t_lc_per_element: vec![t_nom; layout.len()],
        misalignment: (0.0, 0.0),
        seed: 0,
        descriptor: ToleranceDescriptor::Uniform,
        clamp_events: 0,
    })
}

/// Linear tilt t(x, y) = t_nom + gx*x + gy*y over the element positions.
/// On a centered layout the mean stays at t_nom. Errors if any corner of
/// the field would reach zero thickness.
pub fn tilted_field(
    layout: &ApertureLayout,
    t_nom: f64,
    gx: f64,
    gy: f64,
) -> Result<ToleranceField> {
    if t_nom <= 0.0 {
        return Err(Error::Domain(format!(
            "nominal thickness must be positive, got {t_nom}"
        )));
    }
    let values: Vec<f64> = layout
        .positions()
        .iter()
        .map(|&(x, y)| t_nom + gx * x + gy * y)
        .collect();
    if let Some((idx, &t)) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
    {
        if t <= 0.0 {
            let (x, y) = layout.positions()[idx];
            return Err(Error::Domain(format!(
                "tilt drives thickness to {t:.3e} m at corner ({x:.4e}, {y:.4e})"
            )));
        }
    }
    Ok(ToleranceField {
        t_lc_per_element: values,
        misalignment: (0.0, 0.0),
        seed: 0,
        descriptor: ToleranceDescriptor::Tilted { gx, gy },
        clamp_events: 0,
    })
}

/// Correlated Gaussian thickness field: mean t_nom, marginal std sigma,
/// correlation exp(-d / corr_len) between elements at distance d.
pub fn random_field(
    layout: &ApertureLayout,
    t_nom: f64,
    sigma: f64,
    corr_len: f64,
    seed: u64,
) -> Result<ToleranceField> {
    if t_nom <= 0.0 {
        return Err(Error::Domain(format!(
            "nominal thickness must be positive, got {t_nom}"
        )));
    }
    if sigma < 0.0 {
        return Err(Error::Domain(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    if corr_len <= 0.0 {
        return Err(Error::Domain(format!(
            "correlation length must be positive, got {corr_len}"
        )));
    }
    let n = layout.len();
    let mut values = vec![t_nom; n];
    let mut clamp_events = 0;
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let correlated = if n <= CHOLESKY_LIMIT {
            cholesky_colored(layout, corr_len, &z)?
        } else {
            moving_average_colored(layout, corr_len, &z)
        };
        for (v, c) in values.iter_mut().zip(correlated) {
            *v += sigma * c;
            if *v < THICKNESS_FLOOR {
                *v = THICKNESS_FLOOR;
                clamp_events += 1;
            }
        }
    }
    Ok(ToleranceField {
        t_lc_per_element: values,
        misalignment: (0.0, 0.0),
        seed,
        descriptor: ToleranceDescriptor::Random { sigma, corr_len },
        clamp_events,
    })
}

/// Color unit normals with the exact Cholesky factor of the
/// exponential-kernel correlation matrix.
fn cholesky_colored(layout: &ApertureLayout, corr_len: f64, z: &[f64]) -> Result<Vec<f64>> {
    let n = layout.len();
    let ps = layout.positions();
    // Lower-triangular packed covariance (unit variance).
    let mut l = vec![0.0_f64; n * (n + 1) / 2];
    let idx = |i: usize, j: usize| i * (i + 1) / 2 + j; // j <= i
    for i in 0..n {
        for j in 0..=i {
            let dx = ps[i].0 - ps[j].0;
            let dy = ps[i].1 - ps[j].1;
            let d = (dx * dx + dy * dy).sqrt();
            l[idx(i, j)] = (-d / corr_len).exp();
        }
    }
    // In-place Cholesky with a tiny jitter retry for numerical safety.
    for jitter in [0.0, 1e-10] {
        let mut a = l.clone();
        if jitter > 0.0 {
            for i in 0..n {
                a[idx(i, i)] += jitter;
            }
        }
        if cholesky_in_place(&mut a, n) {
            let mut out = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..=i {
                    acc += a[idx(i, j)] * z[j];
                }
                out[i] = acc;
            }
            return Ok(out);
        }
    }
    Err(Error::Numeric(
        "correlation matrix is not positive definite".to_string(),
    ))
}

/// Packed lower-triangular Cholesky; returns false if a pivot fails.
fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
    for j in 0..n {
        let mut d = a[idx(j, j)];
        for k in 0..j {
            d -= a[idx(j, k)] * a[idx(j, k)];
        }
        if d <= 0.0 {
            return false;
        }
        let d_sqrt = d.sqrt();
        a[idx(j, j)] = d_sqrt;
        for i in (j + 1)..n {
            let mut s = a[idx(i, j)];
            for k in 0..j {
                s -= a[idx(i, k)] * a[idx(j, k)];
            }
            a[idx(i, j)] = s / d_sqrt;
        }
    }
    true
}

/// Approximate coloring for large layouts: smooth white noise with an
/// exponential kernel of half the correlation length and renormalize to
/// unit marginal variance. The resulting correlation approximates the
/// exponential target (exact mean and variance, approximate shape).
fn moving_average_colored(layout: &ApertureLayout, corr_len: f64, z: &[f64]) -> Vec<f64> {
    let n = layout.len();
    let ps = layout.positions();
    let kernel_len = corr_len / 2.0;
    // Ignore weights below this to keep the stencil local.
    let cutoff = 6.0 * kernel_len;
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        let mut norm = 0.0;
        for j in 0..n {
            let dx = ps[i].0 - ps[j].0;
            let dy = ps[i].1 - ps[j].1;
            let d2 = dx * dx + dy * dy;
            if d2 > cutoff * cutoff {
                continue;
            }
            let w = (-d2.sqrt() / kernel_len).exp();
            acc += w * z[j];
            norm += w * w;
        }
        out[i] = acc / norm.sqrt();
    }
    out
}

/// Element-amplitude factor of a metallization misalignment at frequency
/// `f`: unity at the center frequency, a Gaussian band-narrowing window
/// away from it, with the window width shrinking as the offset grows.
pub fn misalignment_response(offset: (f64, f64), frequency: f64, f_center: f64) -> f64 {
    let magnitude = (offset.0 * offset.0 + offset.1 * offset.1).sqrt();
    if magnitude <= 0.0 {
        return 1.0;
    }
    let width = MISALIGN_BW_COEFF * f_center * (MISALIGN_REF_OFFSET / magnitude);
    let x = (frequency - f_center) / width;
    (-x * x).exp()
}
