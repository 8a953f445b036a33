//! Comparison methods: Θ-IPOD, the DC algorithm, IMO and Gaussian smoothing.

use nalgebra::{DMatrix, DVector};

use crate::apps::{Neighborhood, OutlierFit, RegressionProblem};
use crate::error::{Error, Result};
use crate::quadform::TruncatedQuadratic;
use crate::solution::Solution;

/// Hard threshold `Θ_h(v; t)`: `v` when `|v| > t`, else 0.
pub fn hard_threshold(v: f64, t: f64) -> f64 {
    if v.abs() > t {
        v
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpodFit {
    pub fit: OutlierFit,
    pub iterations: usize,
    pub converged: bool,
}

/// Θ-IPOD with the hard threshold at `√λ`, iterating
/// `γ ← Θ_h(Hγ + r)` with `H = X(XᵀX)⁻¹Xᵀ` and `r = y − Hy`.
pub fn theta_ipod(rp: &RegressionProblem, gamma0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<IpodFit> {
    rp.validate()?;
    let n = rp.n();
    let p = rp.p();
    let x = DMatrix::from_fn(n, p, |i, j| rp.x[i][j]);
    let y = DVector::from_column_slice(&rp.y);
    let chol = (x.transpose() * &x)
        .cholesky()
        .ok_or_else(|| Error::Singular("design matrix does not have full column rank".into()))?;
    let h = &x * chol.solve(&x.transpose());
    let r = &y - &h * &y;
    let t = rp.lambda.sqrt();
    let mut gamma = match gamma0 {
        Some(g) if g.len() != n => return Err(Error::DimensionMismatch { expected: n, got: g.len() }),
        Some(g) => DVector::from_column_slice(g),
        None => DVector::zeros(n),
    };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let next = (&h * &gamma + &r).map(|v| hard_threshold(v, t));
        let change = (&next - &gamma).amax();
        gamma = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    let beta = chol.solve(&(x.transpose() * (&y - &gamma)));
    let fit = OutlierFit::from_parts(rp, beta.iter().copied().collect(), gamma.iter().copied().collect());
    Ok(IpodFit { fit, iterations, converged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcOutcome {
    pub solution: Solution,
    /// Objective at the start and after every iteration.
    pub trace: Vec<f64>,
}

/// DC iteration `x ← (ΣA_i)⁻¹(g − Σb_i)`, where `g` sums `A_i x + b_i` over
/// the terms with `f_i(x) > λ_i`. `ΣA_i` is factorized once.
pub fn dc_minimize(tqs: &[TruncatedQuadratic], x0: &[f64], tol: f64, max_iter: usize) -> Result<DcOutcome> {
    let d = x0.len();
    if let Some(t) = tqs.iter().find(|t| t.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: t.dim() });
    }
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for t in tqs {
        a += DMatrix::from_row_slice(d, d, t.q.a_flat());
        b += DVector::from_column_slice(t.q.b());
    }
    let chol = a.cholesky().ok_or_else(|| Error::Singular("sum of Hessians is not positive definite".into()))?;
    let objective = |x: &[f64]| tqs.iter().map(|t| t.q.eval_unchecked(x).min(t.lambda)).sum::<f64>();
    let mut x = x0.to_vec();
    let mut trace = vec![objective(&x)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut g = DVector::<f64>::zeros(d);
        for t in tqs {
            if t.q.eval_unchecked(&x) > t.lambda {
                g += DVector::from_vec(t.q.gradient(&x));
            }
        }
        let next = chol.solve(&(g - &b));
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next.iter().copied().collect();
        trace.push(objective(&x));
        if change < tol {
            converged = true;
            break;
        }
    }
    let value = objective(&x);
    let active = tqs.iter().enumerate().filter(|(_, t)| t.q.eval_unchecked(&x) <= t.lambda).map(|(i, _)| i).collect();
    Ok(DcOutcome {
        solution: Solution { x, value, active, pieces_visited: 0, iterations, converged },
        trace,
    })
}

/// Cholesky factor of a symmetric positive definite banded matrix, stored
/// by rows as `l[i][k] = L[i][i − bw + k]`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// `entries` lists the lower triangle `(i, j, v)` with `j ≤ i`;
    /// duplicates are summed.
    pub fn factor(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let bw = entries.iter().map(|&(i, j, _)| i - j).max().unwrap_or(0);
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for &(i, j, v) in entries {
            l[i * w + (j + bw - i)] += v;
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = l[i * w + (j + bw - i)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::Singular("banded matrix is not positive definite".into()));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut z = rhs.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (k + bw - i)] * z[k];
            }
            z[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[k * w + (i + bw - k)] * z[k];
            }
            z[i] = s / self.l[i * w + bw];
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImoOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// IMO from `x = y`: `a = Θ_h(Φx; √λ)`, `x ← (I + wΦᵀΦ)⁻¹(y + wΦᵀa)`, with
/// `Φ` the signed difference operator of the neighbourhood.
pub fn imo_restore(
    y: &[f64],
    neighborhood: Neighborhood,
    w: f64,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ImoOutcome> {
    if !(w > 0.0) || !(lambda > 0.0) {
        return Err(Error::invalid("w", "w and lambda must be positive"));
    }
    let d = y.len();
    let edges = neighborhood.edges(d);
    let mut entries: Vec<(usize, usize, f64)> = (0..d).map(|i| (i, i, 1.0)).collect();
    for &(i, j) in &edges {
        entries.push((i, i, w));
        entries.push((j, j, w));
        entries.push((j, i, -w));
    }
    let chol = BandedCholesky::factor(d, &entries)?;
    let t = lambda.sqrt();
    let mut x = y.to_vec();
    let mut converged = false;
    let mut iterations = 0;
    let mut rhs = vec![0.0; d];
    while iterations < max_iter {
        iterations += 1;
        rhs.copy_from_slice(y);
        for &(i, j) in &edges {
            // φ has −1 at i and +1 at j
            let a = hard_threshold(x[j] - x[i], t);
            rhs[i] -= w * a;
            rhs[j] += w * a;
        }
        let next = chol.solve(&rhs);
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(ImoOutcome { x, iterations, converged })
}

/// Separable Gaussian blur with a normalized `kernel_size`-tap kernel and
/// half-sample symmetric padding, which preserves the image sum.
pub fn gaussian_smooth(image: &[f64], width: usize, height: usize, sigma: f64, kernel_size: usize) -> Result<Vec<f64>> {
    if kernel_size % 2 == 0 {
        return Err(Error::invalid("kernel_size", "must be odd"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", "must be positive"));
    }
    if width * height != image.len() {
        return Err(Error::DimensionMismatch { expected: width * height, got: image.len() });
    }
    let h = (kernel_size / 2) as isize;
    let mut kernel: Vec<f64> = (-h..=h).map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let period = 2 * n;
        let m = i.rem_euclid(period);
        (if m < n { m } else { period - 1 - m }) as usize
    };
    let mut tmp = vec![0.0; image.len()];
    for r in 0..height {
        for c in 0..width {
            tmp[r * width + c] = (-h..=h)
                .zip(&kernel)
                .map(|(t, k)| k * image[r * width + reflect(c as isize + t, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; image.len()];
    for r in 0..height {
        for c in 0..width {
            out[r * width + c] = (-h..=h)
                .zip(&kernel)
                .map(|(t, k)| k * tmp[reflect(r as isize + t, height) * width + c])
                .sum();
        }
    }
    Ok(out)
}
