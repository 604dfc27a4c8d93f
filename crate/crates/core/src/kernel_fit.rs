//! Kernel-weighted local polynomial regression: the fitting core shared by
//! every estimator. Fits the outcome on a degree-p polynomial of the scaled
//! distance u = x̃/h over one side's units, solving the weighted least squares
//! through a QR decomposition of the weighted design rather than raw normal
//! equations (distances cluster near zero and designs go near-collinear at
//! small bandwidths).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum acceptable condition number of the Gram matrix before a fit is
/// declared degenerate.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Compactly supported kernels on [−1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Triangular,
    Uniform,
    Epanechnikov,
}

impl Kernel {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "triangular" => Ok(Kernel::Triangular),
            "uniform" => Ok(Kernel::Uniform),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(Error::InvalidConfig(format!(
                "unknown kernel `{other}` (expected triangular | uniform | epanechnikov)"
            ))),
        }
    }
}

/// K(u); zero outside [−1, 1].
pub fn kernel_eval(k: Kernel, u: f64) -> f64 {
    let a = u.abs();
    match k {
        Kernel::Triangular => (1.0 - a).max(0.0),
        Kernel::Uniform => {
            if a <= 1.0 { 0.5 } else { 0.0 }
        }
        Kernel::Epanechnikov => (0.75 * (1.0 - u * u)).max(0.0),
    }
}

/// Output of one kernel-weighted local polynomial fit.
#[derive(Debug, Clone)]
pub struct LocalPolyFit {
    pub h: f64,
    pub p: usize,
    /// Total sample size n (all units, including zero-weight ones); every /n
    /// sample moment below uses this.
    pub n_total: usize,
    /// Coefficients in u = x̃/h coordinates; `beta_scaled[0]` estimates μ at
    /// the cutoff and the q-th derivative is q!·beta_scaled\[q\]/h^q.
    pub beta_scaled: Vec<f64>,
    /// Γ̂ = X̃_p(h)ᵀ W X̃_p(h) / n, with W the diagonal of K_h weights.
    pub gamma: DMatrix<f64>,
    /// Condition number of Γ̂.
    pub cond: f64,
    /// Indices (into the full dataset) of units with strictly positive weight.
    pub used: Vec<usize>,
    /// K_h(x̃_i) = K(x̃_i/h)/h per used unit.
    pub weights: Vec<f64>,
    /// u_i = x̃_i/h per used unit.
    pub u: Vec<f64>,
    /// Regression residuals per used unit.
    pub residuals: Vec<f64>,
    pub n_eff: usize,
}

impl LocalPolyFit {
    /// Intercept: the estimate of μ at distance 0.
    pub fn intercept(&self) -> f64 {
        self.beta_scaled[0]
    }

    /// q-th derivative estimate: q!·β_q/h^q.
    pub fn derivative(&self, q: usize) -> f64 {
        let mut fact = 1.0;
        for k in 2..=q {
            fact *= k as f64;
        }
        fact * self.beta_scaled[q] / self.h.powi(q as i32)
    }

    /// θ̂_{p,q} = X̃_p(h)ᵀ W S_q(h) / n: the moment vector pairing the design
    /// with u^q. Used by bias correction and bandwidth selection.
    pub fn theta(&self, q: usize) -> DVector<f64> {
        let m = self.p + 1;
        let mut out = DVector::zeros(m);
        for (idx, &u) in self.u.iter().enumerate() {
            let w = self.weights[idx];
            let uq = u.powi(q as i32);
            let mut pow = 1.0;
            for r in 0..m {
                out[r] += w * pow * uq;
                pow *= u;
            }
        }
        out / self.n_total as f64
    }

    /// Solves Γ̂ x = e_k.
    pub fn gamma_inv_col(&self, k: usize) -> DVector<f64> {
        let mut e = DVector::zeros(self.p + 1);
        e[k] = 1.0;
        self.gamma
            .clone()
            .lu()
            .solve(&e)
            .expect("Gram matrix invertible within condition bound")
    }
}

/// Fits y on r_p(x̃/h) with weights K(x̃/h)/h over units with `include[i]`
/// true. Units at distance exactly 0 get full weight K(0)/h on whichever
/// side `include` places them.
pub fn local_poly_fit(
    y: &[f64],
    xt: &[f64],
    include: &[bool],
    h: f64,
    p: usize,
    kernel: Kernel,
) -> Result<LocalPolyFit> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::NonPositiveBandwidth(h));
    }
    let n_total = y.len();
    assert_eq!(xt.len(), n_total);
    assert_eq!(include.len(), n_total);

    let mut used = Vec::new();
    let mut weights = Vec::new();
    let mut u = Vec::new();
    for i in 0..n_total {
        if !include[i] {
            continue;
        }
        let ui = xt[i] / h;
        let k = kernel_eval(kernel, ui);
        if k > 0.0 {
            used.push(i);
            weights.push(k / h);
            u.push(ui);
        }
    }
    let n_eff = used.len();
    let min_needed = p + 2;
    if n_eff < min_needed {
        return Err(Error::InsufficientSupport { n_eff, min_needed, h });
    }

    let m = p + 1;
    // weighted design: rows sqrt(w)·r_p(u), target sqrt(w)·y
    let mut a = DMatrix::zeros(n_eff, m);
    let mut b = DVector::zeros(n_eff);
    for (row, (&i, &ui)) in used.iter().zip(&u).enumerate() {
        let sw = weights[row].sqrt();
        let mut pow = sw;
        for c in 0..m {
            a[(row, c)] = pow;
            pow *= ui;
        }
        b[row] = sw * y[i];
    }

    let gamma = a.transpose() * &a / n_total as f64;
    let svals = gamma.clone().svd(false, false).singular_values;
    let smax = svals.max();
    let smin = svals.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > MAX_GRAM_CONDITION {
        return Err(Error::SingularFit { cond, n_eff });
    }

    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let beta = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or(Error::SingularFit { cond, n_eff })?;

    let mut residuals = Vec::with_capacity(n_eff);
    for (row, &i) in used.iter().enumerate() {
        let ui = u[row];
        let mut fitted = 0.0;
        let mut pow = 1.0;
        for c in 0..m {
            fitted += beta[c] * pow;
            pow *= ui;
        }
        residuals.push(y[i] - fitted);
    }

    Ok(LocalPolyFit {
        h,
        p,
        n_total,
        beta_scaled: beta.iter().copied().collect(),
        gamma,
        cond,
        used,
        weights,
        u,
        residuals,
        n_eff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn all_true(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_eval(Kernel::Triangular, 0.0), 1.0);
        assert_eq!(kernel_eval(Kernel::Uniform, 1.5), 0.0);
        assert_eq!(kernel_eval(Kernel::Epanechnikov, 0.5), 0.5625);
        assert_eq!(kernel_eval(Kernel::Triangular, -0.25), 0.75);
    }

    #[test]
    fn kernels_integrate_to_one() {
        // composite Simpson over [−1, 1]
        for k in [Kernel::Triangular, Kernel::Uniform, Kernel::Epanechnikov] {
            let n = 2_000_000;
            let dx = 2.0 / n as f64;
            let mut acc = kernel_eval(k, -1.0) + kernel_eval(k, 1.0);
            for i in 1..n {
                let x = -1.0 + i as f64 * dx;
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * kernel_eval(k, x);
            }
            let integral = acc * dx / 3.0;
            assert!((integral - 1.0).abs() < 1e-10, "{k:?}: {integral}");
        }
    }

    #[test]
    fn constant_outcome_fits_exactly() {
        let xt = [0.05, 0.2, 0.4, 0.6, 0.9];
        let y = [3.7; 5];
        let fit =
            local_poly_fit(&y, &xt, &all_true(5), 1.0, 1, Kernel::Triangular).unwrap();
        assert_relative_eq!(fit.intercept(), 3.7, epsilon = 1e-12);
        assert_relative_eq!(fit.beta_scaled[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_outcome_recovers_slope() {
        let xt = [0.05, 0.2, 0.4, 0.6, 0.9];
        let y: Vec<f64> = xt.iter().map(|x| 2.0 + 3.0 * x).collect();
        for k in [Kernel::Triangular, Kernel::Uniform, Kernel::Epanechnikov] {
            for h in [0.95, 2.0] {
                let fit = local_poly_fit(&y, &xt, &all_true(5), h, 1, k).unwrap();
                // beta_scaled = (2, 3h); unscaled slope 3
                assert_relative_eq!(fit.intercept(), 2.0, epsilon = 1e-10);
                assert_relative_eq!(fit.beta_scaled[1], 3.0 * h, epsilon = 1e-9);
                assert_relative_eq!(fit.derivative(1), 3.0, epsilon = 1e-10);
            }
        }
    }

    // Exact-rational normal equation oracle for the 5-point fixture.
    #[test]
    fn five_point_fit_matches_exact_normal_equations() {
        let xt = ["1/10", "2/10", "4/10", "7/10", "9/10"];
        let yv = ["1", "2", "2", "3", "5"];
        let rat = |s: &str| -> BigRational {
            let (a, b) = s.split_once('/').unwrap_or((s, "1"));
            BigRational::new(a.parse::<BigInt>().unwrap(), b.parse::<BigInt>().unwrap())
        };
        let one = BigRational::from_integer(BigInt::from(1));
        // triangular weights at h = 1: w = 1 − u
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (
            BigRational::from_integer(BigInt::from(0)),
            BigRational::from_integer(BigInt::from(0)),
            BigRational::from_integer(BigInt::from(0)),
            BigRational::from_integer(BigInt::from(0)),
            BigRational::from_integer(BigInt::from(0)),
        );
        for (xs, ys) in xt.iter().zip(&yv) {
            let x = rat(xs);
            let y = rat(ys);
            let w = &one - &x;
            s0 += &w;
            s1 += &w * &x;
            s2 += &w * &x * &x;
            t0 += &w * &y;
            t1 += &w * &x * &y;
        }
        let det = &s0 * &s2 - &s1 * &s1;
        let b0 = (&s2 * &t0 - &s1 * &t1) / &det;
        let b1 = (&s0 * &t1 - &s1 * &t0) / det;
        let to_f64 = |r: &BigRational| {
            let num: f64 = r.numer().to_string().parse().unwrap();
            let den: f64 = r.denom().to_string().parse().unwrap();
            num / den
        };

        let xtf = [0.1, 0.2, 0.4, 0.7, 0.9];
        let yf = [1.0, 2.0, 2.0, 3.0, 5.0];
        let fit =
            local_poly_fit(&yf, &xtf, &all_true(5), 1.0, 1, Kernel::Triangular).unwrap();
        assert_relative_eq!(fit.beta_scaled[0], to_f64(&b0), max_relative = 1e-8);
        assert_relative_eq!(fit.beta_scaled[1], to_f64(&b1), max_relative = 1e-8);
    }

    #[test]
    fn residuals_orthogonal_to_weighted_design() {
        let xt = [0.1, 0.2, 0.4, 0.7, 0.9, 0.33, 0.48];
        let y = [1.0, 2.0, 2.0, 3.0, 5.0, 1.5, 2.5];
        let fit = local_poly_fit(&y, &xt, &all_true(7), 1.0, 2, Kernel::Triangular).unwrap();
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for r in 0..=fit.p {
            let mut acc = 0.0;
            for (idx, &u) in fit.u.iter().enumerate() {
                acc += fit.weights[idx] * u.powi(r as i32) * fit.residuals[idx];
            }
            assert!(acc.abs() <= 1e-8 * scale, "column {r}: {acc}");
        }
    }

    #[test]
    fn power_of_two_outcome_scaling_is_exact() {
        let xt = [0.1, 0.2, 0.4, 0.7, 0.9];
        let y = [1.0, 2.0, 2.0, 3.0, 5.0];
        let y4: Vec<f64> = y.iter().map(|v| 4.0 * v).collect();
        let f1 = local_poly_fit(&y, &xt, &all_true(5), 1.0, 1, Kernel::Triangular).unwrap();
        let f4 = local_poly_fit(&y4, &xt, &all_true(5), 1.0, 1, Kernel::Triangular).unwrap();
        for (a, b) in f1.beta_scaled.iter().zip(&f4.beta_scaled) {
            assert_eq!(4.0 * a, *b);
        }
    }

    #[test]
    fn weights_vanish_outside_bandwidth() {
        let xt = [0.1, 0.5, 0.99, 1.0, 1.7, 3.0];
        let y = [1.0, 2.0, 1.0, 2.0, 9.0, 9.0];
        let fit = local_poly_fit(&y, &xt, &all_true(6), 1.0, 1, Kernel::Triangular).unwrap();
        // u = 1 has K = 0 under the triangular kernel, so only 3 units used
        assert_eq!(fit.n_eff, 3);
        assert_eq!(fit.used, vec![0, 1, 2]);
        assert!(fit.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn degenerate_support_reports_structured_failure() {
        let xt = [0.1, 0.2, 5.0, 6.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        match local_poly_fit(&y, &xt, &all_true(4), 0.5, 1, Kernel::Triangular) {
            Err(Error::InsufficientSupport { n_eff, .. }) => assert_eq!(n_eff, 2),
            other => panic!("expected support failure, got {other:?}"),
        }
        // identical distances: rank-deficient design for p = 1
        let xt = [0.3; 5];
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        match local_poly_fit(&y, &xt, &all_true(5), 1.0, 1, Kernel::Triangular) {
            Err(Error::SingularFit { .. }) => {}
            other => panic!("expected singular fit, got {other:?}"),
        }
        assert!(matches!(
            local_poly_fit(&y, &xt, &all_true(5), 0.0, 1, Kernel::Triangular),
            Err(Error::NonPositiveBandwidth(_))
        ));
    }

    #[test]
    fn zero_distance_units_get_full_weight() {
        let xt = [0.0, 0.2, 0.5, 0.8];
        let y = [1.0, 2.0, 1.0, 2.0];
        let fit = local_poly_fit(&y, &xt, &all_true(4), 0.9, 1, Kernel::Triangular).unwrap();
        assert_eq!(fit.used[0], 0);
        assert_eq!(fit.weights[0], kernel_eval(Kernel::Triangular, 0.0) / 0.9);
    }

    proptest! {
        // Fitting in u coordinates then rescaling equals a raw-coordinate fit.
        #[test]
        fn scaled_fit_matches_raw_fit(
            seed_y in proptest::collection::vec(-3.0f64..3.0, 12),
            h in 0.6f64..2.0,
        ) {
            let xt: Vec<f64> = (0..12).map(|i| 0.03 + 0.07 * i as f64).collect();
            let fit = local_poly_fit(&seed_y, &xt, &all_true(12), h, 1, Kernel::Triangular).unwrap();

            // raw fit: same weights, design on raw xt
            let mut s = [[0.0f64; 2]; 2];
            let mut t = [0.0f64; 2];
            for (idx, &i) in fit.used.iter().enumerate() {
                let w = fit.weights[idx];
                let x = xt[i];
                s[0][0] += w;
                s[0][1] += w * x;
                s[1][1] += w * x * x;
                t[0] += w * seed_y[i];
                t[1] += w * x * seed_y[i];
            }
            s[1][0] = s[0][1];
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let b0 = (s[1][1] * t[0] - s[0][1] * t[1]) / det;
            let b1 = (s[0][0] * t[1] - s[1][0] * t[0]) / det;
            prop_assert!((fit.intercept() - b0).abs() <= 1e-8 * (1.0 + b0.abs()));
            prop_assert!((fit.beta_scaled[1] / h - b1).abs() <= 1e-8 * (1.0 + b1.abs()));
        }
    }
}
