//! Closed-form linear forecasters: a per-dimension OLS trend line and a
//! ridge-regularized first-order vector autoregression.

use nalgebra::{DMatrix, Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{CdriError, Result};
use crate::model::{Dimension, DIMENSION_COUNT};

/// `value = intercept + slope * t` for one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub dimension: Dimension,
    pub intercept: f64,
    pub slope: f64,
}

/// Least-squares line through `(t, value)` points.
///
/// Uses the centered closed form `slope = Sty / Stt`,
/// `intercept = mean(y) - slope * mean(t)`.
pub fn fit_ols(dimension: Dimension, points: &[(f64, f64)]) -> Result<OlsModel> {
    if points.len() < 2 {
        return Err(CdriError::SingularDesign);
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty) = (0.0, 0.0);
    for &(t, y) in points {
        let dt = t - t_mean;
        stt += dt * dt;
        sty += dt * (y - y_mean);
    }
    if stt == 0.0 || !stt.is_finite() {
        return Err(CdriError::SingularDesign);
    }
    let slope = sty / stt;
    Ok(OlsModel {
        dimension,
        intercept: y_mean - slope * t_mean,
        slope,
    })
}

/// Unclamped trend value at `t`.
pub fn predict_ols(model: &OlsModel, t: f64) -> f64 {
    model.intercept + model.slope * t
}

/// `y_t = intercept + coefficients * y_{t-1}` (lag order 1).
///
/// `coefficients[i][j]` is the weight of dimension `j` at the previous step
/// in the equation for dimension `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub lag: usize,
    pub intercept: [f64; DIMENSION_COUNT],
    pub coefficients: [[f64; DIMENSION_COUNT]; DIMENSION_COUNT],
    pub ridge: f64,
}

/// Regressors per VAR equation: an intercept plus one lag of each dimension.
pub const VAR_PARAMETERS_PER_EQUATION: usize = DIMENSION_COUNT + 1;

/// Fits a VAR(1) by ridge regression with an unpenalized intercept.
///
/// Minimizes `sum_t |y_t - c - A y_{t-1}|^2 + ridge * |A|_F^2`. Centering
/// the lagged regressors and targets removes the intercept from the penalty
/// exactly; the remaining 5x5 system `(Xc'Xc + ridge I) A' = Xc'Yc` is
/// solved by Cholesky factorization.
pub fn fit_var(rows: &[[f64; DIMENSION_COUNT]], ridge: f64) -> Result<VarModel> {
    if rows.len() < 2 {
        return Err(CdriError::TooFewYears {
            needed: 2,
            found: rows.len(),
        });
    }
    if !ridge.is_finite() || ridge < 0.0 {
        return Err(CdriError::InvalidRidge(ridge));
    }
    let transitions = rows.len() - 1;
    if ridge == 0.0 && transitions < VAR_PARAMETERS_PER_EQUATION {
        return Err(CdriError::InvalidRidge(ridge));
    }

    let lagged = DMatrix::from_fn(transitions, DIMENSION_COUNT, |r, c| rows[r][c]);
    let next = DMatrix::from_fn(transitions, DIMENSION_COUNT, |r, c| rows[r + 1][c]);
    let x_mean = lagged.row_mean();
    let y_mean = next.row_mean();
    let mut xc = lagged.clone();
    let mut yc = next.clone();
    for mut row in xc.row_iter_mut() {
        row -= &x_mean;
    }
    for mut row in yc.row_iter_mut() {
        row -= &y_mean;
    }

    let gram: Matrix5<f64> = Matrix5::from_iterator((xc.transpose() * &xc).iter().copied())
        + Matrix5::identity() * ridge;
    let rhs: Matrix5<f64> = Matrix5::from_iterator((xc.transpose() * &yc).iter().copied());
    let scale = gram.diagonal().max().max(1.0);
    let chol = gram.cholesky().ok_or(CdriError::SingularDesign)?;
    if chol.l().diagonal().iter().any(|&d| d * d <= 1e-12 * scale) {
        return Err(CdriError::SingularDesign);
    }
    // solution column i holds the coefficients of equation i
    let solution = chol.solve(&rhs);

    let mut coefficients = [[0.0; DIMENSION_COUNT]; DIMENSION_COUNT];
    let mut intercept = [0.0; DIMENSION_COUNT];
    for i in 0..DIMENSION_COUNT {
        let mut c = y_mean[i];
        for j in 0..DIMENSION_COUNT {
            coefficients[i][j] = solution[(j, i)];
            c -= solution[(j, i)] * x_mean[j];
        }
        intercept[i] = c;
    }
    if coefficients.iter().flatten().chain(&intercept).any(|v| !v.is_finite()) {
        return Err(CdriError::SingularDesign);
    }
    Ok(VarModel {
        lag: 1,
        intercept,
        coefficients,
        ridge,
    })
}

fn var_step(model: &VarModel, y: &Vector5<f64>) -> Vector5<f64> {
    let a = Matrix5::from_fn(|i, j| model.coefficients[i][j]);
    Vector5::from(model.intercept) + a * y
}

/// Iterates the recursion `steps` times from `last`.
pub fn predict_var(model: &VarModel, last: &[f64; DIMENSION_COUNT], steps: usize) -> [f64; DIMENSION_COUNT] {
    let mut y = Vector5::from(*last);
    for _ in 0..steps {
        y = var_step(model, &y);
    }
    y.into()
}

/// Ridge training objective of `model` on `rows`.
pub fn var_objective(model: &VarModel, rows: &[[f64; DIMENSION_COUNT]]) -> f64 {
    let residual: f64 = rows
        .windows(2)
        .map(|w| {
            let predicted = var_step(model, &Vector5::from(w[0]));
            (Vector5::from(w[1]) - predicted).norm_squared()
        })
        .sum();
    let penalty: f64 = model.coefficients.iter().flatten().map(|a| a * a).sum();
    residual + model.ridge * penalty
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::generator;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Solves the raw (uncentered) 2x2 normal equations by Cramer's rule.
    fn normal_equation_oracle(points: &[(f64, f64)]) -> (f64, f64) {
        let n = points.len() as f64;
        let st: f64 = points.iter().map(|p| p.0).sum();
        let stt: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sty: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let det = n * stt - st * st;
        ((sy * stt - st * sty) / det, (n * sty - st * sy) / det)
    }

    #[test]
    fn ols_exact_line() {
        let m = fit_ols(Dimension::Physical, &[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0)]).unwrap();
        assert!((m.intercept - 1.0).abs() < 1e-12);
        assert!((m.slope - 1.0).abs() < 1e-12);
        assert!((predict_ols(&m, 4.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ols_constant_series() {
        let m = fit_ols(Dimension::Social, &[(0.0, 2.5), (1.0, 2.5), (2.0, 2.5)]).unwrap();
        assert_eq!(m.slope, 0.0);
        assert_eq!(predict_ols(&m, 17.0), 2.5);
        let flat = OlsModel {
            dimension: Dimension::Social,
            intercept: 1.7,
            slope: 0.0,
        };
        assert_eq!(predict_ols(&flat, -3.0), 1.7);
    }

    #[test]
    fn ols_rejects_singular_design() {
        assert!(matches!(
            fit_ols(Dimension::Physical, &[(1.0, 2.0), (1.0, 3.0)]),
            Err(CdriError::SingularDesign)
        ));
        assert!(fit_ols(Dimension::Physical, &[(1.0, 2.0)]).is_err());
    }

    #[test]
    fn ols_matches_normal_equation_oracle() {
        let mut rng = generator(2024);
        for _ in 0..100 {
            let n = rng.gen_range(2..=20);
            let points: Vec<(f64, f64)> = (0..n)
                .map(|i| (i as f64 + rng.gen_range(-0.3..0.3), rng.gen_range(1.0..5.0)))
                .collect();
            let m = fit_ols(Dimension::Economic, &points).unwrap();
            let (b0, b1) = normal_equation_oracle(&points);
            assert!((m.intercept - b0).abs() < 1e-9);
            assert!((m.slope - b1).abs() < 1e-9);
        }
    }

    #[test]
    fn ols_tracks_noisy_generator_line() {
        let mut rng = generator(5);
        let noise = 0.05;
        let points: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let t = i as f64 / 4.0;
                (t, 1.5 + 0.25 * t + rng.gen_range(-noise..noise))
            })
            .collect();
        let m = fit_ols(Dimension::Physical, &points).unwrap();
        for t in [0.0, 5.0, 12.0] {
            assert!((predict_ols(&m, t) - (1.5 + 0.25 * t)).abs() < 3.0 * noise);
        }
    }

    #[test]
    fn var_constant_series_is_fixed_point() {
        let rows = vec![[3.0; 5]; 4];
        let m = fit_var(&rows, 0.1).unwrap();
        for row in &m.coefficients {
            for a in row {
                assert!(a.abs() < 1e-12);
            }
        }
        let p = predict_var(&m, &[3.0; 5], 1);
        for v in p {
            assert!((v - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn var_zero_series_predicts_zero() {
        let m = fit_var(&[[0.0; 5]; 4], 0.5).unwrap();
        assert_eq!(predict_var(&m, &[0.0; 5], 3), [0.0; 5]);
    }

    #[test]
    fn var_requires_ridge_when_underdetermined() {
        let rows = vec![[3.0; 5]; 4];
        assert!(matches!(fit_var(&rows, 0.0), Err(CdriError::InvalidRidge(_))));
        assert!(matches!(fit_var(&rows, -1.0), Err(CdriError::InvalidRidge(_))));
        assert!(fit_var(&rows[..1], 0.5).is_err());
        // enough transitions but collinear lagged regressors
        let flat = vec![[2.0; 5]; 10];
        assert!(matches!(fit_var(&flat, 0.0), Err(CdriError::SingularDesign)));
    }

    #[test]
    fn var_prediction_examples() {
        let constant = VarModel {
            lag: 1,
            intercept: [2.0; 5],
            coefficients: [[0.0; 5]; 5],
            ridge: 0.5,
        };
        assert_eq!(predict_var(&constant, &[4.0, 1.0, 2.0, 3.0, 5.0], 3), [2.0; 5]);

        let mut identity = [[0.0; 5]; 5];
        for (i, row) in identity.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let still = VarModel {
            lag: 1,
            intercept: [0.0; 5],
            coefficients: identity,
            ridge: 0.5,
        };
        let v = [1.1, 2.2, 3.3, 4.4, 5.0];
        assert_eq!(predict_var(&still, &v, 7), v);
    }

    #[test]
    fn var_two_steps_compose_by_hand() {
        let mut rng = generator(11);
        let mut coefficients = [[0.0; 5]; 5];
        for row in coefficients.iter_mut() {
            for a in row.iter_mut() {
                *a = rng.gen_range(-0.3..0.3);
            }
        }
        let intercept: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        let m = VarModel {
            lag: 1,
            intercept,
            coefficients,
            ridge: 0.5,
        };
        let start = [3.0, 2.5, 4.0, 1.5, 2.0];
        let step = |y: [f64; 5]| -> [f64; 5] {
            std::array::from_fn(|i| intercept[i] + (0..5).map(|j| coefficients[i][j] * y[j]).sum::<f64>())
        };
        let manual = step(step(start));
        let got = predict_var(&m, &start, 2);
        for (a, b) in got.iter().zip(manual) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn stable_truth() -> ([[f64; 5]; 5], [f64; 5]) {
        let a = [
            [0.5, 0.1, 0.0, -0.1, 0.0],
            [0.0, 0.4, 0.2, 0.0, 0.1],
            [0.1, 0.0, 0.3, 0.1, 0.0],
            [0.0, -0.2, 0.0, 0.5, 0.1],
            [0.1, 0.0, 0.1, 0.0, 0.4],
        ];
        (a, [0.5, 0.8, 1.0, 0.6, 0.9])
    }

    pub(crate) fn simulate_var(steps: usize, noise_sd: f64, seed: u64) -> Vec<[f64; 5]> {
        let (a, c) = stable_truth();
        let mut rng = generator(seed);
        let normal = Normal::new(0.0, noise_sd).unwrap();
        let mut y = [3.0, 1.0, 4.0, 2.0, 5.0];
        let mut rows = vec![y];
        for _ in 1..steps {
            y = std::array::from_fn(|i| {
                c[i] + (0..5).map(|j| a[i][j] * y[j]).sum::<f64>() + normal.sample(&mut rng)
            });
            rows.push(y);
        }
        rows
    }

    #[test]
    fn var_recovers_known_coefficients() {
        let (truth, _) = stable_truth();
        let rows = simulate_var(200, 0.01, 3);
        let m = fit_var(&rows, 1e-6).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((m.coefficients[i][j] - truth[i][j]).abs() < 0.1);
            }
        }
    }

    #[test]
    fn var_objective_is_locally_minimal() {
        let rows = simulate_var(12, 0.2, 8);
        let m = fit_var(&rows, 0.5).unwrap();
        let best = var_objective(&m, &rows);
        let mut rng = generator(77);
        for _ in 0..1000 {
            let mut p = m.clone();
            let scale = 10f64.powf(rng.gen_range(-6.0..-1.0));
            for v in p.intercept.iter_mut().chain(p.coefficients.iter_mut().flatten()) {
                *v += scale * rng.gen_range(-1.0..1.0);
            }
            assert!(var_objective(&p, &rows) >= best - 1e-12 * best.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn ols_residuals_are_orthogonal(ys in prop::collection::vec(1.0f64..5.0, 2..20)) {
            let points: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
            let m = fit_ols(Dimension::Physical, &points).unwrap();
            let r: Vec<f64> = points.iter().map(|&(t, y)| y - predict_ols(&m, t)).collect();
            prop_assert!(r.iter().sum::<f64>().abs() <= 1e-9);
            prop_assert!(points.iter().zip(&r).map(|(p, r)| p.0 * r).sum::<f64>().abs() <= 1e-9);
        }

        #[test]
        fn ols_is_affine_equivariant(
            ys in prop::collection::vec(1.0f64..5.0, 2..20),
            a in -3.0f64..3.0,
            b in -5.0f64..5.0,
            t in 0.0f64..25.0,
        ) {
            let points: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
            let mapped: Vec<(f64, f64)> = points.iter().map(|&(t, y)| (t, a * y + b)).collect();
            let m = fit_ols(Dimension::Physical, &points).unwrap();
            let mm = fit_ols(Dimension::Physical, &mapped).unwrap();
            prop_assert!((predict_ols(&mm, t) - (a * predict_ols(&m, t) + b)).abs() <= 1e-9);
        }

        #[test]
        fn ridge_is_continuous(seed in any::<u64>(), ridge in 0.01f64..5.0) {
            let rows = simulate_var(6, 0.3, seed);
            let m1 = fit_var(&rows, ridge).unwrap();
            let m2 = fit_var(&rows, ridge * (1.0 + 1e-9)).unwrap();
            for (a, b) in m1.coefficients.iter().flatten().zip(m2.coefficients.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
