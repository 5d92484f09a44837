//! Oracle helpers shared by the integration suites. Everything here is an
//! independent computation route: plain normal equations solved by
//! Gauss-Jordan elimination, textbook statistics, no calls into the
//! library's solver path.

/// (coefficients, sigma_hat, vcov, xtx_inv) from the oracle route.
pub type OracleFit = (Vec<f64>, f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Solves the least-squares problem by explicit normal equations:
/// inverts X'X with Gauss-Jordan. Panics on singular systems; callers
/// supply well-conditioned designs.
pub fn normal_equations_fit(columns: &[Vec<f64>], y: &[f64]) -> OracleFit {
    let k = columns.len();
    let n = y.len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            xtx[i][j] = dot(&columns[i], &columns[j]);
        }
        xty[i] = dot(&columns[i], y);
    }
    let xtx_inv = gauss_jordan_inverse(&xtx);
    let coef: Vec<f64> = (0..k).map(|i| dot(&xtx_inv[i], &xty)).collect();
    let mut rss = 0.0;
    for row in 0..n {
        let fitted: f64 = (0..k).map(|j| coef[j] * columns[j][row]).sum();
        rss += (y[row] - fitted) * (y[row] - fitted);
    }
    let sigma2 = rss / (n - k) as f64;
    let vcov: Vec<Vec<f64>> = xtx_inv
        .iter()
        .map(|row| row.iter().map(|v| v * sigma2).collect())
        .collect();
    (coef, sigma2.sqrt(), vcov, xtx_inv)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .expect("nonempty");
        assert!(m[pivot_row][col].abs() > 1e-12, "singular oracle system");
        m.swap(col, pivot_row);
        let pivot = m[col][col];
        for v in m[col].iter_mut() {
            *v /= pivot;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                for j in 0..2 * n {
                    m[row][j] -= f * m[col][j];
                }
            }
        }
    }
    m.into_iter().map(|row| row[n..].to_vec()).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn lag1_correlation(v: &[f64]) -> f64 {
    let m = mean(v);
    let denom: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    let numer: f64 = v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    numer / denom
}

/// Kolmogorov-Smirnov distance from the uniform distribution on (0,1).
pub fn ks_distance_from_uniform(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &q) in s.iter().enumerate() {
        let hi = (i as f64 + 1.0) / n - q;
        let lo = q - i as f64 / n;
        d = d.max(hi.abs()).max(lo.abs());
    }
    d
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 erf polynomial
/// (absolute error below 1.5e-7, ample for sign tests).
pub fn normal_cdf(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * z.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-z * z).exp();
    let erf = if z < 0.0 { -erf } else { erf };
    0.5 * (1.0 + erf)
}

/// One-sided sign-test p-value for `successes` out of `n` under a fair
/// coin, with continuity correction.
pub fn sign_test_p(successes: usize, n: usize) -> f64 {
    let z = (successes as f64 - n as f64 / 2.0 - 0.5) / (0.5 * (n as f64).sqrt());
    1.0 - normal_cdf(z)
}

pub fn pass(id: &str, name: &str, detail: &str) {
    println!("acceptance {id} {name}: PASS ({detail})");
}
