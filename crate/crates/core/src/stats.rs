//! Numeric primitives shared by inference and the independence tests:
//! stable log-sum-exp, the regularized incomplete gamma function (for the
//! chi-square upper tail), and the likelihood-ratio G-test on contingency
//! tables.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("contingency table is empty")]
    EmptyTable,
    #[error("contingency table rows have unequal lengths")]
    RaggedTable,
}

/// log(exp(a) + exp(b)) without overflow; -inf acts as the identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Max-shift log-sum-exp over a slice. Empty input and all -inf both give -inf.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Natural log of the gamma function, Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x) by series expansion.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = a;
    for _ in 0..500 {
        n += 1.0;
        term *= x / n;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by Lentz continued fraction.
fn gamma_q_cont_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) for a > 0, x >= 0.
pub fn reg_gamma_upper(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "reg_gamma_upper domain: a > 0, x >= 0");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cont_fraction(a, x)
    }
}

/// Upper tail P(X >= x) of the chi-square distribution with `dof` degrees of
/// freedom. `dof == 0` is the degenerate point mass at zero, with tail 1.
pub fn chi_square_upper_tail(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    reg_gamma_upper(dof as f64 / 2.0, x.max(0.0) / 2.0)
}

/// Result of a G-test on a contingency table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GTest {
    pub g: f64,
    pub dof: usize,
    pub p: f64,
}

/// Likelihood-ratio (G) independence test on an r x c table of counts.
///
/// G = 2 * sum over cells with O > 0 of O * ln(O / E), with expectations
/// taken from the margins. Degrees of freedom count only rows and columns
/// with non-zero totals; a table collapsing to a single live row or column
/// has dof 0 and p = 1.
pub fn pairwise_g_test(table: &[Vec<u64>]) -> Result<GTest, StatsError> {
    if table.is_empty() || table[0].is_empty() {
        return Err(StatsError::EmptyTable);
    }
    let cols = table[0].len();
    if table.iter().any(|r| r.len() != cols) {
        return Err(StatsError::RaggedTable);
    }
    let row_totals: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let mut col_totals = vec![0u64; cols];
    for row in table {
        for (t, &o) in col_totals.iter_mut().zip(row) {
            *t += o;
        }
    }
    let grand: u64 = row_totals.iter().sum();
    if grand == 0 {
        return Err(StatsError::EmptyTable);
    }

    let live_rows = row_totals.iter().filter(|&&t| t > 0).count();
    let live_cols = col_totals.iter().filter(|&&t| t > 0).count();
    let dof = live_rows.saturating_sub(1) * live_cols.saturating_sub(1);

    let mut g = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            if o > 0 {
                let e = row_totals[i] as f64 * col_totals[j] as f64 / grand as f64;
                g += o as f64 * (o as f64 / e).ln();
            }
        }
    }
    g *= 2.0;
    // exact independence can round to a tiny negative
    if g < 0.0 {
        g = 0.0;
    }

    Ok(GTest {
        g,
        dof,
        p: chi_square_upper_tail(g, dof),
    })
}
