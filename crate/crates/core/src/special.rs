//! Hermite and Laguerre polynomials, Fock basis functions and factorial
//! ratios, all evaluated by three-term recurrences or in log space.

use std::f64::consts::{LN_2, PI};

use statrs::function::gamma::ln_gamma;

/// Physicists' Hermite polynomial `H_n(x)`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * x;
    for m in 1..n {
        let next = 2.0 * x * cur - 2.0 * m as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Generalized Laguerre polynomial `L^alpha_n(x)` for integer order.
pub fn laguerre(n: usize, alpha: usize, x: f64) -> f64 {
    let a = alpha as f64;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for m in 1..n {
        let m = m as f64;
        let next = ((2.0 * m + 1.0 + a - x) * cur - (m + a) * prev) / (m + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Normalized Hermite function `psi_j(x)`, the j-th Fock basis element.
pub fn fock_psi(j: usize, x: f64) -> f64 {
    let mut prev = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if j == 0 {
        return prev;
    }
    let mut cur = 2f64.sqrt() * x * prev;
    for m in 1..j {
        let m = m as f64;
        let next = (2.0 / (m + 1.0)).sqrt() * x * cur - (m / (m + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `ln(n!)` via log-gamma.
pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `ln sqrt(2^(k-j) k! / j!)`, the normalization of the pattern-function
/// Fourier transform.
pub fn log_factorial_ratio(k: usize, j: usize) -> f64 {
    0.5 * ((k as f64 - j as f64) * LN_2 + ln_factorial(k) - ln_factorial(j))
}
