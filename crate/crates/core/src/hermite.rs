//! Probabilists' Hermite polynomials `He_k`.
//!
//! The k-th derivative of the standard normal density is
//! `φ^{(k)}(z) = (-1)^k He_k(z) φ(z)`.

/// Fills `out[k] = He_k(z)` for `k = 0..out.len()` by the three-term recursion
/// `He_{k+1}(z) = z He_k(z) - k He_{k-1}(z)`.
pub fn hermite_he_into(z: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = z;
    for k in 1..out.len() - 1 {
        out[k + 1] = z * out[k] - k as f64 * out[k - 1];
    }
}

/// `He_k(z)` for a single order.
pub fn hermite_he(k: usize, z: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, z);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = z * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `(2k-1)!!`, with `(-1)!! = 1`.
pub(crate) fn double_factorial_odd(k: usize) -> f64 {
    (1..=k).map(|j| (2 * j - 1) as f64).product()
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}
