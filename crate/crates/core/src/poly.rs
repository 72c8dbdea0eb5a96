//! Small dense polynomials, coefficients in ascending order.

pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Drop leading coefficients that are negligible relative to the largest one.
pub fn trim(coeffs: &[f64]) -> &[f64] {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut end = coeffs.len();
    while end > 0 && coeffs[end - 1].abs() <= 1e-14 * scale {
        end -= 1;
    }
    &coeffs[..end]
}

/// Coefficients of `sum_r c_r (x - shift)^r` as a polynomial in `x`.
pub fn shift(coeffs: &[f64], shift: f64) -> Vec<f64> {
    let n = coeffs.len();
    let mut out = vec![0.0; n];
    for (r, &c) in coeffs.iter().enumerate() {
        let mut binom = 1.0;
        for k in (0..=r).rev() {
            // C(r, k) (-shift)^(r-k)
            out[k] += c * binom * (-shift).powi((r - k) as i32);
            binom = binom * k as f64 / (r - k + 1) as f64;
        }
    }
    out
}

/// Upper bound on the magnitude of any root (Cauchy).
pub fn root_bound(coeffs: &[f64]) -> f64 {
    let c = trim(coeffs);
    if c.len() < 2 {
        return 0.0;
    }
    let lead = c[c.len() - 1].abs();
    1.0 + c[..c.len() - 1].iter().fold(0.0f64, |m, x| m.max(x.abs() / lead))
}

fn bisect(coeffs: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = eval(coeffs, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = eval(coeffs, mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All real roots in `[lo, hi]`, ascending, including repeated roots once.
///
/// Roots of the derivative split the interval into monotone pieces, each of
/// which holds at most one root; a critical point where the polynomial
/// vanishes is an even-multiplicity root.
pub fn real_roots_in(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let c = trim(coeffs);
    let mut roots = Vec::new();
    match c.len() {
        0 | 1 => return roots,
        2 => {
            let r = -c[0] / c[1];
            if r >= lo && r <= hi {
                roots.push(r);
            }
            return roots;
        }
        _ => {}
    }
    let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs())) * (1.0 + lo.abs().max(hi.abs())).powi(c.len() as i32 - 1);
    let zero_tol = 1e-13 * scale;

    let crit = real_roots_in(&derivative(c), lo, hi);
    let mut knots = Vec::with_capacity(crit.len() + 2);
    knots.push(lo);
    knots.extend(crit.iter().copied().filter(|&x| x > lo && x < hi));
    knots.push(hi);

    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (eval(c, a), eval(c, b));
        if fa.abs() <= zero_tol {
            roots.push(a);
        } else if fb.abs() > zero_tol && (fa < 0.0) != (fb < 0.0) {
            roots.push(bisect(c, a, b));
        }
    }
    if eval(c, hi).abs() <= zero_tol {
        roots.push(hi);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_and_shifts() {
        let p = [1.0, -3.0, 2.0]; // 2x^2 - 3x + 1
        assert_eq!(eval(&p, 2.0), 3.0);
        let shifted = shift(&p, 1.5);
        for x in [-1.0, 0.0, 0.7, 4.0] {
            assert!((eval(&shifted, x) - eval(&p, x - 1.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn finds_simple_and_double_roots() {
        // (x-1)(x-2)(x-3)
        let p = [-6.0, 11.0, -6.0, 1.0];
        let r = real_roots_in(&p, 0.0, 10.0);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        // (x-2)^2
        let r = real_roots_in(&[4.0, -4.0, 1.0], 0.0, 5.0);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 2.0).abs() < 1e-6);
        // x^2 + 1
        assert!(real_roots_in(&[1.0, 0.0, 1.0], -10.0, 10.0).is_empty());
        assert!(real_roots_in(&[1.0], 0.0, 1.0).is_empty());
        assert_eq!(real_roots_in(&[-2.0, 1.0], 0.0, 2.0), vec![2.0]);
    }

    #[test]
    fn bound_covers_roots() {
        let p = [-6.0, 11.0, -6.0, 1.0];
        assert!(root_bound(&p) >= 3.0);
    }
}
