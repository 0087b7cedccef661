//! Integer-order Bessel functions of the first kind, used as Chebyshev
//! coefficients of `exp(-i x y)`.

/// `J_0(x) ..= J_kmax(x)` for `x >= 0` by Miller's backward recurrence,
/// normalised with `J_0 + 2 sum_k J_2k = 1`.
pub(crate) fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    assert!(x >= 0.0 && x.is_finite());
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let top = (kmax as f64).max(x);
    let mut m = (top + 20.0 + (40.0 * top).sqrt()) as usize;
    m += m % 2;
    let mut j = vec![0.0f64; m + 2];
    j[m] = 1e-30;
    for k in (1..=m).rev() {
        j[k - 1] = 2.0 * k as f64 / x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in &mut j[k - 1..] {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    for (o, v) in out.iter_mut().zip(&j) {
        *o = v / norm;
    }
    out
}

/// Chebyshev coefficients `J_k(x)` truncated once every remaining term is
/// below `eps` in magnitude.
pub(crate) fn truncated_coefficients(x: f64, eps: f64) -> Vec<f64> {
    let mut kmax = (x + 12.0 * x.cbrt() + 30.0).ceil() as usize;
    loop {
        let j = bessel_j_sequence(x, kmax);
        // beyond k > x the sequence decays monotonically
        if j[kmax].abs() < eps * 1e-3 {
            let floor = (x.ceil() as usize).min(kmax);
            let mut last = kmax;
            while last > floor && j[last].abs() < eps {
                last -= 1;
            }
            let mut j = j;
            j.truncate(last + 1);
            return j;
        }
        kmax *= 2;
    }
}
