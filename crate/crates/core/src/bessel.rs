//! Integer-order Bessel functions of the first kind.
//!
//! Used for the Raman-Nath calibration table: a single kick of strength `k`
//! on a zero-momentum state populates order `n` with weight `J_n(k)^2`.

use crate::Real;

/// `J_n(x)` for `n = 0..=n_max`, by Miller's downward recurrence normalised
/// with `J_0 + 2 Σ J_{2j} = 1`.
pub fn bessel_j_orders<T: Real>(n_max: usize, x: T) -> Vec<T> {
    let mut out = vec![T::zero(); n_max + 1];
    if x == T::zero() {
        out[0] = T::one();
        return out;
    }
    let ax = x.abs();
    let top = n_max.max(ax.ceil().to_usize().unwrap_or(0));
    let mut start = top + 20 + (40.0 * top as f64).sqrt().ceil() as usize;
    if start % 2 == 1 {
        start += 1;
    }

    let two = T::lit(2.0);
    let rescale = T::lit(1e200_f64.min(T::max_value().to_f64_lossy().sqrt()));
    let mut next = T::zero(); // J_{j+1}
    let mut cur = T::lit(1e-30); // J_j, arbitrary seed
    let mut even_sum = T::zero();
    for j in (1..=start).rev() {
        let prev = two * T::from_usize_lossy(j) / ax * cur - next;
        next = cur;
        cur = prev;
        if j - 1 <= n_max {
            out[j - 1] = cur;
        }
        if (j - 1) % 2 == 0 && j - 1 > 0 {
            even_sum = even_sum + cur;
        }
        if cur.abs() > rescale {
            let s = T::one() / rescale;
            cur = cur * s;
            next = next * s;
            even_sum = even_sum * s;
            for v in out.iter_mut() {
                *v = *v * s;
            }
        }
    }
    let norm = cur + two * even_sum;
    for v in out.iter_mut() {
        *v = *v / norm;
    }
    if x < T::zero() {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// `J_n(x)` for any integer order.
pub fn bessel_j<T: Real>(n: i64, x: T) -> T {
    let na = n.unsigned_abs() as usize;
    let v = bessel_j_orders(na, x)[na];
    if n < 0 && na % 2 == 1 {
        -v
    } else {
        v
    }
}
