//! Radix-2 complex FFT on power-of-two grids, in one and two dimensions.

use alloc::vec::Vec;
use nalgebra::Complex;

pub type C64 = Complex<f64>;

/// In-place transform. `inverse` uses the positive exponent and divides by the length.
pub fn fft_in_place(data: &mut [C64], inverse: bool) {
    let n = data.len();
    assert!(n.is_power_of_two(), "FFT length must be a power of two");
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            data.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * core::f64::consts::PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = C64::new(libm::cos(ang * k as f64), libm::sin(ang * k as f64));
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Transform of a row-major `n0 × n1` array (axis 0 fastest).
pub fn fft_2d(data: &mut [C64], n0: usize, n1: usize, inverse: bool) {
    for row in data.chunks_mut(n0) {
        fft_in_place(row, inverse);
    }
    let mut column: Vec<C64> = Vec::with_capacity(n1);
    for i0 in 0..n0 {
        column.clear();
        column.extend((0..n1).map(|i1| data[i0 + n0 * i1]));
        fft_in_place(&mut column, inverse);
        for (i1, v) in column.iter().enumerate() {
            data[i0 + n0 * i1] = *v;
        }
    }
}

/// Signed frequency index of bin `m` on a length-`n` periodic grid.
pub fn signed_index(m: usize, n: usize) -> f64 {
    if m < n / 2 {
        m as f64
    } else {
        m as f64 - n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matches_direct_dft() {
        let n = 16;
        let x: Vec<C64> = (0..n)
            .map(|k| C64::new(libm::sin(k as f64 * 0.7), (k as f64).sqrt()))
            .collect();
        let mut y = x.clone();
        fft_in_place(&mut y, false);
        for m in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for (k, v) in x.iter().enumerate() {
                let a = -2.0 * core::f64::consts::PI * (m * k) as f64 / n as f64;
                acc += v * C64::new(libm::cos(a), libm::sin(a));
            }
            assert!((acc - y[m]).norm_sqr().sqrt() < 1e-12);
        }
        fft_in_place(&mut y, true);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm_sqr().sqrt() < 1e-13);
        }
    }

    #[test]
    fn two_dimensional_round_trip() {
        let mut d = vec![C64::new(0.0, 0.0); 8 * 4];
        d[5] = C64::new(1.0, 0.0);
        let orig = d.clone();
        fft_2d(&mut d, 8, 4, false);
        assert!(d.iter().all(|v| (v.norm_sqr().sqrt() - 1.0).abs() < 1e-14));
        fft_2d(&mut d, 8, 4, true);
        for (a, b) in orig.iter().zip(&d) {
            assert!((a - b).norm_sqr().sqrt() < 1e-14);
        }
    }
}
