//! Float helpers backed by `libm` so the crate builds without `std`.

pub(crate) use libm::{ceil, exp, exp2, floor, log, log2, pow, sqrt};

pub(crate) const PI: f64 = core::f64::consts::PI;

/// `x^e` with exact fast paths for the exponents that dominate solver loops.
#[inline]
pub(crate) fn powf(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 0.5 {
        sqrt(x)
    } else if e == 1.5 {
        x * sqrt(x)
    } else if e == 0.75 {
        let r = sqrt(x);
        r * sqrt(r)
    } else if e == 0.0 {
        1.0
    } else if e == -1.0 {
        1.0 / x
    } else if e == 3.0 {
        x * x * x
    } else if e == -0.5 {
        1.0 / sqrt(x)
    } else if e == -0.25 {
        1.0 / sqrt(sqrt(x))
    } else {
        pow(x, e)
    }
}

/// Volume of the unit ball in `R^n`.
pub(crate) fn unit_ball_volume(n: usize) -> f64 {
    // ω_n = 2π/n · ω_{n-2}, with ω_0 = 1 and ω_1 = 2.
    let (mut w, mut k) = if n.is_multiple_of(2) {
        (1.0, 0)
    } else {
        (2.0, 1)
    };
    while k < n {
        k += 2;
        w *= 2.0 * PI / k as f64;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_paths_agree_with_pow() {
        for &x in &[0.0, 0.3, 1.0, 2.5, 17.0] {
            for &e in &[0.5, 1.5, 0.75, 2.0, 3.0, 1.25] {
                let a = powf(x, e);
                let b = pow(x, e);
                assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0), "{x}^{e}");
            }
        }
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(5) - 8.0 * PI * PI / 15.0).abs() < 1e-14);
    }
}
