//! Closed-form smooth functions built from `exp(-1/x)`.

/// `exp(-1/x)` for `x > 0`, else 0.
fn flat(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth nondecreasing step: 0 on `(-inf, 0]`, 1 on `[1, inf)`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = flat(x);
        a / (a + flat(1.0 - x))
    }
}

/// Nondecreasing step: 0 on `(-inf, -1]`, 1 on `[0, inf)`.
pub fn probe_step(x: f64) -> f64 {
    smooth_step(x + 1.0)
}

/// Nonincreasing cutoff: 1 on `(-inf, -1]`, 0 on `[0, inf)`.
pub fn cutoff(x: f64) -> f64 {
    1.0 - smooth_step(x + 1.0)
}

/// Bump on `(0, 2)` rising to 2 at `t = 1`; 0 elsewhere.
pub fn bump(t: f64) -> f64 {
    let s = t - 1.0;
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        2.0 * (1.0 - 1.0 / q).exp()
    }
}

/// Smooth plateau: 0 outside `(a - d/2, b + d/2)`, 1 on `[a + d/2, b - d/2]`,
/// with smooth ramps of width `d` centred on `a` and on `b`.
pub fn plateau(s: f64, a: f64, b: f64, d: f64) -> f64 {
    smooth_step((s - a + 0.5 * d) / d) * (1.0 - smooth_step((s - b + 0.5 * d) / d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_shape() {
        assert_eq!(smooth_step(-0.5), 0.0);
        assert_eq!(smooth_step(1.5), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 0..=1000 {
            let v = smooth_step(k as f64 / 1000.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn probe_and_cutoff_are_complementary() {
        for k in -30..=10 {
            let x = k as f64 / 10.0;
            assert!((probe_step(x) + cutoff(x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(probe_step(-1.0), 0.0);
        assert_eq!(probe_step(0.0), 1.0);
        assert_eq!(cutoff(0.0), 0.0);
        assert_eq!(cutoff(-1.0), 1.0);
    }

    #[test]
    fn bump_values() {
        assert_eq!(bump(1.0), 2.0);
        assert_eq!(bump(0.0), 0.0);
        assert_eq!(bump(2.0), 0.0);
        assert!(bump(0.5) < bump(0.9) && bump(1.5) < bump(1.1));
    }

    #[test]
    fn plateau_support() {
        assert_eq!(plateau(0.0, 1.0, 2.0, 0.2), 0.0);
        assert_eq!(plateau(1.5, 1.0, 2.0, 0.2), 1.0);
        assert_eq!(plateau(0.9, 1.0, 2.0, 0.2), 0.0);
        assert_eq!(plateau(2.1, 1.0, 2.0, 0.2), 0.0);
        assert!((plateau(1.0, 1.0, 2.0, 0.2) - 0.5).abs() < 1e-15);
    }
}
