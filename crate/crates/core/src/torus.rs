//! Geometry of the doubly periodic domain `[0, 2π)²`.

use crate::scalar::{Real, Vec2};

/// Wraps a coordinate into `[0, 2π)`.
#[inline]
pub fn wrap<T: Real>(x: T) -> T {
    let period = T::period();
    if x >= T::zero() && x < period {
        return x;
    }
    let w = x - (x / period).floor() * period;
    // floor rounding can land exactly on the period for tiny negative inputs
    if w >= period || w < T::zero() {
        T::zero()
    } else {
        w
    }
}

#[inline]
pub fn wrap_point<T: Real>(p: Vec2<T>) -> Vec2<T> {
    [wrap(p[0]), wrap(p[1])]
}

/// Minimum-image displacement: maps `dx` into `(-π, π]`.
#[inline]
pub fn min_image<T: Real>(dx: T) -> T {
    let period = T::period();
    let half = T::PI();
    if dx > -half && dx <= half {
        return dx;
    }
    let r = dx - (dx / period).round() * period;
    if r <= -half {
        r + period
    } else if r > half {
        r - period
    } else {
        r
    }
}

/// Shortest displacement from `from` to `to` on the torus.
#[inline]
pub fn displacement<T: Real>(from: Vec2<T>, to: Vec2<T>) -> Vec2<T> {
    [min_image(to[0] - from[0]), min_image(to[1] - from[1])]
}

#[inline]
pub fn periodic_dist2<T: Real>(a: Vec2<T>, b: Vec2<T>) -> T {
    let d = displacement(a, b);
    d[0] * d[0] + d[1] * d[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn wrap_edges() {
        assert_eq!(wrap(0.0), 0.0);
        assert_eq!(wrap(TAU), 0.0);
        assert!((wrap(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        assert_eq!(wrap(-1e-300), 0.0);
        assert!((wrap(3.0 * TAU + 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_image_range() {
        assert_eq!(min_image(PI), PI);
        assert!((min_image(-PI) - PI).abs() < 1e-15);
        assert!((min_image(TAU - 0.1) + 0.1).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn wrap_lands_in_domain(x in -1e4f64..1e4) {
            let w = wrap(x);
            prop_assert!((0.0..TAU).contains(&w));
            prop_assert!(min_image(w - x).abs() < 1e-9);
        }

        #[test]
        fn min_image_is_shortest(dx in -1e3f64..1e3) {
            let m = min_image(dx);
            prop_assert!(m > -PI - 1e-12 && m <= PI + 1e-12);
            let k = ((dx - m) / TAU).round();
            prop_assert!((dx - m - k * TAU).abs() < 1e-8);
        }
    }
}
