//! Skill scores of a recovered field against the truth.

use crate::error::{Error, Result};
use crate::field::FieldGrid;
use crate::scalar::Real;

/// `‖est − truth‖_F / ‖truth‖_F` over every node and both components.
pub fn nrmse<T: Real>(est: &FieldGrid<T>, truth: &FieldGrid<T>) -> Result<T> {
    est.ensure_same_shape(truth, "nrmse grids")?;
    let (mut err, mut norm) = (T::zero(), T::zero());
    for (e, t) in est.flat().zip(truth.flat()) {
        err += (e - t) * (e - t);
        norm += t * t;
    }
    if !(norm > T::zero()) {
        return Err(Error::invalid("truth", "zero norm, NRMSE undefined"));
    }
    let out = (err / norm).sqrt();
    if !out.is_finite() {
        return Err(Error::NonFinite("nrmse"));
    }
    Ok(out)
}

/// Pearson correlation of the flattened `(u, v)` values with means removed.
pub fn pcc<T: Real>(est: &FieldGrid<T>, truth: &FieldGrid<T>) -> Result<T> {
    est.ensure_same_shape(truth, "pcc grids")?;
    let count = T::from_count(2 * est.n() * est.n());
    let mean = |g: &FieldGrid<T>| g.flat().fold(T::zero(), |a, b| a + b) / count;
    let (me, mt) = (mean(est), mean(truth));
    let (mut cov, mut ve, mut vt) = (T::zero(), T::zero(), T::zero());
    for (e, t) in est.flat().zip(truth.flat()) {
        let (de, dt) = (e - me, t - mt);
        cov += de * dt;
        ve += de * de;
        vt += dt * dt;
    }
    if !(ve > T::zero()) || !(vt > T::zero()) {
        return Err(Error::invalid("field", "zero variance, PCC undefined"));
    }
    let r = cov / (ve.sqrt() * vt.sqrt());
    if !r.is_finite() {
        return Err(Error::NonFinite("pcc"));
    }
    // rounding can push |r| a hair past 1
    Ok(r.max(-T::one()).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(n: usize, seed: u64) -> FieldGrid<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        FieldGrid::from_fn(n, 0.0, |_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).unwrap()
    }

    fn map(f: &FieldGrid<f64>, g: impl Fn(f64) -> f64) -> FieldGrid<f64> {
        FieldGrid::from_values(f.n(), 0.0, f.values().iter().map(|v| [g(v[0]), g(v[1])]).collect()).unwrap()
    }

    #[test]
    fn definitional_examples() {
        let t = field(8, 1);
        assert_eq!(nrmse(&t, &t).unwrap(), 0.0);
        assert!((nrmse(&map(&t, |_| 0.0), &t).unwrap() - 1.0).abs() < 1e-15);
        assert!((nrmse(&map(&t, |x| 2.0 * x), &t).unwrap() - 1.0).abs() < 1e-14);
        assert!((pcc(&t, &t).unwrap() - 1.0).abs() < 1e-14);
        assert!((pcc(&map(&t, |x| -x), &t).unwrap() + 1.0).abs() < 1e-14);
        assert!((pcc(&map(&t, |x| x + 3.0), &t).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs_are_errors() {
        let t = field(8, 2);
        let zero = map(&t, |_| 0.0);
        assert!(nrmse(&t, &zero).is_err());
        assert!(pcc(&zero, &t).is_err());
        assert!(pcc(&t, &map(&t, |_| 1.5)).is_err());
        assert!(nrmse(&field(4, 1), &t).is_err());
    }

    proptest! {
        #[test]
        fn identities_hold_for_random_fields(seed in 0u64..1000, a in 0.1f64..5.0, c in -3.0f64..3.0) {
            let t = field(6, seed);
            let e = field(6, seed + 7919);
            let r = pcc(&e, &t).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((pcc(&map(&e, |x| a * x + c), &t).unwrap() - r).abs() < 1e-12);
            prop_assert!((pcc(&e, &t).unwrap() - pcc(&t, &e).unwrap()).abs() < 1e-12);
            prop_assert!(nrmse(&e, &t).unwrap() >= 0.0);
            prop_assert!((nrmse(&map(&t, |x| (1.0 + a) * x), &t).unwrap() - a).abs() < 1e-12);
        }
    }
}
