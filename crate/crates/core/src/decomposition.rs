//! Uniform partition of the periodic domain into subdomains, per-subdomain
//! observation selection, and Gaussian partition-of-unity fusion of the
//! subdomain fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldGrid;
use crate::floe::Floe;
use crate::scalar::{Real, Vec2};
use crate::torus::{displacement, wrap, wrap_point};

/// `nx × ny` tiling of `[0, 2π)²` into half-open rectangles.
///
/// Subdomain `s = j * nx + i` covers `[i h_x, (i+1) h_x) × [j h_y, (j+1) h_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubdomainLayout {
    nx: usize,
    ny: usize,
}

/// Axis-aligned rectangle `[min, max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub min: Vec2<T>,
    pub max: Vec2<T>,
}

pub fn partition(nx: usize, ny: usize) -> Result<SubdomainLayout> {
    SubdomainLayout::new(nx, ny)
}

impl SubdomainLayout {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("layout", format!("subdomain counts must be positive, got {nx}x{ny}")));
        }
        Ok(Self { nx, ny })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_single(&self) -> bool {
        self.count() == 1
    }

    /// Grid coordinates `(i, j)` of subdomain `s`.
    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s % self.nx, s / self.nx)
    }

    pub fn spacing<T: Real>(&self) -> Vec2<T> {
        [
            T::period() / T::from_count(self.nx),
            T::period() / T::from_count(self.ny),
        ]
    }

    pub fn bounds<T: Real>(&self, s: usize) -> Rect<T> {
        let (i, j) = self.coords(s);
        let h = self.spacing::<T>();
        Rect {
            min: [h[0] * T::from_count(i), h[1] * T::from_count(j)],
            max: [h[0] * T::from_count(i + 1), h[1] * T::from_count(j + 1)],
        }
    }

    pub fn center<T: Real>(&self, s: usize) -> Vec2<T> {
        let (i, j) = self.coords(s);
        let h = self.spacing::<T>();
        let half = T::lit(0.5);
        [
            h[0] * (T::from_count(i) + half),
            h[1] * (T::from_count(j) + half),
        ]
    }

    pub fn centers<T: Real>(&self) -> Vec<Vec2<T>> {
        (0..self.count()).map(|s| self.center(s)).collect()
    }

    /// Half-diagonal of one subdomain, the largest centre distance inside it.
    pub fn half_diagonal<T: Real>(&self) -> T {
        let h = self.spacing::<T>();
        let half = T::lit(0.5);
        ((h[0] * half).powi(2) + (h[1] * half).powi(2)).sqrt()
    }

    /// The unique subdomain containing `p` (after wrapping).
    pub fn subdomain_of<T: Real>(&self, p: Vec2<T>) -> usize {
        let p = wrap_point(p);
        let h = self.spacing::<T>();
        let cell = |x: T, h: T, n: usize| -> usize {
            let k = (x / h).floor().to_usize().unwrap_or(0);
            k.min(n - 1)
        };
        cell(p[1], h[1], self.ny) * self.nx + cell(p[0], h[0], self.nx)
    }

    pub fn contains<T: Real>(&self, s: usize, p: Vec2<T>) -> bool {
        self.subdomain_of(p) == s
    }
}

/// Observation floes chosen for one subdomain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub subdomain: usize,
    pub requested: usize,
    pub indices: Vec<usize>,
}

impl Selection {
    /// True when the subdomain held fewer floes than requested.
    pub fn is_short(&self) -> bool {
        self.indices.len() < self.requested
    }
}

/// Ranks the floes inside subdomain `s` by
/// `(r - r_min)/(r_max - r_min) + (1 - |x - C_s| / d_max)` and keeps the
/// `l_obs` best (ties go to the lower index).
pub fn select_observed_floes<T: Real>(
    floes: &[Floe<T>],
    layout: &SubdomainLayout,
    s: usize,
    l_obs: usize,
    radius_range: (T, T),
) -> Result<Selection> {
    if s >= layout.count() {
        return Err(Error::invalid("subdomain", format!("{s} out of range for {} subdomains", layout.count())));
    }
    let (r_min, r_max) = radius_range;
    let span = r_max - r_min;
    let center = layout.center::<T>(s);
    let d_max = layout.half_diagonal::<T>();
    let mut scored: Vec<(T, usize)> = floes
        .iter()
        .enumerate()
        .filter(|(_, f)| layout.contains(s, f.pos))
        .map(|(idx, f)| {
            let size = if span > T::zero() {
                (f.props.radius - r_min) / span
            } else {
                T::zero()
            };
            let d = displacement(center, f.pos);
            let dist = (d[0] * d[0] + d[1] * d[1]).sqrt();
            (size + (T::one() - dist / d_max), idx)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let indices: Vec<usize> = scored.into_iter().take(l_obs).map(|(_, idx)| idx).collect();
    if indices.len() < l_obs {
        log::warn!(
            "subdomain {s} holds only {} floes, fewer than the {l_obs} requested",
            indices.len()
        );
    }
    Ok(Selection {
        subdomain: s,
        requested: l_obs,
        indices,
    })
}

/// Selection for every subdomain of the layout.
pub fn select_all<T: Real>(
    floes: &[Floe<T>],
    layout: &SubdomainLayout,
    l_obs: usize,
    radius_range: (T, T),
) -> Result<Vec<Selection>> {
    (0..layout.count())
        .map(|s| select_observed_floes(floes, layout, s, l_obs, radius_range))
        .collect()
}

/// Distance used in the Gaussian weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Minimum-image distance on the torus.
    #[default]
    Periodic,
    /// Plain Euclidean distance inside `[0, 2π)²`.
    Planar,
}

/// Raw and normalised Gaussian weights of every subdomain on the shared
/// evaluation grid. Indexed `[s][j * n + i]`.
#[derive(Debug, Clone)]
pub struct WeightGrid<T> {
    n: usize,
    sigma: T,
    raw: Vec<Vec<T>>,
    normalized: Vec<Vec<T>>,
}

impl<T: Real> WeightGrid<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn subdomains(&self) -> usize {
        self.raw.len()
    }

    pub fn raw(&self, s: usize) -> &[T] {
        &self.raw[s]
    }

    pub fn normalized(&self, s: usize) -> &[T] {
        &self.normalized[s]
    }

    /// `max_node |Σ_s W_s^norm - 1|`.
    pub fn partition_of_unity_error(&self) -> T {
        (0..self.n * self.n)
            .map(|node| {
                let sum = self.normalized.iter().fold(T::zero(), |acc, w| acc + w[node]);
                (sum - T::one()).abs()
            })
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }
}

/// `W_s(i,j) = exp(-|x_ij - C_s|² / (2 σ²))`, normalised to sum to one over
/// subdomains at every node.
pub fn gaussian_weights<T: Real>(
    layout: &SubdomainLayout,
    grid_n: usize,
    sigma: T,
    metric: DistanceMetric,
) -> Result<WeightGrid<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::invalid("sigma_o", format!("must be positive, got {sigma}")));
    }
    if grid_n < 2 {
        return Err(Error::invalid("grid_n", format!("need at least 2 nodes per axis, got {grid_n}")));
    }
    let centers = layout.centers::<T>();
    let h = T::period() / T::from_count(grid_n);
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let s_count = centers.len();
    let mut raw = vec![vec![T::zero(); grid_n * grid_n]; s_count];
    let mut normalized = raw.clone();
    let mut d2 = vec![T::zero(); s_count];
    for j in 0..grid_n {
        for i in 0..grid_n {
            let node = [h * T::from_count(i), h * T::from_count(j)];
            let idx = j * grid_n + i;
            for (s, c) in centers.iter().enumerate() {
                d2[s] = match metric {
                    DistanceMetric::Periodic => crate::torus::periodic_dist2(node, *c),
                    DistanceMetric::Planar => (node[0] - c[0]).powi(2) + (node[1] - c[1]).powi(2),
                };
                raw[s][idx] = (-d2[s] / two_s2).exp();
            }
            // shift by the nearest centre so the normaliser cannot underflow
            let d2_min = d2.iter().copied().fold(d2[0], |a, b| if b < a { b } else { a });
            let mut total = T::zero();
            for s in 0..s_count {
                let w = (-(d2[s] - d2_min) / two_s2).exp();
                normalized[s][idx] = w;
                total += w;
            }
            for w in normalized.iter_mut() {
                w[idx] /= total;
            }
        }
    }
    Ok(WeightGrid {
        n: grid_n,
        sigma,
        raw,
        normalized,
    })
}

/// `u(x_ij) = Σ_s W_s^norm(i,j) u_s(x_ij)`, per component.
pub fn fuse_fields<T: Real>(local: &[FieldGrid<T>], weights: &WeightGrid<T>) -> Result<FieldGrid<T>> {
    crate::error::ensure_dim("local field count", weights.subdomains(), local.len())?;
    let n = weights.n();
    for f in local {
        crate::error::ensure_dim("local field resolution", n, f.n())?;
    }
    let mut out = FieldGrid::zeros(n, local[0].time())?;
    for (s, field) in local.iter().enumerate() {
        let w = weights.normalized(s);
        for ((acc, v), &ws) in out.values_mut().iter_mut().zip(field.values()).zip(w) {
            acc[0] += ws * v[0];
            acc[1] += ws * v[1];
        }
    }
    Ok(out)
}

/// Periodic bilinear interpolation of a grid field.
pub fn interp_bilinear<T: Real>(field: &FieldGrid<T>, p: Vec2<T>) -> Vec2<T> {
    let n = field.n();
    let h = field.spacing();
    let locate = |x: T| -> (usize, T) {
        let s = wrap(x) / h;
        let base = s.floor();
        let mut frac = s - base;
        let mut i = base.to_usize().unwrap_or(0);
        // snap queries that sit on a node up to rounding
        if frac > T::one() - T::lit(8.0) * T::default_epsilon() * (s + T::one()) {
            i += 1;
            frac = T::zero();
        } else if frac < T::lit(8.0) * T::default_epsilon() * (s + T::one()) {
            frac = T::zero();
        }
        (i % n, frac)
    };
    let (i0, fx) = locate(p[0]);
    let (j0, fy) = locate(p[1]);
    let (i1, j1) = ((i0 + 1) % n, (j0 + 1) % n);
    let (v00, v10, v01, v11) = (field.get(i0, j0), field.get(i1, j0), field.get(i0, j1), field.get(i1, j1));
    let one = T::one();
    let mut out = [T::zero(); 2];
    for k in 0..2 {
        let bottom = v00[k] * (one - fx) + v10[k] * fx;
        let top = v01[k] * (one - fx) + v11[k] * fx;
        out[k] = if fy == T::zero() { bottom } else { bottom * (one - fy) + top * fy };
        if fx == T::zero() && fy == T::zero() {
            out[k] = v00[k];
        }
    }
    out
}
