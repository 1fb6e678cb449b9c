//! Unified κ-stereographic manifold operations.
//!
//! One chart covers all three constant-curvature geometries: hyperbolic
//! (κ < 0, the Poincaré ball of radius 1/√−κ), Euclidean (κ = 0) and
//! spherical (κ > 0, stereographic projection of the sphere). The manifold is
//! `{ x ∈ ℝⁿ | −κ‖x‖² < 1 }` with conformal factor `λ_x = 2/(1 + κ‖x‖²)`.
//!
//! Curvatures with `|κ| < EPS_KAPPA` take dedicated flat-limit branches; the
//! general formulas divide by √|κ| and lose precision near zero. After every
//! manifold-producing operation with curved κ the result is radially
//! projected to `‖x‖ ≤ (1 − BOUNDARY_EPS)/√|κ|` — the open ball for κ < 0,
//! the equatorial chart for κ > 0 — and arc arguments of `tan` are clamped
//! below π/2 so geodesics never wrap past the cut locus.
//!
//! Exponential and logarithmic maps use the standard normalization
//! `exp_o(v) = tan_κ(√|κ|‖v‖) · v/(√|κ|‖v‖)` so that the two maps are mutual
//! inverses and `d(x, y) = 2/√|κ| · arctan_κ(√|κ|‖−x ⊕ y‖)` measures the
//! geodesic they parameterize.
//!
//! All operations are pure functions; values move freely between threads.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::autodiff::Scalar;
use crate::linalg::{self, Matrix};

/// Below this magnitude a curvature is treated as exactly flat.
pub const EPS_KAPPA: f64 = 1e-7;
/// Denominators closer to zero than this are a domain violation.
pub const EPS_DEN: f64 = 1e-12;
/// Radial safety margin kept between points and the κ < 0 ball boundary.
pub const BOUNDARY_EPS: f64 = 1e-5;
/// Hard bound on `tan` arguments for κ > 0.
pub const ARC_MAX: f64 = FRAC_PI_2 - 1e-5;
const EPS_TAN_DOMAIN: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("curvature mismatch: {0} vs {1}")]
    CurvatureMismatch(f64, f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("domain violation: {0}")]
    DomainViolation(&'static str),
    #[error("tan_kappa argument {arg} outside (-pi/2, pi/2) for positive curvature")]
    TanDomain { arg: f64 },
    #[error("empty point set")]
    EmptyPointSet,
    #[error("weights are all zero or negative")]
    BadWeights,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Sectional curvature of a constant-curvature space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(value: f64) -> Self {
        assert!(value.is_finite(), "curvature must be finite");
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Whether operations should take the analytic κ = 0 limit branch.
    pub fn is_flat(self) -> bool {
        self.0.abs() < EPS_KAPPA
    }

    pub fn sqrt_abs(self) -> f64 {
        self.0.abs().sqrt()
    }

    /// Maximum admissible coordinate norm, if the geometry bounds it: the
    /// open-ball radius for κ < 0, and the equator of the stereographic
    /// chart for κ > 0 (gyromidpoint denominators stay positive and points
    /// never wrap toward the projection pole).
    pub fn max_norm(self) -> Option<f64> {
        if self.0.abs() > EPS_KAPPA {
            Some((1.0 - BOUNDARY_EPS) / self.0.abs().sqrt())
        } else {
            None
        }
    }
}

impl From<f64> for Curvature {
    fn from(v: f64) -> Self {
        Self::new(v)
    }
}

/// A point of the κ-stereographic manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint<S = f64> {
    pub coords: Vec<S>,
    pub kappa: Curvature,
}

/// A tangent vector attached to its base point.
#[derive(Debug, Clone)]
pub struct TangentVector<S = f64> {
    pub coords: Vec<S>,
    pub base: ManifoldPoint<S>,
}

impl<S: Scalar> ManifoldPoint<S> {
    /// Validating constructor: enforces −κ‖x‖² < 1.
    pub fn new(coords: Vec<S>, kappa: Curvature) -> Result<Self> {
        assert!(!coords.is_empty(), "zero-dimensional point");
        let k = kappa.value();
        if k < -EPS_KAPPA {
            let nsq: f64 = coords.iter().map(|c| c.value() * c.value()).sum();
            if -k * nsq >= 1.0 {
                return Err(GeometryError::DomainViolation(
                    "point outside the kappa-stereographic domain",
                ));
            }
        }
        Ok(Self { coords, kappa })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(|c| c.value() == 0.0)
    }

    /// Origin of the same space, recorded in the same evaluation context.
    pub fn origin_like(&self) -> Self {
        let zero = self.coords[0].lift(0.0);
        Self { coords: vec![zero; self.dim()], kappa: self.kappa }
    }

    fn with_coords(&self, coords: Vec<S>) -> Self {
        Self { coords, kappa: self.kappa }
    }
}

impl ManifoldPoint<f64> {
    pub fn origin(dim: usize, kappa: Curvature) -> Self {
        Self { coords: vec![0.0; dim], kappa }
    }
}

fn check_pair<S: Scalar>(x: &ManifoldPoint<S>, y: &ManifoldPoint<S>) -> Result<()> {
    if x.kappa != y.kappa {
        return Err(GeometryError::CurvatureMismatch(
            x.kappa.value(),
            y.kappa.value(),
        ));
    }
    if x.dim() != y.dim() {
        return Err(GeometryError::DimensionMismatch(x.dim(), y.dim()));
    }
    Ok(())
}

/// Curvature-dependent tangent: tanh for κ < 0, identity for κ = 0, tan for κ > 0.
pub fn tan_kappa<S: Scalar>(z: S, kappa: Curvature) -> Result<S> {
    let k = kappa.value();
    if k < -EPS_KAPPA {
        Ok(z.tanh())
    } else if k > EPS_KAPPA {
        if z.value().abs() >= FRAC_PI_2 - EPS_TAN_DOMAIN {
            return Err(GeometryError::TanDomain { arg: z.value() });
        }
        Ok(z.tan())
    } else {
        Ok(z)
    }
}

/// Exact inverse of [`tan_kappa`] per branch.
pub fn arctan_kappa<S: Scalar>(z: S, kappa: Curvature) -> S {
    let k = kappa.value();
    if k < -EPS_KAPPA {
        // Clamp against float drift toward the atanh pole.
        z.clamp_value(-(1.0 - 1e-12), 1.0 - 1e-12).atanh()
    } else if k > EPS_KAPPA {
        z.atan()
    } else {
        z
    }
}

/// Radial projection keeping κ < 0 points strictly inside the ball.
fn project<S: Scalar>(coords: Vec<S>, kappa: Curvature) -> Vec<S> {
    if let Some(max) = kappa.max_norm() {
        let n = linalg::norm(&coords);
        if n.value() > max {
            let factor = n.recip() * max;
            return linalg::scale(&coords, factor);
        }
    }
    coords
}

/// Clamp a `tan` arc argument below the κ > 0 cut locus.
fn clamp_arc<S: Scalar>(arg: S, kappa: Curvature) -> S {
    if kappa.value() > EPS_KAPPA {
        arg.clamp_value(-ARC_MAX, ARC_MAX)
    } else {
        arg
    }
}

/// Möbius addition `x ⊕_κ y`. Non-associative and non-commutative in general.
pub fn mobius_add<S: Scalar>(x: &ManifoldPoint<S>, y: &ManifoldPoint<S>) -> Result<ManifoldPoint<S>> {
    check_pair(x, y)?;
    let k = x.kappa.value();
    if x.kappa.is_flat() {
        return Ok(x.with_coords(linalg::add(&x.coords, &y.coords)));
    }
    let xy = linalg::dot(&x.coords, &y.coords);
    let xx = linalg::norm_sq(&x.coords);
    let yy = linalg::norm_sq(&y.coords);
    let coef_x = xy * (-2.0 * k) + yy * (-k) + 1.0;
    let coef_y = xx * k + 1.0;
    let den = xy * (-2.0 * k) + xx * yy * (k * k) + 1.0;
    if den.value().abs() < EPS_DEN {
        return Err(GeometryError::DomainViolation(
            "mobius_add denominator vanished (antipodal points)",
        ));
    }
    let inv = den.recip();
    let coords: Vec<S> = x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(&xi, &yi)| (xi * coef_x + yi * coef_y) * inv)
        .collect();
    Ok(x.with_coords(project(coords, x.kappa)))
}

/// The gyro-inverse `−x`, so that `(−x) ⊕ x = o`.
pub fn neg_point<S: Scalar>(x: &ManifoldPoint<S>) -> ManifoldPoint<S> {
    x.with_coords(linalg::neg(&x.coords))
}

/// Möbius scaling `r ⊗_κ x = tan_κ(r · arctan_κ(√|κ|‖x‖)) · x / (√|κ|‖x‖)`.
pub fn mobius_scale<S: Scalar>(r: f64, x: &ManifoldPoint<S>) -> Result<ManifoldPoint<S>> {
    if x.is_origin() {
        return Ok(x.origin_like());
    }
    if x.kappa.is_flat() {
        return Ok(x.with_coords(linalg::scale_f64(&x.coords, r)));
    }
    let s = x.kappa.sqrt_abs();
    let n = linalg::norm(&x.coords);
    let arc = clamp_arc(arctan_kappa(n * s, x.kappa) * r, x.kappa);
    let t = tan_kappa(arc, x.kappa)?;
    let factor = t / (n * s);
    Ok(x.with_coords(project(linalg::scale(&x.coords, factor), x.kappa)))
}

/// Möbius matrix action `M ⊗_κ x`; the image keeps the direction of `Mx`.
/// `Mx = 0` (or `x = o`) maps to the origin, the continuous limit there.
pub fn mobius_matvec<S: Scalar>(m: &Matrix<S>, x: &ManifoldPoint<S>) -> Result<ManifoldPoint<S>> {
    if m.cols != x.dim() {
        return Err(GeometryError::DimensionMismatch(m.cols, x.dim()));
    }
    let origin_out = |x: &ManifoldPoint<S>| {
        let zero = x.coords[0].lift(0.0);
        ManifoldPoint { coords: vec![zero; m.rows], kappa: x.kappa }
    };
    if x.is_origin() {
        return Ok(origin_out(x));
    }
    let mx = m.matvec(&x.coords);
    if mx.iter().all(|c| c.value() == 0.0) {
        return Ok(origin_out(x));
    }
    if x.kappa.is_flat() {
        return Ok(ManifoldPoint { coords: mx, kappa: x.kappa });
    }
    let s = x.kappa.sqrt_abs();
    let n = linalg::norm(&x.coords);
    let n_mx = linalg::norm(&mx);
    let arc = clamp_arc(n_mx / n * arctan_kappa(n * s, x.kappa), x.kappa);
    let t = tan_kappa(arc, x.kappa)?;
    let factor = t / (n_mx * s);
    Ok(ManifoldPoint {
        coords: project(linalg::scale(&mx, factor), x.kappa),
        kappa: x.kappa,
    })
}

/// Conformal factor `λ_x = 2 / (1 + κ‖x‖²)`; equals 2 at the origin and
/// everywhere in flat space.
pub fn conformal_factor<S: Scalar>(x: &ManifoldPoint<S>) -> S {
    let k = x.kappa.value();
    if x.kappa.is_flat() {
        return x.coords[0].lift(2.0);
    }
    (linalg::norm_sq(&x.coords) * k + 1.0).recip() * 2.0
}

/// Exponential map at `v.base`.
pub fn exp_map<S: Scalar>(v: &TangentVector<S>) -> Result<ManifoldPoint<S>> {
    let x = &v.base;
    if v.coords.len() != x.dim() {
        return Err(GeometryError::DimensionMismatch(v.coords.len(), x.dim()));
    }
    let nv = linalg::norm(&v.coords);
    if nv.value() == 0.0 {
        return Ok(x.clone());
    }
    if x.kappa.is_flat() {
        return Ok(x.with_coords(linalg::add(&x.coords, &v.coords)));
    }
    let s = x.kappa.sqrt_abs();
    let lambda = conformal_factor(x);
    let arc = clamp_arc(lambda * nv * (s / 2.0), x.kappa);
    let t = tan_kappa(arc, x.kappa)?;
    let second = x.with_coords(linalg::scale(&v.coords, t / (nv * s)));
    mobius_add(x, &second)
}

/// Exponential map at the origin.
pub fn exp_map_origin<S: Scalar>(kappa: Curvature, v: &[S]) -> Result<ManifoldPoint<S>> {
    let nv = linalg::norm(v);
    if nv.value() == 0.0 || kappa.is_flat() {
        return Ok(ManifoldPoint { coords: v.to_vec(), kappa });
    }
    let s = kappa.sqrt_abs();
    let arc = clamp_arc(nv * s, kappa);
    let t = tan_kappa(arc, kappa)?;
    Ok(ManifoldPoint { coords: project(linalg::scale(v, t / (nv * s)), kappa), kappa })
}

/// Logarithmic map: the tangent vector at `x` pointing to `y`. `y = x` yields
/// the zero tangent, the continuous limit.
pub fn log_map<S: Scalar>(x: &ManifoldPoint<S>, y: &ManifoldPoint<S>) -> Result<TangentVector<S>> {
    check_pair(x, y)?;
    let u = mobius_add(&neg_point(x), y)?;
    let nu = linalg::norm(&u.coords);
    if nu.value() == 0.0 {
        return Ok(TangentVector { coords: u.coords, base: x.clone() });
    }
    if x.kappa.is_flat() {
        return Ok(TangentVector { coords: u.coords, base: x.clone() });
    }
    let s = x.kappa.sqrt_abs();
    let lambda = conformal_factor(x);
    let coef = arctan_kappa(nu * s, x.kappa) * (2.0 / s) / (lambda * nu);
    Ok(TangentVector { coords: linalg::scale(&u.coords, coef), base: x.clone() })
}

/// Logarithmic map at the origin.
pub fn log_map_origin<S: Scalar>(x: &ManifoldPoint<S>) -> Vec<S> {
    if x.kappa.is_flat() || x.is_origin() {
        return x.coords.clone();
    }
    let s = x.kappa.sqrt_abs();
    let n = linalg::norm(&x.coords);
    let coef = arctan_kappa(n * s, x.kappa) / (n * s);
    linalg::scale(&x.coords, coef)
}

/// Geodesic distance `d(x, y) = 2/√|κ| · arctan_κ(√|κ|‖−x ⊕ y‖)`; the κ → 0
/// limit is `2‖x − y‖`.
pub fn distance<S: Scalar>(x: &ManifoldPoint<S>, y: &ManifoldPoint<S>) -> Result<S> {
    check_pair(x, y)?;
    let u = mobius_add(&neg_point(x), y)?;
    let nu = linalg::norm(&u.coords);
    if x.kappa.is_flat() {
        return Ok(nu * 2.0);
    }
    let s = x.kappa.sqrt_abs();
    Ok(arctan_kappa(nu * s, x.kappa) * (2.0 / s))
}

/// Transports `x` to the space of curvature `kappa2` through the shared
/// tangent space at the origin: `exp_o^{κ₂}(log_o^{κ₁}(x))`. Equal curvatures
/// return `x` unchanged, so round trips are exact there.
pub fn map_between<S: Scalar>(x: &ManifoldPoint<S>, kappa2: Curvature) -> Result<ManifoldPoint<S>> {
    if x.kappa == kappa2 {
        return Ok(ManifoldPoint { coords: x.coords.clone(), kappa: kappa2 });
    }
    let v = log_map_origin(x);
    exp_map_origin(kappa2, &v)
}

/// Weighted gyro-midpoint
/// `½ ⊗_κ ( Σ_j w_j λ_j / (Σ_k w_k (λ_k − 1)) · x_j )`.
///
/// Permutation-invariant and invariant to positive rescaling of the weights;
/// the flat limit is the weighted arithmetic mean.
pub fn gyromidpoint<S: Scalar>(
    points: &[ManifoldPoint<S>],
    weights: &[S],
) -> Result<ManifoldPoint<S>> {
    if points.is_empty() {
        return Err(GeometryError::EmptyPointSet);
    }
    if points.len() != weights.len() {
        return Err(GeometryError::DimensionMismatch(points.len(), weights.len()));
    }
    let first = &points[0];
    for p in points.iter().skip(1) {
        check_pair(first, p)?;
    }
    if weights.iter().any(|w| w.value() < 0.0)
        || weights.iter().all(|w| w.value() == 0.0)
    {
        return Err(GeometryError::BadWeights);
    }
    let dim = first.dim();
    if first.kappa.is_flat() {
        let wsum = S::sum(weights);
        let coords: Vec<S> = (0..dim)
            .map(|i| {
                let col: Vec<S> = points
                    .iter()
                    .zip(weights)
                    .map(|(p, &w)| p.coords[i] * w)
                    .collect();
                S::sum(&col) / wsum
            })
            .collect();
        return Ok(first.with_coords(coords));
    }
    let lambdas: Vec<S> = points.iter().map(conformal_factor).collect();
    let den_terms: Vec<S> = lambdas
        .iter()
        .zip(weights)
        .map(|(&l, &w)| w * (l - 1.0))
        .collect();
    let den = S::sum(&den_terms);
    if den.value().abs() < EPS_DEN {
        return Err(GeometryError::DomainViolation(
            "gyromidpoint denominator vanished",
        ));
    }
    let inv_den = den.recip();
    let coords: Vec<S> = (0..dim)
        .map(|i| {
            let col: Vec<S> = points
                .iter()
                .zip(lambdas.iter().zip(weights))
                .map(|(p, (&l, &w))| p.coords[i] * (w * l))
                .collect();
            S::sum(&col) * inv_den
        })
        .collect();
    mobius_scale(0.5, &first.with_coords(coords))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(coords: &[f64], k: f64) -> ManifoldPoint<f64> {
        ManifoldPoint::new(coords.to_vec(), Curvature::new(k)).unwrap()
    }

    #[test]
    fn tan_kappa_branches() {
        let z = 0.5;
        assert!((tan_kappa(z, Curvature::new(-1.0)).unwrap() - z.tanh()).abs() < 1e-15);
        assert_eq!(tan_kappa(z, Curvature::new(0.0)).unwrap(), z);
        assert!((tan_kappa(z, Curvature::new(1.0)).unwrap() - z.tan()).abs() < 1e-15);
        assert_eq!(tan_kappa(0.0, Curvature::new(0.7)).unwrap(), 0.0);
        assert!(tan_kappa(1.6, Curvature::new(1.0)).is_err());
    }

    #[test]
    fn arctan_inverts_tan_per_branch() {
        for k in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let kappa = Curvature::new(k);
            for z in [-0.9, -0.3, 0.0, 0.4, 1.1] {
                let t = tan_kappa(z, kappa).unwrap();
                assert!((arctan_kappa(t, kappa) - z).abs() < 1e-12, "k={k} z={z}");
            }
        }
    }

    #[test]
    fn mobius_add_identity_both_sides() {
        let x = pt(&[0.3, -0.2], -1.0);
        let o = ManifoldPoint::origin(2, x.kappa);
        let left = mobius_add(&o, &x).unwrap();
        let right = mobius_add(&x, &o).unwrap();
        for i in 0..2 {
            assert!((left.coords[i] - x.coords[i]).abs() < 1e-15);
            assert!((right.coords[i] - x.coords[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn mobius_add_one_dimensional_oracle() {
        // kappa = -1 reduces to the relativistic velocity sum (x+y)/(1+xy).
        let x = pt(&[0.3, 0.0], -1.0);
        let y = pt(&[0.4, 0.0], -1.0);
        let z = mobius_add(&x, &y).unwrap();
        assert!((z.coords[0] - 0.625).abs() < 1e-12);
        assert!(z.coords[1].abs() < 1e-15);
    }

    #[test]
    fn mobius_add_flat_is_vector_sum() {
        let x = pt(&[1.5, -2.0], 0.0);
        let y = pt(&[0.25, 4.0], 0.0);
        let z = mobius_add(&x, &y).unwrap();
        assert_eq!(z.coords, vec![1.75, 2.0]);
    }

    #[test]
    fn mobius_add_curvature_mismatch() {
        let x = pt(&[0.1], -1.0);
        let y = pt(&[0.1], -0.5);
        assert!(matches!(
            mobius_add(&x, &y),
            Err(GeometryError::CurvatureMismatch(_, _))
        ));
    }

    #[test]
    fn mobius_scale_oracle() {
        // tanh(2 atanh(0.5)) = 0.8
        let x = pt(&[0.5, 0.0], -1.0);
        let y = mobius_scale(2.0, &x).unwrap();
        assert!((y.coords[0] - 0.8).abs() < 1e-12);
        let id = mobius_scale(1.0, &x).unwrap();
        assert!((id.coords[0] - 0.5).abs() < 1e-12);
        let o = ManifoldPoint::origin(2, Curvature::new(-1.0));
        assert!(mobius_scale(3.0, &o).unwrap().is_origin());
    }

    #[test]
    fn mobius_matvec_identity_and_origin() {
        let x = pt(&[0.2, -0.3], -0.5);
        let eye = Matrix::identity(2);
        let y = mobius_matvec(&eye, &x).unwrap();
        for i in 0..2 {
            assert!((y.coords[i] - x.coords[i]).abs() < 1e-12);
        }
        let o = ManifoldPoint::origin(2, x.kappa);
        assert!(mobius_matvec(&eye, &o).unwrap().is_origin());
        let zero = Matrix::zeros(3, 2);
        let z = mobius_matvec(&zero, &x).unwrap();
        assert_eq!(z.dim(), 3);
        assert!(z.is_origin());
    }

    #[test]
    fn mobius_matvec_flat_is_plain_matvec() {
        let x = pt(&[1.0, 2.0], 0.0);
        let m = Matrix::from_vec(2, 2, vec![0.0, 1.0, -1.0, 0.0]);
        let y = mobius_matvec(&m, &x).unwrap();
        assert_eq!(y.coords, vec![2.0, -1.0]);
    }

    #[test]
    fn exp_origin_oracle() {
        let v = [0.5, 0.0];
        let y = exp_map_origin(Curvature::new(-1.0), &v).unwrap();
        assert!((y.coords[0] - 0.5f64.tanh()).abs() < 1e-12);
        let flat = exp_map_origin(Curvature::new(0.0), &v).unwrap();
        assert_eq!(flat.coords, v.to_vec());
    }

    #[test]
    fn exp_zero_tangent_fixes_base() {
        let x = pt(&[0.2, 0.1], 0.5);
        let v = TangentVector { coords: vec![0.0, 0.0], base: x.clone() };
        let y = exp_map(&v).unwrap();
        assert_eq!(y.coords, x.coords);
    }

    #[test]
    fn distance_oracle() {
        let o = ManifoldPoint::origin(2, Curvature::new(-1.0));
        let y = pt(&[0.5, 0.0], -1.0);
        let d = distance(&o, &y).unwrap();
        assert!((d - 2.0 * 0.5f64.atanh()).abs() < 1e-12);
        assert_eq!(distance(&y, &y).unwrap(), 0.0);
        // Flat limit: 2 * Euclidean.
        let a = pt(&[1.0, 1.0], 0.0);
        let b = pt(&[4.0, 5.0], 0.0);
        assert!((distance(&a, &b).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn conformal_factor_values() {
        let o = ManifoldPoint::origin(3, Curvature::new(0.7));
        assert!((conformal_factor(&o) - 2.0).abs() < 1e-15);
        let x = pt(&[9.0, 1.0], 0.0);
        assert_eq!(conformal_factor(&x), 2.0);
        let y = pt(&[0.5, 0.0], -1.0);
        assert!((conformal_factor(&y) - 2.0 / 0.75).abs() < 1e-12);
    }

    #[test]
    fn map_between_oracle() {
        let x = pt(&[0.5, 0.0], -1.0);
        let y = map_between(&x, Curvature::new(0.0)).unwrap();
        assert!((y.coords[0] - 0.5f64.atanh()).abs() < 1e-12);
        // Same curvature: exact identity.
        let same = map_between(&x, Curvature::new(-1.0)).unwrap();
        assert_eq!(same.coords, x.coords);
        // Origin is a fixed point.
        let o = ManifoldPoint::origin(2, Curvature::new(-1.0));
        assert!(map_between(&o, Curvature::new(1.0)).unwrap().is_origin());
    }

    #[test]
    fn gyromidpoint_single_point_is_identity() {
        let x = pt(&[0.5, 0.0], -1.0);
        let m = gyromidpoint(std::slice::from_ref(&x), &[1.0]).unwrap();
        assert!((m.coords[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gyromidpoint_symmetric_pair_is_origin() {
        let x = pt(&[0.3, 0.2], -1.0);
        let m = gyromidpoint(&[x.clone(), neg_point(&x)], &[1.0, 1.0]).unwrap();
        assert!(linalg::norm(&m.coords) < 1e-12);
    }

    #[test]
    fn gyromidpoint_flat_is_weighted_mean() {
        let a = pt(&[1.0, 0.0], 0.0);
        let b = pt(&[0.0, 2.0], 0.0);
        let m = gyromidpoint(&[a, b], &[1.0, 3.0]).unwrap();
        assert!((m.coords[0] - 0.25).abs() < 1e-12);
        assert!((m.coords[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn gyromidpoint_rejects_bad_input() {
        let x = pt(&[0.1], -1.0);
        assert!(matches!(
            gyromidpoint::<f64>(&[], &[]),
            Err(GeometryError::EmptyPointSet)
        ));
        assert!(matches!(
            gyromidpoint(std::slice::from_ref(&x), &[0.0]),
            Err(GeometryError::BadWeights)
        ));
    }

    #[test]
    fn projection_keeps_points_inside_ball() {
        let k = Curvature::new(-1.0);
        let near = pt(&[0.97, 0.0], -1.0);
        let sum = mobius_add(&near, &near).unwrap();
        let n: f64 = linalg::norm(&sum.coords);
        assert!(n <= (1.0 - BOUNDARY_EPS) + 1e-12);
        assert!(ManifoldPoint::new(vec![1.2, 0.0], k).is_err());
    }
}
