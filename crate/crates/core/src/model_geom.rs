//! Trigonometry of comparison triangles in the simply-connected surface of
//! constant curvature κ.
//!
//! Angles are computed with half-angle formulas, which stay accurate for
//! nearly degenerate triangles (angles close to 0 or π) where a plain
//! `acos` of the law-of-cosines argument loses half the significant digits.
//! Whether a triangle is accepted is still decided on the law-of-cosines
//! argument: values within [`CLAMP_TOL`] outside `[-1, 1]` are treated as
//! rounding, anything beyond that is an invalid triangle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::metric::FiniteMetricSpace;

/// Slack on the law-of-cosines argument before a triangle is declared invalid.
pub const CLAMP_TOL: f64 = 1e-9;

/// Below this magnitude κ is routed to the Euclidean formulas.
pub const FLAT_EPS: f64 = 1e-12;

/// Relative slack used by [`triangle_valid`] for the triangle inequality and
/// the spherical perimeter bound.
const VALID_REL_TOL: f64 = 1e-12;

/// Lower curvature bound of the model surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Curvature(pub f64);

impl Curvature {
    pub const FLAT: Curvature = Curvature(0.0);

    pub fn new(kappa: f64) -> Self {
        Curvature(kappa)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    fn model(self) -> Model {
        if self.0.abs() < FLAT_EPS {
            Model::Flat
        } else if self.0 > 0.0 {
            Model::Spherical(self.0.sqrt())
        } else {
            Model::Hyperbolic((-self.0).sqrt())
        }
    }

    /// Diameter of the model surface (`π/√κ` for κ > 0, infinite otherwise).
    pub fn model_diameter(self) -> f64 {
        match self.model() {
            Model::Spherical(s) => PI / s,
            _ => f64::INFINITY,
        }
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Curvature::FLAT
    }
}

#[derive(Debug, Clone, Copy)]
enum Model {
    Flat,
    /// Scale factor √κ.
    Spherical(f64),
    /// Scale factor √−κ.
    Hyperbolic(f64),
}

/// Side lengths of a triangle; the angle of interest sits between `a` and `b`,
/// opposite `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleSides {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TriangleSides {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        TriangleSides { a, b, c }
    }
}

/// Whether a triangle with these sides exists in the κ-model surface.
pub fn triangle_valid(kappa: Curvature, sides: TriangleSides) -> bool {
    let TriangleSides { a, b, c } = sides;
    if !(a.is_finite() && b.is_finite() && c.is_finite()) || a < 0.0 || b < 0.0 || c < 0.0 {
        return false;
    }
    let perimeter = a + b + c;
    let slack = VALID_REL_TOL * perimeter.max(f64::MIN_POSITIVE);
    if a > b + c + slack || b > a + c + slack || c > a + b + slack {
        return false;
    }
    if let Model::Spherical(s) = kappa.model() {
        let side_max = PI / s;
        if a > side_max + slack || b > side_max + slack || c > side_max + slack {
            return false;
        }
        if perimeter > 2.0 * side_max + slack {
            return false;
        }
    }
    true
}

/// Law-of-cosines argument `cos γ` for the angle opposite `c`.
fn cosine_argument(model: Model, a: f64, b: f64, c: f64) -> f64 {
    match model {
        Model::Flat => (a * a + b * b - c * c) / (2.0 * a * b),
        Model::Spherical(s) => {
            let (a, b, c) = (s * a, s * b, s * c);
            (c.cos() - a.cos() * b.cos()) / (a.sin() * b.sin())
        }
        Model::Hyperbolic(s) => {
            let (a, b, c) = (s * a, s * b, s * c);
            (a.cosh() * b.cosh() - c.cosh()) / (a.sinh() * b.sinh())
        }
    }
}

/// Angle opposite `c` by the half-angle formula
/// `tan(γ/2) = sqrt(F(s−a)F(s−b) / (F(s)F(s−c)))` with `F` the identity,
/// `sin` or `sinh` depending on the model.
fn half_angle(model: Model, a: f64, b: f64, c: f64) -> f64 {
    let (scale, f): (f64, fn(f64) -> f64) = match model {
        Model::Flat => (1.0, |x| x),
        Model::Spherical(s) => (s, f64::sin),
        Model::Hyperbolic(s) => (s, f64::sinh),
    };
    let (a, b, c) = (scale * a, scale * b, scale * c);
    let s = 0.5 * (a + b + c);
    let num = (f(s - a).max(0.0) * f(s - b).max(0.0)).sqrt();
    let den = (f(s).max(0.0) * f(s - c).max(0.0)).sqrt();
    if num == 0.0 && den == 0.0 {
        // Only reachable on fully degenerate input that the validity test let
        // through; fall back to the clamped cosine.
        return cosine_argument(model, a / scale, b / scale, c / scale)
            .clamp(-1.0, 1.0)
            .acos();
    }
    2.0 * num.atan2(den)
}

/// Comparison angle between sides `a` and `b` (opposite `c`), or `None` when
/// no comparison triangle exists or a vertex side is zero.
pub fn comparison_angle(kappa: Curvature, sides: TriangleSides) -> Option<f64> {
    let TriangleSides { a, b, c } = sides;
    if !(a.is_finite() && b.is_finite() && c.is_finite()) || a <= 0.0 || b <= 0.0 || c < 0.0 {
        return None;
    }
    let model = kappa.model();
    if let Model::Spherical(s) = model {
        let side_max = PI / s;
        let slack = CLAMP_TOL * side_max;
        if a > side_max + slack || b > side_max + slack || c > side_max + slack {
            return None;
        }
        if a + b + c > 2.0 * side_max + slack {
            return None;
        }
    }
    let arg = cosine_argument(model, a, b, c);
    if !arg.is_finite() {
        // sin a · sin b underflowed to zero: a or b sits at the antipode.
        return None;
    }
    if !(-1.0 - CLAMP_TOL..=1.0 + CLAMP_TOL).contains(&arg) {
        return None;
    }
    Some(half_angle(model, a, b, c).clamp(0.0, PI))
}

/// Domain errors of [`comparison_side`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SideError {
    #[error("side lengths must be finite and nonnegative (a={a}, b={b})")]
    NegativeSide { a: f64, b: f64 },
    #[error("angle {0} outside [0, π]")]
    AngleOutOfRange(f64),
    #[error("side exceeds the model diameter {max} (a={a}, b={b})")]
    SideTooLong { a: f64, b: f64, max: f64 },
}

/// Side opposite the angle `gamma` enclosed by sides `a` and `b`.
pub fn comparison_side(kappa: Curvature, a: f64, b: f64, gamma: f64) -> Result<f64, SideError> {
    if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 {
        return Err(SideError::NegativeSide { a, b });
    }
    if !gamma.is_finite() || !(0.0..=PI).contains(&gamma) {
        return Err(SideError::AngleOutOfRange(gamma));
    }
    let half_sin_sq = (0.5 * gamma).sin().powi(2);
    let side = match kappa.model() {
        Model::Flat => ((a - b).powi(2) + 4.0 * a * b * half_sin_sq).sqrt(),
        Model::Spherical(s) => {
            let max = PI / s;
            if a > max * (1.0 + CLAMP_TOL) || b > max * (1.0 + CLAMP_TOL) {
                return Err(SideError::SideTooLong { a, b, max });
            }
            let (sa, sb) = (s * a, s * b);
            // haversine form of the spherical law of cosines
            let hav = (0.5 * (sa - sb)).sin().powi(2) + sa.sin() * sb.sin() * half_sin_sq;
            2.0 * hav.clamp(0.0, 1.0).sqrt().asin() / s
        }
        Model::Hyperbolic(s) => {
            let (sa, sb) = (s * a, s * b);
            let q = (0.5 * (sa - sb)).sinh().powi(2) + sa.sinh() * sb.sinh() * half_sin_sq;
            2.0 * q.max(0.0).sqrt().asinh() / s
        }
    };
    Ok(side)
}

/// Comparison angle at `p` of the triangle `p q r` read from a distance table.
pub fn tilde_angle(
    space: &FiniteMetricSpace,
    kappa: Curvature,
    p: usize,
    q: usize,
    r: usize,
) -> Option<f64> {
    comparison_angle(
        kappa,
        TriangleSides::new(space.dist(p, q), space.dist(p, r), space.dist(q, r)),
    )
}

/// Comparison angle at `p` for the side lengths `|pA|`, `|pB|`, `|AB|`, with
/// the convention that a nonexistent comparison triangle has angle 0.
pub fn tilde_angle_sets(
    space: &FiniteMetricSpace,
    kappa: Curvature,
    p: usize,
    set_a: &[usize],
    set_b: &[usize],
) -> f64 {
    let a = space.dist_to_set(p, set_a);
    let b = space.dist_to_set(p, set_b);
    let c = set_a
        .iter()
        .map(|&x| space.dist_to_set(x, set_b))
        .fold(f64::INFINITY, f64::min);
    comparison_angle(kappa, TriangleSides::new(a, b, c)).unwrap_or(0.0)
}
