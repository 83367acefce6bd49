//! Grammar parameters and the branching-process statistics they induce.
//!
//! The dual tree of a generated shape is a root with one, two or three
//! children (probabilities `t0`, `t1`, `t2`) whose children each grow as a
//! Galton-Watson process with offspring distribution `(t0, t1, t2)` over
//! `{0, 1, 2}` children.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{signed_area, GeometryError, Point, Triangle, TriangleType};

/// Tolerance on `t0 + t1 + t2 = 1` before renormalization.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("triangle-type probabilities must be finite and nonnegative, got ({0}, {1}, {2})")]
    NegativeProbability(f64, f64, f64),
    #[error("triangle-type probabilities must sum to 1, got {0}")]
    Simplex(f64),
    #[error("growth is not subcritical: need t2 < t0, got t0 = {t0}, t2 = {t2}")]
    Subcritical { t0: f64, t2: f64 },
    #[error("ideal triangle of type {0} is degenerate")]
    DegenerateIdeal(usize),
    #[error("stiffness k{0} must be finite and nonnegative, got {1}")]
    Stiffness(usize, f64),
    #[error("expected triangle count must satisfy E(n) >= 2, got {0}")]
    TooFewTriangles(f64),
    #[error("expectations must satisfy E(n) >= 2 E(j) + 2, got E(n) = {en}, E(j) = {ej}")]
    TooManyJunctions { en: f64, ej: f64 },
}

/// The triangle shape that a type's shape density is centered on.
pub type IdealTriangle = [Point; 3];

/// Equilateral triangle with unit side, counter-clockwise.
pub fn equilateral() -> IdealTriangle {
    [
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(0.5, 3f64.sqrt() / 2.0),
    ]
}

/// Thin isosceles neck triangle: boundary side `x0 x1` of length 0.4 and two
/// unit legs meeting at `x2`.
pub fn thin_isosceles() -> IdealTriangle {
    let base = 0.4;
    [
        Point::new(0.0, 0.0),
        Point::new(base, 0.0),
        Point::new(base / 2.0, (1.0 - base * base / 4.0).sqrt()),
    ]
}

pub const DEFAULT_STIFFNESS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarParams {
    /// Probabilities of selecting a triangle of type 0, 1, 2.
    pub t: [f64; 3],
    /// Shape-score stiffness `k_i` per type.
    pub stiffness: [f64; 3],
    /// Ideal triangles `X_i` per type.
    pub ideal: [IdealTriangle; 3],
}

/// Closed-form structure statistics of the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureStats {
    pub expected_n: f64,
    pub expected_j: f64,
    /// Malthusian parameter, `t1 + 2 t2`.
    pub m: f64,
    /// Expected node count of a Galton-Watson subtree.
    pub x: f64,
    /// Expected two-child node count of a Galton-Watson subtree.
    pub y: f64,
}

/// Checks every invariant of `params` and reports the first that fails.
pub fn validate_params(params: &GrammarParams) -> Result<(), GrammarError> {
    let [t0, t1, t2] = params.t;
    if params.t.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(GrammarError::NegativeProbability(t0, t1, t2));
    }
    let sum = t0 + t1 + t2;
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(GrammarError::Simplex(sum));
    }
    if t2 >= t0 {
        return Err(GrammarError::Subcritical { t0, t2 });
    }
    for (i, k) in params.stiffness.iter().enumerate() {
        if !k.is_finite() || *k < 0.0 {
            return Err(GrammarError::Stiffness(i, *k));
        }
    }
    for (i, tri) in params.ideal.iter().enumerate() {
        let area = signed_area(tri[0], tri[1], tri[2]);
        if area == 0.0 || !area.is_finite() {
            return Err(GrammarError::DegenerateIdeal(i));
        }
    }
    Ok(())
}

/// Inverts the expected-count formulas, returning `(t0, t1, t2)`.
pub fn params_from_expectations(en: f64, ej: f64) -> Result<[f64; 3], GrammarError> {
    if !(en >= 2.0) {
        return Err(GrammarError::TooFewTriangles(en));
    }
    if !(ej >= 0.0) || en < 2.0 * ej + 2.0 {
        return Err(GrammarError::TooManyJunctions { en, ej });
    }
    let t0 = (2.0 + ej) / en;
    let t1 = 1.0 - (2.0 * ej + 2.0) / en;
    let t2 = ej / en;
    Ok([t0, t1, t2])
}

/// Closed-form expectations of triangle and junction counts.
pub fn expected_counts(params: &GrammarParams) -> StructureStats {
    let [t0, t1, t2] = params.t;
    let gap = t0 - t2;
    StructureStats {
        expected_n: 2.0 / gap,
        expected_j: 2.0 * t2 / gap,
        m: t1 + 2.0 * t2,
        x: 1.0 / gap,
        y: t2 / gap,
    }
}

impl GrammarParams {
    /// Validated parameters with default stiffness and ideal triangles.
    ///
    /// The probabilities are renormalized to sum to exactly 1 after the
    /// tolerance check.
    pub fn new(t: [f64; 3]) -> Result<Self, GrammarError> {
        Self::with_shapes(t, [DEFAULT_STIFFNESS; 3], default_ideal_triangles())
    }

    pub fn with_shapes(
        t: [f64; 3],
        stiffness: [f64; 3],
        ideal: [IdealTriangle; 3],
    ) -> Result<Self, GrammarError> {
        let mut params = GrammarParams {
            t,
            stiffness,
            ideal,
        };
        validate_params(&params)?;
        let sum: f64 = t.iter().sum();
        for ti in params.t.iter_mut() {
            *ti /= sum;
        }
        Ok(params)
    }

    pub fn from_expectations(en: f64, ej: f64) -> Result<Self, GrammarError> {
        Self::new(params_from_expectations(en, ej)?)
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        validate_params(self)
    }

    pub fn expected_counts(&self) -> StructureStats {
        expected_counts(self)
    }

    /// `ln t_i`, `-inf` for a zero probability.
    pub fn log_t(&self, i: usize) -> f64 {
        self.t[i].ln()
    }
}

impl Default for GrammarParams {
    /// `E(n) = 20`, `E(j) = 1`.
    fn default() -> Self {
        GrammarParams::from_expectations(20.0, 1.0).expect("default expectations are feasible")
    }
}

/// The four ways a growth edge `(a, b)` turns into a triangle with free
/// vertex `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Production {
    /// `(0, b, c, a)`, no further growth.
    End,
    /// `(1, b, c, a)`, growth continues on `(a, c)`.
    NeckA,
    /// `(1, c, a, b)`, growth continues on `(c, b)`.
    NeckB,
    /// `(2, b, c, a)`, growth continues on `(a, c)` and `(c, b)`.
    Junction,
}

impl Production {
    pub const ALL: [Production; 4] = [
        Production::End,
        Production::NeckA,
        Production::NeckB,
        Production::Junction,
    ];

    pub fn ttype(self) -> TriangleType {
        match self {
            Production::End => TriangleType::End,
            Production::NeckA | Production::NeckB => TriangleType::Neck,
            Production::Junction => TriangleType::Junction,
        }
    }

    /// Vertex labeling `(x0, x1, x2)` of the produced triangle.
    pub fn vertices<P: Copy>(self, a: P, b: P, c: P) -> [P; 3] {
        match self {
            Production::NeckB => [c, a, b],
            _ => [b, c, a],
        }
    }

    pub fn triangle(self, a: Point, b: Point, c: Point) -> Result<Triangle, GeometryError> {
        let [x0, x1, x2] = self.vertices(a, b, c);
        Triangle::new(self.ttype(), x0, x1, x2)
    }

    /// Growth edges created by the production, in order.
    pub fn growth_edges<P: Copy>(self, a: P, b: P, c: P) -> Vec<(P, P)> {
        match self {
            Production::End => vec![],
            Production::NeckA => vec![(a, c)],
            Production::NeckB => vec![(c, b)],
            Production::Junction => vec![(a, c), (c, b)],
        }
    }

    /// `ln t0`, `ln(t1 / 2)` or `ln t2`.
    pub fn log_prob(self, params: &GrammarParams) -> f64 {
        match self {
            Production::End => params.t[0].ln(),
            Production::NeckA | Production::NeckB => (params.t[1] / 2.0).ln(),
            Production::Junction => params.t[2].ln(),
        }
    }
}

/// Growth edges of a root triangle `(i, a, b, c)`.
pub fn root_growth_edges<P: Copy>(ttype: TriangleType, a: P, b: P, c: P) -> Vec<(P, P)> {
    match ttype {
        TriangleType::End => vec![(a, c)],
        TriangleType::Neck => vec![(a, c), (c, b)],
        TriangleType::Junction => vec![(a, c), (c, b), (b, a)],
    }
}

pub fn default_ideal_triangles() -> [IdealTriangle; 3] {
    [equilateral(), thin_isosceles(), equilateral()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameters_validate() {
        let p = GrammarParams::new([0.15, 0.8, 0.05]).unwrap();
        assert!(p.validate().is_ok());
    }

    #[test]
    fn uniform_is_not_subcritical() {
        let third = 1.0 / 3.0;
        let p = GrammarParams {
            t: [third, third, third],
            stiffness: [4.0; 3],
            ideal: default_ideal_triangles(),
        };
        assert!(matches!(
            validate_params(&p),
            Err(GrammarError::Subcritical { .. })
        ));
    }

    #[test]
    fn simplex_violation() {
        let err = GrammarParams::new([0.5, 0.6, 0.05]).unwrap_err();
        match err {
            GrammarError::Simplex(s) => assert!((s - 1.15).abs() < 1e-12),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn degenerate_ideal_rejected() {
        let mut ideal = default_ideal_triangles();
        ideal[1] = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
        ];
        let err = GrammarParams::with_shapes([0.15, 0.8, 0.05], [4.0; 3], ideal).unwrap_err();
        assert_eq!(err, GrammarError::DegenerateIdeal(1));
    }

    #[test]
    fn renormalizes_within_tolerance() {
        let p = GrammarParams::new([0.15 + 4e-13, 0.8, 0.05]).unwrap();
        assert!((p.t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inversion_examples() {
        let t = params_from_expectations(20.0, 1.0).unwrap();
        for (got, want) in t.iter().zip([0.15, 0.8, 0.05]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(params_from_expectations(2.0, 0.0).unwrap(), [1.0, 0.0, 0.0]);
        assert!(matches!(
            params_from_expectations(3.0, 1.0),
            Err(GrammarError::TooManyJunctions { .. })
        ));
        assert!(matches!(
            params_from_expectations(1.5, 0.0),
            Err(GrammarError::TooFewTriangles(_))
        ));
    }

    #[test]
    fn counts_for_default_parameters() {
        let s = GrammarParams::new([0.15, 0.8, 0.05]).unwrap().expected_counts();
        assert!((s.expected_n - 20.0).abs() < 1e-12);
        assert!((s.expected_j - 1.0).abs() < 1e-12);
        assert!((s.m - 0.9).abs() < 1e-12);
        assert!((s.x - 10.0).abs() < 1e-12);
        assert!((s.y - 0.5).abs() < 1e-12);

        let s = GrammarParams::new([1.0, 0.0, 0.0]).unwrap().expected_counts();
        assert_eq!((s.expected_n, s.expected_j, s.m), (2.0, 0.0, 0.0));
    }

    #[test]
    fn default_ideal_neck_has_short_boundary_side() {
        let x = thin_isosceles();
        assert!((x[0].dist(x[1]) - 0.4).abs() < 1e-15);
        assert!((x[1].dist(x[2]) - 1.0).abs() < 1e-15);
        assert!((x[2].dist(x[0]) - 1.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn inverse_round_trip(en in 2.0f64..200.0, frac in 0.0f64..=1.0) {
                let ej = frac * (en - 2.0) / 2.0;
                let p = GrammarParams::from_expectations(en, ej).unwrap();
                let s = p.expected_counts();
                prop_assert!((s.expected_n - en).abs() <= 1e-12 * en.max(1.0));
                prop_assert!((s.expected_j - ej).abs() <= 1e-12 * en.max(1.0));
                prop_assert!(s.m < 1.0);
                prop_assert!(s.expected_n >= 2.0 * s.expected_j + 2.0 - 1e-9);
            }
        }
    }
}
