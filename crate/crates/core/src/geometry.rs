//! Closed parametrized curves in the plane, spheres, and the periodic
//! quadrature grids the Nyström assembly runs on.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape constants of the kite `x(t) = (cos t + 0.65 cos 2t - 0.65, 1.5 sin t)`.
pub const KITE_BEND: f64 = 0.65;
pub const KITE_HEIGHT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveShape {
    Circle { radius: f64 },
    Ellipse { a: f64, b: f64 },
    Kite,
}

/// A smooth closed curve given by a 2π-periodic parametrization.
///
/// `reversed` traverses the same point set clockwise (`t -> -t`); grids are
/// always normalized back to counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedCurve {
    pub shape: CurveShape,
    #[serde(default)]
    pub reversed: bool,
}

impl ClosedCurve {
    pub fn circle(radius: f64) -> Self {
        Self { shape: CurveShape::Circle { radius }, reversed: false }
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Self { shape: CurveShape::Ellipse { a, b }, reversed: false }
    }

    pub fn kite() -> Self {
        Self { shape: CurveShape::Kite, reversed: false }
    }

    pub fn reversed(self) -> Self {
        Self { reversed: !self.reversed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.shape {
            CurveShape::Circle { radius } => radius > 0.0 && radius.is_finite(),
            CurveShape::Ellipse { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            CurveShape::Kite => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidGeometry(format!("non-positive or non-finite shape parameters: {:?}", self.shape)))
        }
    }

    /// Position, first and second derivative at parameter `t`.
    pub fn eval(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let (s, sign) = if self.reversed { (-t, -1.0) } else { (t, 1.0) };
        let (sin, cos) = s.sin_cos();
        let (p, d, dd) = match self.shape {
            CurveShape::Circle { radius: r } => {
                ([r * cos, r * sin], [-r * sin, r * cos], [-r * cos, -r * sin])
            }
            CurveShape::Ellipse { a, b } => ([a * cos, b * sin], [-a * sin, b * cos], [-a * cos, -b * sin]),
            CurveShape::Kite => {
                let (sin2, cos2) = (2.0 * s).sin_cos();
                (
                    [cos + KITE_BEND * cos2 - KITE_BEND, KITE_HEIGHT * sin],
                    [-sin - 2.0 * KITE_BEND * sin2, KITE_HEIGHT * cos],
                    [-cos - 4.0 * KITE_BEND * cos2, -KITE_HEIGHT * sin],
                )
            }
        };
        // chain rule for t -> -t: first derivative flips sign, second does not
        (p, [sign * d[0], sign * d[1]], dd)
    }

    pub fn point(&self, t: f64) -> [f64; 2] {
        self.eval(t).0
    }

    pub fn speed(&self, t: f64) -> f64 {
        let d = self.eval(t).1;
        d[0].hypot(d[1])
    }

    /// Radius when the curve is a circle, used to route to the mode backend.
    pub fn circle_radius(&self) -> Option<f64> {
        match self.shape {
            CurveShape::Circle { radius } => Some(radius),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    CounterClockwise,
    Clockwise,
}

/// Signed area by the shoelace formula on `n` equispaced samples.
pub fn signed_area(curve: &ClosedCurve, n: usize) -> f64 {
    let pts: Vec<[f64; 2]> = (0..n).map(|j| curve.point(2.0 * PI * j as f64 / n as f64)).collect();
    let mut acc = 0.0;
    for j in 0..n {
        let a = pts[j];
        let b = pts[(j + 1) % n];
        acc += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * acc
}

/// Orientation of the parametrization, from the sign of the enclosed area.
///
/// With `strict`, a clockwise curve is an error; otherwise it is reported and
/// the caller is expected to reverse it.
pub fn winding_check(curve: &ClosedCurve, n: usize, strict: bool) -> Result<Orientation> {
    let area = signed_area(curve, n.max(3));
    if area > 0.0 {
        Ok(Orientation::CounterClockwise)
    } else if strict {
        Err(Error::InvalidGeometry(format!("curve is clockwise (signed area {area:e})")))
    } else {
        log::warn!("clockwise curve (signed area {area:e}); reversing to counter-clockwise");
        Ok(Orientation::Clockwise)
    }
}

/// Periodic trapezoid grid on a closed curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub curve: ClosedCurve,
    pub params: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    pub speeds: Vec<f64>,
    pub weights: Vec<f64>,
}

impl BoundaryGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Arithmetic mean of the nodes.
    pub fn centroid(&self) -> [f64; 2] {
        let n = self.len() as f64;
        let (sx, sy) = self.points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        [sx / n, sy / n]
    }

    /// Shortest distance from `x` to any node.
    pub fn distance_to_nodes(&self, x: [f64; 2]) -> f64 {
        self.points
            .iter()
            .map(|p| (p[0] - x[0]).hypot(p[1] - x[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Build the `n`-point grid `t_j = 2πj/n`, normalized to counter-clockwise
/// orientation with outward normals.
pub fn build_grid(curve: ClosedCurve, n: usize) -> Result<BoundaryGrid> {
    if n < 3 {
        return Err(Error::Config(format!("grid needs at least 3 nodes, got {n}")));
    }
    curve.validate()?;
    let curve = match winding_check(&curve, n.max(64), false)? {
        Orientation::CounterClockwise => curve,
        Orientation::Clockwise => curve.reversed(),
    };
    let h = 2.0 * PI / n as f64;
    let mut grid = BoundaryGrid {
        curve,
        params: Vec::with_capacity(n),
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        speeds: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
    };
    for j in 0..n {
        let t = h * j as f64;
        let (p, d, _) = curve.eval(t);
        let s = d[0].hypot(d[1]);
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidGeometry(format!("non-regular parametrization at t = {t}")));
        }
        grid.params.push(t);
        grid.points.push(p);
        // counter-clockwise traversal: rotate the tangent clockwise for the outward normal
        grid.normals.push([d[1] / s, -d[0] / s]);
        grid.speeds.push(s);
        grid.weights.push(h * s);
    }
    Ok(grid)
}

/// Sphere of radius `radius` in R^3; only the mode backends use it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSurface {
    pub radius: f64,
}

impl SphereSurface {
    pub fn new(radius: f64) -> Result<Self> {
        if radius > 0.0 && radius.is_finite() {
            Ok(Self { radius })
        } else {
            Err(Error::InvalidGeometry(format!("sphere radius must be positive, got {radius}")))
        }
    }
}
