//! Subsets of a model surface built from distance-defined primitives.
//!
//! Every region carries a signed distance (negative inside) composed by
//! min/max/negation, a membership test that honours the open/closed tag of
//! each primitive, and a textual descriptor that parses back to itself.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use crate::error::{Error, Result};
use crate::surface::{cross, dot, norm, wrap_pi, wrap_tau, SurfaceKind, SurfaceModel, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Open,
    Closed,
    /// Both open and closed (the whole surface or the empty set).
    Clopen,
    Other,
}

impl Topology {
    fn complement(self) -> Self {
        match self {
            Topology::Open => Topology::Closed,
            Topology::Closed => Topology::Open,
            t => t,
        }
    }

    fn combine(self, other: Self) -> Self {
        use Topology::*;
        match (self, other) {
            (Clopen, t) | (t, Clopen) => t,
            (Open, Open) => Open,
            (Closed, Closed) => Closed,
            _ => Other,
        }
    }

    pub fn is_open(self) -> bool {
        matches!(self, Topology::Open | Topology::Clopen)
    }

    pub fn is_closed(self) -> bool {
        matches!(self, Topology::Closed | Topology::Clopen)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }
}

/// Closed geodesics and geodesic segments used as tube cores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    Equator,
    /// Great circle through the poles at longitudes 0 and π.
    Meridian,
    /// The horizontal geodesic x₂ = 0 of the torus.
    TorusH,
    /// The vertical geodesic x₁ = 0 of the torus.
    TorusV,
    /// The diagonal closed geodesic x₁ = x₂ of the torus.
    TorusDiag,
    /// Geodesic segment from chart-0 point `start` leaving at `angle`, of length `len`.
    Segment {
        start: [f64; 2],
        angle: f64,
        len: f64,
    },
}

impl Curve {
    fn on_sphere(&self) -> bool {
        matches!(self, Curve::Equator | Curve::Meridian | Curve::Segment { .. })
    }

    fn on_torus(&self) -> bool {
        matches!(self, Curve::TorusH | Curve::TorusV | Curve::TorusDiag | Curve::Segment { .. })
    }

    /// Geodesic distance from a working base point to the curve.
    pub fn distance(&self, model: &SurfaceModel, p: &Vec3) -> f64 {
        match (*self, model.kind) {
            (Curve::Equator, _) => p[2].clamp(-1.0, 1.0).asin().abs(),
            (Curve::Meridian, _) => p[1].clamp(-1.0, 1.0).asin().abs(),
            (Curve::TorusH, _) => wrap_pi(p[1]).abs(),
            (Curve::TorusV, _) => wrap_pi(p[0]).abs(),
            (Curve::TorusDiag, _) => wrap_pi(p[0] - p[1]).abs() / 2f64.sqrt(),
            (Curve::Segment { start, angle, len }, SurfaceKind::Sphere) => {
                sphere_segment_distance(model, start, angle, len, p)
            }
            (Curve::Segment { start, angle, len }, _) => torus_segment_distance(start, angle, len, p),
        }
    }
}

fn sphere_segment_distance(model: &SurfaceModel, start: [f64; 2], angle: f64, len: f64, p: &Vec3) -> f64 {
    let z = model.phase_point_angle(0, start, angle).expect("segment start in chart 0");
    let st = model.to_state(&z);
    let (a, v) = (st.p, st.v);
    let n = cross(&a, &v);
    let pn = dot(p, &n);
    let q = [p[0] - pn * n[0], p[1] - pn * n[1], p[2] - pn * n[2]];
    let arc = |x: &Vec3, y: &Vec3| norm(&cross(x, y)).atan2(dot(x, y));
    if norm(&q) < 1e-15 {
        return FRAC_PI_2;
    }
    let phi = wrap_tau(dot(&q, &v).atan2(dot(&q, &a)));
    if phi <= len {
        return pn.clamp(-1.0, 1.0).asin().abs();
    }
    let (s, c) = len.sin_cos();
    let b = [a[0] * c + v[0] * s, a[1] * c + v[1] * s, a[2] * c + v[2] * s];
    arc(p, &a).min(arc(p, &b))
}

fn torus_segment_distance(start: [f64; 2], angle: f64, len: f64, p: &Vec3) -> f64 {
    let (dy, dx) = angle.sin_cos();
    let px = [wrap_tau(p[0]), wrap_tau(p[1])];
    // Pieces of length at most 1 lie within one period of their reduced start,
    // so the 3×3 block of images of p contains the nearest one.
    let pieces = (len.ceil() as usize).max(1);
    let piece = len / pieces as f64;
    let mut best = f64::INFINITY;
    for i in 0..pieces {
        let t0 = i as f64 * piece;
        let c = [wrap_tau(start[0] + t0 * dx), wrap_tau(start[1] + t0 * dy)];
        for sx in -1..=1 {
            for sy in -1..=1 {
                let q = [px[0] + TAU * sx as f64 - c[0], px[1] + TAU * sy as f64 - c[1]];
                let t = (q[0] * dx + q[1] * dy).clamp(0.0, piece);
                let d = (q[0] - t * dx).hypot(q[1] - t * dy);
                best = best.min(d);
            }
        }
    }
    best
}

/// Region shape tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Whole,
    Empty,
    /// lat ≥ lat0 (north) or lat ≤ lat0 (south).
    Cap {
        lat0: f64,
        north: bool,
        closed: bool,
    },
    /// |lat| ≤ alpha.
    Band {
        alpha: f64,
        closed: bool,
    },
    /// a < x < b along the given torus axis, taken on the circle.
    Strip {
        a: f64,
        b: f64,
        axis: Axis,
        closed: bool,
    },
    Tube {
        curve: Curve,
        r: f64,
        closed: bool,
    },
    Union(Vec<Shape>),
    Intersection(Vec<Shape>),
    Complement(Box<Shape>),
    /// Points within distance eps of the inner shape.
    Offset {
        inner: Box<Shape>,
        eps: f64,
        closed: bool,
    },
}

/// Dependence of a region or observable on the base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symmetry {
    /// Depends only on p·axis (sphere) or on s (surface of revolution).
    Zonal { axis: Vec3 },
    /// Depends only on one torus coordinate.
    Axis(usize),
    /// No symmetry used.
    None,
    /// Constant: compatible with every symmetry.
    Any,
}

impl Symmetry {
    pub fn combine(self, other: Self) -> Self {
        match (self, other) {
            (Symmetry::Any, s) | (s, Symmetry::Any) => s,
            (Symmetry::Zonal { axis: a }, Symmetry::Zonal { axis: b }) => {
                if (0..3).all(|i| (a[i] - b[i]).abs() < 1e-14) {
                    self
                } else {
                    Symmetry::None
                }
            }
            (Symmetry::Axis(i), Symmetry::Axis(j)) if i == j => self,
            _ => Symmetry::None,
        }
    }
}

const EZ: Vec3 = [0.0, 0.0, 1.0];
const EY: Vec3 = [0.0, 1.0, 0.0];

fn strip_sdist(a: f64, b: f64, x: f64) -> f64 {
    let w = b - a;
    let u = wrap_tau(x - a);
    if u < w {
        -(u.min(w - u))
    } else {
        (u - w).min(TAU - u)
    }
}

impl Shape {
    pub fn topology(&self) -> Topology {
        let tag = |closed: bool| if closed { Topology::Closed } else { Topology::Open };
        match self {
            Shape::Whole | Shape::Empty => Topology::Clopen,
            Shape::Cap { closed, .. }
            | Shape::Band { closed, .. }
            | Shape::Strip { closed, .. }
            | Shape::Tube { closed, .. }
            | Shape::Offset { closed, .. } => tag(*closed),
            Shape::Union(v) | Shape::Intersection(v) => v.iter().fold(Topology::Clopen, |t, s| t.combine(s.topology())),
            Shape::Complement(s) => s.topology().complement(),
        }
    }

    fn latitude(model: &SurfaceModel, p: &Vec3) -> f64 {
        model.latitude(p)
    }

    pub fn sdist(&self, model: &SurfaceModel, p: &Vec3) -> f64 {
        match self {
            Shape::Whole => f64::NEG_INFINITY,
            Shape::Empty => f64::INFINITY,
            Shape::Cap { lat0, north, .. } => {
                let lat = Self::latitude(model, p);
                if *north {
                    lat0 - lat
                } else {
                    lat - lat0
                }
            }
            Shape::Band { alpha, .. } => Self::latitude(model, p).abs() - alpha,
            Shape::Strip { a, b, axis, .. } => strip_sdist(*a, *b, p[axis.index()]),
            Shape::Tube { curve, r, .. } => curve.distance(model, p) - r,
            Shape::Union(v) => v.iter().map(|s| s.sdist(model, p)).fold(f64::INFINITY, f64::min),
            Shape::Intersection(v) => v.iter().map(|s| s.sdist(model, p)).fold(f64::NEG_INFINITY, f64::max),
            Shape::Complement(s) => -s.sdist(model, p),
            Shape::Offset { inner, eps, .. } => inner.sdist(model, p) - eps,
        }
    }

    pub fn contains(&self, model: &SurfaceModel, p: &Vec3) -> bool {
        match self {
            Shape::Whole => true,
            Shape::Empty => false,
            Shape::Union(v) => v.iter().any(|s| s.contains(model, p)),
            Shape::Intersection(v) => v.iter().all(|s| s.contains(model, p)),
            Shape::Complement(s) => !s.contains(model, p),
            Shape::Cap { closed, .. }
            | Shape::Band { closed, .. }
            | Shape::Strip { closed, .. }
            | Shape::Tube { closed, .. }
            | Shape::Offset { closed, .. } => {
                let d = self.sdist(model, p);
                if *closed {
                    d <= 0.0
                } else {
                    d < 0.0
                }
            }
        }
    }

    fn with_closed(&self, want: bool) -> Shape {
        match self {
            Shape::Whole | Shape::Empty => self.clone(),
            Shape::Cap { lat0, north, .. } => Shape::Cap { lat0: *lat0, north: *north, closed: want },
            Shape::Band { alpha, .. } => Shape::Band { alpha: *alpha, closed: want },
            Shape::Strip { a, b, axis, .. } => Shape::Strip { a: *a, b: *b, axis: *axis, closed: want },
            Shape::Tube { curve, r, .. } => Shape::Tube { curve: *curve, r: *r, closed: want },
            Shape::Offset { inner, eps, .. } => Shape::Offset { inner: inner.clone(), eps: *eps, closed: want },
            Shape::Union(v) => Shape::Union(v.iter().map(|s| s.with_closed(want)).collect()),
            Shape::Intersection(v) => Shape::Intersection(v.iter().map(|s| s.with_closed(want)).collect()),
            Shape::Complement(s) => Shape::Complement(Box::new(s.with_closed(!want))),
        }
    }

    pub fn symmetry(&self, model: &SurfaceModel) -> Symmetry {
        let zonal = Symmetry::Zonal { axis: EZ };
        match self {
            Shape::Whole | Shape::Empty => Symmetry::Any,
            Shape::Cap { .. } | Shape::Band { .. } => zonal,
            Shape::Strip { axis, .. } => Symmetry::Axis(axis.index()),
            Shape::Tube { curve, .. } => match curve {
                Curve::Equator => zonal,
                Curve::Meridian if model.is_sphere() => Symmetry::Zonal { axis: EY },
                Curve::TorusH => Symmetry::Axis(1),
                Curve::TorusV => Symmetry::Axis(0),
                _ => Symmetry::None,
            },
            Shape::Union(v) | Shape::Intersection(v) => {
                v.iter().fold(Symmetry::Any, |acc, s| acc.combine(s.symmetry(model)))
            }
            Shape::Complement(s) | Shape::Offset { inner: s, .. } => s.symmetry(model),
        }
    }

    fn validate(&self, model: &SurfaceModel) -> std::result::Result<(), String> {
        let latitudinal = !model.is_torus();
        match self {
            Shape::Whole | Shape::Empty => Ok(()),
            Shape::Cap { lat0, .. } => {
                if !latitudinal {
                    Err("cap needs a sphere or surface of revolution".into())
                } else if !lat0.is_finite() || lat0.abs() > FRAC_PI_2 {
                    Err(format!("cap latitude {lat0} outside [-π/2, π/2]"))
                } else {
                    Ok(())
                }
            }
            Shape::Band { alpha, .. } => {
                if !latitudinal {
                    Err("band needs a sphere or surface of revolution".into())
                } else if !(*alpha >= 0.0) {
                    Err(format!("band half-width {alpha} must be nonnegative"))
                } else {
                    Ok(())
                }
            }
            Shape::Strip { a, b, .. } => {
                if !model.is_torus() {
                    Err("strip needs the torus".into())
                } else if !(b > a) || b - a >= TAU {
                    Err(format!("strip bounds ({a}, {b}) need a < b < a + 2π"))
                } else {
                    Ok(())
                }
            }
            Shape::Tube { curve, r, .. } => {
                let ok = match model.kind {
                    SurfaceKind::Sphere => curve.on_sphere(),
                    SurfaceKind::Torus => curve.on_torus(),
                    SurfaceKind::Revolution { .. } => matches!(curve, Curve::Equator),
                };
                if !ok {
                    Err(format!("curve {curve:?} is not available on {}", model.name()))
                } else if let (Curve::Equator, SurfaceKind::Revolution { .. }) = (curve, model.kind) {
                    Err("use band(...) for the equator of a surface of revolution".into())
                } else if !(*r > 0.0) {
                    Err(format!("tube radius {r} must be positive"))
                } else {
                    Ok(())
                }
            }
            Shape::Union(v) | Shape::Intersection(v) => {
                if v.is_empty() {
                    return Err("empty combination".into());
                }
                v.iter().try_for_each(|s| s.validate(model))
            }
            Shape::Complement(s) => s.validate(model),
            Shape::Offset { inner, eps, .. } => {
                if !(*eps > 0.0) {
                    Err(format!("neighbourhood radius {eps} must be positive"))
                } else {
                    inner.validate(model)
                }
            }
        }
    }
}

fn fmt_curve(c: &Curve, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match c {
        Curve::Equator => write!(f, "equator"),
        Curve::Meridian => write!(f, "meridian"),
        Curve::TorusH => write!(f, "torus_h"),
        Curve::TorusV => write!(f, "torus_v"),
        Curve::TorusDiag => write!(f, "torus_diag"),
        Curve::Segment { start, angle, len } => {
            write!(f, "segment({},{},{},{})", start[0], start[1], angle, len)
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, name: &str, v: &[Shape]| -> fmt::Result {
            write!(f, "{name}(")?;
            for (i, s) in v.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{s}")?;
            }
            write!(f, ")")
        };
        match self {
            Shape::Whole => write!(f, "whole"),
            Shape::Empty => write!(f, "empty"),
            Shape::Cap { lat0, north, closed } => {
                let op = match (north, closed) {
                    (true, true) => ">=",
                    (true, false) => ">",
                    (false, true) => "<=",
                    (false, false) => "<",
                };
                write!(f, "cap(lat{op}{lat0})")
            }
            Shape::Band { alpha, closed } => {
                write!(f, "band(|lat|{}{alpha})", if *closed { "<=" } else { "<" })
            }
            Shape::Strip { a, b, axis, closed } => {
                let inner = match axis {
                    Axis::X1 => format!("strip({a},{b})"),
                    Axis::X2 => format!("strip({a},{b},x2)"),
                };
                if *closed {
                    write!(f, "closure({inner})")
                } else {
                    write!(f, "{inner}")
                }
            }
            Shape::Tube { curve, r, closed } => {
                if !closed {
                    write!(f, "interior(")?;
                }
                write!(f, "tube(")?;
                fmt_curve(curve, f)?;
                write!(f, ",{r})")?;
                if !closed {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Shape::Union(v) => list(f, "union", v),
            Shape::Intersection(v) => list(f, "intersection", v),
            Shape::Complement(s) => write!(f, "complement({s})"),
            Shape::Offset { inner, eps, closed } => {
                if *closed {
                    write!(f, "closure(nbhd({inner},{eps}))")
                } else {
                    write!(f, "nbhd({inner},{eps})")
                }
            }
        }
    }
}

/// A region of a model surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub model: SurfaceModel,
    pub shape: Shape,
}

impl Region {
    pub fn new(model: SurfaceModel, shape: Shape) -> Result<Self> {
        shape.validate(&model).map_err(Error::Input)?;
        Ok(Self { model, shape })
    }

    /// Parses a descriptor such as `union(cap(lat>=0.5),band(|lat|<0.1))`.
    pub fn parse(model: SurfaceModel, text: &str) -> Result<Self> {
        let mut p = Parser { src: text, pos: 0 };
        let shape = p.region()?;
        p.skip_ws();
        if p.pos != text.len() {
            return Err(p.err("trailing input"));
        }
        shape.validate(&model).map_err(|msg| Error::Parse { pos: 0, msg })?;
        Ok(Self { model, shape })
    }

    pub fn whole(model: SurfaceModel) -> Self {
        Self { model, shape: Shape::Whole }
    }

    pub fn empty(model: SurfaceModel) -> Self {
        Self { model, shape: Shape::Empty }
    }

    pub fn descriptor(&self) -> String {
        self.shape.to_string()
    }

    pub fn sdist(&self, p: &Vec3) -> f64 {
        self.shape.sdist(&self.model, p)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.shape.contains(&self.model, p)
    }

    pub fn topology(&self) -> Topology {
        self.shape.topology()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.shape.symmetry(&self.model)
    }

    pub fn complement(&self) -> Self {
        let shape = match &self.shape {
            Shape::Complement(s) => (**s).clone(),
            Shape::Whole => Shape::Empty,
            Shape::Empty => Shape::Whole,
            s => Shape::Complement(Box::new(s.clone())),
        };
        Self { model: self.model, shape }
    }

    pub fn closure(&self) -> Self {
        Self { model: self.model, shape: self.shape.with_closed(true) }
    }

    pub fn interior(&self) -> Self {
        Self { model: self.model, shape: self.shape.with_closed(false) }
    }

    pub fn union(parts: Vec<Region>) -> Result<Self> {
        let model = parts.first().ok_or_else(|| Error::Input("empty union".into()))?.model;
        Ok(Self { model, shape: Shape::Union(parts.into_iter().map(|r| r.shape).collect()) })
    }

    pub fn intersection(parts: Vec<Region>) -> Result<Self> {
        let model = parts.first().ok_or_else(|| Error::Input("empty intersection".into()))?.model;
        Ok(Self { model, shape: Shape::Intersection(parts.into_iter().map(|r| r.shape).collect()) })
    }

    /// Open ε-neighbourhood {x : d(x, ω) < ε}.
    pub fn eps_neighborhood(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Precondition(format!("neighbourhood radius {eps} must be positive")));
        }
        Ok(Self { model: self.model, shape: Shape::Offset { inner: Box::new(self.shape.clone()), eps, closed: false } })
    }

    /// Open ε-neighbourhood of a curve.
    pub fn curve_neighborhood(model: SurfaceModel, curve: Curve, eps: f64) -> Result<Self> {
        Self::new(model, Shape::Tube { curve, r: eps, closed: false })
    }

    /// Estimated measure of the boundary layer {|sdist| < δ} for each δ, as a
    /// fraction of the total area. Shrinking linearly in δ flags a Jordan
    /// measurable set.
    pub fn boundary_layer(&self, deltas: &[f64], n: usize) -> Vec<f64> {
        let area = self.model.total_area();
        deltas.iter().map(|&d| self.model.integrate_smooth(|p| f64::from(self.sdist(p).abs() < d), n) / area).collect()
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.shape.fmt(f)
    }
}

/// Parses a number in the descriptor syntax: `0.5`, `pi`, `-pi/6`, `3*pi/4`.
pub fn parse_number(text: &str) -> Result<f64> {
    let mut p = Parser { src: text, pos: 0 };
    let v = p.number()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.err("trailing input"));
    }
    Ok(v)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{tok}`")))
        }
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let n = rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(rest.len());
        if n == 0 {
            return Err(self.err("expected a name"));
        }
        self.pos += n;
        Ok(&rest[..n])
    }

    fn float(&mut self) -> Result<f64> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let n = rest
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '-' | '+')))
            .unwrap_or(rest.len());
        // Keep an exponent sign but stop at a binary operator.
        let mut end = 0;
        let bytes = rest.as_bytes();
        while end < n {
            let c = bytes[end];
            if (c == b'-' || c == b'+') && end > 0 && !matches!(bytes[end - 1], b'e' | b'E') {
                break;
            }
            end += 1;
        }
        let v: f64 = rest[..end].parse().map_err(|_| self.err("expected a number"))?;
        self.pos += end;
        Ok(v)
    }

    /// number := ['-'] (float | [float '*'] 'pi' ['/' float])
    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let neg = self.eat("-");
        let v = if self.eat("pi") {
            let d = if self.eat("/") { self.float()? } else { 1.0 };
            PI / d
        } else {
            let a = self.float()?;
            if self.eat("*") {
                self.expect("pi")?;
                let d = if self.eat("/") { self.float()? } else { 1.0 };
                a * PI / d
            } else {
                a
            }
        };
        Ok(if neg { -v } else { v })
    }

    fn curve(&mut self) -> Result<Curve> {
        let start = self.pos;
        let name = self.ident()?;
        Ok(match name {
            "equator" => Curve::Equator,
            "meridian" => Curve::Meridian,
            "torus_h" => Curve::TorusH,
            "torus_v" => Curve::TorusV,
            "torus_diag" => Curve::TorusDiag,
            "segment" => {
                self.expect("(")?;
                let a = self.number()?;
                self.expect(",")?;
                let b = self.number()?;
                self.expect(",")?;
                let angle = self.number()?;
                self.expect(",")?;
                let len = self.number()?;
                self.expect(")")?;
                if !(len > 0.0) {
                    return Err(self.err("segment length must be positive"));
                }
                Curve::Segment { start: [a, b], angle, len }
            }
            _ => {
                self.pos = start;
                return Err(self.err(&format!("unknown curve `{name}`")));
            }
        })
    }

    fn is_curve_ahead(&mut self) -> bool {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        ["equator", "meridian", "torus_h", "torus_v", "torus_diag", "segment"].iter().any(|c| rest.starts_with(c))
    }

    fn region_list(&mut self) -> Result<Vec<Shape>> {
        self.expect("(")?;
        let mut v = vec![self.region()?];
        while self.eat(",") {
            v.push(self.region()?);
        }
        self.expect(")")?;
        Ok(v)
    }

    fn region(&mut self) -> Result<Shape> {
        self.skip_ws();
        let start = self.pos;
        let name = self.ident()?;
        let shape = match name {
            "whole" => Shape::Whole,
            "empty" => Shape::Empty,
            "cap" => {
                self.expect("(")?;
                self.expect("lat")?;
                let (north, closed) = if self.eat(">=") {
                    (true, true)
                } else if self.eat(">") {
                    (true, false)
                } else if self.eat("<=") {
                    (false, true)
                } else if self.eat("<") {
                    (false, false)
                } else {
                    return Err(self.err("expected a comparison"));
                };
                let lat0 = self.number()?;
                self.expect(")")?;
                Shape::Cap { lat0, north, closed }
            }
            "band" => {
                self.expect("(")?;
                self.expect("|lat|")?;
                let closed = if self.eat("<=") {
                    true
                } else if self.eat("<") {
                    false
                } else {
                    return Err(self.err("expected `<` or `<=`"));
                };
                let alpha = self.number()?;
                self.expect(")")?;
                Shape::Band { alpha, closed }
            }
            "strip" => {
                self.expect("(")?;
                let a = self.number()?;
                self.expect(",")?;
                let b = self.number()?;
                let axis = if self.eat(",") {
                    match self.ident()? {
                        "x1" => Axis::X1,
                        "x2" => Axis::X2,
                        _ => return Err(self.err("axis must be x1 or x2")),
                    }
                } else {
                    Axis::X1
                };
                self.expect(")")?;
                Shape::Strip { a, b, axis, closed: false }
            }
            "tube" => {
                self.expect("(")?;
                let curve = self.curve()?;
                self.expect(",")?;
                let r = self.number()?;
                self.expect(")")?;
                Shape::Tube { curve, r, closed: true }
            }
            "nbhd" => {
                self.expect("(")?;
                let shape = if self.is_curve_ahead() {
                    let curve = self.curve()?;
                    self.expect(",")?;
                    let r = self.number()?;
                    Shape::Tube { curve, r, closed: false }
                } else {
                    let inner = self.region()?;
                    self.expect(",")?;
                    let eps = self.number()?;
                    Shape::Offset { inner: Box::new(inner), eps, closed: false }
                };
                self.expect(")")?;
                shape
            }
            "union" => Shape::Union(self.region_list()?),
            "intersection" => Shape::Intersection(self.region_list()?),
            "complement" | "closure" | "interior" => {
                self.expect("(")?;
                let inner = self.region()?;
                self.expect(")")?;
                match name {
                    "complement" => Shape::Complement(Box::new(inner)),
                    "closure" => inner.with_closed(true),
                    _ => inner.with_closed(false),
                }
            }
            _ => {
                self.pos = start;
                return Err(self.err(&format!("unknown region `{name}`")));
            }
        };
        Ok(shape)
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::flow::GeodesicFlow;
    use proptest::prelude::*;

    const SPHERE: [&str; 4] = ["cap(lat>=pi/6)", "band(|lat|<pi/5)", "tube(equator,0.2)", "cap(lat<=-pi/4)"];
    const TORUS: [&str; 3] = ["strip(0,1)", "tube(torus_diag,0.3)", "strip(2,2.5)"];

    fn regions() -> Vec<Region> {
        let s = SPHERE.iter().map(|t| Region::parse(SurfaceModel::sphere(), t).unwrap());
        s.chain(TORUS.iter().map(|t| Region::parse(SurfaceModel::torus(), t).unwrap())).collect()
    }

    proptest! {
        #[test]
        fn complement_partitions(i in 0usize..7, u in 0.0f64..TAU, w in -1.5f64..TAU) {
            let r = &regions()[i];
            let p = r.model.base(&crate::surface::ChartPoint { chart: 0, x: if r.model.is_sphere() { [w.clamp(-1.5, 1.5), u] } else { [w, u] } });
            let c = r.complement();
            prop_assert_eq!(u8::from(r.contains(&p)) + u8::from(c.contains(&p)), 1);
        }

        #[test]
        fn sdist_is_one_lipschitz_along_geodesics(i in 0usize..7, x in 0.1f64..3.0, y in 0.0f64..TAU, ang in 0.0f64..TAU, t in 0.0f64..5.0, s in 0.0f64..5.0) {
            let r = &regions()[i];
            let f = GeodesicFlow::new(r.model);
            let z = r.model.phase_point_angle(0, if r.model.is_sphere() { [x - 1.55, y] } else { [x, y] }, ang).unwrap();
            let st = r.model.to_state(&z);
            let (a, b) = (f.flow_state(&st, t).unwrap(), f.flow_state(&st, s).unwrap());
            prop_assert!((r.sdist(&a.p) - r.sdist(&b.p)).abs() <= (t - s).abs() + 1e-9);
        }
    }
}
