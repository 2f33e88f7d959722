//! Planar geometry over projected coordinates in meters.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn empty() -> Self {
        BBox {
            min: Point::new(f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn extend(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// A linear ring stored without the closing vertex.
pub type Ring = Vec<Point>;

/// Polygon with one exterior ring and zero or more holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(exterior: Ring, holes: Vec<Ring>) -> Self {
        Polygon { exterior, holes }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    /// Unsigned area: exterior minus holes.
    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(|r| ring_signed_area(r).abs()).sum();
        ring_signed_area(&self.exterior).abs() - holes
    }

    /// Area-weighted centroid and area, holes subtracted.
    fn moment(&self) -> (f64, f64, f64) {
        let (mut a, mut mx, mut my) = ring_moment(&self.exterior, 1.0);
        for h in &self.holes {
            let (ha, hx, hy) = ring_moment(h, -1.0);
            a += ha;
            mx += hx;
            my += hy;
        }
        (a, mx, my)
    }

    /// Boundary-inclusive containment test.
    pub fn contains(&self, p: Point) -> bool {
        if self.rings().any(|r| on_boundary(r, p)) {
            return true;
        }
        if !ring_contains(&self.exterior, p) {
            return false;
        }
        !self.holes.iter().any(|h| ring_contains(h, p))
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox::empty();
        for p in &self.exterior {
            b.extend(*p);
        }
        b
    }
}

/// A zone footprint: one or more polygons (MultiPolygon semantics).
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    pub polygons: Vec<Polygon>,
}

impl Footprint {
    pub fn new(polygons: Vec<Polygon>) -> Self {
        Footprint { polygons }
    }

    pub fn area(&self) -> f64 {
        self.polygons.iter().map(Polygon::area).sum()
    }

    /// Area-weighted centroid. Falls back to the vertex mean for degenerate
    /// (zero-area) footprints.
    pub fn centroid(&self) -> Point {
        let (mut a, mut mx, mut my) = (0.0, 0.0, 0.0);
        for poly in &self.polygons {
            let (pa, px, py) = poly.moment();
            a += pa;
            mx += px;
            my += py;
        }
        if a.abs() > f64::EPSILON {
            return Point::new(mx / a, my / a);
        }
        let pts: Vec<&Point> = self.polygons.iter().flat_map(|p| p.exterior.iter()).collect();
        let n = pts.len().max(1) as f64;
        Point::new(
            pts.iter().map(|p| p.x).sum::<f64>() / n,
            pts.iter().map(|p| p.y).sum::<f64>() / n,
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox::empty();
        for poly in &self.polygons {
            for p in &poly.exterior {
                b.extend(*p);
            }
        }
        b
    }
}

fn ring_signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    s / 2.0
}

/// Returns (|area|·sign, Σ x-moment, Σ y-moment) for one ring, orientation
/// normalized so that `sign` decides whether it adds or subtracts.
fn ring_moment(ring: &[Point], sign: f64) -> (f64, f64, f64) {
    let n = ring.len();
    if n < 3 {
        return (0.0, 0.0, 0.0);
    }
    // Shift to the first vertex to limit cancellation for large coordinates.
    let o = ring[0];
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = Point::new(ring[i].x - o.x, ring[i].y - o.y);
        let q = Point::new(ring[(i + 1) % n].x - o.x, ring[(i + 1) % n].y - o.y);
        let cross = p.x * q.y - q.x * p.y;
        a2 += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    if a2 == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let area = a2 / 2.0;
    let centroid = Point::new(cx / (3.0 * a2) + o.x, cy / (3.0 * a2) + o.y);
    let w = sign * area.abs();
    (w, w * centroid.x, w * centroid.y)
}

fn ring_contains(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn on_boundary(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    (0..n).any(|i| on_segment(ring[i], ring[(i + 1) % n], p))
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let scale = (b.x - a.x).abs().max((b.y - a.y).abs()).max(1.0);
    if cross.abs() > 1e-9 * scale * scale {
        return false;
    }
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}
