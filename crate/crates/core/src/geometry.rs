//! Blockage geometry.
//!
//! A cuboid building seen from a ground observer casts a shadow that, above
//! the building top, is the polyhedral cone with apex at the observer bounded
//! by the planes through the observer and the silhouette edges of the
//! building: the top edges of every visible flank face plus the two outer
//! vertical edges. With one visible face the cone has three facets, with two
//! visible faces it has four.

use serde::{Deserialize, Serialize};

use crate::{Error, Point3, Result};

/// Axis-aligned cuboid building with its base on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    #[serde(rename = "center_x_m")]
    pub center_x: f64,
    #[serde(rename = "center_y_m")]
    pub center_y: f64,
    /// Extent along x.
    #[serde(rename = "length_m")]
    pub length: f64,
    /// Extent along y.
    #[serde(rename = "width_m")]
    pub width: f64,
    #[serde(rename = "height_m")]
    pub height: f64,
}

impl Building {
    pub fn new(center_x: f64, center_y: f64, length: f64, width: f64, height: f64) -> Self {
        Self {
            center_x,
            center_y,
            length,
            width,
            height,
        }
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.center_x - 0.5 * self.length, self.center_x + 0.5 * self.length)
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.center_y - 0.5 * self.width, self.center_y + 0.5 * self.width)
    }

    pub fn footprint_area(&self) -> f64 {
        self.length * self.width
    }

    pub fn centroid(&self) -> Point3 {
        Point3::new(self.center_x, self.center_y, 0.5 * self.height)
    }

    /// Closed footprint test; points on a wall count as inside.
    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let fields = [self.center_x, self.center_y, self.length, self.width, self.height];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBuilding {
                index,
                reason: "non-finite field".into(),
            });
        }
        if self.length <= 0.0 || self.width <= 0.0 {
            return Err(Error::InvalidBuilding {
                index,
                reason: format!("zero-area footprint {} x {}", self.length, self.width),
            });
        }
        if self.height <= 0.0 {
            return Err(Error::InvalidBuilding {
                index,
                reason: format!("height {} must be positive", self.height),
            });
        }
        Ok(())
    }

    fn face_centroid(&self, face: Face) -> Point3 {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        let z = 0.5 * self.height;
        match face {
            Face::PosX => Point3::new(x1, self.center_y, z),
            Face::NegX => Point3::new(x0, self.center_y, z),
            Face::PosY => Point3::new(self.center_x, y1, z),
            Face::NegY => Point3::new(self.center_x, y0, z),
        }
    }

    /// Footprint corners bounding a flank face, in counter-clockwise order
    /// seen from above.
    fn face_corners(&self, face: Face) -> [(f64, f64); 2] {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        match face {
            Face::PosX => [(x1, y0), (x1, y1)],
            Face::PosY => [(x1, y1), (x0, y1)],
            Face::NegX => [(x0, y1), (x0, y0)],
            Face::NegY => [(x0, y0), (x1, y0)],
        }
    }
}

/// Flank faces of a cuboid, named by their outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Face {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::PosX, Face::NegX, Face::PosY, Face::NegY];

    pub fn normal(self) -> Point3 {
        match self {
            Face::PosX => Point3::new(1.0, 0.0, 0.0),
            Face::NegX => Point3::new(-1.0, 0.0, 0.0),
            Face::PosY => Point3::new(0.0, 1.0, 0.0),
            Face::NegY => Point3::new(0.0, -1.0, 0.0),
        }
    }

    pub fn opposite(self) -> Face {
        match self {
            Face::PosX => Face::NegX,
            Face::NegX => Face::PosX,
            Face::PosY => Face::NegY,
            Face::NegY => Face::PosY,
        }
    }
}

/// Closed halfspace `{ x : normal . x - offset <= 0 }` with a unit outward
/// normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Point3,
    pub offset: f64,
}

impl Halfspace {
    /// Signed distance of `x` from the bounding plane, positive outside.
    pub fn value(&self, x: Point3) -> f64 {
        self.normal.dot(x) - self.offset
    }
}

/// Which terrestrial node a blocked region belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Observer {
    Bs,
    Ue(usize),
}

/// UAV positions from which the link to `observer` is obstructed by
/// `building`: the intersection of `halfspaces`. An empty list means the
/// building never blocks the link (observer above the roof).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockedRegion {
    pub halfspaces: Vec<Halfspace>,
    pub observer: Observer,
    pub building: usize,
}

impl BlockedRegion {
    pub fn is_empty(&self) -> bool {
        self.halfspaces.is_empty()
    }

    /// Conservative membership: points within `eps` outside every facet
    /// still count as blocked.
    pub fn contains(&self, x: Point3, eps: f64) -> bool {
        !self.halfspaces.is_empty() && self.halfspaces.iter().all(|h| h.value(x) <= eps)
    }
}

/// The admissible UAV region `[0, x_d] x [0, y_d] x [h_min, h_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaBounds {
    #[serde(rename = "x_m")]
    pub x_d: f64,
    #[serde(rename = "y_m")]
    pub y_d: f64,
    #[serde(rename = "h_min_m")]
    pub h_min: f64,
    #[serde(rename = "h_max_m")]
    pub h_max: f64,
}

/// Default upper altitude bound; also the UAV's initial altitude.
pub const DEFAULT_H_MAX: f64 = 500.0;

impl AreaBounds {
    pub fn new(x_d: f64, y_d: f64, h_min: f64, h_max: f64) -> Self {
        Self { x_d, y_d, h_min, h_max }
    }

    /// Margin that turns the open "outside a facet" condition into a closed
    /// one: `a . x - b >= eps_geo`.
    pub fn eps_geo(&self) -> f64 {
        1e-6 * self.x_d.max(self.y_d)
    }

    pub fn lower(&self) -> Point3 {
        Point3::new(0.0, 0.0, self.h_min)
    }

    pub fn upper(&self) -> Point3 {
        Point3::new(self.x_d, self.y_d, self.h_max)
    }

    pub fn center_xy(&self) -> (f64, f64) {
        (0.5 * self.x_d, 0.5 * self.y_d)
    }

    pub fn contains(&self, p: Point3) -> bool {
        p.x >= 0.0 && p.x <= self.x_d && p.y >= 0.0 && p.y <= self.y_d && p.z >= self.h_min && p.z <= self.h_max
    }

    pub fn clamp(&self, p: Point3) -> Point3 {
        Point3::new(
            p.x.clamp(0.0, self.x_d),
            p.y.clamp(0.0, self.y_d),
            p.z.clamp(self.h_min, self.h_max),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_d, self.y_d, self.h_min, self.h_max]
            .iter()
            .all(|v| v.is_finite());
        if !ok || self.x_d <= 0.0 || self.y_d <= 0.0 {
            return Err(Error::InvalidScenario(format!(
                "area must be positive, got {} x {}",
                self.x_d, self.y_d
            )));
        }
        if self.h_min < 0.0 || self.h_max < self.h_min {
            return Err(Error::InvalidScenario(format!(
                "altitude range [{}, {}] is not ordered",
                self.h_min, self.h_max
            )));
        }
        Ok(())
    }
}

/// Flank faces of `building` visible from `observer`: those whose outward
/// normal makes a negative inner product with the vector from the observer
/// to the face centroid.
pub fn visible_faces(building: &Building, observer: Point3) -> Result<Vec<Face>> {
    check_observer(building, usize::MAX, observer)?;
    Ok(Face::ALL
        .into_iter()
        .filter(|&f| f.normal().dot(building.face_centroid(f) - observer) < 0.0)
        .collect())
}

fn check_observer(building: &Building, index: usize, observer: Point3) -> Result<()> {
    if !observer.is_finite() || observer.z < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "observer {observer:?} must be finite and above ground"
        )));
    }
    if building.footprint_contains(observer.x, observer.y) {
        return Err(Error::DegenerateObserver {
            observer,
            building: index,
        });
    }
    Ok(())
}

/// Blocked region cast by `building` (index `building_id`) for a node at
/// `observer`.
pub fn blocked_region(
    building: &Building,
    building_id: usize,
    observer: Point3,
    observer_id: Observer,
) -> Result<BlockedRegion> {
    building.validate(building_id)?;
    check_observer(building, building_id, observer)?;
    let mut region = BlockedRegion {
        halfspaces: Vec::new(),
        observer: observer_id,
        building: building_id,
    };
    // Above the roof nothing below h_min >= roof height can be shadowed.
    if observer.z >= building.height {
        return Ok(region);
    }

    let faces = visible_faces(building, observer)?;
    let h = building.height;
    let mut edges: Vec<(Point3, Point3)> = Vec::with_capacity(4);
    let mut corners: Vec<(f64, f64)> = Vec::with_capacity(4);
    for &face in &faces {
        let [(ax, ay), (bx, by)] = building.face_corners(face);
        edges.push((Point3::new(ax, ay, h), Point3::new(bx, by, h)));
        corners.push((ax, ay));
        corners.push((bx, by));
    }
    // Vertical edges shared by two visible faces are interior to the cone.
    for &(cx, cy) in &corners {
        if corners.iter().filter(|&&c| c == (cx, cy)).count() == 1 {
            edges.push((Point3::new(cx, cy, 0.0), Point3::new(cx, cy, h)));
        }
    }

    let inside = building.centroid();
    let scale = building.length.max(building.width).max(h).max(1.0);
    for (p, q) in edges {
        let n = (p - observer).cross(q - observer);
        let len = n.norm();
        let span = (p - observer).norm() * (q - observer).norm();
        if !(len > 1e-12 * span.max(scale * scale)) {
            return Err(Error::Construction {
                building: building_id,
                reason: format!("observer {observer:?} is collinear with edge {p:?}-{q:?}"),
            });
        }
        let mut hs = Halfspace {
            normal: n * (1.0 / len),
            offset: (n * (1.0 / len)).dot(observer),
        };
        let side = hs.value(inside);
        if side.abs() <= 1e-12 * scale {
            return Err(Error::Construction {
                building: building_id,
                reason: "building centroid lies on a bounding plane".into(),
            });
        }
        if side > 0.0 {
            hs = Halfspace {
                normal: -hs.normal,
                offset: -hs.offset,
            };
        }
        region.halfspaces.push(hs);
    }
    Ok(region)
}

/// Regions for the BS and every UE against every building, BS first, then
/// UE-major.
pub fn all_blocked_regions(bs: Point3, ues: &[Point3], buildings: &[Building]) -> Result<Vec<BlockedRegion>> {
    let mut regions = Vec::with_capacity(buildings.len() * (ues.len() + 1));
    for (m, b) in buildings.iter().enumerate() {
        regions.push(blocked_region(b, m, bs, Observer::Bs)?);
    }
    for (k, &ue) in ues.iter().enumerate() {
        for (m, b) in buildings.iter().enumerate() {
            regions.push(blocked_region(b, m, ue, Observer::Ue(k))?);
        }
    }
    Ok(regions)
}

/// `true` iff `x` lies in some region, counting the `eps` boundary band as
/// blocked.
pub fn is_blocked(x: Point3, regions: &[BlockedRegion], eps: f64) -> bool {
    regions.iter().any(|r| r.contains(x, eps))
}

/// Exact test whether the open segment `a -> b` meets the closed cuboid.
pub fn segment_hits_building(a: Point3, b: Point3, building: &Building) -> bool {
    let (x0, x1) = building.x_range();
    let (y0, y1) = building.y_range();
    let lo = [x0, y0, 0.0];
    let hi = [x1, y1, building.height];
    let p = a.to_array();
    let d = (b - a).to_array();
    let mut t_enter = 0.0_f64;
    let mut t_exit = 1.0_f64;
    for axis in 0..3 {
        if d[axis] == 0.0 {
            if p[axis] < lo[axis] || p[axis] > hi[axis] {
                return false;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let (mut t0, mut t1) = ((lo[axis] - p[axis]) * inv, (hi[axis] - p[axis]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
        if t_enter > t_exit {
            return false;
        }
    }
    t_exit > 0.0 && t_enter < 1.0
}

/// Line of sight between two points given every building in the area.
pub fn line_of_sight(a: Point3, b: Point3, buildings: &[Building]) -> bool {
    !buildings.iter().any(|bld| segment_hits_building(a, b, bld))
}

/// `lo, lo + s, lo + 2 s, ...` up to `hi`, with `hi` appended when the
/// progression misses it.
pub fn lattice_axis(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = ((hi - lo) / spacing + 1e-9).floor() as usize;
    let mut axis: Vec<f64> = (0..=n).map(|i| lo + i as f64 * spacing).collect();
    if hi - axis[n] > 1e-9 * spacing {
        axis.push(hi);
    }
    axis
}

/// Lowest point of the vertical line through `(x, y)`, scanned upward from
/// `h_min` in steps of `step`, that lies outside every region.
pub fn lowest_unblocked_above(
    x: f64,
    y: f64,
    bounds: &AreaBounds,
    regions: &[BlockedRegion],
    step: f64,
) -> Option<Point3> {
    let eps = bounds.eps_geo();
    lattice_axis(bounds.h_min, bounds.h_max, step)
        .into_iter()
        .map(|z| Point3::new(x, y, z))
        .find(|p| !is_blocked(*p, regions, eps))
}

/// First unblocked point of the search used when the optimiser needs a
/// feasible start: the column above the area centre, then, altitude by
/// altitude in steps of `step`, the horizontal lattice with spacing
/// `spacing` in order of distance from the centre.
pub fn first_unblocked(bounds: &AreaBounds, regions: &[BlockedRegion], step: f64, spacing: f64) -> Option<Point3> {
    let (cx, cy) = bounds.center_xy();
    if let Some(p) = lowest_unblocked_above(cx, cy, bounds, regions, step) {
        return Some(p);
    }
    let eps = bounds.eps_geo();
    let xs = lattice_axis(0.0, bounds.x_d, spacing);
    let ys = lattice_axis(0.0, bounds.y_d, spacing);
    let mut columns: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    columns.sort_by(|a, b| (a.0 - cx).hypot(a.1 - cy).total_cmp(&(b.0 - cx).hypot(b.1 - cy)));
    lattice_axis(bounds.h_min, bounds.h_max, step)
        .into_iter()
        .find_map(|z| {
            columns
                .iter()
                .map(|&(x, y)| Point3::new(x, y, z))
                .find(|p| !is_blocked(*p, regions, eps))
        })
}

/// Big-M constant: five times the largest facet violation `b - a . x`
/// attainable anywhere in the admissible box.
pub fn big_m(regions: &[BlockedRegion], bounds: &AreaBounds) -> f64 {
    let lo = bounds.lower().to_array();
    let hi = bounds.upper().to_array();
    let mut worst = 0.0_f64;
    for h in regions.iter().flat_map(|r| r.halfspaces.iter()) {
        let a = h.normal.to_array();
        let min_ax: f64 = (0..3).map(|d| (a[d] * lo[d]).min(a[d] * hi[d])).sum();
        worst = worst.max(h.offset - min_ax);
    }
    5.0 * worst
}

/// Vertices of `region` intersected with the admissible box. Empty when the
/// region never reaches the box.
pub fn clipped_vertices(region: &BlockedRegion, bounds: &AreaBounds) -> Vec<Point3> {
    if region.is_empty() {
        return Vec::new();
    }
    let mut planes: Vec<Halfspace> = region.halfspaces.clone();
    let axes = [
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(0.0, 1.0, 0.0),
        Point3::new(0.0, 0.0, 1.0),
    ];
    let lo = bounds.lower().to_array();
    let hi = bounds.upper().to_array();
    for d in 0..3 {
        planes.push(Halfspace {
            normal: -axes[d],
            offset: -lo[d],
        });
        planes.push(Halfspace {
            normal: axes[d],
            offset: hi[d],
        });
    }
    let tol = 1e-9 * bounds.x_d.max(bounds.y_d).max(bounds.h_max).max(1.0);
    let mut out: Vec<Point3> = Vec::new();
    let n = planes.len();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let Some(v) = intersect_planes(&planes[i], &planes[j], &planes[k]) else {
                    continue;
                };
                if planes.iter().all(|p| p.value(v) <= tol) && !out.iter().any(|w| (*w - v).norm() <= tol) {
                    out.push(v);
                }
            }
        }
    }
    out
}

fn intersect_planes(p: &Halfspace, q: &Halfspace, r: &Halfspace) -> Option<Point3> {
    let (a, b, c) = (p.normal, q.normal, r.normal);
    let det = a.dot(b.cross(c));
    if det.abs() < 1e-12 {
        return None;
    }
    let v = (b.cross(c) * p.offset + c.cross(a) * q.offset + a.cross(b) * r.offset) * (1.0 / det);
    v.is_finite().then_some(v)
}

/// Drops every region whose part inside the admissible box is contained in
/// another surviving region. Membership of the union is unchanged for points
/// in the box. Regions that never reach the box are dropped as well.
pub fn prune_redundant(regions: &[BlockedRegion], bounds: &AreaBounds) -> Vec<BlockedRegion> {
    let tol = 1e-9 * bounds.x_d.max(bounds.y_d).max(bounds.h_max).max(1.0);
    let vertices: Vec<Vec<Point3>> = regions.iter().map(|r| clipped_vertices(r, bounds)).collect();
    let mut removed = vec![false; regions.len()];
    for j in 0..regions.len() {
        if vertices[j].is_empty() {
            removed[j] = true;
            continue;
        }
        let covered = (0..regions.len()).any(|k| {
            k != j
                && !removed[k]
                && !vertices[k].is_empty()
                && vertices[j]
                    .iter()
                    .all(|&v| regions[k].halfspaces.iter().all(|h| h.value(v) <= tol))
        });
        removed[j] = covered;
    }
    regions
        .iter()
        .zip(removed)
        .filter(|(_, r)| !r)
        .map(|(reg, _)| reg.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> Building {
        Building::new(5.0, 5.0, 10.0, 10.0, 10.0)
    }

    #[test]
    fn observer_on_axis_sees_one_face() {
        let faces = visible_faces(&cube(), Point3::new(20.0, 5.0, 0.0)).unwrap();
        assert_eq!(faces, vec![Face::PosX]);
    }

    #[test]
    fn diagonal_observer_sees_two_faces() {
        let mut faces = visible_faces(&cube(), Point3::new(20.0, 20.0, 0.0)).unwrap();
        faces.sort();
        assert_eq!(faces, vec![Face::PosX, Face::PosY]);
    }

    #[test]
    fn observer_inside_or_on_wall_is_rejected() {
        for obs in [Point3::new(5.0, 5.0, 0.0), Point3::new(10.0, 3.0, 0.0)] {
            assert!(matches!(
                visible_faces(&cube(), obs),
                Err(Error::DegenerateObserver { .. })
            ));
        }
    }

    #[test]
    fn facet_counts_follow_visible_faces() {
        let one = blocked_region(&cube(), 0, Point3::new(20.0, 5.0, 0.0), Observer::Ue(0)).unwrap();
        assert_eq!(one.halfspaces.len(), 3);
        let two = blocked_region(&cube(), 0, Point3::new(20.0, 20.0, 0.0), Observer::Ue(0)).unwrap();
        assert_eq!(two.halfspaces.len(), 4);
        for h in one.halfspaces.iter().chain(&two.halfspaces) {
            assert!((h.normal.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn first_facet_matches_cross_product_of_outer_edge() {
        // Observer sees +x and +y. The outer vertical edge of +x is at
        // (10, 0); the plane through S and that edge bounds the region.
        let s = Point3::new(20.0, 20.0, 0.0);
        let region = blocked_region(&cube(), 0, s, Observer::Ue(0)).unwrap();
        let a1 = Point3::new(10.0, 0.0, 0.0);
        let a2 = Point3::new(10.0, 0.0, 10.0);
        let n = (a2 - s).cross(a1 - s);
        let n = n * (1.0 / n.norm());
        let expected_b = n.dot(s);
        let found = region.halfspaces.iter().any(|h| {
            (h.normal - n).norm() < 1e-12 && (h.offset - expected_b).abs() < 1e-9
                || (h.normal + n).norm() < 1e-12 && (h.offset + expected_b).abs() < 1e-9
        });
        assert!(found, "{:?}", region.halfspaces);
        // Orientation: the building centroid is inside.
        assert!(region.contains(cube().centroid(), 0.0));
    }

    #[test]
    fn bs_above_roof_casts_nothing() {
        let b = Building::new(50.0, 50.0, 20.0, 20.0, 20.0);
        let r = blocked_region(&b, 0, Point3::new(0.0, 0.0, 25.0), Observer::Bs).unwrap();
        assert!(r.is_empty());
        assert!(!r.contains(Point3::new(80.0, 80.0, 1.0), 1e-6));
    }

    #[test]
    fn shadow_interior_and_high_point() {
        let s = Point3::new(20.0, 5.0, 0.0);
        let r = blocked_region(&cube(), 0, s, Observer::Ue(0)).unwrap();
        // Beyond the +x face centroid, along the observer's line, at roof
        // height-ish: inside the shadow.
        let c = Point3::new(10.0, 5.0, 5.0);
        let behind = s + (c - s) * 2.5;
        assert!(is_blocked(behind, std::slice::from_ref(&r), 1e-6));
        assert!(!is_blocked(Point3::new(0.0, 5.0, 200.0), &[r], 1e-6));
    }

    #[test]
    fn far_top_edge_midpoint_is_inside_every_facet() {
        for s in [
            Point3::new(20.0, 5.0, 0.0),
            Point3::new(-7.0, 30.0, 0.0),
            Point3::new(3.0, -12.0, 4.0),
        ] {
            let b = cube();
            let r = blocked_region(&b, 0, s, Observer::Ue(0)).unwrap();
            let face = visible_faces(&b, s).unwrap()[0].opposite();
            let mut mid = b.face_centroid(face);
            mid.z = b.height;
            for h in &r.halfspaces {
                assert!(h.value(mid) < 0.0);
            }
        }
    }

    #[test]
    fn observer_offset_away_is_outside() {
        let s = Point3::new(20.0, 17.0, 0.0);
        let r = blocked_region(&cube(), 0, s, Observer::Ue(0)).unwrap();
        let away = s + (s - cube().centroid()) * 0.01;
        assert!(!r.contains(away, 0.0));
    }

    #[test]
    fn segment_box_cases() {
        let b = cube();
        assert!(segment_hits_building(
            Point3::new(-5.0, 5.0, 5.0),
            Point3::new(15.0, 5.0, 5.0),
            &b
        ));
        assert!(!segment_hits_building(
            Point3::new(-5.0, 5.0, 11.0),
            Point3::new(15.0, 5.0, 11.0),
            &b
        ));
        // Ends short of the wall.
        assert!(!segment_hits_building(
            Point3::new(-5.0, 5.0, 5.0),
            Point3::new(-1.0, 5.0, 5.0),
            &b
        ));
    }

    #[test]
    fn big_m_dominates_every_violation_in_box() {
        let bounds = AreaBounds::new(30.0, 30.0, 12.0, 100.0);
        let r = blocked_region(&cube(), 0, Point3::new(20.0, 20.0, 0.0), Observer::Ue(0)).unwrap();
        let c = big_m(std::slice::from_ref(&r), &bounds);
        for corner in [bounds.lower(), bounds.upper(), Point3::new(0.0, 30.0, 100.0)] {
            for h in &r.halfspaces {
                assert!(c >= 5.0 * (-h.value(corner)) - 1e-9);
            }
        }
        assert!(c > 0.0);
    }

    #[test]
    fn prune_keeps_one_of_duplicates_and_disjoint_regions() {
        let bounds = AreaBounds::new(100.0, 100.0, 12.0, 200.0);
        let a = blocked_region(&cube(), 0, Point3::new(30.0, 5.0, 0.0), Observer::Ue(0)).unwrap();
        let far = Building::new(80.0, 80.0, 10.0, 10.0, 10.0);
        let b = blocked_region(&far, 1, Point3::new(60.0, 80.0, 0.0), Observer::Ue(1)).unwrap();
        let pruned = prune_redundant(&[a.clone(), a.clone()], &bounds);
        assert_eq!(pruned.len(), 1);
        let pruned = prune_redundant(&[a.clone(), b.clone()], &bounds);
        assert_eq!(pruned.len(), 2);
    }
}
