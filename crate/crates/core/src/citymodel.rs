//! Building geometry and line-of-sight queries.
//!
//! Meshes live in a local ENU frame (x east, y north, z up, meters) anchored
//! at a geodetic origin. Occlusion is answered by a bounding-volume
//! hierarchy over the triangles with a watertight ray/triangle test.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::{EcefPosition, GeodeticPosition, LocalFrame};

pub type Point3 = Vector3<f64>;

/// Endpoint offset applied to every occlusion segment.
pub const SEGMENT_EPSILON: f64 = 1e-3;
/// Sources farther than this are clipped to a sphere of this radius around
/// the receiver before tracing.
pub const CLIP_RANGE: f64 = 50_000.0;
const MIN_TRIANGLE_AREA: f64 = 1e-9;
const LEAF_SIZE: usize = 4;
const BOX_PAD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkState {
    #[serde(rename = "LOS")]
    Los,
    #[serde(rename = "NLOS")]
    Nlos,
}

#[derive(Clone, Debug)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    pub anchor: GeodeticPosition,
}

fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>, anchor: GeodeticPosition) -> Result<Self> {
        if !anchor.is_valid() {
            return Err(Error::InvalidGeodetic {
                lat: anchor.lat,
                lon: anchor.lon,
                alt: anchor.alt,
            });
        }
        let n = vertices.len();
        for (face, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::MeshIndex {
                    face,
                    index,
                    vertex_count: n,
                });
            }
        }
        let degenerate: Vec<usize> = triangles
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                let area = triangle_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]);
                !(area > MIN_TRIANGLE_AREA)
            })
            .map(|(i, _)| i)
            .collect();
        if let Some(&first) = degenerate.first() {
            return Err(Error::DegenerateTriangles {
                count: degenerate.len(),
                first,
            });
        }
        Ok(Self {
            vertices,
            triangles,
            anchor,
        })
    }

    pub fn empty(anchor: GeodeticPosition) -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
            anchor,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Point3; 3] {
        let t = self.triangles[i];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    /// Parses the OBJ subset: `v x y z` and triangular `f i j k` records
    /// with 1-based indices. `#` comments and grouping/material records are
    /// skipped.
    pub fn parse_obj(text: &str, source: &str, anchor: GeodeticPosition) -> Result<Self> {
        let err = |line: usize, message: String| Error::MeshParse {
            path: source.to_string(),
            line,
            message,
        };
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut face_lines = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let tag = fields.next().unwrap_or_default();
            match tag {
                "v" => {
                    let coords: Vec<f64> = fields
                        .map(|f| f.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| err(line_no, format!("bad vertex coordinate: {e}")))?;
                    if coords.len() < 3 || coords.len() > 4 {
                        return Err(err(line_no, format!("vertex needs 3 coordinates, got {}", coords.len())));
                    }
                    if coords.iter().any(|c| !c.is_finite()) {
                        return Err(err(line_no, "non-finite vertex coordinate".into()));
                    }
                    vertices.push(Point3::new(coords[0], coords[1], coords[2]));
                }
                "f" => {
                    let idx: Vec<i64> = fields
                        .map(|f| f.split('/').next().unwrap_or_default().parse::<i64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| err(line_no, format!("bad face index: {e}")))?;
                    if idx.len() != 3 {
                        return Err(err(
                            line_no,
                            format!("only triangular faces are supported, got {} vertices", idx.len()),
                        ));
                    }
                    let mut tri = [0usize; 3];
                    for (slot, &i) in tri.iter_mut().zip(&idx) {
                        if i < 1 {
                            return Err(err(line_no, format!("face index {i} must be a positive 1-based index")));
                        }
                        *slot = (i - 1) as usize;
                    }
                    faces.push(tri);
                    face_lines.push(line_no);
                }
                "vn" | "vt" | "o" | "g" | "s" | "usemtl" | "mtllib" => {}
                other => return Err(err(line_no, format!("unsupported record `{other}`"))),
            }
        }
        let n = vertices.len();
        for (face, tri) in faces.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i >= n) {
                return Err(err(
                    face_lines[face],
                    format!("face {} references vertex {} but only {n} vertices are defined", face + 1, index + 1),
                ));
            }
        }
        Self::new(vertices, faces, anchor)
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }

    /// Appends another mesh expressed in the same frame.
    pub fn extend(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }
}

pub fn load_mesh(path: impl AsRef<Path>, anchor: GeodeticPosition) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TriangleMesh::parse_obj(&text, &path.display().to_string(), anchor)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Point3::repeat(f64::INFINITY),
            max: Point3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    fn padded(&self, pad: f64) -> Aabb {
        let pad = Point3::repeat(pad) + self.max.abs().sup(&self.min.abs()) * 1e-12;
        Aabb {
            min: self.min - pad,
            max: self.max + pad,
        }
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && self.max[k] >= other.max[k])
    }

    fn longest_axis(&self) -> usize {
        let d = self.max - self.min;
        if d.x >= d.y && d.x >= d.z {
            0
        } else if d.y >= d.z {
            1
        } else {
            2
        }
    }

    fn hit(&self, ray: &Ray) -> bool {
        let mut t0 = ray.t_min;
        let mut t1 = ray.t_max;
        for k in 0..3 {
            if ray.dir[k] == 0.0 {
                if ray.origin[k] < self.min[k] || ray.origin[k] > self.max[k] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / ray.dir[k];
            let mut a = (self.min[k] - ray.origin[k]) * inv;
            let mut b = (self.max[k] - ray.origin[k]) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

/// Segment parameterized as `origin + t * dir` with `dir` unit length and
/// `t` restricted to the open interval `(t_min, t_max)`.
#[derive(Clone, Copy, Debug)]
struct Ray {
    origin: Point3,
    dir: Point3,
    t_min: f64,
    t_max: f64,
    // shear constants of the watertight test
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl Ray {
    fn segment(origin: &Point3, target: &Point3) -> Option<Ray> {
        let delta = target - origin;
        let len = delta.norm();
        if !(len > 2.0 * SEGMENT_EPSILON) {
            return None;
        }
        let dir = delta / len;
        let kz = dir.iamax();
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if dir[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        Some(Ray {
            origin: *origin,
            dir,
            t_min: SEGMENT_EPSILON,
            t_max: len - SEGMENT_EPSILON,
            kx,
            ky,
            kz,
            sx: dir[kx] / dir[kz],
            sy: dir[ky] / dir[kz],
            sz: 1.0 / dir[kz],
        })
    }

    /// Watertight ray/triangle intersection (Woop, Benthin, Wald 2013).
    fn hits_triangle(&self, tri: &[Point3; 3]) -> bool {
        let a = tri[0] - self.origin;
        let b = tri[1] - self.origin;
        let c = tri[2] - self.origin;
        let (kx, ky, kz) = (self.kx, self.ky, self.kz);
        let ax = a[kx] - self.sx * a[kz];
        let ay = a[ky] - self.sy * a[kz];
        let bx = b[kx] - self.sx * b[kz];
        let by = b[ky] - self.sy * b[kz];
        let cx = c[kx] - self.sx * c[kz];
        let cy = c[ky] - self.sy * c[kz];
        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return false;
        }
        let det = u + v + w;
        if det == 0.0 {
            return false;
        }
        let az = self.sz * a[kz];
        let bz = self.sz * b[kz];
        let cz = self.sz * c[kz];
        let t = (u * az + v * bz + w * cz) / det;
        t > self.t_min && t < self.t_max
    }
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

/// Bounding-volume hierarchy over a [`TriangleMesh`]. Immutable once built.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    mesh: TriangleMesh,
    frame: LocalFrame,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

pub fn build_index(mesh: TriangleMesh) -> SpatialIndex {
    SpatialIndex::build(mesh)
}

impl SpatialIndex {
    pub fn build(mesh: TriangleMesh) -> Self {
        let frame = LocalFrame::new(mesh.anchor);
        let n = mesh.triangles.len();
        let mut index = Self {
            mesh,
            frame,
            nodes: Vec::new(),
            order: (0..n).collect(),
        };
        if n == 0 {
            return index;
        }
        let boxes: Vec<Aabb> = (0..n)
            .map(|i| {
                let mut b = Aabb::empty();
                for p in index.mesh.triangle(i) {
                    b.grow(&p);
                }
                b.padded(BOX_PAD)
            })
            .collect();
        let centroids: Vec<Point3> = boxes.iter().map(|b| (b.min + b.max) * 0.5).collect();
        index.nodes.reserve(2 * n / LEAF_SIZE + 1);
        let mut order = std::mem::take(&mut index.order);
        index.build_node(&mut order, 0, n, &boxes, &centroids);
        index.order = order;
        index
    }

    fn build_node(&mut self, order: &mut [usize], start: usize, end: usize, boxes: &[Aabb], centroids: &[Point3]) -> usize {
        let bounds = order[start..end]
            .iter()
            .fold(Aabb::empty(), |acc, &i| acc.merge(&boxes[i]));
        let id = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf {
                start,
                count: end - start,
            },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let mut cbox = Aabb::empty();
        for &i in &order[start..end] {
            cbox.grow(&centroids[i]);
        }
        let axis = cbox.longest_axis();
        if cbox.max[axis] - cbox.min[axis] <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(order, start, mid, boxes, centroids);
        let right = self.build_node(order, mid, end, boxes, centroids);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn frame(&self) -> &LocalFrame {
        &self.frame
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root_is_leaf(&self) -> bool {
        matches!(self.nodes.first(), Some(Node { kind: NodeKind::Leaf { .. }, .. }))
    }

    /// Checks the structural invariants: every triangle in exactly one leaf
    /// and every node box enclosing its children.
    pub fn check_invariants(&self) -> bool {
        let n = self.mesh.triangles.len();
        for node in &self.nodes {
            if let NodeKind::Inner { left, right } = node.kind {
                if !node.bounds.contains_box(&self.nodes[left].bounds)
                    || !node.bounds.contains_box(&self.nodes[right].bounds)
                {
                    return false;
                }
            }
        }
        let mut reach = vec![0usize; n];
        let mut stack: Vec<usize> = if self.nodes.is_empty() { vec![] } else { vec![0] };
        while let Some(id) = stack.pop() {
            match self.nodes[id].kind {
                NodeKind::Leaf { start, count } => {
                    for &t in &self.order[start..start + count] {
                        reach[t] += 1;
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        reach.iter().all(|&c| c == 1)
    }

    pub fn ray_occluded(&self, origin: &Point3, target: &Point3) -> bool {
        let Some(ray) = Ray::segment(origin, target) else {
            return false;
        };
        if self.nodes.is_empty() {
            return false;
        }
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if !node.bounds.hit(&ray) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &t in &self.order[start..start + count] {
                        if ray.hits_triangle(&self.mesh.triangle(t)) {
                            return true;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        false
    }

    /// All-triangle reference answer for [`SpatialIndex::ray_occluded`].
    pub fn ray_occluded_brute_force(&self, origin: &Point3, target: &Point3) -> bool {
        let Some(ray) = Ray::segment(origin, target) else {
            return false;
        };
        (0..self.mesh.triangles.len()).any(|t| ray.hits_triangle(&self.mesh.triangle(t)))
    }

    /// Classifies a link between a receiver and a source, both already in
    /// the mesh frame. Far sources are clipped to [`CLIP_RANGE`].
    pub fn classify_enu(&self, receiver: &Point3, source: &Point3) -> LinkState {
        let delta = source - receiver;
        let range = delta.norm();
        let target = if range > CLIP_RANGE {
            receiver + delta * (CLIP_RANGE / range)
        } else {
            *source
        };
        if self.ray_occluded(receiver, &target) {
            LinkState::Nlos
        } else {
            LinkState::Los
        }
    }

    pub fn classify_link(&self, receiver: &GeodeticPosition, source: &EcefPosition) -> LinkState {
        let r = self.frame.geodetic_to_enu(receiver);
        let s = self.frame.to_enu(source);
        self.classify_enu(&r, &s)
    }
}

pub fn ray_occluded(index: &SpatialIndex, origin: &Point3, target: &Point3) -> bool {
    index.ray_occluded(origin, target)
}

pub fn classify_link(index: &SpatialIndex, receiver: &GeodeticPosition, source: &EcefPosition) -> LinkState {
    index.classify_link(receiver, source)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor() -> GeodeticPosition {
        GeodeticPosition::new(40.706, -74.009, 0.0).unwrap()
    }

    /// Closed axis-aligned box, 12 triangles.
    pub(crate) fn box_mesh(min: Point3, max: Point3) -> TriangleMesh {
        let v = |x: f64, y: f64, z: f64| Point3::new(x, y, z);
        let vertices = vec![
            v(min.x, min.y, min.z),
            v(max.x, min.y, min.z),
            v(max.x, max.y, min.z),
            v(min.x, max.y, min.z),
            v(min.x, min.y, max.z),
            v(max.x, min.y, max.z),
            v(max.x, max.y, max.z),
            v(min.x, max.y, max.z),
        ];
        let triangles = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        TriangleMesh::new(vertices, triangles, anchor()).unwrap()
    }

    #[test]
    fn parses_single_triangle() {
        let m = TriangleMesh::parse_obj("# one\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "t.obj", anchor()).unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.triangles.len(), 1);
    }

    #[test]
    fn rejects_bad_faces() {
        let e = TriangleMesh::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n", "t.obj", anchor()).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("t.obj:4") && msg.contains("face 1"), "{msg}");
        let e = TriangleMesh::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n", "q.obj", anchor())
            .unwrap_err();
        assert!(e.to_string().contains("triangular"));
        let e = TriangleMesh::parse_obj("v 0 0 0\nv 1 x 0\n", "b.obj", anchor()).unwrap_err();
        assert!(e.to_string().contains("b.obj:2"));
    }

    #[test]
    fn rejects_degenerate() {
        let e = TriangleMesh::parse_obj(
            "v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\nf 2 3 1\n",
            "d.obj",
            anchor(),
        )
        .unwrap_err();
        assert!(matches!(e, Error::DegenerateTriangles { count: 2, first: 0 }));
    }

    #[test]
    fn obj_round_trip() {
        let m = box_mesh(Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 20.0, 30.0));
        let back = TriangleMesh::parse_obj(&m.to_obj(), "rt", anchor()).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.triangles, m.triangles);
    }

    #[test]
    fn empty_scene_never_occludes() {
        let idx = build_index(TriangleMesh::empty(anchor()));
        assert!(!idx.ray_occluded(&Point3::zeros(), &Point3::new(0.0, 0.0, 1e4)));
        assert!(!idx.ray_occluded(&Point3::new(-5.0, 3.0, 1.0), &Point3::new(100.0, -40.0, 2.0)));
    }

    #[test]
    fn single_triangle_root_is_leaf() {
        let m = TriangleMesh::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "t", anchor()).unwrap();
        let idx = build_index(m);
        assert_eq!(idx.node_count(), 1);
        assert!(idx.root_is_leaf());
        assert!(idx.check_invariants());
    }

    #[test]
    fn roof_blocks_vertical_segment() {
        let idx = build_index(box_mesh(Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 10.0, 50.0)));
        assert!(idx.ray_occluded(&Point3::new(5.0, 5.0, 100.0), &Point3::new(5.0, 5.0, 25.0)));
        assert!(!idx.ray_occluded(&Point3::new(15.0, 5.0, 100.0), &Point3::new(15.0, 5.0, 1.0)));
    }

    #[test]
    fn endpoint_on_surface_is_not_self_hit() {
        let idx = build_index(box_mesh(Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 10.0, 50.0)));
        // receiver sitting on the roof looking up
        assert!(!idx.ray_occluded(&Point3::new(5.0, 5.0, 50.0), &Point3::new(5.0, 5.0, 500.0)));
    }

    #[test]
    fn zenith_is_los_and_low_source_behind_building_is_nlos() {
        let idx = build_index(box_mesh(Point3::new(10.0, -50.0, 0.0), Point3::new(40.0, 50.0, 100.0)));
        let frame = *idx.frame();
        let rx = frame.enu_to_geodetic(&Point3::new(0.0, 0.0, 1.5));
        let zenith = frame.to_ecef(&Point3::new(0.0, 0.0, 20_000.0));
        assert_eq!(idx.classify_link(&rx, &zenith), LinkState::Los);
        // 15 deg elevation toward the east, 20 000 km away
        let el = 15f64.to_radians();
        let far = frame.to_ecef(&(Point3::new(el.cos(), 0.0, el.sin()) * 2.0e7 + Point3::new(0.0, 0.0, 1.5)));
        assert_eq!(idx.classify_link(&rx, &far), LinkState::Nlos);
        // same elevation toward the west is open
        let west = frame.to_ecef(&(Point3::new(-el.cos(), 0.0, el.sin()) * 2.0e7));
        assert_eq!(idx.classify_link(&rx, &west), LinkState::Los);
    }
}
