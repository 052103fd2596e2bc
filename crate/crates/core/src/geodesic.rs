//! Recursively subdivided icosahedron on the unit sphere.
//!
//! A direction is located on the base icosahedron, then pushed down the
//! subdivision hierarchy one four-way split at a time. Barycentric weights are
//! planar: they come from intersecting the ray through the origin with the
//! chord triangle spanned by the three (unit) vertices, so they differ slightly
//! from spherical area coordinates at coarse levels.

use std::collections::HashMap;
use std::io::Write;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Slack on the edge-plane sign tests, as a signed angular distance in radians.
pub const CONTAINMENT_EPS: f64 = 1e-9;

/// Slack used once if no candidate passes at [`CONTAINMENT_EPS`].
const RELAXED_EPS: f64 = 1e-7;

/// Largest level for which [`build_dense_tables`] will allocate.
pub const MAX_DENSE_LEVEL: u32 = 8;

/// Deepest traversal supported; face ids stay well inside `u64`.
pub const MAX_TRAVERSAL_LEVEL: u32 = 24;

#[inline]
pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn scaled(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Normalized chord midpoint of two unit vectors. Symmetric in its arguments
/// bit for bit, so a vertex reached from either neighbouring triangle has the
/// same coordinates.
#[inline]
pub fn midpoint(a: &Vec3, b: &Vec3) -> Vec3 {
    let m = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
    let n = norm(&m);
    [m[0] / n, m[1] / n, m[2] / n]
}

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector(Vec3);

impl UnitVector {
    /// Inputs whose norm is within this distance of 1 are renormalized;
    /// anything further away is rejected.
    pub const RENORMALIZE_TOLERANCE: f64 = 1e-3;

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_array([x, y, z])
    }

    pub fn from_array(v: Vec3) -> Result<Self> {
        let n = norm(&v);
        if !n.is_finite() || (n - 1.0).abs() > Self::RENORMALIZE_TOLERANCE {
            return Err(Error::NonUnitDirection(n));
        }
        Ok(Self(scaled(&v, 1.0 / n)))
    }

    /// Normalizes any finite non-zero vector.
    pub fn normalize(v: Vec3) -> Result<Self> {
        let n = norm(&v);
        if !n.is_finite() || n == 0.0 {
            return Err(Error::NonUnitDirection(n));
        }
        Ok(Self(scaled(&v, 1.0 / n)))
    }

    /// Wraps a vector the caller guarantees is unit length.
    #[inline]
    pub(crate) fn new_unchecked(v: Vec3) -> Self {
        Self(v)
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.0[1]
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.0[2]
    }

    #[inline]
    pub fn as_array(&self) -> &Vec3 {
        &self.0
    }

    pub fn neg(&self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }

    /// Angle in radians between two directions, accurate for tiny angles.
    pub fn angle_to(&self, other: &UnitVector) -> f64 {
        let c = cross(&self.0, &other.0);
        norm(&c).atan2(dot(&self.0, &other.0))
    }
}

/// Planar barycentric weights, nonnegative and summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barycentric(pub [f64; 3]);

impl Barycentric {
    pub fn sum(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    /// Point on the chord triangle, pushed back onto the sphere.
    pub fn reconstruct(&self, vertices: &[Vec3; 3]) -> Result<UnitVector> {
        let b = &self.0;
        let v = vertices;
        UnitVector::normalize([
            b[0] * v[0][0] + b[1] * v[1][0] + b[2] * v[2][0],
            b[0] * v[0][1] + b[1] * v[1][1] + b[2] * v[2][1],
            b[0] * v[0][2] + b[1] * v[1][2] + b[2] * v[2][2],
        ])
    }
}

/// A spherical triangle at some subdivision level.
///
/// Vertices are stored counter-clockwise when seen from outside the sphere.
/// The position in the hierarchy is the base face id (0..20) followed by one
/// child digit (0..4) per refinement, packed two bits per level in `path`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicTriangle {
    pub level: u32,
    pub vertices: [Vec3; 3],
    base_face: u8,
    path: u64,
}

impl GeodesicTriangle {
    pub fn base_face(&self) -> usize {
        self.base_face as usize
    }

    /// Face index within the level: `base_face * 4^level + path digits`.
    #[inline]
    pub fn face_id(&self) -> u64 {
        ((self.base_face as u64) << (2 * self.level)) | self.path
    }

    /// Base face followed by each child index taken; length `level + 1`.
    pub fn face_path(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.level as usize + 1);
        out.push(self.base_face as usize);
        for l in (0..self.level).rev() {
            out.push(((self.path >> (2 * l)) & 3) as usize);
        }
        out
    }

    /// The four children in canonical order: corners at vertex 1, 2, 3 and the
    /// central triangle of the three edge midpoints.
    pub fn children(&self) -> [GeodesicTriangle; 4] {
        let [v1, v2, v3] = self.vertices;
        let m12 = midpoint(&v1, &v2);
        let m23 = midpoint(&v2, &v3);
        let m31 = midpoint(&v3, &v1);
        let tri = |k: u64, vertices: [Vec3; 3]| GeodesicTriangle {
            level: self.level + 1,
            vertices,
            base_face: self.base_face,
            path: (self.path << 2) | k,
        };
        [
            tri(0, [v1, m12, m31]),
            tri(1, [m12, v2, m23]),
            tri(2, [m31, m23, v3]),
            tri(3, [m12, m23, m31]),
        ]
    }

    /// Spherical point-in-triangle test against the three great-circle edge
    /// planes with a signed angular slack of `eps`.
    #[inline]
    pub fn contains(&self, d: &UnitVector, eps: f64) -> bool {
        let [a, b, c] = &self.vertices;
        edge_side(a, b, d) >= -eps && edge_side(b, c, d) >= -eps && edge_side(c, a, d) >= -eps
    }

    /// Planar barycentric coordinates of `d` on this triangle's chord plane.
    #[inline]
    pub fn barycentric(&self, d: &UnitVector) -> Result<Barycentric> {
        moller_trumbore(&self.vertices, d)
    }
}

/// Sine of the signed angular distance from `d` to the great circle through
/// `a` and `b`, positive on the left of `a -> b`.
#[inline]
fn edge_side(a: &Vec3, b: &Vec3, d: &UnitVector) -> f64 {
    let n = cross(a, b);
    dot(&n, d.as_array()) / norm(&n)
}

/// Ray-triangle intersection of the ray from the origin along `d`.
///
/// The raw weights are clamped to nonnegative and renormalized.
fn moller_trumbore(v: &[Vec3; 3], d: &UnitVector) -> Result<Barycentric> {
    let dir = d.as_array();
    let e1 = sub(&v[1], &v[0]);
    let e2 = sub(&v[2], &v[0]);
    let p = cross(dir, &e2);
    let det = dot(&e1, &p);
    if det.abs() < 1e-300 || !det.is_finite() {
        return Err(Error::Geometry("ray parallel to triangle plane".into()));
    }
    let inv = 1.0 / det;
    let s = [-v[0][0], -v[0][1], -v[0][2]];
    let u = dot(&s, &p) * inv;
    let q = cross(&s, &e1);
    let w = dot(dir, &q) * inv;
    let t = dot(&e2, &q) * inv;
    if t <= 0.0 {
        return Err(Error::Geometry("triangle lies behind the query direction".into()));
    }
    let raw = [(1.0 - u - w).max(0.0), u.max(0.0), w.max(0.0)];
    let total = raw[0] + raw[1] + raw[2];
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Geometry("degenerate barycentric coordinates".into()));
    }
    Ok(Barycentric([raw[0] / total, raw[1] / total, raw[2] / total]))
}

/// The regular icosahedron inscribed in the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct IcosahedronBase {
    /// Golden-ratio vertices, normalized and sorted lexicographically.
    pub vertices: [Vec3; 12],
    /// Vertex triples with outward (counter-clockwise) winding.
    pub faces: [[usize; 3]; 20],
}

impl IcosahedronBase {
    fn construct() -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut raw = Vec::with_capacity(12);
        for &s1 in &[-1.0, 1.0] {
            for &s2 in &[-1.0, 1.0] {
                raw.push([0.0, s1, s2 * phi]);
                raw.push([s1, s2 * phi, 0.0]);
                raw.push([s2 * phi, 0.0, s1]);
            }
        }
        let n = (1.0 + phi * phi).sqrt();
        let mut verts: Vec<Vec3> = raw.iter().map(|v| scaled(v, 1.0 / n)).collect();
        verts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));

        let edge = (0..12)
            .flat_map(|i| (0..12).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| norm(&sub(&verts[i], &verts[j])))
            .fold(f64::INFINITY, f64::min);
        let adjacent = |i: usize, j: usize| (norm(&sub(&verts[i], &verts[j])) - edge).abs() < 1e-9;

        let mut faces = Vec::with_capacity(20);
        for i in 0..12 {
            for j in i + 1..12 {
                for k in j + 1..12 {
                    if adjacent(i, j) && adjacent(j, k) && adjacent(i, k) {
                        let normal = cross(&sub(&verts[j], &verts[i]), &sub(&verts[k], &verts[i]));
                        let centroid = [
                            verts[i][0] + verts[j][0] + verts[k][0],
                            verts[i][1] + verts[j][1] + verts[k][1],
                            verts[i][2] + verts[j][2] + verts[k][2],
                        ];
                        if dot(&normal, &centroid) > 0.0 {
                            faces.push([i, j, k]);
                        } else {
                            faces.push([i, k, j]);
                        }
                    }
                }
            }
        }
        assert_eq!(faces.len(), 20, "icosahedron construction");

        let mut vertices = [[0.0; 3]; 12];
        vertices.copy_from_slice(&verts);
        let mut face_arr = [[0usize; 3]; 20];
        face_arr.copy_from_slice(&faces);
        Self { vertices, faces: face_arr }
    }

    /// Distinct undirected edges as sorted vertex pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn face_triangle(&self, face: usize) -> GeodesicTriangle {
        let f = self.faces[face];
        GeodesicTriangle {
            level: 0,
            vertices: [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]],
            base_face: face as u8,
            path: 0,
        }
    }

    /// Unit outward normal of a base face.
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.face_triangle(face).vertices;
        let n = cross(&sub(&b, &a), &sub(&c, &a));
        scaled(&n, 1.0 / norm(&n))
    }
}

struct BaseGeometry {
    ico: IcosahedronBase,
    triangles: [GeodesicTriangle; 20],
    normals: [Vec3; 20],
}

fn base_geometry() -> &'static BaseGeometry {
    static BASE: OnceLock<BaseGeometry> = OnceLock::new();
    BASE.get_or_init(|| {
        let ico = IcosahedronBase::construct();
        let triangles = std::array::from_fn(|f| ico.face_triangle(f));
        let normals = std::array::from_fn(|f| ico.face_normal(f));
        BaseGeometry { ico, triangles, normals }
    })
}

/// The canonical base icosahedron. Every call returns the same instance.
pub fn base_icosahedron() -> &'static IcosahedronBase {
    &base_geometry().ico
}

/// Locates the base face containing `d` and its barycentric coordinates.
///
/// Faces are scanned in id order with the exact edge-plane test, so a
/// direction on a shared edge or vertex resolves to the lowest face id. The
/// nearest-normal face is only consulted, with relaxed slack, if rounding
/// leaves `d` outside every face.
pub fn icosahedron_intersection(d: &UnitVector) -> Result<(usize, GeodesicTriangle, Barycentric)> {
    let base = base_geometry();
    let face = match base.triangles.iter().position(|t| t.contains(d, CONTAINMENT_EPS)) {
        Some(f) => f,
        None => {
            let nearest = (0..20)
                .max_by(|&a, &b| {
                    let da = dot(&base.normals[a], d.as_array());
                    let db = dot(&base.normals[b], d.as_array());
                    da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(0);
            if !base.triangles[nearest].contains(d, RELAXED_EPS) {
                return Err(Error::Geometry(format!(
                    "direction {:?} is outside every base face",
                    d.as_array()
                )));
            }
            nearest
        }
    };
    let tri = base.triangles[face];
    let bary = tri.barycentric(d)?;
    Ok((face, tri, bary))
}

/// Moves one level down: picks the first child (0, 1, 2, then the central 3)
/// containing `d` and recomputes barycentrics on that child.
pub fn refine_triangle(
    tri: &GeodesicTriangle,
    d: &UnitVector,
) -> Result<(usize, GeodesicTriangle, Barycentric)> {
    if tri.level >= MAX_TRAVERSAL_LEVEL {
        return Err(Error::Geometry(format!("cannot refine below level {MAX_TRAVERSAL_LEVEL}")));
    }
    let children = tri.children();
    let k = children
        .iter()
        .position(|c| c.contains(d, CONTAINMENT_EPS))
        .or_else(|| children.iter().position(|c| c.contains(d, RELAXED_EPS)))
        .ok_or_else(|| {
            Error::Geometry(format!(
                "direction {:?} is outside all children of face {} at level {}",
                d.as_array(),
                tri.face_id(),
                tri.level
            ))
        })?;
    let child = children[k];
    let bary = child.barycentric(d)?;
    Ok((k, child, bary))
}

/// Number of distinct vertices after `level` subdivisions: `10 * 4^level + 2`.
pub fn vertex_count(level: u32) -> u64 {
    10 * 4u64.pow(level) + 2
}

/// Number of faces after `level` subdivisions: `20 * 4^level`.
pub fn face_count(level: u32) -> u64 {
    20 * 4u64.pow(level)
}

/// Face-to-vertex index tables for the dense levels.
///
/// Vertex indices are prefix-stable: the vertices of level `l` are the first
/// `vertex_count(l)` entries of `positions`, with each refinement appending
/// the new edge midpoints in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVertexTables {
    positions: Vec<Vec3>,
    levels: Vec<Vec<[u32; 3]>>,
}

impl DenseVertexTables {
    /// Deepest level held, or `None` when empty.
    pub fn max_level(&self) -> Option<u32> {
        self.levels.len().checked_sub(1).map(|l| l as u32)
    }

    pub fn vertex_count(&self, level: u32) -> usize {
        vertex_count(level) as usize
    }

    pub fn faces(&self, level: u32) -> Option<&[[u32; 3]]> {
        self.levels.get(level as usize).map(|v| v.as_slice())
    }

    /// Vertex positions of `level`.
    pub fn positions(&self, level: u32) -> &[Vec3] {
        let n = (vertex_count(level) as usize).min(self.positions.len());
        &self.positions[..n]
    }

    #[inline]
    pub fn face_vertices(&self, level: u32, face_id: u64) -> Result<[u32; 3]> {
        self.levels
            .get(level as usize)
            .and_then(|faces| faces.get(face_id as usize))
            .copied()
            .ok_or_else(|| {
                Error::Index(format!("no dense entry for face {face_id} at level {level}"))
            })
    }

    /// Bytes held by the face lookup tables (positions excluded).
    pub fn table_bytes(&self) -> usize {
        self.levels.iter().map(|f| f.len() * 3 * std::mem::size_of::<u32>()).sum()
    }

    /// Writes `level` as a text mesh: one `v x y z` line per vertex followed by
    /// one `f i j k` line per face, 1-based indices, coordinates with 9
    /// decimals, `\n` line endings.
    pub fn write_mesh<W: Write>(&self, level: u32, mut out: W) -> Result<()> {
        let faces = self
            .faces(level)
            .ok_or_else(|| Error::Config(format!("level {level} was not built")))?;
        for p in self.positions(level) {
            writeln!(out, "v {:.9} {:.9} {:.9}", p[0], p[1], p[2])?;
        }
        for f in faces {
            writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        Ok(())
    }
}

/// Builds dense face tables for levels `0..=max_dense_level`.
pub fn build_dense_tables(max_dense_level: u32) -> Result<DenseVertexTables> {
    if max_dense_level > MAX_DENSE_LEVEL {
        return Err(Error::Config(format!(
            "dense level {max_dense_level} exceeds the limit of {MAX_DENSE_LEVEL}"
        )));
    }
    let ico = base_icosahedron();
    let mut positions: Vec<Vec3> = ico.vertices.to_vec();
    let mut levels: Vec<Vec<[u32; 3]>> =
        vec![ico.faces.iter().map(|f| [f[0] as u32, f[1] as u32, f[2] as u32]).collect()];

    for level in 1..=max_dense_level {
        let parent = &levels[level as usize - 1];
        let mut edges: HashMap<(u32, u32), u32> = HashMap::with_capacity(parent.len() * 3 / 2);
        let mut faces = Vec::with_capacity(parent.len() * 4);
        let mut mid = |a: u32, b: u32, positions: &mut Vec<Vec3>| -> u32 {
            *edges.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let p = midpoint(&positions[a as usize], &positions[b as usize]);
                positions.push(p);
                (positions.len() - 1) as u32
            })
        };
        for &[a, b, c] in parent {
            let mab = mid(a, b, &mut positions);
            let mbc = mid(b, c, &mut positions);
            let mca = mid(c, a, &mut positions);
            faces.push([a, mab, mca]);
            faces.push([mab, b, mbc]);
            faces.push([mca, mbc, c]);
            faces.push([mab, mbc, mca]);
        }
        debug_assert_eq!(positions.len() as u64, vertex_count(level));
        levels.push(faces);
    }
    Ok(DenseVertexTables { positions, levels })
}
