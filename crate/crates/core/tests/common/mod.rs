//! Brute-force reference encoders used by the integration tests.
//!
//! Geometry is rebuilt from scratch by plain midpoint subdivision of an
//! independently constructed icosahedron, faces are located by exhaustive
//! search with Cramer's-rule barycentrics, and hashes are recomputed from the
//! literal constants. The only thing borrowed from the crate is the dense
//! vertex numbering, looked up by vertex position.

#![allow(dead_code)]

use std::collections::HashMap;

use hashsphere::encoding::ParamTable;
use hashsphere::geodesic::{build_dense_tables, DenseVertexTables, UnitVector};
use rand::Rng;

pub type V3 = [f64; 3];

const P_SPATIAL: [u32; 3] = [1, 2_654_435_761, 805_459_861];
const P_DIRECTION: [u32; 3] = [3_674_653_429, 2_097_192_037, 1_434_869_437];

fn dot(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn det3(a: &V3, b: &V3, c: &V3) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - b[0] * (a[1] * c[2] - a[2] * c[1]) + c[0] * (a[1] * b[2] - a[2] * b[1])
}

fn chord_midpoint(a: &V3, b: &V3) -> V3 {
    let m = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
    let n = dot(&m, &m).sqrt();
    [m[0] / n, m[1] / n, m[2] / n]
}

pub struct Mesh {
    pub verts: Vec<V3>,
    pub faces: Vec<[usize; 3]>,
}

fn icosahedron() -> Mesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let n = 1.0 / (1.0 + phi * phi).sqrt();
    let mut verts = Vec::new();
    for a in [-1.0, 1.0] {
        for b in [-phi, phi] {
            verts.push([0.0, a * n, b * n]);
            verts.push([a * n, b * n, 0.0]);
            verts.push([b * n, 0.0, a * n]);
        }
    }
    let d = |i: usize, j: usize| {
        let v = [verts[i][0] - verts[j][0], verts[i][1] - verts[j][1], verts[i][2] - verts[j][2]];
        dot(&v, &v).sqrt()
    };
    let edge = 2.0 * n;
    let adj = |i, j| (d(i, j) - edge).abs() < 1e-9;
    let mut faces = Vec::new();
    for i in 0..12 {
        for j in i + 1..12 {
            for k in j + 1..12 {
                if adj(i, j) && adj(j, k) && adj(i, k) {
                    if det3(&verts[i], &verts[j], &verts[k]) > 0.0 {
                        faces.push([i, j, k]);
                    } else {
                        faces.push([i, k, j]);
                    }
                }
            }
        }
    }
    assert_eq!(faces.len(), 20);
    Mesh { verts, faces }
}

fn subdivide(m: &Mesh) -> Mesh {
    let mut verts = m.verts.clone();
    let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, verts: &mut Vec<V3>| {
        *mids.entry((a.min(b), a.max(b))).or_insert_with(|| {
            verts.push(chord_midpoint(&m.verts[a], &m.verts[b]));
            verts.len() - 1
        })
    };
    let mut faces = Vec::with_capacity(m.faces.len() * 4);
    for &[a, b, c] in &m.faces {
        let ab = mid(a, b, &mut verts);
        let bc = mid(b, c, &mut verts);
        let ca = mid(c, a, &mut verts);
        faces.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    Mesh { verts, faces }
}

/// Geodesic meshes for levels `0..=max_level`.
pub fn meshes(max_level: u32) -> Vec<Mesh> {
    let mut out = vec![icosahedron()];
    for _ in 0..max_level {
        let next = subdivide(out.last().unwrap());
        out.push(next);
    }
    out
}

/// Face of `mesh` containing `d` (largest minimum barycentric) and its
/// barycentric weights.
pub fn locate(mesh: &Mesh, d: &V3) -> ([usize; 3], [f64; 3]) {
    let mut best = (f64::NEG_INFINITY, [0usize; 3], [0.0; 3]);
    for f in &mesh.faces {
        let [a, b, c] = [&mesh.verts[f[0]], &mesh.verts[f[1]], &mesh.verts[f[2]]];
        let det = det3(a, b, c);
        let w = [det3(d, b, c) / det, det3(a, d, c) / det, det3(a, b, d) / det];
        let s = w[0] + w[1] + w[2];
        if s <= 0.0 {
            continue;
        }
        let bary = [w[0] / s, w[1] / s, w[2] / s];
        let m = bary[0].min(bary[1]).min(bary[2]);
        if m > best.0 {
            best = (m, *f, bary);
        }
    }
    (best.1, best.2)
}

fn discretize(v: f64, gamma: u32) -> u32 {
    ((1.0 + v.clamp(-1.0, 1.0)) * gamma as f64).floor() as u32
}

fn xor_hash(c: [u32; 3], p: &[u32; 3]) -> u32 {
    c[0].wrapping_mul(p[0]) ^ c[1].wrapping_mul(p[1]) ^ c[2].wrapping_mul(p[2])
}

fn vertex_hash(v: &V3, p: &[u32; 3], gamma: u32) -> u32 {
    xor_hash([discretize(v[0], gamma), discretize(v[1], gamma), discretize(v[2], gamma)], p)
}

fn key(v: &V3) -> [u64; 3] {
    [v[0].to_bits(), v[1].to_bits(), v[2].to_bits()]
}

/// Position to dense index, per level.
pub struct DenseIndex(Vec<HashMap<[u64; 3], u32>>);

impl DenseIndex {
    pub fn new(max_level: u32) -> Self {
        let t: DenseVertexTables = build_dense_tables(max_level).unwrap();
        DenseIndex(
            (0..=max_level)
                .map(|l| t.positions(l).iter().enumerate().map(|(i, p)| (key(p), i as u32)).collect())
                .collect(),
        )
    }

    pub fn get(&self, level: u32, v: &V3) -> u32 {
        *self.0[level as usize].get(&key(v)).expect("oracle vertex missing from dense table")
    }
}

fn vertex_count(l: u32) -> u64 {
    10 * 4u64.pow(l) + 2
}

fn accumulate(out: &mut [f64], table: &ParamTable<f64>, row: u32, w: f64) {
    for (o, v) in out.iter_mut().zip(table.row(row as usize)) {
        *o += w * v;
    }
}

pub struct SphereOracle {
    pub meshes: Vec<Mesh>,
    pub dense: DenseIndex,
}

impl SphereOracle {
    pub fn new(levels: u32) -> Self {
        Self { meshes: meshes(levels - 1), dense: DenseIndex::new(levels - 1) }
    }

    pub fn encode(&self, d: &V3, table_cap: u32, gamma: u32, tables: &[ParamTable<f64>]) -> Vec<f64> {
        let f = tables[0].features();
        let mut out = vec![0.0; tables.len() * f];
        for (l, table) in tables.iter().enumerate() {
            let mesh = &self.meshes[l];
            let (face, bary) = locate(mesh, d);
            for k in 0..3 {
                let v = &mesh.verts[face[k]];
                let row = if vertex_count(l as u32) <= table_cap as u64 {
                    self.dense.get(l as u32, v)
                } else {
                    vertex_hash(v, &P_SPATIAL, gamma) & (table_cap - 1)
                };
                accumulate(&mut out[l * f..(l + 1) * f], table, row, bary[k]);
            }
        }
        out
    }
}

fn cell_and_frac(x: f64, n: u32) -> (u32, f64) {
    let s = x.clamp(0.0, 1.0) * n as f64;
    let c = (s.floor() as u32).min(n - 1);
    (c, (s - c as f64).clamp(0.0, 1.0))
}

pub struct JointOracle {
    pub sphere: SphereOracle,
    pub levels: u32,
    pub base_resolution: u32,
    pub scale: f64,
    pub dir_cap: u32,
    pub table_cap: u32,
    pub gamma: u32,
}

impl JointOracle {
    pub fn encode(&self, x: &V3, d: &V3, tables: &[ParamTable<f64>]) -> Vec<f64> {
        let f = tables[0].features();
        let mut out = vec![0.0; tables.len() * f];
        for l in 0..self.levels {
            let dl = (l / 2).min(self.dir_cap);
            let n = (self.base_resolution as f64 * self.scale.powi(l as i32)).floor() as u32;
            let side = n as u64 + 1;
            let nv = vertex_count(dl);
            let dense = side.pow(3) * nv <= self.table_cap as u64;
            let mesh = &self.sphere.meshes[dl as usize];
            let (face, bary) = locate(mesh, d);
            let cf: Vec<(u32, f64)> = (0..3).map(|i| cell_and_frac(x[i], n)).collect();
            for cz in 0..2u32 {
                for cy in 0..2u32 {
                    for cx in 0..2u32 {
                        let c = [cf[0].0 + cx, cf[1].0 + cy, cf[2].0 + cz];
                        let w: f64 = [cx, cy, cz]
                            .iter()
                            .zip(&cf)
                            .map(|(&b, &(_, t))| if b == 1 { t } else { 1.0 - t })
                            .product();
                        for k in 0..3 {
                            let v = &mesh.verts[face[k]];
                            let row = if dense {
                                let lin = (c[2] as u64 * side + c[1] as u64) * side + c[0] as u64;
                                (lin * nv + self.sphere.dense.get(dl, v) as u64) as u32
                            } else {
                                (xor_hash(c, &P_SPATIAL) ^ vertex_hash(v, &P_DIRECTION, self.gamma)) & (self.table_cap - 1)
                            };
                            accumulate(&mut out[l as usize * f..(l as usize + 1) * f], &tables[l as usize], row, w * bary[k]);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Multilinear grid over `[0,1]^dims`; dense rows are x-fastest, hashed rows
/// `XOR(c_i * p_i) mod T`.
pub fn grid_encode(p: &[f64], base: u32, scale: f64, table_cap: u32, tables: &[ParamTable<f64>]) -> Vec<f64> {
    let k = p.len();
    let f = tables[0].features();
    let mut out = vec![0.0; tables.len() * f];
    for (l, table) in tables.iter().enumerate() {
        let n = (base as f64 * scale.powi(l as i32)).floor() as u32;
        let side = n as u64 + 1;
        let dense = side.pow(k as u32) <= table_cap as u64;
        let cf: Vec<(u32, f64)> = p.iter().map(|&x| cell_and_frac(x, n)).collect();
        for mask in 0..(1u32 << k) {
            let mut c = [0u32; 3];
            let mut w = 1.0;
            for i in 0..k {
                let b = (mask >> i) & 1;
                c[i] = cf[i].0 + b;
                w *= if b == 1 { cf[i].1 } else { 1.0 - cf[i].1 };
            }
            let row = if dense {
                (0..k).rev().fold(0u64, |acc, i| acc * side + c[i] as u64) as u32
            } else {
                xor_hash(c, &P_SPATIAL) % table_cap
            };
            accumulate(&mut out[l * f..(l + 1) * f], table, row, w);
        }
    }
    out
}

pub fn polar_coords(d: &V3) -> [f64; 2] {
    let pi = std::f64::consts::PI;
    [(d[1].atan2(d[0]) + pi) / (2.0 * pi), d[2].clamp(-1.0, 1.0).acos() / pi]
}

pub fn cartesian_coords(d: &V3) -> [f64; 3] {
    [(d[0] + 1.0) / 2.0, (d[1] + 1.0) / 2.0, (d[2] + 1.0) / 2.0]
}

/// Uniform direction by rejection from the cube.
pub fn random_direction<R: Rng>(rng: &mut R) -> UnitVector {
    loop {
        let v: V3 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n2 = dot(&v, &v);
        if n2 > 1e-4 && n2 <= 1.0 {
            return UnitVector::normalize(v).unwrap();
        }
    }
}

/// Fills every table with uniform values in `[-1, 1]`.
pub fn randomize(tables: &mut [ParamTable<f64>], rng: &mut impl Rng) {
    for t in tables {
        t.values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
