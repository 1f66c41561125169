//! Simplicial 2D meshes: representation, generators, uniform red refinement,
//! patch extraction, submeshes, and plain-text mesh I/O.
//!
//! Conventions fixed here and relied on everywhere else:
//! - triangle vertex order is counterclockwise (signed area > 0);
//! - every edge is stored as `[a, b]` with `a < b` (global vertex indices), and
//!   its unit tangent points from `a` to `b`;
//! - local edge `l` of a triangle connects local vertices `l` and `(l+1) % 3`.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

/// Immutable conforming triangulation with derived edge data.
#[derive(Debug, Clone)]
pub struct Triangulation {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    tri_edge_signs: Vec<[i8; 3]>,
    edge_tris: Vec<(usize, Option<usize>)>,
    boundary_edge: Vec<bool>,
    boundary_vertex: Vec<bool>,
    vertex_tris: Vec<Vec<usize>>,
    edge_lookup: HashMap<(usize, usize), usize>,
}

impl Triangulation {
    /// Builds a triangulation and derives edge connectivity.
    ///
    /// Rejects out-of-range vertex references, degenerate or clockwise
    /// triangles, and non-manifold edges (shared by more than two triangles).
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::Mesh(format!(
                        "triangle {t} references vertex {v} but only {nv} vertices exist"
                    )));
                }
            }
            let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let a2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
            if a2 <= 0.0 {
                return Err(Error::Mesh(format!(
                    "triangle {t} is degenerate or not counterclockwise (signed area {})",
                    0.5 * a2
                )));
            }
        }

        let nt = triangles.len();
        let mut edge_lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut tri_edges = vec![[0usize; 3]; nt];
        let mut tri_edge_signs = vec![[0i8; 3]; nt];
        for (t, tri) in triangles.iter().enumerate() {
            for l in 0..3 {
                let (i, j) = (tri[l], tri[(l + 1) % 3]);
                let key = (i.min(j), i.max(j));
                let e = *edge_lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
                tri_edges[t][l] = e;
                tri_edge_signs[t][l] = if i < j { 1 } else { -1 };
            }
        }

        let ne = edges.len();
        let mut edge_tris: Vec<(usize, Option<usize>)> = vec![(usize::MAX, None); ne];
        for (t, te) in tri_edges.iter().enumerate() {
            for &e in te {
                if edge_tris[e].0 == usize::MAX {
                    edge_tris[e].0 = t;
                } else if edge_tris[e].1.is_none() {
                    edge_tris[e].1 = Some(t);
                } else {
                    return Err(Error::Mesh(format!(
                        "edge {:?} is shared by more than two triangles",
                        edges[e]
                    )));
                }
            }
        }

        let boundary_edge: Vec<bool> = edge_tris.iter().map(|et| et.1.is_none()).collect();
        let mut boundary_vertex = vec![false; nv];
        for (e, &[a, b]) in edges.iter().enumerate() {
            if boundary_edge[e] {
                boundary_vertex[a] = true;
                boundary_vertex[b] = true;
            }
        }
        let mut vertex_tris = vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_tris[v].push(t);
            }
        }

        Ok(Self {
            vertices,
            triangles,
            edges,
            tri_edges,
            tri_edge_signs,
            edge_tris,
            boundary_edge,
            boundary_vertex,
            vertex_tris,
            edge_lookup,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }
    /// Edges as `[a, b]` vertex pairs with `a < b`.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    /// Per-triangle edge indices; local edge `l` connects local vertices `l`
    /// and `(l+1) % 3`.
    pub fn tri_edges(&self) -> &[[usize; 3]] {
        &self.tri_edges
    }
    /// Orientation sign of local edge `l`: `+1` when the triangle traverses the
    /// edge in its global (low-to-high index) direction.
    pub fn tri_edge_signs(&self) -> &[[i8; 3]] {
        &self.tri_edge_signs
    }
    /// The one or two triangles incident to an edge.
    pub fn edge_tris(&self, e: usize) -> (usize, Option<usize>) {
        self.edge_tris[e]
    }
    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }
    /// Triangles incident to a vertex, in construction order.
    pub fn vertex_tris(&self, v: usize) -> &[usize] {
        &self.vertex_tris[v]
    }
    /// Looks up the edge index for an unordered vertex pair.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&(a.min(b), a.max(b))).copied()
    }

    /// Triangle area (positive by the CCW invariant).
    pub fn area(&self, t: usize) -> f64 {
        let p = self.tri_coords(t);
        0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]))
    }

    pub fn tri_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    /// Gradients of the three barycentric coordinate functions on triangle `t`.
    pub fn grads(&self, t: usize) -> [[f64; 2]; 3] {
        let p = self.tri_coords(t);
        let a = self.area(t);
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let d = [
                p[(i + 2) % 3][0] - p[(i + 1) % 3][0],
                p[(i + 2) % 3][1] - p[(i + 1) % 3][1],
            ];
            g[i] = [-d[1] / (2.0 * a), d[0] / (2.0 * a)];
        }
        g
    }

    /// Diameter of triangle `t` (its longest edge).
    pub fn h_t(&self, t: usize) -> f64 {
        let p = self.tri_coords(t);
        let d = |i: usize, j: usize| {
            let v = [p[j][0] - p[i][0], p[j][1] - p[i][1]];
            (v[0] * v[0] + v[1] * v[1]).sqrt()
        };
        d(0, 1).max(d(1, 2)).max(d(2, 0))
    }

    /// Largest triangle diameter of the mesh.
    pub fn h_max(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.h_t(t)).fold(0.0, f64::max)
    }

    pub fn edge_len(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        let d = [
            self.vertices[b][0] - self.vertices[a][0],
            self.vertices[b][1] - self.vertices[a][1],
        ];
        (d[0] * d[0] + d[1] * d[1]).sqrt()
    }

    /// Unit tangent of edge `e`, pointing from the lower to the higher vertex index.
    pub fn edge_tangent(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let d = [
            self.vertices[b][0] - self.vertices[a][0],
            self.vertices[b][1] - self.vertices[a][1],
        ];
        let l = (d[0] * d[0] + d[1] * d[1]).sqrt();
        [d[0] / l, d[1] / l]
    }

    /// Unit normal of edge `e` (tangent rotated by -90 degrees).
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        let t = self.edge_tangent(e);
        [t[1], -t[0]]
    }

    /// Total mesh area.
    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Full structural validation: orientation and manifoldness (already
    /// enforced at construction), the Euler relation `V - E + T = 1` for the
    /// contractible domains in scope, and the interior/boundary edge-sharing
    /// counts.
    pub fn validate(&self) -> Result<()> {
        let (v, e, t) = (
            self.num_vertices() as i64,
            self.num_edges() as i64,
            self.num_triangles() as i64,
        );
        if v - e + t != 1 {
            return Err(Error::Mesh(format!(
                "Euler relation violated: V - E + T = {} - {} + {} = {} (expected 1)",
                v,
                e,
                t,
                v - e + t
            )));
        }
        for tt in 0..self.num_triangles() {
            if self.area(tt) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {tt} has non-positive area")));
            }
        }
        for ee in 0..self.num_edges() {
            let shared = 1 + self.edge_tris[ee].1.is_some() as usize;
            let expect = if self.boundary_edge[ee] { 1 } else { 2 };
            if shared != expect {
                return Err(Error::Mesh(format!(
                    "edge {ee} shared by {shared} triangles, expected {expect}"
                )));
            }
        }
        Ok(())
    }
}

/// Patch anchor entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchAnchor {
    /// Element patch around a triangle (all triangles whose closure meets its closure).
    Element(usize),
    /// Vertex patch: all triangles containing the vertex.
    Vertex(usize),
    /// Extended edge patch: union of the two endpoint vertex patches.
    Edge(usize),
}

/// A patch of triangles around an anchor entity.
#[derive(Debug, Clone)]
pub struct Patch {
    pub anchor: PatchAnchor,
    /// Member triangle indices, ascending.
    pub members: Vec<usize>,
    /// Max pairwise distance between patch vertices (exact for polygons).
    pub diameter: f64,
}

/// Extracts the patch for the given anchor.
///
/// Element patches use closure intersection: a triangle belongs to the patch of
/// `T` exactly when it shares at least a vertex with `T`.
pub fn patch(mesh: &Triangulation, anchor: PatchAnchor) -> Result<Patch> {
    let members: Vec<usize> = match anchor {
        PatchAnchor::Element(t) => {
            if t >= mesh.num_triangles() {
                return Err(Error::Config(format!("element anchor {t} out of range")));
            }
            let mut s: Vec<usize> = mesh.triangles()[t]
                .iter()
                .flat_map(|&v| mesh.vertex_tris(v).iter().copied())
                .collect();
            s.sort_unstable();
            s.dedup();
            s
        }
        PatchAnchor::Vertex(y) => {
            if y >= mesh.num_vertices() {
                return Err(Error::Config(format!("vertex anchor {y} out of range")));
            }
            let mut s = mesh.vertex_tris(y).to_vec();
            s.sort_unstable();
            s
        }
        PatchAnchor::Edge(e) => {
            if e >= mesh.num_edges() {
                return Err(Error::Config(format!("edge anchor {e} out of range")));
            }
            let [a, b] = mesh.edges()[e];
            let mut s: Vec<usize> = mesh
                .vertex_tris(a)
                .iter()
                .chain(mesh.vertex_tris(b).iter())
                .copied()
                .collect();
            s.sort_unstable();
            s.dedup();
            s
        }
    };
    let mut verts: Vec<usize> = members
        .iter()
        .flat_map(|&t| mesh.triangles()[t].iter().copied())
        .collect();
    verts.sort_unstable();
    verts.dedup();
    let mut diameter: f64 = 0.0;
    for (i, &p) in verts.iter().enumerate() {
        for &q in &verts[i + 1..] {
            let (pp, qq) = (mesh.vertices()[p], mesh.vertices()[q]);
            let d = ((pp[0] - qq[0]).powi(2) + (pp[1] - qq[1]).powi(2)).sqrt();
            diameter = diameter.max(d);
        }
    }
    Ok(Patch { anchor, members, diameter })
}

/// A triangle-subset mesh with local-to-global entity maps.
#[derive(Debug, Clone)]
pub struct Submesh {
    pub mesh: Triangulation,
    /// Global triangle index of each local triangle (ascending).
    pub tri_l2g: Vec<usize>,
    /// Global vertex index of each local vertex (ascending).
    pub vertex_l2g: Vec<usize>,
    /// Global edge index of each local edge.
    pub edge_l2g: Vec<usize>,
}

impl Submesh {
    /// Local vertex index for a global vertex, if present.
    pub fn vertex_g2l(&self, g: usize) -> Option<usize> {
        self.vertex_l2g.binary_search(&g).ok()
    }
    /// Local edge index for a global edge, if present.
    pub fn edge_g2l(&self, g: usize) -> Option<usize> {
        self.edge_l2g.iter().position(|&x| x == g)
    }
}

/// Extracts the submesh induced by a set of triangles.
pub fn submesh(mesh: &Triangulation, tris: &[usize]) -> Result<Submesh> {
    let mut tri_l2g = tris.to_vec();
    tri_l2g.sort_unstable();
    tri_l2g.dedup();
    let mut vertex_l2g: Vec<usize> = tri_l2g
        .iter()
        .flat_map(|&t| mesh.triangles()[t].iter().copied())
        .collect();
    vertex_l2g.sort_unstable();
    vertex_l2g.dedup();
    let g2l: HashMap<usize, usize> = vertex_l2g.iter().enumerate().map(|(l, &g)| (g, l)).collect();
    let vertices: Vec<[f64; 2]> = vertex_l2g.iter().map(|&g| mesh.vertices()[g]).collect();
    let triangles: Vec<[usize; 3]> = tri_l2g
        .iter()
        .map(|&t| {
            let tri = mesh.triangles()[t];
            [g2l[&tri[0]], g2l[&tri[1]], g2l[&tri[2]]]
        })
        .collect();
    let sub = Triangulation::new(vertices, triangles)?;
    let edge_l2g: Vec<usize> = sub
        .edges()
        .iter()
        .map(|&[la, lb]| {
            let (ga, gb) = (vertex_l2g[la], vertex_l2g[lb]);
            mesh.edge_between(ga, gb)
                .expect("submesh edge must exist in the parent mesh")
        })
        .collect();
    Ok(Submesh { mesh: sub, tri_l2g, vertex_l2g, edge_l2g })
}

/// Maximum number of element patches any single triangle belongs to.
///
/// By symmetry of closure intersection this equals the largest element-patch
/// cardinality.
pub fn overlap_constant(mesh: &Triangulation) -> usize {
    (0..mesh.num_triangles())
        .map(|t| {
            patch(mesh, PatchAnchor::Element(t))
                .expect("element index in range")
                .members
                .len()
        })
        .max()
        .unwrap_or(0)
}

/// Structured mesh of the unit square: two triangles cut by the (0,0)-(1,1)
/// diagonal, red-refined `levels` times. Leg length `2^-levels`,
/// `h_max = sqrt(2) * 2^-levels`.
pub fn generate_square(levels: u32) -> Triangulation {
    let mut m = Triangulation::new(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .expect("hard-coded initial square mesh is valid");
    for _ in 0..levels {
        m = red_refine(&m);
    }
    m
}

/// Structured mesh of the L-shaped domain `(-1,1)^2` minus the closed fourth
/// quadrant, with alternating cell diagonals.
///
/// The domain is covered by the three unit squares with lower-left corners
/// (0,0), (-1,0), (-1,-1), each subdivided into `2^levels x 2^levels` cells of
/// side `h = 2^-levels`; the cell whose lower-left corner sits at integer grid
/// position (i,j) (in units of `h`) carries the north-east diagonal when `i+j`
/// is even and the north-west diagonal otherwise. Level 0 reproduces the
/// six-triangle initial mesh (V=8, E=13); `h_max = sqrt(2) * 2^-levels`.
///
/// Note this alternating family is not closed under red refinement (red
/// children keep the parent diagonal direction), so each level is generated
/// directly at its resolution.
pub fn generate_lshape(levels: u32) -> Triangulation {
    let n = 1i64 << levels;
    let h = 1.0 / n as f64;
    let cells = [(0i64, 0i64), (-1, 0), (-1, -1)];
    let mut vid: HashMap<(i64, i64), usize> = HashMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut gv = |gi: i64, gj: i64, vertices: &mut Vec<[f64; 2]>| -> usize {
        *vid.entry((gi, gj)).or_insert_with(|| {
            vertices.push([gi as f64 * h, gj as f64 * h]);
            vertices.len() - 1
        })
    };
    for (cx, cy) in cells {
        for i in 0..n {
            for j in 0..n {
                let (gi, gj) = (cx * n + i, cy * n + j);
                let a = gv(gi, gj, &mut vertices);
                let b = gv(gi + 1, gj, &mut vertices);
                let c = gv(gi + 1, gj + 1, &mut vertices);
                let d = gv(gi, gj + 1, &mut vertices);
                if (gi + gj).rem_euclid(2) == 0 {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
    }
    Triangulation::new(vertices, triangles).expect("generated L-shape mesh is valid")
}

/// Uniform red refinement: each triangle is split into four congruent children
/// through its edge midpoints. Counts follow `V' = V + E`, `E' = 2E + 3T`,
/// `T' = 4T`; children of triangle `t` occupy slots `4t .. 4t+4`.
pub fn red_refine(mesh: &Triangulation) -> Triangulation {
    let nv = mesh.num_vertices();
    let mut vertices = mesh.vertices().to_vec();
    for &[a, b] in mesh.edges() {
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
    }
    let mut triangles = Vec::with_capacity(4 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.triangles()[t];
        let te = mesh.tri_edges()[t];
        let (mab, mbc, mca) = (nv + te[0], nv + te[1], nv + te[2]);
        triangles.push([a, mab, mca]);
        triangles.push([mab, b, mbc]);
        triangles.push([mca, mbc, c]);
        triangles.push([mab, mbc, mca]);
    }
    Triangulation::new(vertices, triangles).expect("red refinement preserves validity")
}

/// Reads a mesh in the `mesh2d v1` plain-text format.
///
/// Format: line 1 is the literal header `mesh2d v1`; line 2 is `<V> <E> <T>`
/// where the edge count is informational and ignored (edges are always
/// derived); then `V` lines `x y`; then `T` lines `i j k` with 0-based CCW
/// vertex indices. Rejects wrongly oriented and non-manifold input.
pub fn read_mesh(path: &Path) -> Result<Triangulation> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

/// Parses the `mesh2d v1` format from a string (see [`read_mesh`]).
pub fn parse_mesh(text: &str) -> Result<Triangulation> {
    let mut lines = text.lines().enumerate();
    let perr = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
    let (hn, header) = lines
        .next()
        .ok_or_else(|| perr(0, "empty file".into()))?;
    if header.trim() != "mesh2d v1" {
        return Err(perr(hn, format!("expected header `mesh2d v1`, found `{}`", header.trim())));
    }
    let (cn, counts) = lines
        .next()
        .ok_or_else(|| perr(1, "missing count line".into()))?;
    let fields: Vec<&str> = counts.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(perr(cn, format!("expected `<V> <E> <T>`, found `{}`", counts.trim())));
    }
    let nv: usize = fields[0]
        .parse()
        .map_err(|_| perr(cn, format!("invalid vertex count `{}`", fields[0])))?;
    let nt: usize = fields[2]
        .parse()
        .map_err(|_| perr(cn, format!("invalid triangle count `{}`", fields[2])))?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| perr(1, format!("expected {nv} vertex lines")))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 2 {
            return Err(perr(ln, format!("expected `x y`, found `{}`", line.trim())));
        }
        let x: f64 = f[0].parse().map_err(|_| perr(ln, format!("invalid coordinate `{}`", f[0])))?;
        let y: f64 = f[1].parse().map_err(|_| perr(ln, format!("invalid coordinate `{}`", f[1])))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(perr(ln, "non-finite coordinate".into()));
        }
        vertices.push([x, y]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| perr(1, format!("expected {nt} triangle lines")))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(perr(ln, format!("expected `i j k`, found `{}`", line.trim())));
        }
        let mut tri = [0usize; 3];
        for (s, out) in f.iter().zip(tri.iter_mut()) {
            *out = s
                .parse()
                .map_err(|_| perr(ln, format!("invalid vertex index `{s}`")))?;
            if *out >= nv {
                return Err(perr(ln, format!("vertex index {} out of range (V = {nv})", *out)));
            }
        }
        triangles.push(tri);
    }
    if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(perr(ln, format!("unexpected trailing content `{}`", extra.trim())));
    }
    Triangulation::new(vertices, triangles)
}

/// Writes a mesh in the `mesh2d v1` format with 17 significant digits.
pub fn write_mesh(mesh: &Triangulation, path: &Path) -> Result<()> {
    std::fs::write(path, format_mesh(mesh))?;
    Ok(())
}

/// Formats a mesh in the `mesh2d v1` format (see [`write_mesh`]).
pub fn format_mesh(mesh: &Triangulation) -> String {
    let mut s = String::new();
    s.push_str("mesh2d v1\n");
    let _ = writeln!(
        s,
        "{} {} {}",
        mesh.num_vertices(),
        mesh.num_edges(),
        mesh.num_triangles()
    );
    for &[x, y] in mesh.vertices() {
        let _ = writeln!(s, "{:.16e} {:.16e}", x, y);
    }
    for &[i, j, k] in mesh.triangles() {
        let _ = writeln!(s, "{i} {j} {k}");
    }
    s
}
