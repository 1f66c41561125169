//! Finite element spaces, degree-of-freedom maps, local element matrices, and
//! global sparse assembly for every bilinear form used in the pipeline.
//!
//! Families:
//! - `S1` / `S1Zero`: continuous piecewise-linear scalars (all / interior vertices);
//! - `Cr`: nonconforming Crouzeix–Raviart scalars (one dof per edge);
//! - `N0` / `N0TangentialZero`: lowest-order Nédélec edge elements
//!   (all / interior edges), basis `psi_E = lambda_a grad(lambda_b) - lambda_b grad(lambda_a)`
//!   for the edge `E = [a, b]` with `a < b`, normalized so the tangential
//!   moment over `E` is one;
//! - `Rt0` / `Rt0NormalZero`: lowest-order Raviart–Thomas elements, realized
//!   as the pointwise rotation `chi_E = R psi_E`, `R = [[0,1],[-1,0]]`, which
//!   swaps tangential and normal continuity and turns `rot` into `div`;
//! - `P0Vec`: piecewise-constant vector fields, dof `2t + c` for component `c`
//!   on triangle `t`.
//!
//! All integrands in scope are polynomials of degree at most two and are
//! integrated exactly by closed forms; no inexact quadrature is used anywhere.

use crate::error::{Error, Result};
use crate::mesh::Triangulation;

/// Finite element family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    S1,
    S1Zero,
    Cr,
    N0,
    N0TangentialZero,
    Rt0,
    Rt0NormalZero,
    P0Vec,
}

impl Family {
    /// True for the scalar vertex-based families.
    pub fn is_scalar(self) -> bool {
        matches!(self, Family::S1 | Family::S1Zero)
    }
    /// True for edge-based vector families (Nédélec and Raviart–Thomas).
    pub fn is_edge(self) -> bool {
        matches!(
            self,
            Family::N0 | Family::N0TangentialZero | Family::Rt0 | Family::Rt0NormalZero
        )
    }
}

/// A finite element space over a triangulation: family tag plus dof maps.
#[derive(Debug, Clone)]
pub struct FeSpace<'m> {
    family: Family,
    mesh: &'m Triangulation,
    /// Global entity index (vertex, edge, or P0vec slot) of each dof, ascending.
    entity_of_dof: Vec<usize>,
    /// Dof index of each global entity; `usize::MAX` where constrained out.
    dof_of_entity: Vec<usize>,
    /// True where the dof's entity touches the domain boundary.
    boundary_mask: Vec<bool>,
}

impl<'m> FeSpace<'m> {
    pub fn new(mesh: &'m Triangulation, family: Family) -> Self {
        let (n_entities, keep): (usize, Box<dyn Fn(usize) -> bool>) = match family {
            Family::S1 => (mesh.num_vertices(), Box::new(|_| true)),
            Family::S1Zero => (
                mesh.num_vertices(),
                Box::new(move |v| !mesh.is_boundary_vertex(v)),
            ),
            Family::Cr | Family::N0 | Family::Rt0 => (mesh.num_edges(), Box::new(|_| true)),
            Family::N0TangentialZero | Family::Rt0NormalZero => (
                mesh.num_edges(),
                Box::new(move |e| !mesh.is_boundary_edge(e)),
            ),
            Family::P0Vec => (2 * mesh.num_triangles(), Box::new(|_| true)),
        };
        let mut entity_of_dof = Vec::new();
        let mut dof_of_entity = vec![usize::MAX; n_entities];
        for entity in 0..n_entities {
            if keep(entity) {
                dof_of_entity[entity] = entity_of_dof.len();
                entity_of_dof.push(entity);
            }
        }
        let boundary_mask = entity_of_dof
            .iter()
            .map(|&e| match family {
                Family::S1 | Family::S1Zero => mesh.is_boundary_vertex(e),
                Family::P0Vec => false,
                _ => mesh.is_boundary_edge(e),
            })
            .collect();
        Self { family, mesh, entity_of_dof, dof_of_entity, boundary_mask }
    }

    pub fn family(&self) -> Family {
        self.family
    }
    pub fn mesh(&self) -> &Triangulation {
        self.mesh
    }
    pub fn dofs(&self) -> usize {
        self.entity_of_dof.len()
    }
    pub fn entity_of_dof(&self) -> &[usize] {
        &self.entity_of_dof
    }
    pub fn dof_of_entity(&self, entity: usize) -> Option<usize> {
        match self.dof_of_entity.get(entity) {
            Some(&d) if d != usize::MAX => Some(d),
            _ => None,
        }
    }
    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }
}

/// Sparse matrix in coalesced triplet form with a symmetry flag.
///
/// Symmetric matrices are assembled symmetrically (full pattern stored); the
/// flag records the structural guarantee `A = A^T`, it does not halve storage.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    /// Coalesced `(row, col, value)` entries sorted by `(col, row)`.
    triplets: Vec<(usize, usize, f64)>,
    symmetric: bool,
}

/// Alias emphasizing call sites where symmetry is part of the contract.
pub type SparseSymMatrix = SparseMatrix;

impl SparseMatrix {
    /// Builds a matrix from raw (possibly duplicate) triplets; duplicates are
    /// summed. Fails on out-of-range indices or a non-square symmetric shape.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        raw: Vec<(usize, usize, f64)>,
        symmetric: bool,
    ) -> Result<Self> {
        if symmetric && nrows != ncols {
            return Err(Error::Config(format!(
                "symmetric matrix must be square, got {nrows}x{ncols}"
            )));
        }
        for &(r, c, _) in &raw {
            if r >= nrows || c >= ncols {
                return Err(Error::Config(format!(
                    "triplet ({r},{c}) out of range for {nrows}x{ncols} matrix"
                )));
            }
        }
        let mut t = raw;
        t.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            match triplets.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => triplets.push((r, c, v)),
            }
        }
        Ok(Self { nrows, ncols, triplets, symmetric })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.nrows];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    /// `y = A^T x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "matvec_t dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for &(r, c, v) in &self.triplets {
            y[c] += v * x[r];
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let t = self
            .triplets
            .iter()
            .map(|&(r, c, v)| (c, r, v))
            .collect();
        Self::from_triplets(self.ncols, self.nrows, t, self.symmetric)
            .expect("transpose preserves validity")
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.triplets {
            t.2 *= s;
        }
        out
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.triplets {
            d[(r, c)] += v;
        }
        d
    }

    /// Assembles a block matrix from placements of existing matrices.
    /// Each placement adds `scale * M` (or `scale * M^T`) at a row/col offset.
    pub fn from_blocks(
        nrows: usize,
        ncols: usize,
        blocks: &[BlockSpec<'_>],
        symmetric: bool,
    ) -> Result<Self> {
        let mut t = Vec::new();
        for b in blocks {
            for &(r, c, v) in &b.mat.triplets {
                let (r, c) = if b.transpose { (c, r) } else { (r, c) };
                t.push((b.row_offset + r, b.col_offset + c, b.scale * v));
            }
        }
        Self::from_triplets(nrows, ncols, t, symmetric)
    }
}

/// One block placement for [`SparseMatrix::from_blocks`].
pub struct BlockSpec<'a> {
    pub row_offset: usize,
    pub col_offset: usize,
    pub mat: &'a SparseMatrix,
    pub transpose: bool,
    pub scale: f64,
}

impl<'a> BlockSpec<'a> {
    pub fn new(row_offset: usize, col_offset: usize, mat: &'a SparseMatrix) -> Self {
        Self { row_offset, col_offset, mat, transpose: false, scale: 1.0 }
    }
    pub fn transposed(mut self) -> Self {
        self.transpose = true;
        self
    }
    pub fn scaled(mut self, s: f64) -> Self {
        self.scale = s;
        self
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Local vertex indices `(la, lb)` of local edge `l` of triangle `t`, ordered
/// so that the global indices satisfy `tri[la] < tri[lb]` (the global edge
/// orientation). Local edge `l` connects local vertices `l` and `(l+1) % 3`.
pub fn local_edge_vertices(mesh: &Triangulation, t: usize, l: usize) -> (usize, usize) {
    let tri = mesh.triangles()[t];
    let (i, j) = (l, (l + 1) % 3);
    if tri[i] < tri[j] {
        (i, j)
    } else {
        (j, i)
    }
}

/// Constant value of `rot psi_{E_l}` on triangle `t` for each local edge
/// (equals `div chi_{E_l}` for the rotated Raviart–Thomas basis). The integral
/// over `t` is the orientation sign `±1`.
pub fn rot_consts(mesh: &Triangulation, t: usize) -> [f64; 3] {
    let g = mesh.grads(t);
    let mut r = [0.0; 3];
    for l in 0..3 {
        let (la, lb) = local_edge_vertices(mesh, t, l);
        r[l] = 2.0 * cross(g[la], g[lb]);
    }
    r
}

/// `∫_T psi_{E_l} dx` for each local edge of triangle `t`.
pub fn psi_integrals(mesh: &Triangulation, t: usize) -> [[f64; 2]; 3] {
    let g = mesh.grads(t);
    let a = mesh.area(t);
    let mut q = [[0.0; 2]; 3];
    for l in 0..3 {
        let (la, lb) = local_edge_vertices(mesh, t, l);
        q[l] = [a / 3.0 * (g[lb][0] - g[la][0]), a / 3.0 * (g[lb][1] - g[la][1])];
    }
    q
}

/// Exact squared norms of the local basis functions on one triangle.
#[derive(Debug, Clone, Copy)]
pub struct BasisNorms {
    /// `‖lambda_{y_l}‖²_{L²(T)} = meas(T)/6` for each local vertex.
    pub lambda_l2_sq: [f64; 3],
    /// `‖∇lambda_{y_l}‖²_{L²(T)}` for each local vertex.
    pub grad_lambda_l2_sq: [f64; 3],
    /// `‖psi_{E_l}‖²_{L²(T)}` for each local edge.
    pub psi_l2_sq: [f64; 3],
}

/// Computes the exact basis-function norms on triangle `t`.
pub fn basis_norms(mesh: &Triangulation, t: usize) -> BasisNorms {
    let a = mesh.area(t);
    let g = mesh.grads(t);
    let mut out = BasisNorms {
        lambda_l2_sq: [a / 6.0; 3],
        grad_lambda_l2_sq: [0.0; 3],
        psi_l2_sq: [0.0; 3],
    };
    for i in 0..3 {
        out.grad_lambda_l2_sq[i] = a * dot(g[i], g[i]);
    }
    for l in 0..3 {
        let (la, lb) = local_edge_vertices(mesh, t, l);
        out.psi_l2_sq[l] =
            a / 6.0 * (dot(g[la], g[la]) + dot(g[lb], g[lb]) - dot(g[la], g[lb]));
    }
    out
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.to_string()))
    }
}

/// Assembles the L² Gram (mass) matrix of the space's basis.
pub fn assemble_mass(space: &FeSpace<'_>) -> Result<SparseSymMatrix> {
    let mesh = space.mesh();
    let n = space.dofs();
    let mut t = Vec::new();
    match space.family() {
        Family::S1 | Family::S1Zero => {
            for tt in 0..mesh.num_triangles() {
                let tri = mesh.triangles()[tt];
                let a = mesh.area(tt);
                for (i, &vi) in tri.iter().enumerate() {
                    for (j, &vj) in tri.iter().enumerate() {
                        if let (Some(di), Some(dj)) =
                            (space.dof_of_entity(vi), space.dof_of_entity(vj))
                        {
                            let v = if i == j { a / 6.0 } else { a / 12.0 };
                            t.push((di, dj, v));
                        }
                    }
                }
            }
        }
        Family::Cr => {
            for tt in 0..mesh.num_triangles() {
                let a = mesh.area(tt);
                for &e in &mesh.tri_edges()[tt] {
                    t.push((e, e, a / 3.0));
                }
            }
        }
        Family::N0 | Family::N0TangentialZero | Family::Rt0 | Family::Rt0NormalZero => {
            // The rotated Raviart–Thomas basis has the same Gram matrix as the
            // Nédélec basis because the rotation is a pointwise isometry.
            for tt in 0..mesh.num_triangles() {
                scatter_edge_pair_form(space, space, tt, dot, &mut t);
            }
        }
        Family::P0Vec => {
            for tt in 0..mesh.num_triangles() {
                let a = mesh.area(tt);
                t.push((2 * tt, 2 * tt, a));
                t.push((2 * tt + 1, 2 * tt + 1, a));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t, true)
}

/// Shared four-term local form for products of Whitney edge functions,
/// parametrized by the vector pairing (`dot` for mass, `cross` for the mixed
/// Nédélec/Raviart–Thomas Gram).
fn scatter_edge_pair_form(
    rows: &FeSpace<'_>,
    cols: &FeSpace<'_>,
    tt: usize,
    pair: fn([f64; 2], [f64; 2]) -> f64,
    out: &mut Vec<(usize, usize, f64)>,
) {
    let mesh = rows.mesh();
    let te = mesh.tri_edges()[tt];
    let g = mesh.grads(tt);
    let a = mesh.area(tt);
    let ii = |p: usize, q: usize| if p == q { a / 6.0 } else { a / 12.0 };
    let lp: Vec<(usize, usize)> = (0..3).map(|l| local_edge_vertices(mesh, tt, l)).collect();
    for l1 in 0..3 {
        let (a1, b1) = lp[l1];
        for l2 in 0..3 {
            let (a2, b2) = lp[l2];
            let v = ii(a1, a2) * pair(g[b1], g[b2]) - ii(a1, b2) * pair(g[b1], g[a2])
                - ii(b1, a2) * pair(g[a1], g[b2])
                + ii(b1, b2) * pair(g[a1], g[a2]);
            if let (Some(di), Some(dj)) = (rows.dof_of_entity(te[l1]), cols.dof_of_entity(te[l2]))
            {
                out.push((di, dj, v));
            }
        }
    }
}

/// Assembles the gradient stiffness matrix `(∇u, ∇v)` for a scalar family
/// (`S1`, `S1Zero`, or `Cr`).
pub fn assemble_stiffness_grad(space: &FeSpace<'_>) -> Result<SparseSymMatrix> {
    let mesh = space.mesh();
    let n = space.dofs();
    let mut t = Vec::new();
    match space.family() {
        Family::S1 | Family::S1Zero => {
            for tt in 0..mesh.num_triangles() {
                let tri = mesh.triangles()[tt];
                let g = mesh.grads(tt);
                let a = mesh.area(tt);
                for i in 0..3 {
                    for j in 0..3 {
                        if let (Some(di), Some(dj)) =
                            (space.dof_of_entity(tri[i]), space.dof_of_entity(tri[j]))
                        {
                            t.push((di, dj, a * dot(g[i], g[j])));
                        }
                    }
                }
            }
        }
        Family::Cr => {
            // Crouzeix–Raviart basis on edge l is 1 - 2*lambda_{(l+2)%3}.
            for tt in 0..mesh.num_triangles() {
                let te = mesh.tri_edges()[tt];
                let g = mesh.grads(tt);
                let a = mesh.area(tt);
                for l1 in 0..3 {
                    for l2 in 0..3 {
                        let v = 4.0 * a * dot(g[(l1 + 2) % 3], g[(l2 + 2) % 3]);
                        t.push((te[l1], te[l2], v));
                    }
                }
            }
        }
        f => {
            return Err(Error::Config(format!(
                "stiffness_grad needs a scalar family, got {f:?}"
            )))
        }
    }
    SparseMatrix::from_triplets(n, n, t, true)
}

/// Assembles `(rot u, rot v)` for an edge-element family. Under the rotation
/// isomorphism this is the `(div u, div v)` matrix for the Raviart–Thomas
/// families.
pub fn assemble_rotrot(space: &FeSpace<'_>) -> Result<SparseSymMatrix> {
    require(space.family().is_edge(), "rotrot needs an edge-element family")?;
    let mesh = space.mesh();
    let n = space.dofs();
    let mut t = Vec::new();
    for tt in 0..mesh.num_triangles() {
        let te = mesh.tri_edges()[tt];
        let r = rot_consts(mesh, tt);
        let a = mesh.area(tt);
        for l1 in 0..3 {
            for l2 in 0..3 {
                if let (Some(di), Some(dj)) =
                    (space.dof_of_entity(te[l1]), space.dof_of_entity(te[l2]))
                {
                    t.push((di, dj, a * r[l1] * r[l2]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t, true)
}

/// Assembles the coupling `F[v, E] = (∇lambda_v, psi_E)_{L²}` between a scalar
/// vertex family (rows) and an edge family (columns).
///
/// For Raviart–Thomas columns the same numbers represent `-(Curl lambda_v, chi_E)`
/// under the rotation isomorphism, which is the kernel constraint used in the
/// local divergence minimizations; only the kernel of the matrix matters there.
pub fn assemble_grad_coupling(
    scalar: &FeSpace<'_>,
    edge: &FeSpace<'_>,
) -> Result<SparseMatrix> {
    require(scalar.family().is_scalar(), "grad_coupling rows need S1 or S1Zero")?;
    require(edge.family().is_edge(), "grad_coupling columns need an edge family")?;
    let mesh = scalar.mesh();
    let mut t = Vec::new();
    for tt in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[tt];
        let te = mesh.tri_edges()[tt];
        let g = mesh.grads(tt);
        let a = mesh.area(tt);
        for (lv, &v) in tri.iter().enumerate() {
            let Some(dv) = scalar.dof_of_entity(v) else { continue };
            for l in 0..3 {
                let Some(de) = edge.dof_of_entity(te[l]) else { continue };
                let (la, lb) = local_edge_vertices(mesh, tt, l);
                t.push((dv, de, a / 3.0 * (dot(g[lv], g[lb]) - dot(g[lv], g[la]))));
            }
        }
    }
    SparseMatrix::from_triplets(scalar.dofs(), edge.dofs(), t, false)
}

/// Assembles `G[(t,c), v] = ∫_T (Curl lambda_v)_c dx` with
/// `Curl phi = (-∂₂phi, ∂₁phi)`: rows are `P0Vec` dofs, columns scalar dofs.
pub fn assemble_curl_coupling(scalar: &FeSpace<'_>, p0: &FeSpace<'_>) -> Result<SparseMatrix> {
    require(scalar.family().is_scalar(), "curl_coupling columns need S1 or S1Zero")?;
    require(p0.family() == Family::P0Vec, "curl_coupling rows need P0Vec")?;
    let mesh = scalar.mesh();
    let mut t = Vec::new();
    for tt in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[tt];
        let g = mesh.grads(tt);
        let a = mesh.area(tt);
        for (lv, &v) in tri.iter().enumerate() {
            let Some(dv) = scalar.dof_of_entity(v) else { continue };
            t.push((2 * tt, dv, a * (-g[lv][1])));
            t.push((2 * tt + 1, dv, a * g[lv][0]));
        }
    }
    SparseMatrix::from_triplets(p0.dofs(), scalar.dofs(), t, false)
}

/// Assembles the normal-jump constraint matrix: one row per interior edge `E`,
/// columns over `P0Vec` dofs, entries `±|E| n_E` with `+` for the first and
/// `-` for the second incident triangle. The kernel is the space of
/// normal-continuous piecewise-constant vector fields (divergence-free
/// Raviart–Thomas fields), of dimension `V - 1` on the simply connected
/// domains in scope.
///
/// The `|E|` scaling is a conditioning choice; it leaves the kernel unchanged.
pub fn assemble_normal_jump(p0: &FeSpace<'_>) -> Result<SparseMatrix> {
    require(p0.family() == Family::P0Vec, "normal_jump needs P0Vec")?;
    let mesh = p0.mesh();
    let interior: Vec<usize> = (0..mesh.num_edges())
        .filter(|&e| !mesh.is_boundary_edge(e))
        .collect();
    let mut t = Vec::new();
    for (row, &e) in interior.iter().enumerate() {
        let n = mesh.edge_normal(e);
        let len = mesh.edge_len(e);
        let (t0, t1) = mesh.edge_tris(e);
        let t1 = t1.expect("interior edge has two triangles");
        for c in 0..2 {
            t.push((row, 2 * t0 + c, len * n[c]));
            t.push((row, 2 * t1 + c, -len * n[c]));
        }
    }
    SparseMatrix::from_triplets(interior.len(), p0.dofs(), t, false)
}

/// Assembles `B[E, (t,c)] = ∫_T (psi_E)_c dx`: rows over an edge family,
/// columns over `P0Vec` dofs.
pub fn assemble_edge_p0_coupling(edge: &FeSpace<'_>, p0: &FeSpace<'_>) -> Result<SparseMatrix> {
    require(edge.family().is_edge(), "edge_p0_coupling rows need an edge family")?;
    require(p0.family() == Family::P0Vec, "edge_p0_coupling columns need P0Vec")?;
    let mesh = edge.mesh();
    let mut t = Vec::new();
    for tt in 0..mesh.num_triangles() {
        let te = mesh.tri_edges()[tt];
        let q = psi_integrals(mesh, tt);
        for l in 0..3 {
            let Some(de) = edge.dof_of_entity(te[l]) else { continue };
            t.push((de, 2 * tt, q[l][0]));
            t.push((de, 2 * tt + 1, q[l][1]));
        }
    }
    SparseMatrix::from_triplets(edge.dofs(), p0.dofs(), t, false)
}

/// Assembles the mixed Gram `X[E, E'] = (psi_E, chi_{E'})_{L²}` between the
/// Nédélec basis (rows) and the rotated Raviart–Thomas basis (columns).
pub fn assemble_n0_rt0_mixed(n0: &FeSpace<'_>, rt0: &FeSpace<'_>) -> Result<SparseMatrix> {
    require(
        matches!(n0.family(), Family::N0 | Family::N0TangentialZero),
        "mixed Gram rows need a Nédélec family",
    )?;
    require(
        matches!(rt0.family(), Family::Rt0 | Family::Rt0NormalZero),
        "mixed Gram columns need a Raviart–Thomas family",
    )?;
    let mesh = n0.mesh();
    let mut t = Vec::new();
    for tt in 0..mesh.num_triangles() {
        // psi · (R psi') replaces the dot pairing by the scalar cross product.
        scatter_edge_pair_form(n0, rt0, tt, cross, &mut t);
    }
    SparseMatrix::from_triplets(n0.dofs(), rt0.dofs(), t, false)
}

/// Re-assembles the scalar and edge-element mass matrices with a degree-2
/// edge-midpoint quadrature (exact for the quadratic integrands, but an
/// independent evaluation path) and returns the largest relative entry
/// deviation from the closed-form assembly.
pub fn quadrature_audit(mesh: &Triangulation) -> Result<f64> {
    use nalgebra::DMatrix;
    let midpoint_quad = |t: usize, f: &dyn Fn([f64; 3]) -> f64| -> f64 {
        let a = mesh.area(t);
        let mids = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        a / 3.0 * mids.iter().map(|&m| f(m)).sum::<f64>()
    };
    let s1 = FeSpace::new(mesh, Family::S1);
    let n0 = FeSpace::new(mesh, Family::N0);
    let ms = assemble_mass(&s1)?.to_dense();
    let mn = assemble_mass(&n0)?.to_dense();
    let mut qs = DMatrix::zeros(s1.dofs(), s1.dofs());
    let mut qn = DMatrix::zeros(n0.dofs(), n0.dofs());
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[t];
        let te = mesh.tri_edges()[t];
        let g = mesh.grads(t);
        let psi = |l: usize, lam: [f64; 3]| -> [f64; 2] {
            let (a, b) = local_edge_vertices(mesh, t, l);
            [lam[a] * g[b][0] - lam[b] * g[a][0], lam[a] * g[b][1] - lam[b] * g[a][1]]
        };
        for i in 0..3 {
            for j in 0..3 {
                qs[(tri[i], tri[j])] += midpoint_quad(t, &|lam| lam[i] * lam[j]);
                qn[(te[i], te[j])] += midpoint_quad(t, &|lam| {
                    let (p1, p2) = (psi(i, lam), psi(j, lam));
                    p1[0] * p2[0] + p1[1] * p2[1]
                });
            }
        }
    }
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).abs().max() / a.abs().max();
    Ok(rel(&ms, &qs).max(rel(&mn, &qn)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_lshape, generate_square, Triangulation};
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_right_triangle() -> Triangulation {
        Triangulation::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    /// Degree-2-exact edge-midpoint quadrature: `∫_T f ≈ (A/3) Σ f(m_l)`.
    fn midpoint_quad(mesh: &Triangulation, t: usize, f: impl Fn([f64; 3]) -> f64) -> f64 {
        let a = mesh.area(t);
        let mids = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        a / 3.0 * mids.iter().map(|&m| f(m)).sum::<f64>()
    }

    #[test]
    fn s1_mass_single_triangle_matches_symbolic() {
        let m = unit_right_triangle();
        let s1 = FeSpace::new(&m, Family::S1);
        let mass = assemble_mass(&s1).unwrap().to_dense();
        let expect = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0])
            / 24.0;
        assert!((mass - expect).abs().max() < 1e-15);
    }

    #[test]
    fn s1_stiffness_single_triangle_matches_symbolic() {
        let m = unit_right_triangle();
        let s1 = FeSpace::new(&m, Family::S1);
        let k = assemble_stiffness_grad(&s1).unwrap().to_dense();
        let expect =
            DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 1.0, 0.0, -1.0, 0.0, 1.0]) * 0.5;
        assert!((k - expect).abs().max() < 1e-15);
    }

    #[test]
    fn mass_matrices_are_spd() {
        let m = generate_square(2);
        for fam in [Family::S1, Family::Cr, Family::N0, Family::Rt0, Family::P0Vec] {
            let sp = FeSpace::new(&m, fam);
            let mass = assemble_mass(&sp).unwrap();
            let d = mass.to_dense();
            assert!((&d - d.transpose()).abs().max() == 0.0, "{fam:?} mass not symmetric");
            let eig = d.symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min > 1e-12, "{fam:?} mass not SPD (min eig {min})");
        }
    }

    #[test]
    fn stiffness_kernel_is_constants() {
        let m = generate_square(2);
        for fam in [Family::S1, Family::Cr] {
            let sp = FeSpace::new(&m, fam);
            let k = assemble_stiffness_grad(&sp).unwrap();
            let ones = vec![1.0; sp.dofs()];
            let r = k.matvec(&ones);
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm < 1e-13, "{fam:?} stiffness does not kill constants ({norm})");
            let eig = k.to_dense().symmetric_eigen();
            let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
            ev.sort_by(f64::total_cmp);
            assert!(ev[0].abs() < 1e-12 && ev[1] > 1e-10, "{fam:?} kernel dim must be 1");
        }
        let s1z = FeSpace::new(&m, Family::S1Zero);
        let k = assemble_stiffness_grad(&s1z).unwrap().to_dense();
        let min = k
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min > 1e-10, "S1Zero stiffness must be SPD");
    }

    #[test]
    fn rot_of_discrete_gradient_vanishes_exactly() {
        let m = generate_square(2);
        let n0 = FeSpace::new(&m, Family::N0);
        let rotrot = assemble_rotrot(&n0).unwrap();
        // Whitney gradient identity: grad(v_h) has edge coefficients v_b - v_a.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..m.num_vertices()).map(|_| rng.random::<f64>() - 0.5).collect();
        let gv: Vec<f64> = m.edges().iter().map(|&[a, b]| v[b] - v[a]).collect();
        let r = rotrot.matvec(&gv);
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-12, "rot(grad v_h) must vanish, got {norm}");
    }

    #[test]
    fn rotrot_kernel_dim_on_constrained_space() {
        // Level-1 square: dim ker(rotrot on N0 tangential-zero) = interior vertices = 1.
        let m = generate_square(1);
        let n0d = FeSpace::new(&m, Family::N0TangentialZero);
        let r = assemble_rotrot(&n0d).unwrap().to_dense();
        let kernel_dim = r
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .filter(|&&l| l.abs() < 1e-10)
            .count();
        assert_eq!(kernel_dim, 1);
    }

    #[test]
    fn grad_coupling_equals_incidence_times_mass() {
        let m = generate_square(2);
        let s1z = FeSpace::new(&m, Family::S1Zero);
        let n0d = FeSpace::new(&m, Family::N0TangentialZero);
        let f = assemble_grad_coupling(&s1z, &n0d).unwrap().to_dense();
        let mn = assemble_mass(&FeSpace::new(&m, Family::N0)).unwrap().to_dense();
        // Incidence: column v of D holds the N0 coefficients of grad(lambda_v).
        let mut inc = DMatrix::zeros(m.num_edges(), s1z.dofs());
        for (e, &[a, b]) in m.edges().iter().enumerate() {
            if let Some(dv) = s1z.dof_of_entity(a) {
                inc[(e, dv)] = -1.0;
            }
            if let Some(dv) = s1z.dof_of_entity(b) {
                inc[(e, dv)] = 1.0;
            }
        }
        let full = inc.transpose() * mn; // rows s1z, cols all edges
        let mut restricted = DMatrix::zeros(s1z.dofs(), n0d.dofs());
        for (de, &e) in n0d.entity_of_dof().iter().enumerate() {
            for r in 0..s1z.dofs() {
                restricted[(r, de)] = full[(r, e)];
            }
        }
        assert!((f - restricted).abs().max() < 1e-14);
    }

    #[test]
    fn grad_coupling_rank_and_level1_shape() {
        let m = generate_square(1);
        let s1z = FeSpace::new(&m, Family::S1Zero);
        let n0d = FeSpace::new(&m, Family::N0TangentialZero);
        let f = assemble_grad_coupling(&s1z, &n0d).unwrap();
        assert_eq!((f.nrows(), f.ncols()), (1, 8));
        let m2 = generate_square(2);
        let s1z2 = FeSpace::new(&m2, Family::S1Zero);
        let n0d2 = FeSpace::new(&m2, Family::N0TangentialZero);
        let f2 = assemble_grad_coupling(&s1z2, &n0d2).unwrap().to_dense();
        let rank = f2.svd(false, false).rank(1e-10);
        assert_eq!(rank, s1z2.dofs());
    }

    #[test]
    fn nedelec_duality_on_edge_midpoints() {
        // ∫_{E'} psi_E · t_{E'} ds = δ_{E E'}; the integrand is linear along E',
        // so the midpoint value times |E'| is exact.
        let m = generate_square(2);
        for t in 0..m.num_triangles() {
            let te = m.tri_edges()[t];
            let g = m.grads(t);
            for l in 0..3 {
                let (la, lb) = local_edge_vertices(&m, t, l);
                for lp in 0..3 {
                    let ep = te[lp];
                    // Barycentric coordinates at the midpoint of local edge lp.
                    let mut lam = [0.0; 3];
                    lam[lp] = 0.5;
                    lam[(lp + 1) % 3] = 0.5;
                    let psi = [
                        lam[la] * g[lb][0] - lam[lb] * g[la][0],
                        lam[la] * g[lb][1] - lam[lb] * g[la][1],
                    ];
                    let tan = m.edge_tangent(ep);
                    let v = (psi[0] * tan[0] + psi[1] * tan[1]) * m.edge_len(ep);
                    let expect = if lp == l { 1.0 } else { 0.0 };
                    assert!(
                        (v - expect).abs() < 1e-13,
                        "duality failed: tri {t} edges {l},{lp}: {v} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn two_quadratures_agree() {
        // Closed-form assembly vs degree-2 edge-midpoint quadrature.
        for m in [generate_lshape(1), generate_square(2)] {
            assert!(quadrature_audit(&m).unwrap() < 1e-14);
        }
    }

    #[test]
    fn curl_energy_matches_grad_stiffness() {
        // |Curl v| = |∇v| pointwise, so the P0vec representation of Curl v has
        // the same energy as the gradient stiffness quadratic form.
        let m = generate_square(2);
        let s1 = FeSpace::new(&m, Family::S1);
        let p0 = FeSpace::new(&m, Family::P0Vec);
        let g = assemble_curl_coupling(&s1, &p0).unwrap();
        let k = assemble_stiffness_grad(&s1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..s1.dofs()).map(|_| rng.random::<f64>() - 0.5).collect();
        let gx = g.matvec(&x);
        let mut energy = 0.0;
        for t in 0..m.num_triangles() {
            let a = m.area(t);
            energy += (gx[2 * t].powi(2) + gx[2 * t + 1].powi(2)) / a;
        }
        let kx = k.matvec(&x);
        let expect: f64 = x.iter().zip(&kx).map(|(a, b)| a * b).sum();
        assert!((energy - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn normal_jump_kernel() {
        for m in [generate_square(1), generate_lshape(1)] {
            let p0 = FeSpace::new(&m, Family::P0Vec);
            let c = assemble_normal_jump(&p0).unwrap();
            // Globally constant fields are normal-continuous.
            let mut ones = vec![0.0; p0.dofs()];
            for t in 0..m.num_triangles() {
                ones[2 * t] = 1.0;
                ones[2 * t + 1] = -2.0;
            }
            let jumps = c.matvec(&ones);
            assert!(jumps.iter().all(|j| j.abs() < 1e-13));
            // Kernel = divergence-free Raviart–Thomas fields = Curl S1, dim V-1.
            let rank = c.to_dense().svd(false, false).rank(1e-10);
            assert_eq!(p0.dofs() - rank, m.num_vertices() - 1);
        }
    }

    #[test]
    fn basis_norms_match_quadrature() {
        let m = generate_lshape(1);
        for t in 0..m.num_triangles() {
            let bn = basis_norms(&m, t);
            let a = m.area(t);
            let g = m.grads(t);
            for i in 0..3 {
                assert!((bn.lambda_l2_sq[i] - a / 6.0).abs() < 1e-15);
                let q = midpoint_quad(&m, t, |lam| lam[i] * lam[i]);
                assert!((bn.lambda_l2_sq[i] - q).abs() < 1e-15);
                let gg = a * (g[i][0] * g[i][0] + g[i][1] * g[i][1]);
                assert!((bn.grad_lambda_l2_sq[i] - gg).abs() < 1e-15);
            }
            for l in 0..3 {
                let (la, lb) = local_edge_vertices(&m, t, l);
                let q = midpoint_quad(&m, t, |lam| {
                    let p = [
                        lam[la] * g[lb][0] - lam[lb] * g[la][0],
                        lam[la] * g[lb][1] - lam[lb] * g[la][1],
                    ];
                    p[0] * p[0] + p[1] * p[1]
                });
                assert!((bn.psi_l2_sq[l] - q).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rot_consts_integrate_to_orientation_sign() {
        let m = generate_lshape(1);
        for t in 0..m.num_triangles() {
            let r = rot_consts(&m, t);
            let a = m.area(t);
            let signs = m.tri_edge_signs()[t];
            for l in 0..3 {
                // ∫_T rot psi dx = ±1 depending on traversal direction.
                assert!(
                    (a * r[l] - signs[l] as f64).abs() < 1e-13,
                    "tri {t} edge {l}: {} vs sign {}",
                    a * r[l],
                    signs[l]
                );
            }
        }
    }

    #[test]
    fn edge_p0_coupling_matches_psi_integrals() {
        let m = generate_square(1);
        let n0 = FeSpace::new(&m, Family::N0);
        let p0 = FeSpace::new(&m, Family::P0Vec);
        let b = assemble_edge_p0_coupling(&n0, &p0).unwrap();
        // Row e applied to the indicator of component c on triangle t gives
        // ∫_T (psi_e)_c; verify against midpoint quadrature.
        let d = b.to_dense();
        for t in 0..m.num_triangles() {
            let te = m.tri_edges()[t];
            let g = m.grads(t);
            for l in 0..3 {
                let (la, lb) = local_edge_vertices(&m, t, l);
                for c in 0..2 {
                    let q = midpoint_quad(&m, t, |lam| lam[la] * g[lb][c] - lam[lb] * g[la][c]);
                    assert!((d[(te[l], 2 * t + c)] - q).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn mixed_gram_is_skew_pattern_of_rotation() {
        // (psi_E, R psi_E) = 0 pointwise would be false in general, but the
        // mixed Gram must match a quadrature oracle.
        let m = generate_square(1);
        let n0 = FeSpace::new(&m, Family::N0);
        let rt0 = FeSpace::new(&m, Family::Rt0);
        let x = assemble_n0_rt0_mixed(&n0, &rt0).unwrap().to_dense();
        let mut q = DMatrix::zeros(n0.dofs(), rt0.dofs());
        for t in 0..m.num_triangles() {
            let te = m.tri_edges()[t];
            let g = m.grads(t);
            for l1 in 0..3 {
                let (a1, b1) = local_edge_vertices(&m, t, l1);
                for l2 in 0..3 {
                    let (a2, b2) = local_edge_vertices(&m, t, l2);
                    q[(te[l1], te[l2])] += midpoint_quad(&m, t, |lam| {
                        let p1 = [
                            lam[a1] * g[b1][0] - lam[b1] * g[a1][0],
                            lam[a1] * g[b1][1] - lam[b1] * g[a1][1],
                        ];
                        let p2 = [
                            lam[a2] * g[b2][0] - lam[b2] * g[a2][0],
                            lam[a2] * g[b2][1] - lam[b2] * g[a2][1],
                        ];
                        // chi = R psi = (psi_y, -psi_x); psi1 · chi2 = cross(psi1, psi2).
                        p1[0] * p2[1] - p1[1] * p2[0]
                    });
                }
            }
        }
        assert!((x - q).abs().max() < 1e-14);
    }

    #[test]
    fn dof_counts_per_family() {
        let m = generate_square(2);
        let (v, e, t) = (m.num_vertices(), m.num_edges(), m.num_triangles());
        let vi = (0..v).filter(|&x| !m.is_boundary_vertex(x)).count();
        let ei = (0..e).filter(|&x| !m.is_boundary_edge(x)).count();
        let expect = [
            (Family::S1, v),
            (Family::S1Zero, vi),
            (Family::Cr, e),
            (Family::N0, e),
            (Family::N0TangentialZero, ei),
            (Family::Rt0, e),
            (Family::Rt0NormalZero, ei),
            (Family::P0Vec, 2 * t),
        ];
        for (fam, n) in expect {
            assert_eq!(FeSpace::new(&m, fam).dofs(), n, "{fam:?}");
        }
    }

    #[test]
    fn block_assembly_and_matvec_roundtrip() {
        let m = generate_square(1);
        let s1z = FeSpace::new(&m, Family::S1Zero);
        let n0d = FeSpace::new(&m, Family::N0TangentialZero);
        let d = assemble_rotrot(&n0d).unwrap();
        let f = assemble_grad_coupling(&s1z, &n0d).unwrap();
        let (ne, nv) = (n0d.dofs(), s1z.dofs());
        let saddle = SparseMatrix::from_blocks(
            ne + nv,
            ne + nv,
            &[
                BlockSpec::new(0, 0, &d),
                BlockSpec::new(0, ne, &f).transposed(),
                BlockSpec::new(ne, 0, &f),
            ],
            true,
        )
        .unwrap();
        let dd = saddle.to_dense();
        assert!((&dd - dd.transpose()).abs().max() == 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..ne + nv).map(|_| rng.random::<f64>() - 0.5).collect();
        let y1 = saddle.matvec(&x);
        let xv = nalgebra::DVector::from_vec(x.clone());
        let y2 = &dd * xv;
        for i in 0..ne + nv {
            assert!((y1[i] - y2[i]).abs() < 1e-13);
        }
    }
}
