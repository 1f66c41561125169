//! Surrogate error functional and the hypercircle constant `κ_h`.
//!
//! For a divergence-feasible piecewise-constant vector datum `f_h`, the
//! primal problem returns the edge-element solution `u_h` and the dual
//! problem an equilibrated continuous flux potential `σ_h`.  The squared
//! flux gap `‖rot u_h − σ_h‖²` is a quadratic functional `f ↦ fᵀQf` whose
//! largest constrained Rayleigh quotient against the piecewise-constant
//! mass matrix defines `κ_h`.  `Q` is never formed: each application costs
//! one solve with the prefactored primal saddle matrix and one with the
//! prefactored dual saddle matrix.

use crate::error::{Error, Result};
use crate::mesh::{red_refine, Triangulation};
use crate::solvers::{largest_eig_power, saddle_with_constraints, Factorization, PowerOpts};
use crate::spaces::{
    assemble_curl_coupling, assemble_edge_p0_coupling, assemble_grad_coupling, assemble_mass,
    assemble_normal_jump, assemble_rotrot, rot_consts, BlockSpec, FeSpace, Family, SparseMatrix,
};

/// Relative feasibility tolerance for the normal-jump constraint on data.
const FEASIBILITY_TOL: f64 = 1e-8;

/// Safety inflation applied to the reported `κ_h` so that it stays an upper
/// bound for the attained Rayleigh quotient within the power-method
/// tolerance.
const KAPPA_INFLATION: f64 = 1e-8;

/// Prefactored saddle systems realizing the surrogate error functional on
/// one mesh.
pub struct KappaProblem<'m> {
    mesh: &'m Triangulation,
    /// Interior-edge dof index per global edge (`None` on the boundary).
    edge_dof: Vec<Option<usize>>,
    n_int_edges: usize,
    n_int_verts: usize,
    num_p0: usize,
    num_verts: usize,
    /// Edge/element coupling `B[E, (t,c)] = ∫_T (ψ_E)_c`, interior rows.
    b: SparseMatrix,
    /// Piecewise-constant vector mass diagonal (areas, repeated twice).
    m_diag: Vec<f64>,
    /// The same mass as a sparse matrix.
    m_mat: SparseMatrix,
    /// Full vertex mass matrix of the continuous scalar space.
    a_mat: SparseMatrix,
    /// Normal-jump constraint rows `Cᵀ` (one row per interior edge).
    jump_t: SparseMatrix,
    /// Factorization of the primal saddle `[[D, Fᵀ], [F, 0]]`.
    l_fact: Factorization,
    /// Factorization of the dual saddle `[[A, Gᵀ, 0], [G, 0, C], [0, Cᵀ, 0]]`.
    k_fact: Factorization,
    /// Factorization of the feasibility projector `[[M, C], [Cᵀ, 0]]`.
    proj_fact: Factorization,
}

/// Intermediate fields of one application of the error functional operator.
pub struct QParts {
    /// Operator image `Q f` over piecewise-constant vector dofs.
    pub q: Vec<f64>,
    /// Primal edge-element solution `u_h` (interior-edge coefficients).
    pub flux: Vec<f64>,
    /// Dual flux potential `σ_h` (vertex coefficients).
    pub sigma: Vec<f64>,
    /// Dual piecewise-constant block of the saddle solution.
    pub p0_dual: Vec<f64>,
    /// Dual edge multipliers of the normal-jump constraint.
    pub edge_multiplier: Vec<f64>,
}

/// Result of the `κ_h` power iteration.
#[derive(Debug, Clone)]
pub struct KappaResult {
    /// Certified constant `√μ·(1 + 1e-8)`.
    pub kappa: f64,
    /// Attained Rayleigh quotient `μ` of the final feasible iterate.
    pub mu: f64,
    /// Power iterations performed.
    pub iterations: usize,
    /// Maximizing feasible datum (M-normalized).
    pub maximizer: Vec<f64>,
}

impl<'m> KappaProblem<'m> {
    /// Assembles and prefactors the primal and dual saddle systems.
    pub fn new(mesh: &'m Triangulation) -> Result<Self> {
        let n0z = FeSpace::new(mesh, Family::N0TangentialZero);
        let s1z = FeSpace::new(mesh, Family::S1Zero);
        let s1 = FeSpace::new(mesh, Family::S1);
        let p0 = FeSpace::new(mesh, Family::P0Vec);
        let (ne, nvi) = (n0z.dofs(), s1z.dofs());
        let (nv, np0) = (s1.dofs(), p0.dofs());

        let rotrot = assemble_rotrot(&n0z)?;
        let grad_cpl = assemble_grad_coupling(&s1z, &n0z)?;
        let l_mat = SparseMatrix::from_blocks(
            ne + nvi,
            ne + nvi,
            &[
                BlockSpec::new(0, 0, &rotrot),
                BlockSpec::new(0, ne, &grad_cpl).transposed(),
                BlockSpec::new(ne, 0, &grad_cpl),
            ],
            true,
        )?;

        let a_mat = assemble_mass(&s1)?;
        let curl_cpl = assemble_curl_coupling(&s1, &p0)?;
        let jump_t = assemble_normal_jump(&p0)?;
        let k_mat = SparseMatrix::from_blocks(
            nv + np0 + ne,
            nv + np0 + ne,
            &[
                BlockSpec::new(0, 0, &a_mat),
                BlockSpec::new(nv, 0, &curl_cpl),
                BlockSpec::new(0, nv, &curl_cpl).transposed(),
                BlockSpec::new(nv, nv + np0, &jump_t).transposed(),
                BlockSpec::new(nv + np0, nv, &jump_t),
            ],
            true,
        )?;

        let b = assemble_edge_p0_coupling(&n0z, &p0)?;
        let m_diag: Vec<f64> = (0..np0 / 2).flat_map(|t| [mesh.area(t), mesh.area(t)]).collect();
        let m_mat = SparseMatrix::from_triplets(
            np0,
            np0,
            m_diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect(),
            true,
        )?;
        let proj = saddle_with_constraints(&m_mat, Some(&jump_t))?;

        let edge_dof = (0..mesh.num_edges()).map(|e| n0z.dof_of_entity(e)).collect();
        Ok(Self {
            mesh,
            edge_dof,
            n_int_edges: ne,
            n_int_verts: nvi,
            num_p0: np0,
            num_verts: nv,
            b,
            m_diag,
            m_mat,
            a_mat,
            jump_t,
            l_fact: Factorization::new(&l_mat)?,
            k_fact: Factorization::new(&k_mat)?,
            proj_fact: Factorization::new(&proj)?,
        })
    }

    /// The underlying mesh.
    pub fn mesh(&self) -> &Triangulation {
        self.mesh
    }

    /// Number of piecewise-constant vector dofs (`2 · #elements`).
    pub fn num_p0(&self) -> usize {
        self.num_p0
    }

    /// Number of interior-edge (primal) dofs.
    pub fn num_interior_edges(&self) -> usize {
        self.n_int_edges
    }

    /// Nonsingularity diagnostics `(n₊, n₋, n₀)` of both saddle
    /// factorizations (dense eigendecomposition; intended for small meshes
    /// and tests).
    pub fn inertia(&self) -> ((usize, usize, usize), (usize, usize, usize)) {
        (self.l_fact.inertia(), self.k_fact.inertia())
    }

    /// Applies the error functional operator and returns all recovered
    /// fields.
    pub fn apply_q_parts(&self, f: &[f64]) -> QParts {
        assert_eq!(f.len(), self.num_p0, "datum length must be 2·#elements");
        let mut rhs1 = vec![0.0; self.n_int_edges + self.n_int_verts];
        rhs1[..self.n_int_edges].copy_from_slice(&self.b.matvec(f));
        let w = self.l_fact.solve(&rhs1);
        let flux = w[..self.n_int_edges].to_vec();

        let mut rhs2 = vec![0.0; self.num_verts + self.num_p0 + self.n_int_edges];
        for i in 0..self.num_p0 {
            rhs2[self.num_verts + i] = -self.m_diag[i] * f[i];
        }
        let z = self.k_fact.solve(&rhs2);
        let sigma = z[..self.num_verts].to_vec();
        let p0_dual = z[self.num_verts..self.num_verts + self.num_p0].to_vec();
        let edge_multiplier = z[self.num_verts + self.num_p0..].to_vec();

        let bt_w = self.b.matvec_t(&flux);
        let q = (0..self.num_p0)
            .map(|i| -bt_w[i] + self.m_diag[i] * p0_dual[i])
            .collect();
        QParts { q, flux, sigma, p0_dual, edge_multiplier }
    }

    /// Applies the error functional operator `Q`.
    pub fn apply_q(&self, f: &[f64]) -> Vec<f64> {
        self.apply_q_parts(f).q
    }

    /// M-orthogonal projection onto the divergence-feasible subspace
    /// `ker Cᵀ`.
    pub fn project_feasible(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.num_p0);
        let mut rhs = vec![0.0; self.num_p0 + self.jump_t.nrows()];
        let my = self.m_mat.matvec(y);
        rhs[..self.num_p0].copy_from_slice(&my);
        let sol = self.proj_fact.solve(&rhs);
        sol[..self.num_p0].to_vec()
    }

    /// Relative normal-jump residual of a datum (0 means feasible).
    pub fn feasibility_residual(&self, f: &[f64]) -> f64 {
        let r = self.jump_t.matvec(f);
        let rmax = r.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let fmax = f.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let cmax = self
            .jump_t
            .triplets()
            .iter()
            .fold(0.0_f64, |a, &(_, _, v)| a.max(v.abs()));
        if fmax == 0.0 {
            return 0.0;
        }
        rmax / (cmax * fmax)
    }

    /// Squared flux gap `‖rot u_h − σ_h‖² = fᵀQf` of a feasible datum.
    pub fn error_functional(&self, f: &[f64]) -> Result<f64> {
        let resid = self.feasibility_residual(f);
        if resid > FEASIBILITY_TOL {
            return Err(Error::Solver(format!(
                "datum violates the divergence-feasibility constraint (relative residual {resid:.3e})"
            )));
        }
        let q = self.apply_q(f);
        Ok(f.iter().zip(&q).map(|(a, b)| a * b).sum())
    }

    /// The same flux gap evaluated directly from the recovered fields
    /// `u_h` and `σ_h` (independent quadrature path, used as an oracle).
    pub fn error_functional_direct(&self, f: &[f64]) -> Result<f64> {
        let resid = self.feasibility_residual(f);
        if resid > FEASIBILITY_TOL {
            return Err(Error::Solver(format!(
                "datum violates the divergence-feasibility constraint (relative residual {resid:.3e})"
            )));
        }
        let parts = self.apply_q_parts(f);
        let rotu = self.rot_of_flux(&parts.flux);
        let sigma = &parts.sigma;
        let a_sigma = self.a_mat.matvec(sigma);
        let s_a_s: f64 = sigma.iter().zip(&a_sigma).map(|(a, b)| a * b).sum();
        let mut cross = 0.0;
        let mut quad = 0.0;
        for t in 0..self.mesh.num_triangles() {
            let area = self.mesh.area(t);
            let tri = self.mesh.triangles()[t];
            let mean = (sigma[tri[0]] + sigma[tri[1]] + sigma[tri[2]]) / 3.0;
            cross += rotu[t] * area * mean;
            quad += rotu[t] * rotu[t] * area;
        }
        Ok(s_a_s - 2.0 * cross + quad)
    }

    /// Audits the dual saddle solve against its second block equation
    /// `G σ_h + Cᵀ μ + M f = 0`, with the curl-coupling matrix `G`
    /// reassembled independently of the stored factorization and scaled by
    /// `grad_sign` (pass 1; a deliberately wrong sign must make the audit
    /// fail, which the fault-injection test exercises).  Returns the
    /// max-norm residual relative to the max-norm of `M f`.
    pub fn dual_audit(&self, f: &[f64], grad_sign: f64) -> Result<f64> {
        let parts = self.apply_q_parts(f);
        let s1 = FeSpace::new(self.mesh, Family::S1);
        let p0 = FeSpace::new(self.mesh, Family::P0Vec);
        let g = assemble_curl_coupling(&s1, &p0)?;
        let g_sigma = g.matvec(&parts.sigma);
        let ct_mu = self.jump_t.matvec_t(&parts.edge_multiplier);
        let mut rmax = 0.0_f64;
        let mut scale = 0.0_f64;
        for i in 0..self.num_p0 {
            let mf = self.m_diag[i] * f[i];
            scale = scale.max(mf.abs());
            rmax = rmax.max((grad_sign * g_sigma[i] + ct_mu[i] + mf).abs());
        }
        Ok(rmax / scale.max(f64::MIN_POSITIVE))
    }

    /// Piecewise-constant `rot u_h` per element from interior-edge
    /// coefficients.
    fn rot_of_flux(&self, flux: &[f64]) -> Vec<f64> {
        let mut rotu = vec![0.0; self.mesh.num_triangles()];
        for t in 0..self.mesh.num_triangles() {
            let rc = rot_consts(self.mesh, t);
            let te = self.mesh.tri_edges()[t];
            let mut val = 0.0;
            for l in 0..3 {
                if let Some(d) = self.edge_dof[te[l]] {
                    val += flux[d] * rc[l];
                }
            }
            rotu[t] = val;
        }
        rotu
    }

    /// Runs the `κ_h` power iteration: ones start, feasibility projection in
    /// every step, at least 100 iterations, relative stagnation tolerance
    /// 1e-8, reported value inflated by the same tolerance.
    pub fn kappa(&self, opts: &PowerOpts) -> Result<KappaResult> {
        let apply = |f: &[f64]| self.apply_q(f);
        let res = largest_eig_power(&apply, &self.m_mat, Some(&self.jump_t), opts)?;
        Ok(KappaResult {
            kappa: res.value.max(0.0).sqrt() * (1.0 + KAPPA_INFLATION),
            mu: res.value,
            iterations: res.iterations,
            maximizer: res.vector,
        })
    }
}

/// Computes `κ_h` of a mesh with the default power-iteration protocol.
pub fn kappa_h(mesh: &Triangulation) -> Result<KappaResult> {
    KappaProblem::new(mesh)?.kappa(&PowerOpts::default())
}

/// Diagnostic record of the hypercircle identity
/// `‖σ_h − rot ũ‖² + ‖rot(ũ − u_h)‖² = ‖σ_h − rot u_h‖²`, with the exact
/// solution replaced by a discrete surrogate `ũ` on a red-refined mesh.
#[derive(Debug, Clone)]
pub struct HypercircleReport {
    /// `‖σ_h − rot ũ‖²` (flux term against the surrogate).
    pub flux_error_sq: f64,
    /// `‖rot(ũ − u_h)‖²` (primal rot gap against the surrogate).
    pub rot_error_sq: f64,
    /// `‖σ_h − rot u_h‖²` (the computable right-hand side).
    pub total_sq: f64,
    /// Absolute identity defect `|flux + rot − total|`; shrinks as the
    /// surrogate mesh is refined.
    pub defect: f64,
    /// Number of red refinements used for the surrogate.
    pub surrogate_refinements: u32,
}

/// Evaluates the hypercircle identity defect for a datum `f` using a
/// surrogate solution computed on a mesh refined `surrogate_refinements`
/// times (at least 2 for a meaningful surrogate).
pub fn hypercircle_check(
    kp: &KappaProblem<'_>,
    f: &[f64],
    surrogate_refinements: u32,
) -> Result<HypercircleReport> {
    let mesh = kp.mesh();
    let parts = kp.apply_q_parts(f);
    let rotv_coarse = kp.rot_of_flux(&parts.flux);

    // Prolong the datum (element injection), the dual potential (nodal
    // interpolation, exact for continuous piecewise-affine functions) and
    // `rot u_h` (element injection) through the refinement levels.
    let mut fine = mesh.clone();
    let mut f_fine = f.to_vec();
    let mut sigma_fine = parts.sigma.clone();
    let mut rotv_fine = rotv_coarse;
    for _ in 0..surrogate_refinements {
        let next = red_refine(&fine);
        let mut f_next = vec![0.0; 2 * next.num_triangles()];
        let mut rotv_next = vec![0.0; next.num_triangles()];
        for t in 0..fine.num_triangles() {
            for child in 4 * t..4 * t + 4 {
                f_next[2 * child] = f_fine[2 * t];
                f_next[2 * child + 1] = f_fine[2 * t + 1];
                rotv_next[child] = rotv_fine[t];
            }
        }
        let mut sigma_next = sigma_fine.clone();
        sigma_next.resize(next.num_vertices(), 0.0);
        for (e, &[a, b]) in fine.edges().iter().enumerate() {
            sigma_next[fine.num_vertices() + e] = 0.5 * (sigma_fine[a] + sigma_fine[b]);
        }
        fine = next;
        f_fine = f_next;
        sigma_fine = sigma_next;
        rotv_fine = rotv_next;
    }

    // Surrogate primal solve on the fine mesh.
    let n0z = FeSpace::new(&fine, Family::N0TangentialZero);
    let s1z = FeSpace::new(&fine, Family::S1Zero);
    let p0 = FeSpace::new(&fine, Family::P0Vec);
    let (ne, nvi) = (n0z.dofs(), s1z.dofs());
    let rotrot = assemble_rotrot(&n0z)?;
    let grad_cpl = assemble_grad_coupling(&s1z, &n0z)?;
    let l_mat = SparseMatrix::from_blocks(
        ne + nvi,
        ne + nvi,
        &[
            BlockSpec::new(0, 0, &rotrot),
            BlockSpec::new(0, ne, &grad_cpl).transposed(),
            BlockSpec::new(ne, 0, &grad_cpl),
        ],
        true,
    )?;
    let b_fine = assemble_edge_p0_coupling(&n0z, &p0)?;
    let mut rhs = vec![0.0; ne + nvi];
    rhs[..ne].copy_from_slice(&b_fine.matvec(&f_fine));
    let w = Factorization::new(&l_mat)?.solve(&rhs);

    let mut rotu_fine = vec![0.0; fine.num_triangles()];
    for t in 0..fine.num_triangles() {
        let rc = rot_consts(&fine, t);
        let te = fine.tri_edges()[t];
        let mut val = 0.0;
        for l in 0..3 {
            if let Some(d) = n0z.dof_of_entity(te[l]) {
                val += w[d] * rc[l];
            }
        }
        rotu_fine[t] = val;
    }

    // Elementwise exact quadrature of the three identity terms.
    let (mut flux_sq, mut rot_sq, mut total_sq) = (0.0, 0.0, 0.0);
    for t in 0..fine.num_triangles() {
        let area = fine.area(t);
        let tri = fine.triangles()[t];
        let (v0, v1, v2) = (sigma_fine[tri[0]], sigma_fine[tri[1]], sigma_fine[tri[2]]);
        let sum = v0 + v1 + v2;
        let int_sigma = area * sum / 3.0;
        let int_sigma_sq = area / 12.0 * (sum * sum + v0 * v0 + v1 * v1 + v2 * v2);
        let against = |c: f64| int_sigma_sq - 2.0 * c * int_sigma + c * c * area;
        flux_sq += against(rotu_fine[t]);
        total_sq += against(rotv_fine[t]);
        let d = rotu_fine[t] - rotv_fine[t];
        rot_sq += area * d * d;
    }
    Ok(HypercircleReport {
        flux_error_sq: flux_sq,
        rot_error_sq: rot_sq,
        total_sq,
        defect: (flux_sq + rot_sq - total_sq).abs(),
        surrogate_refinements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_lshape, generate_square};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn random_feasible(kp: &KappaProblem<'_>, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..kp.num_p0()).map(|_| rng.random::<f64>() - 0.5).collect();
        kp.project_feasible(&raw)
    }

    #[test]
    fn kappa_square_levels() {
        let k1 = kappa_h(&generate_square(1)).unwrap();
        assert!(rel(k1.kappa, 0.144_337_568_740_782_13) < 1e-4, "{}", k1.kappa);
        assert!(k1.iterations > 100);
        let k2 = kappa_h(&generate_square(2)).unwrap();
        assert!(rel(k2.kappa, 0.072_168_781_465_582_63) < 1e-4, "{}", k2.kappa);
        assert!(k2.kappa < k1.kappa);
    }

    #[test]
    fn kappa_lshape_level1() {
        let k = kappa_h(&generate_lshape(1)).unwrap();
        assert!(rel(k.kappa, 0.135_527_259_233_745_9) < 1e-4, "{}", k.kappa);
    }

    #[test]
    fn saddle_factorizations_are_nonsingular() {
        let m = generate_square(1);
        let kp = KappaProblem::new(&m).unwrap();
        let (li, ki) = kp.inertia();
        assert_eq!(li.2, 0, "primal saddle has a kernel: {li:?}");
        assert_eq!(ki.2, 0, "dual saddle has a kernel: {ki:?}");
    }

    #[test]
    fn error_identity_matches_direct_norm() {
        let m = generate_square(2);
        let kp = KappaProblem::new(&m).unwrap();
        let f = random_feasible(&kp, 7);
        let via_q = kp.error_functional(&f).unwrap();
        let direct = kp.error_functional_direct(&f).unwrap();
        assert!(via_q > 0.0);
        assert!(rel(via_q, direct) < 1e-9, "{via_q} vs {direct}");
        let zero = vec![0.0; kp.num_p0()];
        assert_eq!(kp.error_functional(&zero).unwrap(), 0.0);
    }

    #[test]
    fn infeasible_datum_is_rejected() {
        let m = generate_square(1);
        let kp = KappaProblem::new(&m).unwrap();
        let mut f = vec![0.0; kp.num_p0()];
        f[0] = 1.0; // single-element datum jumps across its interior edges
        assert!(kp.error_functional(&f).is_err());
    }

    #[test]
    fn q_is_symmetric_on_feasible_vectors() {
        let m = generate_square(2);
        let kp = KappaProblem::new(&m).unwrap();
        let y = random_feasible(&kp, 11);
        let z = random_feasible(&kp, 13);
        let qy = kp.apply_q(&y);
        let qz = kp.apply_q(&z);
        let yqz: f64 = y.iter().zip(&qz).map(|(a, b)| a * b).sum();
        let zqy: f64 = z.iter().zip(&qy).map(|(a, b)| a * b).sum();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((yqz - zqy).abs() <= 1e-10 * ny * nz, "{yqz} vs {zqy}");
    }

    #[test]
    fn rayleigh_quotients_stay_below_kappa() {
        let m = generate_square(1);
        let kp = KappaProblem::new(&m).unwrap();
        let kres = kp.kappa(&PowerOpts::default()).unwrap();
        for seed in 0..20 {
            let f = random_feasible(&kp, 100 + seed);
            let num = kp.error_functional(&f).unwrap();
            let mf = kp.m_mat.matvec(&f);
            let den: f64 = f.iter().zip(&mf).map(|(a, b)| a * b).sum();
            assert!(num / den <= kres.kappa * kres.kappa * (1.0 + 1e-9));
        }
    }

    #[test]
    fn dual_solve_satisfies_equilibrium_equation() {
        // Second block of the dual saddle: (Curl σ_h, φ) + jump terms
        // = -(f, φ) for all piecewise-constant vector φ.
        let m = generate_square(2);
        let kp = KappaProblem::new(&m).unwrap();
        let f = random_feasible(&kp, 3);
        let parts = kp.apply_q_parts(&f);
        let s1 = FeSpace::new(&m, Family::S1);
        let p0 = FeSpace::new(&m, Family::P0Vec);
        let curl_cpl = assemble_curl_coupling(&s1, &p0).unwrap();
        let jump_t = assemble_normal_jump(&p0).unwrap();
        let lhs = curl_cpl.matvec(&parts.sigma);
        let cj = jump_t.matvec_t(&parts.edge_multiplier);
        let scale = f.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
        for i in 0..kp.num_p0() {
            let resid = lhs[i] + cj[i] + kp.m_diag[i] * f[i];
            assert!(resid.abs() < 1e-10 * scale, "row {i}: {resid}");
        }
    }

    #[test]
    fn dual_audit_passes_and_catches_injected_sign_error() {
        let m = generate_square(2);
        let kp = KappaProblem::new(&m).unwrap();
        let f = random_feasible(&kp, 11);
        let good = kp.dual_audit(&f, 1.0).unwrap();
        assert!(good < 1e-10, "audit residual {good}");
        let bad = kp.dual_audit(&f, -1.0).unwrap();
        assert!(bad > 1e-2, "flipped-sign audit must fail, got {bad}");
    }

    #[test]
    fn hypercircle_defect_shrinks_under_surrogate_refinement() {
        let m = generate_square(1);
        let kp = KappaProblem::new(&m).unwrap();
        let f = random_feasible(&kp, 42);
        let r2 = hypercircle_check(&kp, &f, 2).unwrap();
        let r3 = hypercircle_check(&kp, &f, 3).unwrap();
        assert!(r2.total_sq > 0.0);
        // Right side bounds each left term (sum of squares).
        assert!(r2.flux_error_sq <= r2.total_sq + r2.defect);
        assert!(r2.rot_error_sq <= r2.total_sq + r2.defect);
        assert!(r3.defect < r2.defect, "{} !< {}", r3.defect, r2.defect);
        let zero = vec![0.0; kp.num_p0()];
        let rz = hypercircle_check(&kp, &zero, 2).unwrap();
        assert!(rz.total_sq == 0.0 && rz.defect == 0.0);
    }

    #[test]
    fn error_functional_matches_q_maximizer() {
        // The attained μ equals the error functional of the maximizer.
        let m = generate_square(1);
        let kp = KappaProblem::new(&m).unwrap();
        let res = kp.kappa(&PowerOpts::default()).unwrap();
        let val = kp.error_functional(&res.maximizer).unwrap();
        let mf = kp.m_mat.matvec(&res.maximizer);
        let den: f64 = res.maximizer.iter().zip(&mf).map(|(a, b)| a * b).sum();
        assert!(rel(val / den, res.mu) < 1e-8);
    }
}
