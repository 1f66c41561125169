//! Self-check property suite behind the `validate` verb.
//!
//! Every property is an oracle-style cross-check of the numerical kernels
//! on the selected mesh: structural mesh invariants, independent
//! re-assembly of mass matrices, the dual equilibrium equation, symmetry
//! of the error-functional operator, the bordered rank-one eigenvalue path
//! against a dense solve, the hypercircle identity defect under surrogate
//! refinement, and the empirical stability certificate of the averaging
//! operator.

use serde::Serialize;

use maxlow::constants::{pi_grad_stability, rank_one_cross_check, triangle_constants};
use maxlow::galerkin::{hypercircle_check, KappaProblem};
use maxlow::mesh::Triangulation;
use maxlow::spaces::quadrature_audit;
use maxlow::Error;

/// Seed of the stability certificate sampler (fixed for determinism).
const CERTIFICATE_SEED: u64 = 0x4d41_584c_4f57;

/// Number of random fields tested by the stability certificate.
const CERTIFICATE_SAMPLES: usize = 200;

/// One checked property.
#[derive(Debug, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    /// Measured defect/ratio of this run.
    pub measured: f64,
    /// Pass threshold the measurement is compared against.
    pub threshold: f64,
    /// Human-readable description of the measurement.
    pub detail: String,
}

/// Full suite outcome.
#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

fn property(
    name: &str,
    passed: bool,
    measured: f64,
    threshold: f64,
    detail: impl Into<String>,
) -> PropertyResult {
    PropertyResult { name: name.into(), passed, measured, threshold, detail: detail.into() }
}

/// Deterministic smooth piecewise-constant vector datum, projected onto the
/// divergence-feasible subspace.
fn feasible_datum(kp: &KappaProblem<'_>, phase: f64) -> Vec<f64> {
    let mesh = kp.mesh();
    let mut g = vec![0.0; kp.num_p0()];
    for t in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.triangles()[t];
        let vs = mesh.vertices();
        let cx = (vs[a][0] + vs[b][0] + vs[c][0]) / 3.0;
        let cy = (vs[a][1] + vs[b][1] + vs[c][1]) / 3.0;
        g[2 * t] = (std::f64::consts::PI * cx + phase).sin() + 0.2;
        g[2 * t + 1] = (std::f64::consts::PI * cy - phase).cos() - 0.1;
    }
    kp.project_feasible(&g)
}

/// Runs all properties on one mesh.  `inject_sign_error` flips the sign of
/// the independently assembled curl coupling inside the dual-system audit,
/// which must make that property fail (fault-injection hook).
pub fn run_suite(mesh: &Triangulation, inject_sign_error: bool) -> Result<SuiteReport, Error> {
    let mut props = Vec::new();

    let euler = mesh.num_vertices() as f64 - mesh.num_edges() as f64
        + mesh.num_triangles() as f64;
    props.push(property(
        "mesh-validator",
        mesh.validate().is_ok(),
        euler,
        1.0,
        "V - E + T (must be 1 on a simply connected triangulation); also checks \
         orientation, areas, and edge sharing",
    ));

    let quad_dev = quadrature_audit(mesh)?;
    props.push(property(
        "two-quadrature-assembly",
        quad_dev <= 1e-14,
        quad_dev,
        1e-14,
        "max relative mass-matrix entry deviation, closed form vs midpoint quadrature",
    ));

    let kp = KappaProblem::new(mesh)?;
    let f = feasible_datum(&kp, 0.0);
    let g = feasible_datum(&kp, 0.7);

    let sign = if inject_sign_error { -1.0 } else { 1.0 };
    let dual_resid = kp.dual_audit(&f, sign)?;
    props.push(property(
        "dual-system-audit",
        dual_resid <= 1e-10,
        dual_resid,
        1e-10,
        "relative residual of the dual equilibrium equation with an independently \
         assembled curl coupling",
    ));

    let qf = kp.apply_q(&f);
    let qg = kp.apply_q(&g);
    let s_fg: f64 = g.iter().zip(&qf).map(|(a, b)| a * b).sum();
    let s_gf: f64 = f.iter().zip(&qg).map(|(a, b)| a * b).sum();
    let sym_dev = (s_fg - s_gf).abs() / s_fg.abs().max(s_gf.abs()).max(f64::MIN_POSITIVE);
    props.push(property(
        "q-symmetry",
        sym_dev <= 1e-10,
        sym_dev,
        1e-10,
        "relative asymmetry of the error-functional operator on two feasible data",
    ));

    let rank_one_dev = rank_one_cross_check(mesh)?;
    props.push(property(
        "rank-one-vs-dense",
        rank_one_dev <= 1e-9,
        rank_one_dev,
        1e-9,
        "max relative deviation of the bordered rank-one eigenvalue path from a dense \
         nullspace-reduced solve over all vertex-patch classes",
    ));

    let hc2 = hypercircle_check(&kp, &f, 2)?;
    let hc3 = hypercircle_check(&kp, &f, 3)?;
    let rel3 = hc3.defect / hc3.total_sq.max(f64::MIN_POSITIVE);
    let rel2 = hc2.defect / hc2.total_sq.max(f64::MIN_POSITIVE);
    props.push(property(
        "hypercircle-defect",
        hc3.defect < hc2.defect,
        rel3,
        rel2,
        "relative hypercircle identity defect at surrogate refinement 3 \
         (threshold: refinement-2 value; the defect must shrink)",
    ));

    let (_, c2_curl, _) = triangle_constants(mesh)?;
    let cert = pi_grad_stability(
        mesh,
        3.0_f64.sqrt(),
        c2_curl,
        CERTIFICATE_SAMPLES,
        CERTIFICATE_SEED,
    )?;
    props.push(property(
        "pi-grad-stability",
        cert.violations == 0 && cert.max_ratio <= 1.0,
        cert.max_ratio,
        1.0,
        format!(
            "largest per-element stability ratio over {} random quadratic fields \
             ({} violations)",
            cert.samples, cert.violations
        ),
    ));

    let passed = props.iter().all(|p| p.passed);
    Ok(SuiteReport { passed, properties: props })
}
