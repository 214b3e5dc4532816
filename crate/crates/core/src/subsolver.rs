//! One linearized Gauss-Newton subproblem and its saddle point system.
//!
//! With `v = u - u_old` the subproblem reads
//!
//! ```text
//! min  ||C v + r^g||² + (1/β) ||q - q0||²
//! s.t. L (q - q_old) + K v + r^f = 0
//! ```
//!
//! and its optimality system is solved for `(q, v, ẑ)` with the Lagrange
//! multiplier of the constraint `z = 2ẑ`.

use std::sync::Arc;

use faer::sparse::Triplet;

use crate::fem::{riesz_dual_norm, FemError, Field, Space};
use crate::linalg::{axpy, dot, norm2, LuSolver, OperatorKind, SolveError, SparseMat, SpdSolver};
use crate::problem::{mass_load, MeshData, ModelProblem, ProblemError};

#[derive(Debug, Clone, thiserror::Error)]
pub enum SubsolverError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("regularization parameter must be positive and finite, got {0}")]
    BadBeta(f64),
    #[error("stationarity residual {0:e} exceeds tolerance")]
    Stationarity(f64),
}

/// Data of one linearization at `(q_old, u_old)` on the current mesh.
pub struct Subproblem {
    pub problem: ModelProblem,
    pub qs: Arc<Space>,
    pub vs: Arc<Space>,
    pub data: Arc<MeshData>,
    pub q_old: Field,
    pub u_old: Field,
    pub q0: Field,
    /// `K = S + 3ζ M_{u_old²}`.
    pub k: SparseMat,
    /// `L = -M_{VQ}`.
    pub l: SparseMat,
    pub mass_q: SparseMat,
    pub ctc: SparseMat,
    /// `C*(C u_old - g^δ)`.
    pub ct_rg: Vec<f64>,
    /// `A(q_old, u_old)` as a functional on `V_h`.
    pub rf: Vec<f64>,
    /// `||C u_old - g^δ||²`.
    pub misfit_old: f64,
}

impl Subproblem {
    /// Transfers the base point onto the current spaces and assembles all blocks.
    ///
    /// `q0 = None` means `q0 = 0`.
    pub fn new(
        problem: ModelProblem,
        qs: &Arc<Space>,
        vs: &Arc<Space>,
        data: &Arc<MeshData>,
        q_old: &Field,
        u_old: &Field,
        q0: Option<&Field>,
    ) -> Result<Self, SubsolverError> {
        let q_old = q_old.transfer(qs)?;
        let u_old = u_old.transfer(vs)?;
        let q0 = match q0 {
            Some(f) => f.transfer(qs)?,
            None => Field::zeros(qs),
        };
        let k = problem.tangent(&u_old)?;
        let mut l = crate::fem::assemble_mass(vs, qs)?;
        l = SparseMat::zeros(l.nrows(), l.ncols(), OperatorKind::Mass).add_scaled(-1.0, &l);
        let mass_q = qs.mass().clone();
        let ctc = data.ctc();
        let ct_rg = data.ct_residual(u_old.coef());
        let rf = problem.semilinear_residual(&q_old, &u_old)?;
        let misfit_old = data.misfit2(u_old.coef());
        Ok(Subproblem {
            problem,
            qs: qs.clone(),
            vs: vs.clone(),
            data: data.clone(),
            q_old,
            u_old,
            q0,
            k,
            l,
            mass_q,
            ctc,
            ct_rg,
            rf,
            misfit_old,
        })
    }

    pub fn nq(&self) -> usize {
        self.qs.dim()
    }

    pub fn nv(&self) -> usize {
        self.vs.dim()
    }

    /// `||A(q_old, u_old)||_{V_h*}`.
    pub fn rf_dual_norm(&self) -> Result<f64, SubsolverError> {
        if self.nv() == 0 {
            return Ok(0.0);
        }
        Ok(riesz_dual_norm(&self.vs, &self.rf)?.0)
    }

    /// Adjoint at `v = 0`: `K* z = 2 C*(C u_old - g^δ)`.
    pub fn adjoint_at_base(&self) -> Result<Field, SubsolverError> {
        let rhs: Vec<f64> = self.ct_rg.iter().map(|x| 2.0 * x).collect();
        let z = SpdSolver::new(&self.k)?.solve(&rhs);
        Ok(Field::new(self.vs.clone(), z)?)
    }

    /// The symmetric saddle point matrix for `(q, v, ẑ)`.
    pub fn kkt_matrix(&self, beta: f64) -> SparseMat {
        let (nq, nv) = (self.nq(), self.nv());
        let (ov, oz) = (nq, nq + nv);
        let mut t = Vec::new();
        for (i, j, x) in self.mass_q.entries() {
            t.push(Triplet::new(i, j, x / beta));
        }
        for (i, j, x) in self.l.entries() {
            // L is V x Q: row block z, column block q, and its transpose
            t.push(Triplet::new(oz + i, j, -x));
            t.push(Triplet::new(j, oz + i, -x));
        }
        for (i, j, x) in self.ctc.entries() {
            t.push(Triplet::new(ov + i, ov + j, x));
        }
        for (i, j, x) in self.k.entries() {
            t.push(Triplet::new(oz + i, ov + j, -x));
            t.push(Triplet::new(ov + j, oz + i, -x));
        }
        let n = nq + 2 * nv;
        SparseMat::from_triplets(n, n, &t, OperatorKind::Kkt)
    }

    pub fn kkt_rhs(&self, beta: f64) -> Vec<f64> {
        let mut b = self.mass_q.mul_vec(self.q0.coef());
        b.iter_mut().for_each(|x| *x /= beta);
        b.extend(self.ct_rg.iter().map(|x| -x));
        let lq = self.l.mul_vec(self.q_old.coef());
        b.extend(self.rf.iter().zip(lq).map(|(r, l)| r - l));
        b
    }

    /// Writes the saddle point matrix in Matrix Market format.
    pub fn write_kkt<W: std::io::Write>(&self, beta: f64, w: &mut W) -> std::io::Result<()> {
        self.kkt_matrix(beta).write_matrix_market(w)
    }
}

/// Solution of one subproblem.
pub struct KktSolution {
    pub beta: f64,
    pub q: Field,
    pub v: Field,
    /// `u = u_old + v`.
    pub u: Field,
    /// Lagrange multiplier `z = 2ẑ`.
    pub z: Field,
    /// Relative residual of the saddle point system after refinement.
    pub residual: f64,
    /// `||L(q - q_old) + K v + r^f||_{V_h*}`.
    pub constraint_residual: f64,
    matrix: SparseMat,
    factor: Arc<LuSolver>,
}

impl std::fmt::Debug for KktSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KktSolution")
            .field("beta", &self.beta)
            .field("residual", &self.residual)
            .field("constraint_residual", &self.constraint_residual)
            .finish()
    }
}

const STATIONARITY_TOL: f64 = 1e-8;

fn solve_refined(a: &SparseMat, lu: &LuSolver, b: &[f64]) -> (Vec<f64>, f64) {
    let mut x = lu.solve(b);
    let mut r = a.mul_vec(&x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let dx = lu.solve(&r);
    axpy(&mut x, 1.0, &dx);
    let mut r = a.mul_vec(&x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= bi);
    let scale = norm2(b).max(f64::MIN_POSITIVE);
    (x, if norm2(b) == 0.0 { norm2(&r) } else { norm2(&r) / scale })
}

/// Factorizes and solves the optimality system at regularization `beta`.
pub fn solve_kkt(sub: &Subproblem, beta: f64) -> Result<KktSolution, SubsolverError> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(SubsolverError::BadBeta(beta));
    }
    let a = sub.kkt_matrix(beta);
    let lu = Arc::new(LuSolver::new(&a)?);
    let b = sub.kkt_rhs(beta);
    let (x, residual) = solve_refined(&a, &lu, &b);
    if !residual.is_finite() || residual > STATIONARITY_TOL {
        return Err(SubsolverError::Stationarity(residual));
    }
    let (nq, nv) = (sub.nq(), sub.nv());
    let q = Field::new(sub.qs.clone(), x[..nq].to_vec())?;
    let v = Field::new(sub.vs.clone(), x[nq..nq + nv].to_vec())?;
    let z = Field::new(sub.vs.clone(), x[nq + nv..].iter().map(|t| 2.0 * t).collect())?;
    let u = sub.u_old.add_scaled(1.0, &v);
    let mut c = sub.l.mul_vec(&q.add_scaled(-1.0, &sub.q_old).into_coef());
    axpy(&mut c, 1.0, &sub.k.mul_vec(v.coef()));
    axpy(&mut c, 1.0, &sub.rf);
    let constraint_residual = if nv == 0 { 0.0 } else { riesz_dual_norm(&sub.vs, &c)?.0 };
    Ok(KktSolution { beta, q, v, u, z, residual, constraint_residual, matrix: a, factor: lu })
}

/// `||∇z||`, the `W = H¹₀` norm of the multiplier.
pub fn adjoint_w_norm(z: &Field) -> f64 {
    z.grad_norm2().max(0.0).sqrt()
}

/// `I₂'(u_h) = 2 C*(C u_h - g^δ)` as a functional over `V_h`.
pub fn qoi_gradient(sub: &Subproblem, sol: &KktSolution) -> Vec<f64> {
    sub.data.ct_residual(sol.u.coef()).into_iter().map(|x| 2.0 * x).collect()
}

/// Auxiliary triple of the second-order estimator.
#[derive(Debug, Clone)]
pub struct AuxSolution {
    pub q: Field,
    pub v: Field,
    pub z: Field,
}

/// Solves `L''(x_h)(x¹, δx) = -I₂'(u_h)(δu)` for all discrete `δx`.
///
/// The Hessian of the Lagrangian is `diag(2,2,1)` times the saddle point
/// matrix in `(q, v, ẑ)`, so the existing factorization is reused.
pub fn solve_second_order(
    sub: &Subproblem,
    sol: &KktSolution,
    qoi_grad: &[f64],
) -> Result<AuxSolution, SubsolverError> {
    let (nq, nv) = (sub.nq(), sub.nv());
    let mut b = vec![0.0; nq + 2 * nv];
    for (bi, g) in b[nq..nq + nv].iter_mut().zip(qoi_grad) {
        *bi = -0.5 * g;
    }
    let (x, residual) = solve_refined(&sol.matrix, &sol.factor, &b);
    if !residual.is_finite() || residual > STATIONARITY_TOL {
        return Err(SubsolverError::Stationarity(residual));
    }
    Ok(AuxSolution {
        q: Field::new(sub.qs.clone(), x[..nq].to_vec())?,
        v: Field::new(sub.vs.clone(), x[nq..nq + nv].to_vec())?,
        z: Field::new(sub.vs.clone(), x[nq + nv..].iter().map(|t| 2.0 * t).collect())?,
    })
}

/// Quadratic objective `||C v + r^g||² + (1/β)||q - q0||²` of the subproblem.
pub fn objective(sub: &Subproblem, beta: f64, q: &Field, v: &Field) -> f64 {
    let u = sub.u_old.add_scaled(1.0, v);
    let dq = q.add_scaled(-1.0, &sub.q0);
    sub.data.misfit2(u.coef()) + sub.mass_q.quad_form(dq.coef()) / beta
}

/// `(q, φ)` for `q` on the Q space, tested with `V` functions.
pub fn q_load(sub: &Subproblem, q: &Field) -> Vec<f64> {
    mass_load(&sub.vs, q)
}

/// Euclidean residual of the three optimality equations (in `z`, not `ẑ`).
pub fn stationarity_residuals(sub: &Subproblem, sol: &KktSolution) -> [f64; 3] {
    let beta = sol.beta;
    // (2/β) M (q - q0) - L^T z
    let dq = sol.q.add_scaled(-1.0, &sub.q0);
    let mut rq: Vec<f64> = sub.mass_q.mul_vec(dq.coef()).into_iter().map(|x| 2.0 * x / beta).collect();
    axpy(&mut rq, -1.0, &sub.l.mul_t_vec(sol.z.coef()));
    // 2 C*C v + 2 C* r^g - K^T z
    let mut rv: Vec<f64> = sub.ctc.mul_vec(sol.v.coef()).into_iter().map(|x| 2.0 * x).collect();
    axpy(&mut rv, 2.0, &sub.ct_rg);
    axpy(&mut rv, -1.0, &sub.k.mul_t_vec(sol.z.coef()));
    // L(q - q_old) + K v + r^f
    let mut rz = sub.l.mul_vec(&sol.q.add_scaled(-1.0, &sub.q_old).into_coef());
    axpy(&mut rz, 1.0, &sub.k.mul_vec(sol.v.coef()));
    axpy(&mut rz, 1.0, &sub.rf);
    [norm2(&rq), norm2(&rv), norm2(&rz)]
}

/// `(q - q0)^T M (q - q0)`.
pub fn reg_norm2(sub: &Subproblem, q: &Field) -> f64 {
    let dq = q.add_scaled(-1.0, &sub.q0);
    dot(dq.coef(), &sub.mass_q.mul_vec(dq.coef()))
}
