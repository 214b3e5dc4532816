//! Quantities of interest and dual weighted residual estimators.

use std::sync::Arc;

use crate::fem::{gauss2d, patch_interpolate, riesz_dual_norm, shape, shape_grad, FemError, Field, Poly9, Space, SpaceKind};
use crate::problem::{MeshData, ModelProblem, NoisyData};
use crate::subsolver::{
    qoi_gradient, reg_norm2, solve_kkt, solve_second_order, AuxSolution, KktSolution, Subproblem, SubsolverError,
};

/// `I₁..I₄` of one Gauss-Newton step together with the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Qoi {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub rho: f64,
}

/// `I₃ = ||C u_old - g^δ||² + ϱ ||A(q_old, u_old)||_{W_h*}` on the current mesh.
pub fn compute_i3(sub: &Subproblem, rho: f64) -> Result<f64, SubsolverError> {
    Ok(sub.misfit_old + rho * sub.rf_dual_norm()?)
}

/// `I₁, I₂, I₃, I₄` (estimators left at zero).
pub fn compute_qoi(sub: &Subproblem, sol: &KktSolution, rho: f64) -> Result<Qoi, SubsolverError> {
    let i2 = sub.data.misfit2(sol.u.coef());
    let i1 = i2 + reg_norm2(sub, &sol.q) / sol.beta;
    let i3 = compute_i3(sub, rho)?;
    let r4 = sub.problem.semilinear_residual(&sol.q, &sol.u)?;
    let n4 = if sub.nv() == 0 { 0.0 } else { riesz_dual_norm(&sub.vs, &r4)?.0 };
    let i4 = sub.data.misfit2(sol.u.coef()) + rho * n4;
    Ok(Qoi { i1, i2, i3, i4, eta1: 0.0, eta2: 0.0, rho })
}

/// Cellwise weight functions for the three components `(q, u, z)`.
///
/// `None` marks cells on which the weight vanishes identically.
#[derive(Debug, Clone)]
pub struct Weights {
    pub q: Vec<Option<Poly9>>,
    pub u: Vec<Option<Poly9>>,
    pub z: Vec<Option<Poly9>>,
}

fn defect(f: &Field) -> Vec<Option<Poly9>> {
    let pi = patch_interpolate(f);
    (0..f.mesh().num_cells()).map(|k| pi.defect(k)).collect()
}

fn bilinear(f: &Field) -> Vec<Option<Poly9>> {
    (0..f.mesh().num_cells()).map(|k| Some(Poly9::from_bilinear(f.corner_values(k)))).collect()
}

impl Weights {
    /// `π_h x_h - x_h`.
    pub fn patch_defect(q: &Field, u: &Field, z: &Field) -> Weights {
        Weights { q: defect(q), u: defect(u), z: defect(z) }
    }

    /// Discrete test functions used as weights.
    pub fn discrete(q: &Field, u: &Field, z: &Field) -> Weights {
        Weights { q: bilinear(q), u: bilinear(u), z: bilinear(z) }
    }
}

/// Value of an estimator and its cellwise localization.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub value: f64,
    /// Signed cell contributions; they sum to `value`.
    pub signed: Vec<f64>,
}

impl Estimate {
    /// Absolute cell indicators used for marking.
    pub fn indicators(&self) -> Vec<f64> {
        self.signed.iter().map(|x| x.abs()).collect()
    }

    fn from_cells(cells: Vec<f64>) -> Estimate {
        Estimate { value: cells.iter().sum(), signed: cells }
    }
}

/// A primal-dual triple `(q, v, z)` on the current spaces.
#[derive(Clone, Copy)]
pub struct Triple<'a> {
    pub q: &'a Field,
    pub v: &'a Field,
    pub z: &'a Field,
}

/// Cellwise `L'(x)(w)` when `affine`, otherwise its linear part `L''(x, w)`.
///
/// `L'(x)(w) = (2/β)(q - q0, w_q) + 2(C u - g^δ, C w_u) + (w_q, z) - (∇w_u, ∇z)
///   - 3ζ(u_old² w_u, z) + (q, w_z) - (∇u, ∇w_z) - ζ(u_old³ + 3 u_old² v, w_z)`
/// with `u = u_old + v`.
pub fn lagrangian_cells(sub: &Subproblem, beta: f64, x: Triple<'_>, w: &Weights, affine: bool) -> Vec<f64> {
    let zeta = sub.problem.zeta;
    let mesh = sub.vs.mesh().clone();
    let n = mesh.num_cells();
    let u_data = if affine { sub.u_old.add_scaled(1.0, x.v) } else { x.v.clone() };
    let mut out: Vec<f64> = sub
        .data
        .cell_pairing(&u_data, &w.u, affine)
        .into_iter()
        .map(|t| 2.0 * t)
        .collect();
    let pts = gauss2d(4);
    for (k, o) in out.iter_mut().enumerate().take(n) {
        let (wq, wu, wz) = (&w.q[k], &w.u[k], &w.z[k]);
        if wq.is_none() && wu.is_none() && wz.is_none() {
            continue;
        }
        let h = mesh.cell(k).size();
        let h2 = h * h;
        let cq = x.q.corner_values(k);
        let cq0 = sub.q0.corner_values(k);
        let cv = x.v.corner_values(k);
        let cz = x.z.corner_values(k);
        let cu0 = sub.u_old.corner_values(k);
        let mut s = 0.0;
        for &(xi, eta, wt) in &pts {
            let sh = shape(xi, eta);
            let gr = shape_grad(xi, eta);
            let val = |c: &[f64; 4]| (0..4).map(|a| c[a] * sh[a]).sum::<f64>();
            let grad = |c: &[f64; 4]| {
                let mut g = [0.0; 2];
                for a in 0..4 {
                    g[0] += c[a] * gr[a][0] / h;
                    g[1] += c[a] * gr[a][1] / h;
                }
                g
            };
            let (q, v, z, u0) = (val(&cq), val(&cv), val(&cz), val(&cu0));
            let (gv, gz, gu0) = (grad(&cv), grad(&cz), grad(&cu0));
            let mut t = 0.0;
            if let Some(p) = wq {
                let wv = p.eval(xi, eta);
                let dq = if affine { q - val(&cq0) } else { q };
                t += 2.0 / beta * dq * wv + wv * z;
            }
            if let Some(p) = wu {
                let wv = p.eval(xi, eta);
                let g = p.grad(xi, eta);
                let gw = [g[0] / h, g[1] / h];
                t += -(gw[0] * gz[0] + gw[1] * gz[1]) - 3.0 * zeta * u0 * u0 * wv * z;
            }
            if let Some(p) = wz {
                let wv = p.eval(xi, eta);
                let g = p.grad(xi, eta);
                let gw = [g[0] / h, g[1] / h];
                let gu = if affine { [gu0[0] + gv[0], gu0[1] + gv[1]] } else { gv };
                let nl = if affine { u0 * u0 * u0 + 3.0 * u0 * u0 * v } else { 3.0 * u0 * u0 * v };
                t += q * wv - (gu[0] * gw[0] + gu[1] * gw[1]) - zeta * nl * wv;
            }
            s += wt * h2 * t;
        }
        *o += s;
    }
    out
}

/// `η₁ = ½ L'(x_h)(π_h x_h - x_h)`, the estimate of `I₁ - I₁h`.
pub fn estimate_eta1(sub: &Subproblem, sol: &KktSolution) -> Estimate {
    let w = Weights::patch_defect(&sol.q, &sol.v, &sol.z);
    let x = Triple { q: &sol.q, v: &sol.v, z: &sol.z };
    let cells = lagrangian_cells(sub, sol.beta, x, &w, true);
    Estimate::from_cells(cells.into_iter().map(|c| 0.5 * c).collect())
}

/// `η₂ = ½ [I₂'(u_h)(δu) + L''(x¹, δx) + L'(x_h)(δx¹)]`, the estimate of `I₂ - I₂h`.
pub fn estimate_eta2(sub: &Subproblem, sol: &KktSolution, aux: &AuxSolution) -> Estimate {
    let dx = Weights::patch_defect(&sol.q, &sol.v, &sol.z);
    let dx1 = Weights::patch_defect(&aux.q, &aux.v, &aux.z);
    let x = Triple { q: &sol.q, v: &sol.v, z: &sol.z };
    let x1 = Triple { q: &aux.q, v: &aux.v, z: &aux.z };
    let t1 = sub.data.cell_pairing(&sol.u, &dx.u, true);
    let t2 = lagrangian_cells(sub, sol.beta, x1, &dx, false);
    let t3 = lagrangian_cells(sub, sol.beta, x, &dx1, true);
    let cells = (0..t1.len()).map(|k| 0.5 * (2.0 * t1[k] + t2[k] + t3[k])).collect();
    Estimate::from_cells(cells)
}

/// How the weights `x - x_h` of the dual weighted residual are approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Biquadratic patch reconstruction `π_h x_h - x_h`.
    Patch,
    /// Difference to the discrete solution on the uniformly refined mesh.
    TwoLevel,
}

impl WeightMode {
    pub fn label(&self) -> &'static str {
        match self {
            WeightMode::Patch => "patch",
            WeightMode::TwoLevel => "two-level",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "patch" => Some(WeightMode::Patch),
            "two-level" => Some(WeightMode::TwoLevel),
            _ => None,
        }
    }
}

/// `η₁` and optionally `η₂` with weights from the solution on `refine_all`.
///
/// Since the Lagrangian is quadratic and the reference solution is stationary
/// on the finer space, `η₁` equals `I₁(x_{h/2}) - I₁(x_h)` exactly. Cell
/// contributions are collected on the parent cells of the current mesh.
pub fn estimate_two_level(
    sub: &Subproblem,
    sol: &KktSolution,
    data: &NoisyData,
    with_eta2: bool,
) -> Result<(Estimate, Option<Estimate>), SubsolverError> {
    let coarse = sub.vs.mesh().clone();
    let fine = Arc::new(coarse.refine_all().map_err(FemError::from)?);
    let qs = Space::new(fine.clone(), SpaceKind::Q);
    let vs = Space::new(fine.clone(), SpaceKind::V);
    let md = Arc::new(MeshData::new(data, &vs)?);
    let fsub = Subproblem::new(sub.problem, &qs, &vs, &md, &sub.q_old, &sub.u_old, Some(&sub.q0))?;
    let fsol = solve_kkt(&fsub, sol.beta)?;
    let (q, v, z) = (sol.q.transfer(&qs)?, sol.v.transfer(&vs)?, sol.z.transfer(&vs)?);
    let dx = Weights::discrete(&fsol.q.add_scaled(-1.0, &q), &fsol.v.add_scaled(-1.0, &v), &fsol.z.add_scaled(-1.0, &z));
    let parent: Vec<usize> = (0..fine.num_cells())
        .map(|k| coarse.cell_id(&fine.cell(k).parent().expect("refined cell has a parent")).expect("nested meshes"))
        .collect();
    let collect = |cells: Vec<f64>| {
        let mut out = vec![0.0; coarse.num_cells()];
        for (k, c) in cells.into_iter().enumerate() {
            out[parent[k]] += c;
        }
        Estimate::from_cells(out)
    };
    let x = Triple { q: &q, v: &v, z: &z };
    let e1 = collect(lagrangian_cells(&fsub, sol.beta, x, &dx, true).into_iter().map(|c| 0.5 * c).collect());
    if !with_eta2 {
        return Ok((e1, None));
    }
    let aux = solve_second_order(sub, sol, &qoi_gradient(sub, sol))?;
    let faux = solve_second_order(&fsub, &fsol, &qoi_gradient(&fsub, &fsol))?;
    let (q1, v1, z1) = (aux.q.transfer(&qs)?, aux.v.transfer(&vs)?, aux.z.transfer(&vs)?);
    let dx1 = Weights::discrete(&faux.q.add_scaled(-1.0, &q1), &faux.v.add_scaled(-1.0, &v1), &faux.z.add_scaled(-1.0, &z1));
    let u = sol.u.transfer(&vs)?;
    let x1 = Triple { q: &q1, v: &v1, z: &z1 };
    let t1 = md.cell_pairing(&u, &dx.u, true);
    let t2 = lagrangian_cells(&fsub, sol.beta, x1, &dx, false);
    let t3 = lagrangian_cells(&fsub, sol.beta, x, &dx1, true);
    let e2 = collect((0..t1.len()).map(|k| 0.5 * (2.0 * t1[k] + t2[k] + t3[k])).collect());
    Ok((e1, Some(e2)))
}

/// Estimate of `||E||_{V*} - ||E||_{V_h*}` for `E = A(q_old, u_old)`.
///
/// `u_old` must live on the target state space; `q_old` on any coarser
/// mesh of the family.
pub fn estimate_wstar_error(problem: &ModelProblem, q_old: &Field, u_old: &Field) -> Result<f64, SubsolverError> {
    let vs = u_old.space().clone();
    if vs.dim() == 0 {
        return Ok(0.0);
    }
    let q_here = crate::fem::weight_on(&crate::fem::Space::new(vs.mesh().clone(), crate::fem::SpaceKind::Q), q_old)?;
    let e = problem.semilinear_residual(&q_here, u_old)?;
    let (nrm, vh) = riesz_dual_norm(&vs, &e)?;
    if nrm == 0.0 {
        return Ok(0.0);
    }
    let w = vh.scaled(1.0 / nrm);
    let pi = patch_interpolate(&w);
    let mesh = vs.mesh().clone();
    let zeta = problem.zeta;
    let pts = gauss2d(4);
    let mut total = 0.0;
    for k in 0..mesh.num_cells() {
        let Some(d) = pi.defect(k) else { continue };
        let h = mesh.cell(k).size();
        let (cu, cq, cv) = (u_old.corner_values(k), q_here.corner_values(k), vh.corner_values(k));
        for &(xi, eta, wt) in &pts {
            let sh = shape(xi, eta);
            let gr = shape_grad(xi, eta);
            let val = |c: &[f64; 4]| (0..4).map(|a| c[a] * sh[a]).sum::<f64>();
            let grad = |c: &[f64; 4]| {
                let mut g = [0.0; 2];
                for a in 0..4 {
                    g[0] += c[a] * gr[a][0] / h;
                    g[1] += c[a] * gr[a][1] / h;
                }
                g
            };
            let (u, q) = (val(&cu), val(&cq));
            let (gu, gv) = (grad(&cu), grad(&cv));
            let psi = d.eval(xi, eta);
            let g = d.grad(xi, eta);
            let gpsi = [g[0] / h, g[1] / h];
            let e_psi = gu[0] * gpsi[0] + gu[1] * gpsi[1] + zeta * u * u * u * psi - q * psi;
            let a_psi = gv[0] * gpsi[0] + gv[1] * gpsi[1];
            total += wt * h * h * 0.5 * (e_psi - a_psi);
        }
    }
    Ok(total)
}

/// Smallest set of eligible cells carrying at least `fraction` of the total
/// indicator mass, largest indicators first (ties by cell index).
pub fn mark_fraction(indicators: &[f64], fraction: f64, eligible: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..indicators.len()).filter(|&k| eligible(k) && indicators[k] > 0.0).collect();
    let total: f64 = idx.iter().map(|&k| indicators[k]).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    idx.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut out = Vec::new();
    for k in idx {
        out.push(k);
        acc += indicators[k];
        if acc >= fraction * total {
            break;
        }
    }
    out
}
