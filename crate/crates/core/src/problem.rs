//! The model inverse problem: identify `q` in `-Δu + ζ u³ = q`, `u = 0` on
//! the boundary, from point or L² observations of `u`.

use std::sync::Arc;

use faer::sparse::Triplet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::{
    assemble_vector, assemble_weighted_mass, gauss2d, riesz_dual_norm, shape, weight_on, FemError, Field,
    Poly9, Space, SpaceKind,
};
use crate::linalg::{OperatorKind, SparseMat, SpdSolver};
use crate::mesh::{uniform_mesh, QuadMesh};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ProblemError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("nonlinearity parameter must be finite and nonnegative, got {0}")]
    BadZeta(f64),
    #[error("Newton iteration did not converge after {steps} steps (residual {residual:e})")]
    NoConvergence { steps: usize, residual: f64 },
    #[error("operation requires L2 observations")]
    NotL2,
    #[error("invalid data: {0}")]
    InvalidData(String),
}

/// `A(q,u)(φ) = (∇u,∇φ) + ζ(u³,φ) − (q,φ)` with `f = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelProblem {
    pub zeta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions { tol: 1e-10, max_steps: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub u: Field,
    pub steps: usize,
    pub residuals: Vec<f64>,
}

/// `((q, φ_i))_i` for a Q field on the same mesh as `space`.
pub fn mass_load(space: &Space, q: &Field) -> Vec<f64> {
    let mesh = space.mesh().clone();
    let me = [[4.0, 2.0, 1.0, 2.0], [2.0, 4.0, 2.0, 1.0], [1.0, 2.0, 4.0, 2.0], [2.0, 1.0, 2.0, 4.0]];
    assemble_vector(space, |k| {
        let h2 = mesh.cell(k).size().powi(2) / 36.0;
        let c = q.corner_values(k);
        let mut l = [0.0; 4];
        for a in 0..4 {
            l[a] = h2 * (0..4).map(|b| me[a][b] * c[b]).sum::<f64>();
        }
        l
    })
}

impl ModelProblem {
    pub fn new(zeta: f64) -> Result<Self, ProblemError> {
        if !zeta.is_finite() || zeta < 0.0 {
            return Err(ProblemError::BadZeta(zeta));
        }
        Ok(ModelProblem { zeta })
    }

    /// `((u³, φ_i))_i` on the space of `u` with 4x4 Gauss quadrature.
    pub fn cubic_load(&self, u: &Field) -> Vec<f64> {
        let space = u.space().clone();
        let mesh = space.mesh().clone();
        let pts = gauss2d(4);
        assemble_vector(&space, |k| {
            let h2 = mesh.cell(k).size().powi(2);
            let c = u.corner_values(k);
            let mut l = [0.0; 4];
            for &(xi, eta, w) in &pts {
                let s = shape(xi, eta);
                let uv: f64 = (0..4).map(|a| c[a] * s[a]).sum();
                for a in 0..4 {
                    l[a] += w * h2 * uv * uv * uv * s[a];
                }
            }
            l
        })
    }

    /// `K = S + 3ζ M_{u²}`, the derivative of `A` with respect to `u`.
    pub fn tangent(&self, u: &Field) -> Result<SparseMat, ProblemError> {
        let space = u.space();
        let s = space.stiffness();
        if self.zeta == 0.0 {
            let mut k = s.clone();
            k.kind = OperatorKind::Tangent;
            return Ok(k);
        }
        let w = assemble_weighted_mass(space, u, 2)?;
        let mut k = s.add_scaled(3.0 * self.zeta, &w);
        k.kind = OperatorKind::Tangent;
        Ok(k)
    }

    /// The functional `φ ↦ A(q,u)(φ)` over the free nodes of `u`'s space.
    ///
    /// `q` may live on a coarser mesh of the same family.
    pub fn semilinear_residual(&self, q: &Field, u: &Field) -> Result<Vec<f64>, ProblemError> {
        let space = u.space();
        let q_here = weight_on(space, q)?;
        let mut r = space.stiffness().mul_vec(u.coef());
        if self.zeta != 0.0 {
            let c = self.cubic_load(u);
            for (ri, ci) in r.iter_mut().zip(c) {
                *ri += self.zeta * ci;
            }
        }
        let ql = mass_load(space, &q_here);
        for (ri, qi) in r.iter_mut().zip(ql) {
            *ri -= qi;
        }
        Ok(r)
    }

    /// Damped Newton solve of `A(q,u) = 0` on `space`.
    pub fn solve_forward(
        &self,
        q: &Field,
        space: &Arc<Space>,
        opts: &ForwardOptions,
        start: Option<&Field>,
    ) -> Result<ForwardSolution, ProblemError> {
        let mut u = match start {
            Some(s) => weight_on(space, s)?,
            None => Field::zeros(space),
        };
        if space.dim() == 0 {
            return Ok(ForwardSolution { u, steps: 0, residuals: vec![0.0] });
        }
        let q_here = weight_on(space, q)?;
        let mut r = self.semilinear_residual(&q_here, &u)?;
        let mut rn = riesz_dual_norm(space, &r)?.0;
        let mut residuals = vec![rn];
        let mut steps = 0;
        while rn > opts.tol {
            if steps >= opts.max_steps {
                return Err(ProblemError::NoConvergence { steps, residual: rn });
            }
            let k = self.tangent(&u)?;
            let solver = SpdSolver::new(&k).map_err(FemError::from)?;
            let du = solver.solve(&r);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial = u.add_scaled(-t, &Field::new(space.clone(), du.clone())?);
                let rt = self.semilinear_residual(&q_here, &trial)?;
                let rtn = riesz_dual_norm(space, &rt)?.0;
                if rtn < rn {
                    u = trial;
                    r = rt;
                    rn = rtn;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            steps += 1;
            residuals.push(rn);
            if !accepted {
                // no further decrease is possible in floating point
                if rn <= 100.0 * opts.tol {
                    break;
                }
                return Err(ProblemError::NoConvergence { steps, residual: rn });
            }
        }
        Ok(ForwardSolution { u, steps, residuals })
    }
}

/// Exact parameter fields of the synthetic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticCase {
    /// A single Gaussian bump.
    A,
    /// Two superposed Gaussians.
    B,
    /// Indicator of `x < 1/2`.
    C,
}

fn gaussian(c: f64, s: f64, x: f64, y: f64) -> f64 {
    let (mu, sigma) = (0.5, 0.1);
    let (a, b) = ((s * x - mu) / sigma, (s * y - mu) / sigma);
    c / (2.0 * std::f64::consts::PI * sigma * sigma) * (-0.5 * (a * a + b * b)).exp()
}

impl SyntheticCase {
    pub fn q_dagger(&self, x: f64, y: f64) -> f64 {
        match self {
            SyntheticCase::A => gaussian(10.0, 2.0, x, y),
            SyntheticCase::B => gaussian(1.0, 2.0, x, y) + gaussian(1.0, 0.8, x, y),
            SyntheticCase::C => {
                if x < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SyntheticCase::A => "a",
            SyntheticCase::B => "b",
            SyntheticCase::C => "c",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "a" | "A" => Some(SyntheticCase::A),
            "b" | "B" => Some(SyntheticCase::B),
            "c" | "C" => Some(SyntheticCase::C),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationKind {
    /// Point values on an `n_side x n_side` interior lattice.
    Point { n_side: usize },
    /// The full state in `L²(Ω)`.
    L2,
}

impl ObservationKind {
    pub fn label(&self) -> &'static str {
        match self {
            ObservationKind::Point { .. } => "point",
            ObservationKind::L2 => "l2",
        }
    }

    /// Measurement points `(i/(n+1), j/(n+1))`, `i, j = 1..=n`.
    pub fn points(&self) -> Vec<[f64; 2]> {
        match *self {
            ObservationKind::Point { n_side } => {
                let h = 1.0 / (n_side as f64 + 1.0);
                let mut p = Vec::with_capacity(n_side * n_side);
                for j in 1..=n_side {
                    for i in 1..=n_side {
                        p.push([i as f64 * h, j as f64 * h]);
                    }
                }
                p
            }
            ObservationKind::L2 => Vec::new(),
        }
    }
}

/// Nodal values of a Q1 function on a uniform grid of level `level`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub level: u8,
    /// Row-major values, index `j * (n + 1) + i`.
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(level: u8) -> Self {
        let n = (1usize << level) + 1;
        GridField { level, values: vec![0.0; n * n] }
    }

    pub fn cells_per_side(&self) -> usize {
        1 << self.level
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * (self.cells_per_side() + 1) + i]
    }

    /// Samples a field whose mesh is refined by the uniform grid.
    pub fn from_field(field: &Field, level: u8) -> Result<Self, FemError> {
        let n = 1usize << level;
        let mut g = GridField::zeros(level);
        for j in 0..=n {
            for i in 0..=n {
                g.values[j * (n + 1) + i] = field.eval([i as f64 / n as f64, j as f64 / n as f64])?;
            }
        }
        Ok(g)
    }

    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let n1 = self.cells_per_side() + 1;
        let h = 1.0 / self.cells_per_side() as f64;
        [(idx % n1) as f64 * h, (idx / n1) as f64 * h]
    }

    /// Bilinear interpolation.
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let n = self.cells_per_side();
        let (sx, sy) = (p[0] * n as f64, p[1] * n as f64);
        let i = (sx.floor() as usize).min(n - 1);
        let j = (sy.floor() as usize).min(n - 1);
        let (xi, eta) = (sx - i as f64, sy - j as f64);
        let c = [self.at(i, j), self.at(i + 1, j), self.at(i + 1, j + 1), self.at(i, j + 1)];
        let s = shape(xi, eta);
        (0..4).map(|a| c[a] * s[a]).sum()
    }

    fn corner(&self, i: usize, j: usize) -> [f64; 4] {
        [self.at(i, j), self.at(i + 1, j), self.at(i + 1, j + 1), self.at(i, j + 1)]
    }

    /// Exact `L²` inner product of the bilinear interpolants.
    pub fn inner(&self, other: &GridField) -> f64 {
        assert_eq!(self.level, other.level);
        let n = self.cells_per_side();
        let h2 = 1.0 / (n * n) as f64;
        let me = [[4.0, 2.0, 1.0, 2.0], [2.0, 4.0, 2.0, 1.0], [1.0, 2.0, 4.0, 2.0], [2.0, 1.0, 2.0, 4.0]];
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                let (a, b) = (self.corner(i, j), other.corner(i, j));
                for p in 0..4 {
                    for q in 0..4 {
                        s += me[p][q] * a[p] * b[q];
                    }
                }
            }
        }
        s * h2 / 36.0
    }

    pub fn norm2(&self) -> f64 {
        self.inner(self)
    }

    /// `||∇u||²` of the bilinear interpolant.
    pub fn grad_norm2(&self) -> f64 {
        let n = self.cells_per_side();
        let ke = [[4.0, -1.0, -2.0, -1.0], [-1.0, 4.0, -1.0, -2.0], [-2.0, -1.0, 4.0, -1.0], [-1.0, -2.0, -1.0, 4.0]];
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                let a = self.corner(i, j);
                for p in 0..4 {
                    for q in 0..4 {
                        s += ke[p][q] * a[p] * a[q];
                    }
                }
            }
        }
        s / 6.0
    }

    pub fn sub(&self, o: &GridField) -> GridField {
        GridField { level: self.level, values: self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observed {
    Point { points: Vec<[f64; 2]>, g: Vec<f64>, g_delta: Vec<f64> },
    L2 { g: GridField, g_delta: GridField },
}

/// Simulated measurements together with the ground truth they came from.
#[derive(Debug, Clone)]
pub struct NoisyData {
    pub case: SyntheticCase,
    pub obs: ObservationKind,
    pub zeta: f64,
    /// Relative noise level as a fraction (0.01 is one percent).
    pub noise: f64,
    pub seed: u64,
    pub fine_levels: u8,
    /// `||g - g^δ||_G`, recomputed from the perturbed data.
    pub delta: f64,
    pub observed: Observed,
    pub q_dagger: GridField,
    pub u_dagger: GridField,
    pub warnings: Vec<String>,
}

impl NoisyData {
    pub fn q_dagger_norm2(&self) -> f64 {
        self.q_dagger.norm2()
    }

    pub fn u_dagger_grad_norm2(&self) -> f64 {
        self.u_dagger.grad_norm2()
    }

    /// `||q - q†||_{L2} / ||q†||_{L2}`, evaluated on the data grid.
    pub fn relative_error(&self, q: &Field) -> Result<f64, FemError> {
        let qg = GridField::from_field(q, self.fine_levels)?;
        Ok((qg.sub(&self.q_dagger).norm2() / self.q_dagger.norm2()).sqrt())
    }

    /// Recomputes `δ` from the stored clean and perturbed data.
    pub fn recompute_delta(&self) -> f64 {
        match &self.observed {
            Observed::Point { g, g_delta, .. } => {
                g.iter().zip(g_delta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
            Observed::L2 { g, g_delta } => g.sub(g_delta).norm2().sqrt(),
        }
    }
}

/// Forward simulation on a uniform fine mesh followed by random perturbation.
pub fn simulate_data(
    problem: &ModelProblem,
    case: SyntheticCase,
    obs: ObservationKind,
    fine_levels: u8,
    noise: f64,
    seed: u64,
) -> Result<NoisyData, ProblemError> {
    if !(0.0..).contains(&noise) || !noise.is_finite() {
        return Err(ProblemError::InvalidData(format!("noise level {noise}")));
    }
    let mut warnings = Vec::new();
    if fine_levels < 7 {
        warnings.push(format!(
            "data mesh level {fine_levels} is shallow; solver meshes should stay strictly coarser"
        ));
    }
    let mesh = Arc::new(uniform_mesh(fine_levels));
    let qs = Space::new(mesh.clone(), SpaceKind::Q);
    let vs = Space::new(mesh, SpaceKind::V);
    let qd = Field::interpolate(&qs, |x, y| case.q_dagger(x, y));
    let ud = problem.solve_forward(&qd, &vs, &ForwardOptions::default(), None)?.u;
    let q_dagger = GridField::from_field(&qd, fine_levels)?;
    let u_dagger = GridField::from_field(&ud, fine_levels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (observed, delta) = match obs {
        ObservationKind::Point { n_side } => {
            if n_side == 0 {
                return Err(ProblemError::InvalidData("empty measurement lattice".into()));
            }
            let points = obs.points();
            let g: Vec<f64> = points.iter().map(|p| u_dagger.eval(*p)).collect();
            let amp = noise * g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let g_delta: Vec<f64> =
                g.iter().map(|gi| gi + amp * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let delta = g.iter().zip(&g_delta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            (Observed::Point { points, g, g_delta }, delta)
        }
        ObservationKind::L2 => {
            let g = u_dagger.clone();
            let r = GridField {
                level: fine_levels,
                values: (0..g.values.len()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
            };
            let scale = noise * g.norm2().sqrt() / r.norm2().sqrt();
            let g_delta = GridField {
                level: fine_levels,
                values: g.values.iter().zip(&r.values).map(|(a, b)| a + scale * b).collect(),
            };
            let delta = g.sub(&g_delta).norm2().sqrt();
            (Observed::L2 { g, g_delta }, delta)
        }
    };
    Ok(NoisyData {
        case,
        obs,
        zeta: problem.zeta,
        noise,
        seed,
        fine_levels,
        delta,
        observed,
        q_dagger,
        u_dagger,
        warnings,
    })
}

/// `∫_cell g ξ^a η^b dx` for every leaf, in leaf-local coordinates.
pub fn grid_moments(g: &GridField, mesh: &QuadMesh) -> Vec<[[f64; 3]; 3]> {
    let pts = gauss2d(3);
    let big_l = g.level;
    let n = g.cells_per_side();
    let hf = 1.0 / n as f64;
    mesh.cells()
        .iter()
        .map(|c| {
            let mut m = [[0.0; 3]; 3];
            let mut add = |xi: f64, eta: f64, wv: f64| {
                let px = [1.0, xi, xi * xi];
                let py = [1.0, eta, eta * eta];
                for a in 0..3 {
                    for b in 0..3 {
                        m[a][b] += wv * px[a] * py[b];
                    }
                }
            };
            if c.level <= big_l {
                let r = 1usize << (big_l - c.level);
                for dj in 0..r {
                    for di in 0..r {
                        let (i, j) = (c.i as usize * r + di, c.j as usize * r + dj);
                        let cv = g.corner(i, j);
                        for &(s, t, w) in &pts {
                            let sh = shape(s, t);
                            let gv: f64 = (0..4).map(|a| cv[a] * sh[a]).sum();
                            add((di as f64 + s) / r as f64, (dj as f64 + t) / r as f64, w * hf * hf * gv);
                        }
                    }
                }
            } else {
                let h = c.size();
                let [x0, y0] = c.origin();
                for &(s, t, w) in &pts {
                    let gv = g.eval([x0 + h * s, y0 + h * t]);
                    add(s, t, w * h * h * gv);
                }
            }
            m
        })
        .collect()
}

/// `(g, φ_i)` from per-cell moments.
pub fn load_from_moments(space: &Space, moments: &[[[f64; 3]; 3]]) -> Vec<f64> {
    let basis = [
        Poly9::from_bilinear([1.0, 0.0, 0.0, 0.0]),
        Poly9::from_bilinear([0.0, 1.0, 0.0, 0.0]),
        Poly9::from_bilinear([0.0, 0.0, 1.0, 0.0]),
        Poly9::from_bilinear([0.0, 0.0, 0.0, 1.0]),
    ];
    assemble_vector(space, |k| basis.map(|p| p.pair_moments(&moments[k])))
}

/// `L²` projection of the perturbed L² data onto a Q space.
pub fn restrict_data(data: &NoisyData, target: &Arc<Space>) -> Result<Field, ProblemError> {
    let Observed::L2 { g_delta, .. } = &data.observed else {
        return Err(ProblemError::NotL2);
    };
    let m = grid_moments(g_delta, target.mesh());
    let load = load_from_moments(target, &m);
    let solver = SpdSolver::new(target.mass()).map_err(FemError::from)?;
    Ok(Field::new(target.clone(), solver.solve(&load))?)
}

/// Observation data restricted to one solver mesh.
#[derive(Debug, Clone)]
pub struct MeshData {
    vspace: Arc<Space>,
    kind: MeshDataKind,
}

#[derive(Debug, Clone)]
enum MeshDataKind {
    Point { rows: SparseMat, g_delta: Vec<f64>, located: Vec<(usize, [f64; 2])> },
    L2 { moments: Vec<[[f64; 3]; 3]>, load: Vec<f64>, g_norm2: f64 },
}

impl MeshData {
    pub fn new(data: &NoisyData, vspace: &Arc<Space>) -> Result<Self, ProblemError> {
        let mesh = vspace.mesh();
        let kind = match &data.observed {
            Observed::Point { points, g_delta, .. } => {
                let mut trip = Vec::new();
                let mut located = Vec::with_capacity(points.len());
                for (r, p) in points.iter().enumerate() {
                    let (k, [xi, eta]) = mesh.locate(*p).map_err(FemError::from)?;
                    let s = shape(xi, eta);
                    for (a, e) in vspace.cell_map(k).iter().enumerate() {
                        for (d, w) in e.terms() {
                            trip.push(Triplet::new(r, d, s[a] * w));
                        }
                    }
                    located.push((k, [xi, eta]));
                }
                let rows = SparseMat::from_triplets(points.len(), vspace.dim(), &trip, OperatorKind::Observation);
                MeshDataKind::Point { rows, g_delta: g_delta.clone(), located }
            }
            Observed::L2 { g_delta, .. } => {
                let moments = grid_moments(g_delta, mesh);
                let load = load_from_moments(vspace, &moments);
                MeshDataKind::L2 { moments, load, g_norm2: g_delta.norm2() }
            }
        };
        Ok(MeshData { vspace: vspace.clone(), kind })
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.vspace
    }

    pub fn is_point(&self) -> bool {
        matches!(self.kind, MeshDataKind::Point { .. })
    }

    /// Observation matrix rows (point observations only).
    pub fn observation_rows(&self) -> Option<&SparseMat> {
        match &self.kind {
            MeshDataKind::Point { rows, .. } => Some(rows),
            MeshDataKind::L2 { .. } => None,
        }
    }

    /// `||C u - g^δ||²_G`.
    pub fn misfit2(&self, u: &[f64]) -> f64 {
        match &self.kind {
            MeshDataKind::Point { rows, g_delta, .. } => {
                rows.mul_vec(u).iter().zip(g_delta).map(|(a, b)| (a - b) * (a - b)).sum()
            }
            MeshDataKind::L2 { load, g_norm2, .. } => {
                let m = self.vspace.mass();
                (m.quad_form(u) - 2.0 * crate::linalg::dot(u, load) + g_norm2).max(0.0)
            }
        }
    }

    /// `C*C` as a matrix over the state space.
    pub fn ctc(&self) -> SparseMat {
        match &self.kind {
            MeshDataKind::Point { rows, .. } => {
                let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows.nrows()];
                for (i, j, v) in rows.entries() {
                    by_row[i].push((j, v));
                }
                let mut trip = Vec::new();
                for r in &by_row {
                    for &(a, va) in r {
                        for &(b, vb) in r {
                            trip.push(Triplet::new(a, b, va * vb));
                        }
                    }
                }
                SparseMat::from_triplets(self.vspace.dim(), self.vspace.dim(), &trip, OperatorKind::Observation)
            }
            MeshDataKind::L2 { .. } => {
                let mut m = self.vspace.mass().clone();
                m.kind = OperatorKind::Observation;
                m
            }
        }
    }

    /// `C*(C u - g^δ)`.
    pub fn ct_residual(&self, u: &[f64]) -> Vec<f64> {
        match &self.kind {
            MeshDataKind::Point { rows, g_delta, .. } => {
                let r: Vec<f64> = rows.mul_vec(u).iter().zip(g_delta).map(|(a, b)| a - b).collect();
                rows.mul_t_vec(&r)
            }
            MeshDataKind::L2 { load, .. } => {
                let mut r = self.vspace.mass().mul_vec(u);
                crate::linalg::axpy(&mut r, -1.0, load);
                r
            }
        }
    }

    /// Per-cell `(C u - g^δ, C w)_G` for a weight given cellwise.
    ///
    /// With `with_data = false` the data term is dropped, giving `(C u, C w)`.
    pub fn cell_pairing(&self, u: &Field, weight: &[Option<Poly9>], with_data: bool) -> Vec<f64> {
        let mesh = self.vspace.mesh();
        let mut out = vec![0.0; mesh.num_cells()];
        match &self.kind {
            MeshDataKind::Point { g_delta, located, .. } => {
                for (r, &(k, [xi, eta])) in located.iter().enumerate() {
                    let Some(w) = &weight[k] else { continue };
                    let c = u.corner_values(k);
                    let s = shape(xi, eta);
                    let mut val: f64 = (0..4).map(|a| c[a] * s[a]).sum();
                    if with_data {
                        val -= g_delta[r];
                    }
                    out[k] += val * w.eval(xi, eta);
                }
            }
            MeshDataKind::L2 { moments, .. } => {
                let pts = gauss2d(4);
                for (k, o) in out.iter_mut().enumerate() {
                    let Some(w) = &weight[k] else { continue };
                    let h2 = mesh.cell(k).size().powi(2);
                    let c = u.corner_values(k);
                    let mut s = 0.0;
                    for &(xi, eta, wq) in &pts {
                        let sh = shape(xi, eta);
                        let uv: f64 = (0..4).map(|a| c[a] * sh[a]).sum();
                        s += wq * h2 * uv * w.eval(xi, eta);
                    }
                    if with_data {
                        s -= w.pair_moments(&moments[k]);
                    }
                    *o = s;
                }
            }
        }
        out
    }
}
