//! Continuous Q1 finite elements on quadtree meshes.
//!
//! Hanging vertices are eliminated by condensation: a hanging value is the
//! mean of its two parents, and every assembled operator acts on free nodes
//! only. `Q` spaces carry all regular vertices, `V` spaces only the interior
//! ones (homogeneous Dirichlet data).

use std::sync::{Arc, OnceLock};

use faer::sparse::Triplet;

use crate::linalg::{dot, OperatorKind, SolveError, SparseMat, SpdSolver};
use crate::mesh::{MeshError, QuadMesh};

#[derive(Debug, Clone, thiserror::Error)]
pub enum FemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("spaces live on different meshes")]
    MeshMismatch,
    #[error("coefficient vector has length {got}, space dimension is {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("cannot transfer a Q field into a V space")]
    KindMismatch,
    #[error("space has no free nodes")]
    EmptySpace,
    #[error("unsupported weight exponent {0}")]
    Exponent(u32),
}

/// Gauss-Legendre rule on `[0,1]` with `n` points (`n` in 1..=4).
pub fn gauss(n: usize) -> (&'static [f64], &'static [f64]) {
    const P1: [f64; 1] = [0.5];
    const W1: [f64; 1] = [1.0];
    const P2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];
    const W2: [f64; 2] = [0.5, 0.5];
    const P3: [f64; 3] = [0.112_701_665_379_258_31, 0.5, 0.887_298_334_620_741_7];
    const W3: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    const P4: [f64; 4] = [
        0.069_431_844_202_973_71,
        0.330_009_478_207_571_9,
        0.669_990_521_792_428_1,
        0.930_568_155_797_026_3,
    ];
    const W4: [f64; 4] = [
        0.173_927_422_568_726_93,
        0.326_072_577_431_273_07,
        0.326_072_577_431_273_07,
        0.173_927_422_568_726_93,
    ];
    match n {
        1 => (&P1, &W1),
        2 => (&P2, &W2),
        3 => (&P3, &W3),
        4 => (&P4, &W4),
        _ => panic!("gauss: unsupported order {n}"),
    }
}

/// Tensor Gauss points `(xi, eta, weight)` on the reference square.
pub fn gauss2d(n: usize) -> Vec<(f64, f64, f64)> {
    let (p, w) = gauss(n);
    let mut out = Vec::with_capacity(n * n);
    for (a, wa) in p.iter().zip(w) {
        for (b, wb) in p.iter().zip(w) {
            out.push((*a, *b, wa * wb));
        }
    }
    out
}

/// Bilinear shape functions in corner order (0,0), (1,0), (1,1), (0,1).
#[inline]
pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta]
}

/// Reference gradients of [`shape`].
#[inline]
pub fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [eta, xi],
        [-eta, 1.0 - xi],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// All regular vertices (parameter space).
    Q,
    /// Interior regular vertices (state and adjoint space).
    V,
}

/// Value of one vertex as a combination of at most two free coefficients.
#[derive(Debug, Clone, Copy, Default)]
pub struct Expansion {
    pub n: u8,
    pub dof: [usize; 2],
    pub w: [f64; 2],
}

impl Expansion {
    fn push(&mut self, dof: usize, w: f64) {
        self.dof[self.n as usize] = dof;
        self.w[self.n as usize] = w;
        self.n += 1;
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n as usize).map(|k| (self.dof[k], self.w[k]))
    }

    pub fn apply(&self, coef: &[f64]) -> f64 {
        self.terms().map(|(d, w)| w * coef[d]).sum()
    }
}

pub struct Space {
    mesh: Arc<QuadMesh>,
    kind: SpaceKind,
    dof_vertex: Vec<usize>,
    dof_of_vertex: Vec<Option<usize>>,
    vertex_exp: Vec<Expansion>,
    stiffness: OnceLock<SparseMat>,
    stiffness_solver: OnceLock<Result<Arc<SpdSolver>, SolveError>>,
    mass: OnceLock<SparseMat>,
}

impl std::fmt::Debug for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Space")
            .field("kind", &self.kind)
            .field("dim", &self.dim())
            .field("generation", &self.mesh.generation())
            .finish()
    }
}

impl Space {
    pub fn new(mesh: Arc<QuadMesh>, kind: SpaceKind) -> Arc<Space> {
        let nv = mesh.num_vertices();
        let mut dof_of_vertex = vec![None; nv];
        let mut dof_vertex = Vec::new();
        for (v, slot) in dof_of_vertex.iter_mut().enumerate() {
            let free = mesh.hanging_parents(v).is_none()
                && (kind == SpaceKind::Q || !mesh.is_boundary_vertex(v));
            if free {
                *slot = Some(dof_vertex.len());
                dof_vertex.push(v);
            }
        }
        let vertex_exp = (0..nv)
            .map(|v| {
                let mut e = Expansion::default();
                if let Some(d) = dof_of_vertex[v] {
                    e.push(d, 1.0);
                } else if let Some(parents) = mesh.hanging_parents(v) {
                    for p in parents {
                        if let Some(d) = dof_of_vertex[p] {
                            e.push(d, 0.5);
                        }
                    }
                }
                e
            })
            .collect();
        Arc::new(Space {
            mesh,
            kind,
            dof_vertex,
            dof_of_vertex,
            vertex_exp,
            stiffness: OnceLock::new(),
            stiffness_solver: OnceLock::new(),
            mass: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Arc<QuadMesh> {
        &self.mesh
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dof_vertex.len()
    }

    pub fn dof_vertex(&self, d: usize) -> usize {
        self.dof_vertex[d]
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn dof_coords(&self, d: usize) -> [f64; 2] {
        self.mesh.vertex(self.dof_vertex[d])
    }

    pub fn vertex_expansion(&self, v: usize) -> &Expansion {
        &self.vertex_exp[v]
    }

    /// Expansions of the four corners of cell `k`.
    pub fn cell_map(&self, k: usize) -> [&Expansion; 4] {
        self.mesh.cell_vertices(k).map(|v| &self.vertex_exp[v])
    }

    pub fn same_mesh(&self, other: &Space) -> bool {
        self.mesh.generation() == other.mesh.generation()
    }

    /// Cached stiffness matrix.
    pub fn stiffness(&self) -> &SparseMat {
        self.stiffness.get_or_init(|| assemble_stiffness(self))
    }

    /// Cached mass matrix.
    pub fn mass(&self) -> &SparseMat {
        self.mass.get_or_init(|| assemble_mass(self, self).expect("same mesh"))
    }

    /// Cached Cholesky factor of the stiffness matrix.
    pub fn stiffness_solver(&self) -> Result<Arc<SpdSolver>, FemError> {
        if self.dim() == 0 {
            return Err(FemError::EmptySpace);
        }
        self.stiffness_solver
            .get_or_init(|| SpdSolver::new(self.stiffness()).map(Arc::new))
            .clone()
            .map_err(FemError::from)
    }
}

/// A Q1 function: coefficients over the free nodes of a space.
#[derive(Debug, Clone)]
pub struct Field {
    space: Arc<Space>,
    coef: Vec<f64>,
}

impl Field {
    pub fn new(space: Arc<Space>, coef: Vec<f64>) -> Result<Field, FemError> {
        if coef.len() != space.dim() {
            return Err(FemError::Dimension { expected: space.dim(), got: coef.len() });
        }
        Ok(Field { space, coef })
    }

    pub fn zeros(space: &Arc<Space>) -> Field {
        Field { space: space.clone(), coef: vec![0.0; space.dim()] }
    }

    /// Nodal interpolant of `f` (boundary values are dropped in `V`).
    pub fn interpolate(space: &Arc<Space>, f: impl Fn(f64, f64) -> f64) -> Field {
        let coef = (0..space.dim())
            .map(|d| {
                let [x, y] = space.dof_coords(d);
                f(x, y)
            })
            .collect();
        Field { space: space.clone(), coef }
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn mesh(&self) -> &Arc<QuadMesh> {
        self.space.mesh()
    }

    pub fn coef(&self) -> &[f64] {
        &self.coef
    }

    pub fn coef_mut(&mut self) -> &mut [f64] {
        &mut self.coef
    }

    pub fn into_coef(self) -> Vec<f64> {
        self.coef
    }

    pub fn scaled(&self, s: f64) -> Field {
        Field { space: self.space.clone(), coef: self.coef.iter().map(|c| s * c).collect() }
    }

    /// `self + s * other` on the same space.
    pub fn add_scaled(&self, s: f64, other: &Field) -> Field {
        assert_eq!(self.coef.len(), other.coef.len());
        let coef = self.coef.iter().zip(&other.coef).map(|(a, b)| a + s * b).collect();
        Field { space: self.space.clone(), coef }
    }

    /// Values at every mesh vertex, hanging and boundary vertices included.
    pub fn vertex_values(&self) -> Vec<f64> {
        (0..self.mesh().num_vertices())
            .map(|v| self.space.vertex_exp[v].apply(&self.coef))
            .collect()
    }

    pub fn corner_values(&self, k: usize) -> [f64; 4] {
        self.space.cell_map(k).map(|e| e.apply(&self.coef))
    }

    /// Point evaluation through [`QuadMesh::locate`].
    pub fn eval(&self, p: [f64; 2]) -> Result<f64, FemError> {
        let (k, [xi, eta]) = self.mesh().locate(p)?;
        let c = self.corner_values(k);
        let s = shape(xi, eta);
        Ok((0..4).map(|a| c[a] * s[a]).sum())
    }

    /// Exact transfer into a space on a mesh that refines this field's mesh.
    pub fn transfer(&self, target: &Arc<Space>) -> Result<Field, FemError> {
        if self.space.kind == SpaceKind::Q && target.kind == SpaceKind::V {
            return Err(FemError::KindMismatch);
        }
        if Arc::ptr_eq(&self.space, target)
            || (self.space.same_mesh(target) && self.space.kind == target.kind)
        {
            return Ok(Field { space: target.clone(), coef: self.coef.clone() });
        }
        if !target.mesh().refines(self.mesh()) {
            return Err(FemError::Mesh(MeshError::NonNested));
        }
        let mut coef = Vec::with_capacity(target.dim());
        for d in 0..target.dim() {
            coef.push(self.eval(target.dof_coords(d))?);
        }
        Ok(Field { space: target.clone(), coef })
    }

    /// `||u||_{L2}^2`.
    pub fn l2_norm2(&self) -> f64 {
        self.space.mass().quad_form(&self.coef)
    }

    /// `||grad u||_{L2}^2`.
    pub fn grad_norm2(&self) -> f64 {
        self.space.stiffness().quad_form(&self.coef)
    }
}

/// Evaluates `field` at `points` after checking that `target` refines the
/// field's mesh.
pub fn evaluate_cross_mesh(
    field: &Field,
    target: &QuadMesh,
    points: &[[f64; 2]],
) -> Result<Vec<f64>, FemError> {
    if !target.refines(field.mesh()) {
        return Err(FemError::Mesh(MeshError::NonNested));
    }
    points.iter().map(|p| field.eval(*p)).collect()
}

/// Scatters local 4x4 matrices through the constraint expansions.
pub fn assemble_cells(
    row: &Space,
    col: &Space,
    kind: OperatorKind,
    mut local: impl FnMut(usize) -> [[f64; 4]; 4],
) -> Result<SparseMat, FemError> {
    if !row.same_mesh(col) {
        return Err(FemError::MeshMismatch);
    }
    let mut trip = Vec::with_capacity(row.mesh.num_cells() * 16);
    for k in 0..row.mesh.num_cells() {
        let a_loc = local(k);
        let (rm, cm) = (row.cell_map(k), col.cell_map(k));
        for a in 0..4 {
            for b in 0..4 {
                let v = a_loc[a][b];
                if v == 0.0 {
                    continue;
                }
                for (i, wi) in rm[a].terms() {
                    for (j, wj) in cm[b].terms() {
                        trip.push(Triplet::new(i, j, wi * wj * v));
                    }
                }
            }
        }
    }
    Ok(SparseMat::from_triplets(row.dim(), col.dim(), &trip, kind))
}

/// Scatters local load vectors through the constraint expansions.
pub fn assemble_vector(space: &Space, mut local: impl FnMut(usize) -> [f64; 4]) -> Vec<f64> {
    let mut out = vec![0.0; space.dim()];
    for k in 0..space.mesh.num_cells() {
        let l = local(k);
        for (a, e) in space.cell_map(k).iter().enumerate() {
            for (d, w) in e.terms() {
                out[d] += w * l[a];
            }
        }
    }
    out
}

/// `(grad phi_i, grad phi_j)` with 3x3 Gauss quadrature.
pub fn assemble_stiffness(space: &Space) -> SparseMat {
    let mut ke = [[0.0; 4]; 4];
    for (xi, eta, w) in gauss2d(3) {
        let g = shape_grad(xi, eta);
        for a in 0..4 {
            for b in 0..4 {
                ke[a][b] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
    }
    assemble_cells(space, space, OperatorKind::Stiffness, |_| ke).expect("same mesh")
}

/// `(phi_i, phi_j)` with 3x3 Gauss quadrature (exact for Q1).
pub fn assemble_mass(row: &Space, col: &Space) -> Result<SparseMat, FemError> {
    let mut me = [[0.0; 4]; 4];
    for (xi, eta, w) in gauss2d(3) {
        let s = shape(xi, eta);
        for a in 0..4 {
            for b in 0..4 {
                me[a][b] += w * s[a] * s[b];
            }
        }
    }
    let mesh = row.mesh.clone();
    assemble_cells(row, col, OperatorKind::Mass, |k| {
        let h2 = mesh.cell(k).size().powi(2);
        me.map(|r| r.map(|v| v * h2))
    })
}

/// `(w^p phi_i, phi_j)` with 4x4 Gauss quadrature.
///
/// The weight is transferred onto the space's mesh first, so it may live on
/// any coarser mesh of the same family.
pub fn assemble_weighted_mass(
    space: &Arc<Space>,
    weight: &Field,
    exponent: u32,
) -> Result<SparseMat, FemError> {
    if !(1..=3).contains(&exponent) {
        return Err(FemError::Exponent(exponent));
    }
    let w_here = weight_on(space, weight)?;
    let pts = gauss2d(4);
    let mesh = space.mesh.clone();
    assemble_cells(space, space, OperatorKind::WeightedMass, |k| {
        let h2 = mesh.cell(k).size().powi(2);
        let c = w_here.corner_values(k);
        let mut me = [[0.0; 4]; 4];
        for &(xi, eta, w) in &pts {
            let s = shape(xi, eta);
            let rho = (0..4).map(|a| c[a] * s[a]).sum::<f64>().powi(exponent as i32);
            for a in 0..4 {
                for b in 0..4 {
                    me[a][b] += w * h2 * rho * s[a] * s[b];
                }
            }
        }
        me
    })
}

/// Brings a field onto the mesh of `space` (in its own kind).
pub fn weight_on(space: &Arc<Space>, field: &Field) -> Result<Field, FemError> {
    if field.space().same_mesh(space) {
        return Ok(field.clone());
    }
    let target = Space::new(space.mesh().clone(), field.space().kind());
    field.transfer(&target)
}

/// `||l||_{V_h*}` and its Riesz representer `v_h` with `(grad v_h, grad phi) = l(phi)`.
pub fn riesz_dual_norm(space: &Arc<Space>, functional: &[f64]) -> Result<(f64, Field), FemError> {
    if functional.len() != space.dim() {
        return Err(FemError::Dimension { expected: space.dim(), got: functional.len() });
    }
    let solver = space.stiffness_solver()?;
    let v = solver.solve(functional);
    let n2 = dot(functional, &v).max(0.0);
    Ok((n2.sqrt(), Field { space: space.clone(), coef: v }))
}

/// Biquadratic polynomial `sum c[a][b] xi^a eta^b` in cell-local coordinates.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Poly9(pub [[f64; 3]; 3]);

impl Poly9 {
    pub fn from_bilinear(c: [f64; 4]) -> Poly9 {
        let mut p = [[0.0; 3]; 3];
        p[0][0] = c[0];
        p[1][0] = c[1] - c[0];
        p[0][1] = c[3] - c[0];
        p[1][1] = c[0] - c[1] + c[2] - c[3];
        Poly9(p)
    }

    /// From values at the nodes `(a/2, b/2)`, `vals[a][b]`.
    pub fn from_nodal(vals: [[f64; 3]; 3]) -> Poly9 {
        let conv = |f: [f64; 3]| [f[0], -3.0 * f[0] + 4.0 * f[1] - f[2], 2.0 * f[0] - 4.0 * f[1] + 2.0 * f[2]];
        // along xi for each eta node, then along eta
        let mut tmp = [[0.0; 3]; 3]; // tmp[a][b]: xi-monomial a, eta node b
        for b in 0..3 {
            let m = conv([vals[0][b], vals[1][b], vals[2][b]]);
            for a in 0..3 {
                tmp[a][b] = m[a];
            }
        }
        let mut p = [[0.0; 3]; 3];
        for a in 0..3 {
            p[a] = conv(tmp[a]);
        }
        Poly9(p)
    }

    pub fn eval(&self, xi: f64, eta: f64) -> f64 {
        let px = [1.0, xi, xi * xi];
        let py = [1.0, eta, eta * eta];
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                s += self.0[a][b] * px[a] * py[b];
            }
        }
        s
    }

    /// Reference gradient `(d/dxi, d/deta)`.
    pub fn grad(&self, xi: f64, eta: f64) -> [f64; 2] {
        let px = [1.0, xi, xi * xi];
        let py = [1.0, eta, eta * eta];
        let dx = [0.0, 1.0, 2.0 * xi];
        let dy = [0.0, 1.0, 2.0 * eta];
        let (mut gx, mut gy) = (0.0, 0.0);
        for a in 0..3 {
            for b in 0..3 {
                gx += self.0[a][b] * dx[a] * py[b];
                gy += self.0[a][b] * px[a] * dy[b];
            }
        }
        [gx, gy]
    }

    pub fn sub(&self, o: &Poly9) -> Poly9 {
        let mut p = self.0;
        for a in 0..3 {
            for b in 0..3 {
                p[a][b] -= o.0[a][b];
            }
        }
        Poly9(p)
    }

    pub fn scale(&self, s: f64) -> Poly9 {
        Poly9(self.0.map(|r| r.map(|v| v * s)))
    }

    /// `int_cell p * m` given the monomial moments `m[a][b]` of some density.
    pub fn pair_moments(&self, m: &[[f64; 3]; 3]) -> f64 {
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                s += self.0[a][b] * m[a][b];
            }
        }
        s
    }
}

fn lagrange3(s: f64) -> [f64; 3] {
    [2.0 * (s - 0.5) * (s - 1.0), -4.0 * s * (s - 1.0), 2.0 * s * (s - 0.5)]
}

/// Patchwise biquadratic interpolant of a Q1 field.
///
/// On every leaf whose three siblings are leaves as well, the interpolant is
/// the biquadratic through the nine vertex values of the parent patch.
/// Other leaves keep the bilinear field itself.
#[derive(Debug, Clone)]
pub struct PatchInterpolant {
    cells: Vec<Option<Poly9>>,
    bilinear: Vec<Poly9>,
}

pub fn patch_interpolate(field: &Field) -> PatchInterpolant {
    let mesh = field.mesh();
    let vals = field.vertex_values();
    let n = mesh.num_cells();
    let mut cells = vec![None; n];
    let bilinear: Vec<Poly9> = (0..n).map(|k| Poly9::from_bilinear(field.corner_values(k))).collect();
    for (k, slot) in cells.iter_mut().enumerate() {
        let c = mesh.cell(k);
        let Some(p) = c.parent() else { continue };
        if !p.children().iter().all(|s| mesh.cell_id(s).is_some()) {
            continue;
        }
        let [x0, y0] = p.corners()[0];
        let half = (p.corners()[1][0] - x0) / 2;
        let mut nodal = [[0.0; 3]; 3];
        for (a, row) in nodal.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                let vid = mesh
                    .vertex_id([x0 + a as u32 * half, y0 + b as u32 * half])
                    .expect("sibling corners are vertices");
                *v = vals[vid];
            }
        }
        let (ci, cj) = c.child_offset();
        let mut local = [[0.0; 3]; 3];
        for (a, row) in local.iter_mut().enumerate() {
            let lx = lagrange3((ci as f64 + 0.5 * a as f64) / 2.0);
            for (b, v) in row.iter_mut().enumerate() {
                let ly = lagrange3((cj as f64 + 0.5 * b as f64) / 2.0);
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += nodal[i][j] * lx[i] * ly[j];
                    }
                }
                *v = s;
            }
        }
        *slot = Some(Poly9::from_nodal(local));
    }
    PatchInterpolant { cells, bilinear }
}

impl PatchInterpolant {
    /// `pi_h x_h` on cell `k` (the bilinear field on broken patches).
    pub fn on_cell(&self, k: usize) -> Poly9 {
        self.cells[k].unwrap_or(self.bilinear[k])
    }

    /// `pi_h x_h - x_h` on cell `k`, `None` where the weight vanishes.
    pub fn defect(&self, k: usize) -> Option<Poly9> {
        self.cells[k].map(|p| p.sub(&self.bilinear[k]))
    }

    pub fn has_patch(&self, k: usize) -> bool {
        self.cells[k].is_some()
    }
}
