//! Dense finite-dimensional checks of the block operator
//! `Y = TᵀT + diag(αI, μI)` with `T = [0 C; L K]`, its explicit inverse and
//! its norm bounds, plus the filter function estimates on diagonal models.
//!
//! Adjoints are transposes in the Euclidean inner products.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, thiserror::Error)]
pub enum TheoryError {
    #[error("inconsistent block sizes: {0}")]
    Dimension(String),
    #[error("K is numerically singular (condition number {0:e})")]
    SingularK(f64),
    #[error("Schur complement is numerically singular")]
    SingularSchur,
    #[error("singular value decomposition failed")]
    Svd,
    #[error("alpha must be positive and mu nonnegative")]
    Parameters,
}

/// `K: V → W*`, `L: Q → W*`, `C: V → G` with dimensions `n x n`, `n x m`, `p x n`.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub k: Mat<f64>,
    pub l: Mat<f64>,
    pub c: Mat<f64>,
    pub alpha: f64,
    pub mu: f64,
    /// Spectral condition number of `K`.
    pub cond_k: f64,
}

/// Largest singular value.
pub fn spectral_norm(a: &Mat<f64>) -> Result<f64, TheoryError> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let s = a.singular_values().map_err(|_| TheoryError::Svd)?;
    Ok(s.into_iter().fold(0.0, f64::max))
}

fn singular_range(a: &Mat<f64>) -> Result<(f64, f64), TheoryError> {
    let s = a.singular_values().map_err(|_| TheoryError::Svd)?;
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((min, max))
}

fn inverse(a: &Mat<f64>) -> Mat<f64> {
    a.partial_piv_lu().inverse()
}

fn scaled_identity(n: usize, s: f64) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { s } else { 0.0 })
}

/// `[[a, b], [c, d]]` as one matrix.
fn blocks(a: &Mat<f64>, b: &Mat<f64>, c: &Mat<f64>, d: &Mat<f64>) -> Mat<f64> {
    let (r, s) = (a.nrows(), a.ncols());
    Mat::from_fn(r + c.nrows(), s + b.ncols(), |i, j| match (i < r, j < s) {
        (true, true) => a[(i, j)],
        (true, false) => b[(i, j - s)],
        (false, true) => c[(i - r, j)],
        (false, false) => d[(i - r, j - s)],
    })
}

impl BlockSystem {
    pub fn new(k: Mat<f64>, l: Mat<f64>, c: Mat<f64>, alpha: f64, mu: f64) -> Result<Self, TheoryError> {
        let n = k.nrows();
        if k.ncols() != n || l.nrows() != n || c.ncols() != n {
            return Err(TheoryError::Dimension(format!(
                "K {}x{}, L {}x{}, C {}x{}",
                k.nrows(),
                k.ncols(),
                l.nrows(),
                l.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite() && mu >= 0.0 && mu.is_finite()) {
            return Err(TheoryError::Parameters);
        }
        let (smin, smax) = if n == 0 { (1.0, 1.0) } else { singular_range(&k)? };
        let cond_k = smax / smin;
        if !(cond_k.is_finite() && cond_k < 1e12) {
            return Err(TheoryError::SingularK(cond_k));
        }
        Ok(BlockSystem { k, l, c, alpha, mu, cond_k })
    }

    /// Entries iid uniform in `[-1, 1]`; `K` is shifted by `n I` so that it is invertible.
    pub fn random(rng: &mut impl Rng, m: usize, n: usize, p: usize, alpha: f64, mu: f64) -> Result<Self, TheoryError> {
        let mut u = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let mut k = u(n, n);
        for i in 0..n {
            k[(i, i)] += n as f64;
        }
        let l = u(n, m);
        let c = u(p, n);
        BlockSystem::new(k, l, c, alpha, mu)
    }

    pub fn dim_q(&self) -> usize {
        self.l.ncols()
    }

    pub fn dim_v(&self) -> usize {
        self.k.nrows()
    }

    pub fn with_params(&self, alpha: f64, mu: f64) -> Result<Self, TheoryError> {
        BlockSystem::new(self.k.clone(), self.l.clone(), self.c.clone(), alpha, mu)
    }

    /// `T = [0 C; L K]` from `Q x V` to `G x W*`.
    pub fn t(&self) -> Mat<f64> {
        let zero = Mat::zeros(self.c.nrows(), self.dim_q());
        blocks(&zero, &self.c, &self.l, &self.k)
    }

    pub fn tt_t(&self) -> Mat<f64> {
        let t = self.t();
        t.transpose() * &t
    }

    pub fn y(&self) -> Mat<f64> {
        let (m, n) = (self.dim_q(), self.dim_v());
        let mut y = self.tt_t();
        for i in 0..m {
            y[(i, i)] += self.alpha;
        }
        for i in 0..n {
            y[(m + i, m + i)] += self.mu;
        }
        y
    }

    /// `P = LᵀL + αI` and `M = CᵀC + KᵀK + μI`.
    pub fn p_and_m(&self) -> (Mat<f64>, Mat<f64>) {
        let p = self.l.transpose() * &self.l + scaled_identity(self.dim_q(), self.alpha);
        let m = self.c.transpose() * &self.c + self.k.transpose() * &self.k + scaled_identity(self.dim_v(), self.mu);
        (p, m)
    }

    /// Schur complement `N = P - LᵀK M⁻¹ KᵀL`.
    pub fn schur(&self) -> Mat<f64> {
        let (p, m) = self.p_and_m();
        let ltk = self.l.transpose() * &self.k;
        p - &ltk * inverse(&m) * ltk.transpose()
    }

    /// The explicit block inverse assembled from `N⁻¹` and `M⁻¹`.
    pub fn build_o(&self) -> Result<Mat<f64>, TheoryError> {
        let (_, m) = self.p_and_m();
        let n = self.schur();
        let (nmin, _) = if n.nrows() == 0 { (1.0, 1.0) } else { singular_range(&n)? };
        if !(nmin > 0.0 && nmin.is_finite()) {
            return Err(TheoryError::SingularSchur);
        }
        let ni = inverse(&n);
        let mi = inverse(&m);
        let ltk = self.l.transpose() * &self.k;
        let b = -(&ni * &ltk * &mi);
        let c = -(&mi * ltk.transpose() * &ni);
        let d = &mi + &mi * ltk.transpose() * &ni * &ltk * &mi;
        Ok(blocks(&ni, &b, &c, &d))
    }

    /// `||O Y - I||`.
    pub fn inverse_defect(&self) -> Result<f64, TheoryError> {
        let o = self.build_o()?;
        let e = o * self.y() - scaled_identity(self.dim_q() + self.dim_v(), 1.0);
        spectral_norm(&e)
    }

    /// `(||Y⁻¹ TᵀT||, 1 + max(α, μ) ||Y⁻¹||)`.
    pub fn identity_ii(&self) -> Result<(f64, f64), TheoryError> {
        let yi = self.build_o()?;
        let lhs = spectral_norm(&(&yi * self.tt_t()))?;
        let rhs = 1.0 + self.alpha.max(self.mu) * spectral_norm(&yi)?;
        Ok((lhs, rhs))
    }

    /// `(||Y⁻¹||², 2/α² (1 + ||L||²||K||²||K⁻¹||⁴)² + 2||K⁻¹||⁴)`.
    pub fn bound_iii(&self) -> Result<(f64, f64), TheoryError> {
        let yi = self.build_o()?;
        let norm = spectral_norm(&yi)?;
        let l = spectral_norm(&self.l)?;
        let k = spectral_norm(&self.k)?;
        let ki = spectral_norm(&inverse(&self.k))?;
        let a = self.alpha;
        let bound = 2.0 / (a * a) * (1.0 + l * l * k * k * ki.powi(4)).powi(2) + 2.0 * ki.powi(4);
        Ok((norm * norm, bound))
    }

    /// `(||M⁻¹||, ||K⁻¹||²)`.
    pub fn m_inverse_bound(&self) -> Result<(f64, f64), TheoryError> {
        let (_, m) = self.p_and_m();
        let mi = spectral_norm(&inverse(&m))?;
        let ki = spectral_norm(&inverse(&self.k))?;
        Ok((mi, ki * ki))
    }

    /// `(N q, q) / ||q||²`, which must be at least `α`.
    pub fn schur_ratio(&self, q: &[f64]) -> f64 {
        let n = self.schur();
        let mut num = 0.0;
        for i in 0..q.len() {
            for j in 0..q.len() {
                num += q[i] * n[(i, j)] * q[j];
            }
        }
        num / q.iter().map(|x| x * x).sum::<f64>()
    }
}

/// Spectral filter of the source condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Filter {
    /// `κ(λ) = λ^ν`, `ν ∈ [0, 1]`.
    Power(f64),
    /// `κ(λ) = ln(1/λ)^{-p}` applied to `λ / (e ||T||²)`.
    Log(f64),
}

impl Filter {
    /// `ν^ν (1 - ν)^{1 - ν}`, the exact supremum of `α^{1-ν} λ^ν / (λ + α)`.
    pub fn power_constant(nu: f64) -> f64 {
        let f = |x: f64| if x == 0.0 { 1.0 } else { x.powf(x) };
        f(nu) * f(1.0 - nu)
    }

    /// `α^ν` or `ln(1/α)^{-p}`.
    pub fn rate(&self, alpha: f64) -> f64 {
        match *self {
            Filter::Power(nu) => alpha.powf(nu),
            Filter::Log(p) => (1.0 / alpha).ln().powf(-p),
        }
    }
}

/// `TᵀT = diag(λ_q, λ_u)` with `α` on the first block and `μ` on the second.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalModel {
    pub q_spectrum: Vec<f64>,
    pub u_spectrum: Vec<f64>,
}

impl DiagonalModel {
    fn norm2(&self) -> f64 {
        self.q_spectrum.iter().chain(&self.u_spectrum).copied().fold(0.0, f64::max)
    }

    /// `α ||(TᵀT + diag(αI, μI))⁻¹ κ(TᵀT)||`.
    pub fn filtered(&self, filter: Filter, alpha: f64, mu: f64) -> f64 {
        let scale = std::f64::consts::E * self.norm2();
        let kappa = |l: f64| match filter {
            Filter::Power(nu) => l.powf(nu),
            Filter::Log(p) => (scale / l).ln().powf(-p),
        };
        let q = self.q_spectrum.iter().map(|&l| kappa(l) / (l + alpha));
        let u = self.u_spectrum.iter().map(|&l| kappa(l) / (l + mu));
        alpha * q.chain(u).fold(0.0, f64::max)
    }

    /// Largest `filtered / rate` over `alphas` and `μ ∈ {0, α/2, α}`.
    pub fn fitted_constant(&self, filter: Filter, alphas: &[f64]) -> f64 {
        let mut c: f64 = 0.0;
        for &a in alphas {
            for mu in [0.0, 0.5 * a, a] {
                c = c.max(self.filtered(filter, a, mu) / filter.rate(a));
            }
        }
        c
    }
}

/// `n` points geometrically spaced in `[a, b]`.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// One line of the theory report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Worst observed value and the bound it is compared with.
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn le(name: &str, value: f64, bound: f64) -> Check {
        Check { name: name.to_string(), value, bound, pass: value <= bound }
    }
}

/// The full deterministic suite: random block systems and diagonal filter models.
pub fn run_suite(seed: u64, trials: usize) -> Result<Vec<Check>, TheoryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [4usize, 8, 16];
    let alphas = [1e-3, 1e-1, 1.0];
    let mut defect: f64 = 0.0;
    let mut ii_excess = f64::NEG_INFINITY;
    let mut iii_ratio: f64 = 0.0;
    let mut schur_gap = f64::INFINITY;
    let mut m_ratio: f64 = 0.0;
    for t in 0..trials {
        let n = sizes[t % sizes.len()];
        let a = alphas[(t / sizes.len()) % alphas.len()];
        let mu = if t % 2 == 0 { 0.0 } else { a };
        let m = 1 + rng.random_range(0..n);
        let p = 1 + rng.random_range(0..n);
        let sys = BlockSystem::random(&mut rng, m, n, p, a, mu)?;
        defect = defect.max(sys.inverse_defect()?);
        let (lhs, rhs) = sys.identity_ii()?;
        ii_excess = ii_excess.max(lhs - rhs);
        for g in log_grid(1e-4, 1.0, 9) {
            for mu in [0.0, 0.5 * g, g] {
                let (v, b) = sys.with_params(g, mu)?.bound_iii()?;
                iii_ratio = iii_ratio.max(v / b);
            }
        }
        let q: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        schur_gap = schur_gap.min(sys.schur_ratio(&q) - a);
        let (mi, ki2) = sys.m_inverse_bound()?;
        m_ratio = m_ratio.max(mi / ki2);
    }
    let mut out = vec![
        Check::le("inverse: max ||O Y - I||", defect, 1e-10),
        Check::le("identity (ii): max lhs - rhs", ii_excess, 1e-12),
        Check::le("bound (iii): max ||Y^-1||^2 / bound", iii_ratio, 1.0),
        Check::le("Schur: -min ((Nq,q)/|q|^2 - alpha)", -schur_gap, 1e-10),
        Check::le("M inverse: max ||M^-1|| / ||K^-1||^2", m_ratio, 1.0 + 1e-10),
    ];

    let alphas = log_grid(1e-6, 1.0, 61);
    let q_spec = log_grid(1e-8, 1.0, 400);
    let pure = DiagonalModel { q_spectrum: q_spec.clone(), u_spectrum: Vec::new() };
    for nu in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let c = Filter::power_constant(nu);
        let fitted = pure.fitted_constant(Filter::Power(nu), &alphas);
        out.push(Check::le(&format!("filter nu={nu}: fitted C / nu^nu (1-nu)^(1-nu)"), fitted / c, 1.0 + 1e-12));
        // with a state block bounded below by λ_u the constant grows to λ_u^{ν-1} at most
        let lu = 0.5;
        let mixed = DiagonalModel { q_spectrum: q_spec.clone(), u_spectrum: log_grid(lu, 4.0, 50) };
        let fitted = mixed.fitted_constant(Filter::Power(nu), &alphas);
        out.push(Check::le(&format!("filter nu={nu}, state block: fitted C"), fitted, c.max(lu.powf(nu - 1.0)) * (1.0 + 1e-12)));
    }
    let log_alphas = log_grid(1e-8, (-1.0f64).exp(), 61);
    let log_model = DiagonalModel { q_spectrum: log_grid(1e-8, (-1.0f64).exp(), 400), u_spectrum: Vec::new() };
    for p in [0.5, 1.0, 2.0] {
        let fitted = log_model.fitted_constant(Filter::Log(p), &log_alphas);
        out.push(Check::le(&format!("filter log p={p}: fitted C_p"), fitted, 2.0));
    }
    Ok(out)
}
