//! The time-local noise generator: jump operators built from the bath poles,
//! Heisenberg-picture evolution, the coefficient matrix A(t) over Pauli
//! indices, its Hermitian/skew-Hermitian split, and application of the
//! generator to density matrices.
//!
//! For jump operator T_mu = sum_j g[j][mu] S_j the coefficient matrix is
//!
//! ```text
//! A[a][b](t) = sum_mu f_a^mu * conj( integral_0^t v_b^mu(tau) d tau )
//! f_a^mu     = tr(T_mu V_a) / 2^n
//! v_b^mu(tau)= exp(i omega_mu tau) tr(T_mu(-tau) V_b) / 2^n
//! ```
//!
//! and the generator acts as
//!
//! ```text
//! L_N rho = lambda^2 sum_{a,b} A[a][b] (V_a rho V_b - rho V_b V_a)
//!                            + conj(A[b][a]) (V_a rho V_b - V_b V_a rho).
//! ```
//!
//! Only Pauli indices with structurally nonzero coefficients are tracked;
//! for the models of interest this is a handful of the 4^n indices.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::operators::matrix::{
    check_hermitian, hermitian_eigen, spectral_norm_hermitian, trace_prod, CMatrix, HERM_TOL,
};
use crate::operators::pauli::PauliBasis;

/// Relative magnitude below which a Pauli coefficient is treated as
/// structurally zero when building active index sets.
const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SystemModel {
    n: usize,
    h_s: CMatrix,
    couplings: Vec<CMatrix>,
    lambda: f64,
}

impl SystemModel {
    pub fn new(n: usize, h_s: CMatrix, couplings: Vec<CMatrix>, lambda: f64) -> Result<Self> {
        let dim = 1usize << n;
        if h_s.nrows() != dim || h_s.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: h_s.nrows(),
            });
        }
        check_hermitian(&h_s, HERM_TOL)?;
        for (index, s) in couplings.iter().enumerate() {
            if s.nrows() != dim || s.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.nrows(),
                });
            }
            check_hermitian(s, HERM_TOL)?;
            let norm = spectral_norm_hermitian(s);
            if (norm - 1.0).abs() > HERM_TOL {
                return Err(Error::CouplingNotNormalized {
                    index,
                    norm,
                    tol: HERM_TOL,
                });
            }
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("coupling strength lambda = {lambda}")));
        }
        Ok(Self {
            n,
            h_s,
            couplings,
            lambda,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.h_s
    }

    pub fn couplings(&self) -> &[CMatrix] {
        &self.couplings
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_sq(&self) -> f64 {
        self.lambda * self.lambda
    }
}

/// Cached eigendecomposition of the system Hamiltonian, H = W E W^dag.
#[derive(Debug, Clone)]
pub struct HeisCache {
    evals: DVector<f64>,
    evecs: CMatrix,
}

impl HeisCache {
    pub fn new(h_s: &CMatrix) -> Result<Self> {
        check_hermitian(h_s, HERM_TOL)?;
        let (evals, evecs) = hermitian_eigen(h_s);
        Ok(Self { evals, evecs })
    }

    /// exp(-i H t)
    pub fn u(&self, t: f64) -> CMatrix {
        let d = self.evals.len();
        let mut u = CMatrix::zeros(d, d);
        for k in 0..d {
            u[(k, k)] = (-Complex64::i() * self.evals[k] * t).exp();
        }
        &self.evecs * u * self.evecs.adjoint()
    }

    pub fn to_eigenbasis(&self, op: &CMatrix) -> CMatrix {
        self.evecs.adjoint() * op * &self.evecs
    }

    /// Heisenberg evolution exp(i H tau) op exp(-i H tau) given the operator
    /// already rotated to the eigenbasis.
    pub fn evolve_from_eigenbasis(&self, op_eig: &CMatrix, tau: f64) -> CMatrix {
        let d = self.evals.len();
        let mut phased = op_eig.clone();
        for a in 0..d {
            for b in 0..d {
                let phase = (Complex64::i() * (self.evals[a] - self.evals[b]) * tau).exp();
                phased[(a, b)] *= phase;
            }
        }
        &self.evecs * phased * self.evecs.adjoint()
    }
}

/// Heisenberg-picture evolution op(tau) = exp(i H tau) op exp(-i H tau).
pub fn heisenberg(cache: &HeisCache, op: &CMatrix, tau: f64) -> CMatrix {
    cache.evolve_from_eigenbasis(&cache.to_eigenbasis(op), tau)
}

/// Coefficient matrix A(t) over Pauli indices, with its active support.
#[derive(Debug, Clone)]
pub struct CoeffMatrix {
    pub t: f64,
    pub a: CMatrix,
    pub active_rows: Vec<usize>,
    pub active_cols: Vec<usize>,
}

/// Hermitian and skew-Hermitian parts of A: A = Gamma + i Xi.
#[derive(Debug, Clone)]
pub struct GammaXi {
    pub gamma: CMatrix,
    pub xi: CMatrix,
}

impl CoeffMatrix {
    pub fn hermitian_split(&self) -> GammaXi {
        let adj = self.a.adjoint();
        let gamma = (&self.a + &adj) * Complex64::new(0.5, 0.0);
        let xi = (&self.a - &adj) * Complex64::new(0.0, -0.5);
        GammaXi { gamma, xi }
    }

    /// Sorted union of active row and column indices.
    pub fn support(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self
            .active_rows
            .iter()
            .chain(self.active_cols.iter())
            .copied()
            .collect();
        u.sort_unstable();
        u.dedup();
        u
    }
}

pub struct Generator {
    model: SystemModel,
    bath: BathSpec,
    pauli: PauliBasis,
    heis: HeisCache,
    jump_ops: Vec<CMatrix>,
    /// W^dag T_mu W, cached for Heisenberg evolution inside quadratures.
    jump_eig: Vec<CMatrix>,
    /// f[mu][a] = tr(T_mu V_a)/2^n
    f_coeffs: Vec<Vec<Complex64>>,
    active_rows: Vec<usize>,
}

/// Integration state for the incremental accumulation of A(t).
pub struct CoeffAccumulator {
    /// Running integral of v per pole per Pauli index.
    integrals: Vec<Vec<Complex64>>,
    /// v at the last evaluated node, per pole.
    v_last: Vec<Vec<Complex64>>,
    /// Largest |v| seen per Pauli index (for support detection).
    v_max: Vec<f64>,
    t: f64,
}

impl Generator {
    pub fn new(model: SystemModel, bath: BathSpec) -> Result<Self> {
        if bath.channels() != model.couplings().len() {
            return Err(Error::ChannelMismatch {
                model: model.couplings().len(),
                bath: bath.channels(),
            });
        }
        let pauli = PauliBasis::new(model.n())?;
        let heis = HeisCache::new(model.hamiltonian())?;
        let dim = model.dim();
        let mut jump_ops = Vec::with_capacity(bath.poles().len());
        for pole in bath.poles() {
            let mut t_mu = CMatrix::zeros(dim, dim);
            for (g, s) in pole.amplitudes.iter().zip(model.couplings()) {
                t_mu += s * *g;
            }
            jump_ops.push(t_mu);
        }
        let jump_eig = jump_ops.iter().map(|t| heis.to_eigenbasis(t)).collect();
        let norm = 1.0 / dim as f64;
        let f_coeffs: Vec<Vec<Complex64>> = jump_ops
            .iter()
            .map(|t| pauli.iter().map(|v| trace_prod(v, t) * norm).collect())
            .collect();
        let fmax = f_coeffs
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        let mut active_rows = Vec::new();
        for a in 0..pauli.len() {
            if f_coeffs.iter().any(|f| f[a].norm() > SUPPORT_TOL * fmax) {
                active_rows.push(a);
            }
        }
        Ok(Self {
            model,
            bath,
            pauli,
            heis,
            jump_ops,
            jump_eig,
            f_coeffs,
            active_rows,
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn bath(&self) -> &BathSpec {
        &self.bath
    }

    pub fn pauli(&self) -> &PauliBasis {
        &self.pauli
    }

    pub fn heis(&self) -> &HeisCache {
        &self.heis
    }

    pub fn jump_ops(&self) -> &[CMatrix] {
        &self.jump_ops
    }

    /// v[mu][b](tau) = exp(i omega_mu tau) tr(T_mu(-tau) V_b)/2^n.
    pub fn v_coeffs(&self, tau: f64) -> Vec<Vec<Complex64>> {
        self.jump_eig
            .iter()
            .zip(self.bath.poles())
            .map(|(t_eig, pole)| {
                let evolved = self.heis.evolve_from_eigenbasis(t_eig, -tau);
                let phase = (Complex64::i() * pole.frequency * tau).exp();
                self.pauli
                    .coefficients(&evolved)
                    .into_iter()
                    .map(|c| c * phase)
                    .collect()
            })
            .collect()
    }

    pub fn begin_accumulation(&self) -> CoeffAccumulator {
        let m = self.pauli.len();
        let v0 = self.v_coeffs(0.0);
        let mut v_max = vec![0.0_f64; m];
        for vp in &v0 {
            for (b, v) in vp.iter().enumerate() {
                v_max[b] = v_max[b].max(v.norm());
            }
        }
        CoeffAccumulator {
            integrals: vec![vec![Complex64::default(); m]; self.bath.poles().len()],
            v_last: v0,
            v_max,
            t: 0.0,
        }
    }

    /// Advance the running integrals by one trapezoid panel of width `h`.
    pub fn advance_panel(&self, acc: &mut CoeffAccumulator, h: f64) {
        let t_new = acc.t + h;
        let v_new = self.v_coeffs(t_new);
        for (mu, vp) in v_new.iter().enumerate() {
            for (b, v) in vp.iter().enumerate() {
                acc.integrals[mu][b] += (acc.v_last[mu][b] + v) * (0.5 * h);
                acc.v_max[b] = acc.v_max[b].max(v.norm());
            }
        }
        acc.v_last = v_new;
        acc.t = t_new;
    }

    /// Materialize A(t) from the accumulated integrals.
    pub fn coeff_from_accumulator(&self, acc: &CoeffAccumulator) -> CoeffMatrix {
        self.coeff_from_integrals(acc.t, &acc.integrals, &acc.v_max)
    }

    /// Materialize A(t) from externally accumulated integrals of v (one
    /// vector per pole) and the per-index magnitude envelope used for
    /// support detection. This lets integrators with their own quadrature
    /// (the reference propagators) share the projection step.
    pub fn coeff_from_integrals(
        &self,
        t: f64,
        integrals: &[Vec<Complex64>],
        v_max: &[f64],
    ) -> CoeffMatrix {
        let m = self.pauli.len();
        let mut a = CMatrix::zeros(m, m);
        let vmax_all = v_max.iter().cloned().fold(0.0_f64, f64::max);
        let mut active_cols = Vec::new();
        for b in 0..m {
            if v_max[b] > SUPPORT_TOL * vmax_all {
                active_cols.push(b);
            }
        }
        for &row in &self.active_rows {
            for &col in &active_cols {
                let mut entry = Complex64::default();
                for (mu, f) in self.f_coeffs.iter().enumerate() {
                    entry += f[row] * integrals[mu][col].conj();
                }
                a[(row, col)] = entry;
            }
        }
        CoeffMatrix {
            t,
            a,
            active_rows: self.active_rows.clone(),
            active_cols,
        }
    }

    /// One-shot A(t) by composite trapezoid quadrature with step <= quad_step.
    pub fn coeff_matrix(&self, t: f64, quad_step: f64) -> CoeffMatrix {
        let mut acc = self.begin_accumulation();
        if t > 0.0 {
            let panels = (t / quad_step).ceil().max(1.0) as usize;
            let h = t / panels as f64;
            for _ in 0..panels {
                self.advance_panel(&mut acc, h);
            }
        }
        self.coeff_from_accumulator(&acc)
    }

    /// A(k dt) for k = 0..=n_steps, each step advanced by `quad_substeps`
    /// trapezoid panels. Step k+1 reuses the integrals of step k.
    pub fn coeff_table(&self, n_steps: usize, dt: f64, quad_substeps: usize) -> Vec<CoeffMatrix> {
        let mut acc = self.begin_accumulation();
        let mut out = Vec::with_capacity(n_steps + 1);
        out.push(self.coeff_from_accumulator(&acc));
        let h = dt / quad_substeps.max(1) as f64;
        for _ in 0..n_steps {
            for _ in 0..quad_substeps.max(1) {
                self.advance_panel(&mut acc, h);
            }
            out.push(self.coeff_from_accumulator(&acc));
        }
        out
    }

    /// Full generator L_N(t) applied to a density-like matrix.
    pub fn apply_l_n(&self, a: &CoeffMatrix, rho: &CMatrix) -> CMatrix {
        let lam2 = Complex64::new(self.model.lambda_sq(), 0.0);
        let d = self.model.dim();
        let mut out = CMatrix::zeros(d, d);
        for &row in &a.active_rows {
            let va = self.pauli.element(row);
            for &col in &a.active_cols {
                let coeff = a.a[(row, col)];
                if coeff.norm_sqr() == 0.0 {
                    continue;
                }
                let vb = self.pauli.element(col);
                // A[a][b] (V_a rho V_b - rho V_b V_a)
                out += (va * rho * vb - rho * (vb * va)) * (lam2 * coeff);
                // conj(A[a][b]) (V_b rho V_a - V_a V_b rho), the (b,a) term of
                // the conjugate family re-indexed onto the support of A
                out += (vb * rho * va - (va * vb) * rho) * (lam2 * coeff.conj());
            }
        }
        out
    }

    /// Incoherent part: lambda^2 sum Gamma[a][b] (2 V_a rho V_b - rho V_b V_a - V_b V_a rho).
    pub fn apply_l_d(&self, a: &CoeffMatrix, rho: &CMatrix) -> CMatrix {
        let gx = a.hermitian_split();
        let lam2 = Complex64::new(self.model.lambda_sq(), 0.0);
        let d = self.model.dim();
        let support = a.support();
        let mut out = CMatrix::zeros(d, d);
        for &row in &support {
            let va = self.pauli.element(row);
            for &col in &support {
                let coeff = gx.gamma[(row, col)];
                if coeff.norm_sqr() == 0.0 {
                    continue;
                }
                let vb = self.pauli.element(col);
                let vbva = vb * va;
                out += (va * rho * vb * Complex64::new(2.0, 0.0) - rho * &vbva - &vbva * rho)
                    * (lam2 * coeff);
            }
        }
        out
    }

    /// Coherent part: i lambda^2 [ sum Xi[a][b] V_b V_a, rho ].
    pub fn apply_l_c(&self, a: &CoeffMatrix, rho: &CMatrix) -> CMatrix {
        let shift = self.lamb_shift_operator(a);
        let lam2 = Complex64::new(0.0, self.model.lambda_sq());
        (&shift * rho - rho * &shift) * lam2
    }

    /// The environment-induced Hamiltonian correction Delta_S =
    /// sum Xi[a][b] V_b V_a (Hermitian). The coherent part of the generator
    /// is i lambda^2 [Delta_S, rho].
    pub fn lamb_shift_operator(&self, a: &CoeffMatrix) -> CMatrix {
        let gx = a.hermitian_split();
        let d = self.model.dim();
        let support = a.support();
        let mut shift = CMatrix::zeros(d, d);
        for &row in &support {
            for &col in &support {
                let coeff = gx.xi[(row, col)];
                if coeff.norm_sqr() == 0.0 {
                    continue;
                }
                shift += self.pauli.element(col) * self.pauli.element(row) * coeff;
            }
        }
        shift
    }

    /// Eigenvalues of the Hermitian part Gamma(t), ascending. With
    /// `active_only` the spectrum is restricted to the active sub-block;
    /// otherwise inactive indices contribute exact zeros.
    pub fn gamma_spectrum(&self, a: &CoeffMatrix, active_only: bool) -> Vec<f64> {
        let gx = a.hermitian_split();
        let support = a.support();
        let block = if support.is_empty() {
            CMatrix::zeros(0, 0)
        } else {
            CMatrix::from_fn(support.len(), support.len(), |i, j| {
                gx.gamma[(support[i], support[j])]
            })
        };
        let mut vals: Vec<f64> = if block.nrows() == 0 {
            Vec::new()
        } else {
            let (v, _) = hermitian_eigen(&block);
            v.iter().copied().collect()
        };
        if !active_only {
            vals.extend(std::iter::repeat(0.0).take(self.pauli.len() - support.len()));
            vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        }
        vals
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{BathSpec, Pole};
    use crate::operators::matrix::{c64, kron, max_abs, max_abs_diff, trace};
    use crate::operators::pauli::{identity2, sigma_x, sigma_y, sigma_z};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn dephasing_model(lambda: f64) -> SystemModel {
        SystemModel::new(1, CMatrix::zeros(2, 2), vec![sigma_z()], lambda).unwrap()
    }

    fn spin_boson_model(delta: f64, lambda: f64) -> SystemModel {
        SystemModel::new(1, sigma_z() * c64(-delta / 2.0, 0.0), vec![sigma_x()], lambda).unwrap()
    }

    fn single_pole_bath(g: Complex64, omega: Complex64) -> BathSpec {
        BathSpec::single_channel(&[(g, omega)]).unwrap()
    }

    /// Closed-form A_zz(t) for pure dephasing with a single pole.
    fn dephasing_a_zz(g: Complex64, omega: Complex64, t: f64) -> Complex64 {
        let iwc = Complex64::i() * omega.conj();
        g.norm_sqr() * (1.0 - (-iwc * t).exp()) / iwc
    }

    #[test]
    fn jump_ops_single_channel() {
        let gen = Generator::new(
            dephasing_model(0.5),
            single_pole_bath(c64(1., 0.), c64(0., 1.)),
        )
        .unwrap();
        assert!(max_abs_diff(&gen.jump_ops()[0], &sigma_z()) < 1e-15);
    }

    #[test]
    fn jump_ops_two_channel_structure() {
        // channels sx (x) I and I (x) sx; pole amplitudes (g, 0) and (0, g)
        let g = c64(0.8, 0.0);
        let s1 = kron(&sigma_x(), &identity2());
        let s2 = kron(&identity2(), &sigma_x());
        let h = kron(&sigma_z(), &identity2()) + kron(&identity2(), &sigma_z());
        let model = SystemModel::new(2, h * c64(4.0, 0.0), vec![s1.clone(), s2.clone()], 0.9)
            .unwrap();
        let bath = BathSpec::new(
            2,
            vec![
                Pole {
                    amplitudes: vec![g, c64(0., 0.)],
                    frequency: c64(0., 1.),
                },
                Pole {
                    amplitudes: vec![c64(0., 0.), g],
                    frequency: c64(0., 1.),
                },
            ],
        )
        .unwrap();
        let gen = Generator::new(model, bath).unwrap();
        assert!(max_abs_diff(&gen.jump_ops()[0], &(&s1 * g)) < 1e-15);
        assert!(max_abs_diff(&gen.jump_ops()[1], &(&s2 * g)) < 1e-15);
    }

    #[test]
    fn jump_ops_scale_linearly() {
        let g = c64(0.3, 0.4);
        let gen1 = Generator::new(dephasing_model(1.0), single_pole_bath(g, c64(0., 1.)))
            .unwrap();
        let gen2 = Generator::new(
            dephasing_model(1.0),
            single_pole_bath(g * 2.5, c64(0., 1.)),
        )
        .unwrap();
        assert!(max_abs_diff(&(&gen1.jump_ops()[0] * c64(2.5, 0.0)), &gen2.jump_ops()[0]) < 1e-14);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let bath = BathSpec::new(
            2,
            vec![Pole {
                amplitudes: vec![c64(1., 0.), c64(1., 0.)],
                frequency: c64(0., 1.),
            }],
        )
        .unwrap();
        assert!(Generator::new(dephasing_model(1.0), bath).is_err());
    }

    #[test]
    fn heisenberg_evolution() {
        let delta = 2.0;
        let h = sigma_z() * c64(-delta / 2.0, 0.0);
        let cache = HeisCache::new(&h).unwrap();
        // tau = 0 leaves the operator unchanged
        assert!(max_abs_diff(&heisenberg(&cache, &sigma_x(), 0.0), &sigma_x()) < 1e-14);
        // sx(tau) = cos(Delta tau) sx + sin(Delta tau) sy; at tau = pi/(2 Delta) -> sy
        let tau = std::f64::consts::FRAC_PI_2 / delta;
        assert!(max_abs_diff(&heisenberg(&cache, &sigma_x(), tau), &sigma_y()) < 1e-12);
        // commuting operator stays constant
        assert!(max_abs_diff(&heisenberg(&cache, &sigma_z(), 1.3), &sigma_z()) < 1e-13);
    }

    #[test]
    fn coeff_matrix_vanishes_at_zero() {
        let gen = Generator::new(
            spin_boson_model(2.0, 0.1),
            single_pole_bath(c64(1., 0.), c64(0.4, 1.1)),
        )
        .unwrap();
        let a = gen.coeff_matrix(0.0, 0.01);
        assert_eq!(max_abs(&a.a), 0.0);
        assert_eq!(a.t, 0.0);
    }

    #[test]
    fn dephasing_coeff_matches_closed_form() {
        let g = c64(0.9, 0.0);
        let omega = c64(0.3, 1.0);
        let gen = Generator::new(dephasing_model(1.0), single_pole_bath(g, omega)).unwrap();
        let t = 1.7;
        let a = gen.coeff_matrix(t, 0.005);
        let expect = dephasing_a_zz(g, omega, t);
        // only the (z,z) entry is populated
        for row in 0..4 {
            for col in 0..4 {
                if (row, col) != (3, 3) {
                    assert!(a.a[(row, col)].norm() < 1e-13, "({row},{col})");
                }
            }
        }
        assert!((a.a[(3, 3)] - expect).norm() < 1e-5);
        // long-time limit: A_zz -> |g|^2/(i conj(omega))
        let theta = omega.im;
        let a_inf = gen.coeff_matrix(20.0 / theta, 0.002).a[(3, 3)];
        let limit = g.norm_sqr() / (Complex64::i() * omega.conj());
        assert!((a_inf - limit).norm() < 1e-6);
    }

    #[test]
    fn quadrature_error_is_second_order() {
        let g = c64(1.0, 0.0);
        let omega = c64(0.5, 1.0);
        let gen = Generator::new(dephasing_model(1.0), single_pole_bath(g, omega)).unwrap();
        let t = 1.0;
        let exact = dephasing_a_zz(g, omega, t);
        let steps = [0.1, 0.05, 0.025, 0.0125];
        let errs: Vec<f64> = steps
            .iter()
            .map(|&h| (gen.coeff_matrix(t, h).a[(3, 3)] - exact).norm())
            .collect();
        // least-squares slope on log-log
        let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let slope = fit_slope(&xs, &ys);
        assert!(
            (slope - 2.0).abs() <= 0.2,
            "quadrature order slope {slope}, errors {errs:?}"
        );
    }

    fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        num / den
    }

    #[test]
    fn hermitian_split_reconstructs() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(21);
        let m = 4;
        let a = CMatrix::from_fn(m, m, |_, _| {
            c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let cm = CoeffMatrix {
            t: 0.5,
            a: a.clone(),
            active_rows: (0..m).collect(),
            active_cols: (0..m).collect(),
        };
        let gx = cm.hermitian_split();
        assert!(max_abs_diff(&gx.gamma, &gx.gamma.adjoint()) < 1e-15);
        assert!(max_abs_diff(&gx.xi, &gx.xi.adjoint()) < 1e-15);
        let back = &gx.gamma + &gx.xi * Complex64::i();
        assert!(max_abs_diff(&back, &a) < 1e-14);

        // Hermitian input -> Xi = 0; skew input (i * Hermitian) -> Gamma = 0
        let herm = &a + a.adjoint();
        let cm_h = CoeffMatrix {
            t: 0.0,
            a: herm.clone(),
            active_rows: vec![],
            active_cols: vec![],
        };
        assert!(max_abs(&cm_h.hermitian_split().xi) < 1e-14);
        let cm_s = CoeffMatrix {
            t: 0.0,
            a: herm * Complex64::i(),
            active_rows: vec![],
            active_cols: vec![],
        };
        assert!(max_abs(&cm_s.hermitian_split().gamma) < 1e-14);
    }

    /// Test-only oracle: L_N rho evaluated directly from the defining
    /// kernel integral, without the Pauli-coefficient decomposition.
    fn l_n_oracle(gen: &Generator, t: f64, rho: &CMatrix, steps: usize) -> CMatrix {
        let d = gen.model().dim();
        let lam2 = c64(gen.model().lambda_sq(), 0.0);
        let mut out = CMatrix::zeros(d, d);
        if t == 0.0 {
            return out;
        }
        let h = t / steps as f64;
        for (pole, t_mu) in gen.bath().poles().iter().zip(gen.jump_ops()) {
            let f = t_mu;
            let term = |tau: f64| -> CMatrix {
                let g = heisenberg(&gen.heis, f, -tau) * (Complex64::i() * pole.frequency * tau).exp();
                f * rho * g.adjoint() + &g * rho * f.adjoint()
                    - rho * (g.adjoint() * f)
                    - (f.adjoint() * &g) * rho
            };
            let mut acc = CMatrix::zeros(d, d);
            for k in 0..=steps {
                let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                acc += term(k as f64 * h) * c64(w * h, 0.0);
            }
            out += acc * lam2;
        }
        out
    }

    #[test]
    fn generator_matches_kernel_oracle_dephasing() {
        let gen = Generator::new(
            dephasing_model(0.7),
            single_pole_bath(c64(0.8, 0.0), c64(0.2, 0.9)),
        )
        .unwrap();
        let t = 1.3;
        let a = gen.coeff_matrix(t, t / 2000.0);
        let rho = test_density();
        let fast = gen.apply_l_n(&a, &rho);
        let slow = l_n_oracle(&gen, t, &rho, 2000);
        assert!(max_abs_diff(&fast, &slow) < 1e-6);
    }

    #[test]
    fn generator_matches_kernel_oracle_spin_boson() {
        let gen = Generator::new(
            spin_boson_model(2.0, 0.4),
            single_pole_bath(c64(1.1, 0.0), c64(-0.7, 0.6)),
        )
        .unwrap();
        let t = 0.9;
        let a = gen.coeff_matrix(t, t / 4000.0);
        let rho = test_density();
        let fast = gen.apply_l_n(&a, &rho);
        let slow = l_n_oracle(&gen, t, &rho, 4000);
        assert!(max_abs_diff(&fast, &slow) < 1e-6, "{}", max_abs_diff(&fast, &slow));
    }

    fn test_density() -> CMatrix {
        // fixed full-rank single-qubit density matrix with coherences
        let psi = crate::operators::matrix::CVector::from_vec(vec![
            c64(0.8, 0.1),
            c64(0.3, -0.5),
        ]);
        let rho = &psi * psi.adjoint();
        let tr = trace(&rho);
        rho / tr
    }

    #[test]
    fn dephasing_off_diagonal_rate() {
        // L_N acts on rho_01 as multiplication by -4 lambda^2 Re A_zz(t)
        let lambda = 0.6;
        let g = c64(1.0, 0.0);
        let omega = c64(0.0, 1.0);
        let gen =
            Generator::new(dephasing_model(lambda), single_pole_bath(g, omega)).unwrap();
        let t = 0.8;
        let a = gen.coeff_matrix(t, 1e-4);
        let rho = test_density();
        let out = gen.apply_l_n(&a, &rho);
        let rate = -4.0 * lambda * lambda * dephasing_a_zz(g, omega, t).re;
        assert!((out[(0, 1)] - rho[(0, 1)] * rate).norm() < 1e-7);
        assert!(out[(0, 0)].norm() < 1e-12 && out[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn generator_invariants() {
        let gen = Generator::new(
            spin_boson_model(8.0, 0.9),
            single_pole_bath(c64(1.3, 0.0), c64(-1.0, 0.8)),
        )
        .unwrap();
        let a = gen.coeff_matrix(0.7, 0.002);
        let rho1 = test_density();
        let rho2 = {
            let m = sigma_x() * c64(0.2, 0.0) + identity2() * c64(0.5, 0.0);
            m
        };
        // trace annihilation
        assert!(trace(&gen.apply_l_n(&a, &rho1)).norm() < 1e-12);
        // linearity
        let lin_lhs = gen.apply_l_n(&a, &(&rho1 * c64(0.3, 0.0) + &rho2 * c64(-1.2, 0.0)));
        let lin_rhs =
            gen.apply_l_n(&a, &rho1) * c64(0.3, 0.0) + gen.apply_l_n(&a, &rho2) * c64(-1.2, 0.0);
        assert!(max_abs_diff(&lin_lhs, &lin_rhs) < 1e-12);
        // Hermiticity preservation
        let out = gen.apply_l_n(&a, &rho1);
        assert!(max_abs_diff(&out, &out.adjoint()) < 1e-12);
        // coherent + incoherent = full
        let split_sum = gen.apply_l_c(&a, &rho1) + gen.apply_l_d(&a, &rho1);
        assert!(max_abs_diff(&split_sum, &out) < 1e-12);
    }

    #[test]
    fn zero_coupling_kills_generator() {
        let gen = Generator::new(
            dephasing_model(0.0),
            single_pole_bath(c64(1., 0.), c64(0., 1.)),
        )
        .unwrap();
        let a = gen.coeff_matrix(1.0, 0.01);
        let out = gen.apply_l_n(&a, &test_density());
        assert_eq!(max_abs(&out), 0.0);
    }

    #[test]
    fn gamma_spectrum_dephasing_markovian_like() {
        // omega = i kappa: Gamma_zz(t) = g^2 (1 - exp(-kappa t))/kappa >= 0
        let kappa = 1.3;
        let g = 0.8;
        let gen = Generator::new(
            dephasing_model(1.0),
            single_pole_bath(c64(g, 0.0), c64(0.0, kappa)),
        )
        .unwrap();
        for &t in &[0.0, 0.5, 1.5, 4.0] {
            let a = gen.coeff_matrix(t, 1e-3);
            let spec = gen.gamma_spectrum(&a, false);
            assert_eq!(spec.len(), 4);
            let expect = g * g * (1.0 - (-kappa * t).exp()) / kappa;
            let top = spec.last().unwrap();
            assert_relative_eq!(*top, expect, epsilon = 1e-6);
            assert!(spec.iter().all(|&e| e >= -1e-12));
        }
    }

    #[test]
    fn gamma_spectrum_goes_negative_with_oscillation() {
        // x coupling with a splitting makes the smaller Gamma eigenvalue negative
        let gen = Generator::new(
            spin_boson_model(8.0, 0.9),
            single_pole_bath(c64(1.0, 0.0), c64(0.0, 1.0)),
        )
        .unwrap();
        let a = gen.coeff_matrix(0.5, 1e-3);
        let spec_active = gen.gamma_spectrum(&a, true);
        assert!(spec_active[0] < 0.0, "spectrum {spec_active:?}");
        // t = 0 spectrum is identically zero
        let a0 = gen.coeff_matrix(0.0, 1e-3);
        assert!(gen
            .gamma_spectrum(&a0, false)
            .iter()
            .all(|&e| e == 0.0));
    }

    #[test]
    fn coupling_norm_validation() {
        let bad = SystemModel::new(1, CMatrix::zeros(2, 2), vec![sigma_z() * c64(2.0, 0.0)], 1.0);
        assert!(matches!(bad, Err(Error::CouplingNotNormalized { .. })));
    }
}
