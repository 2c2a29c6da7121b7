//! Compilation of the one-step recovery map I - dt * L_N(t + dt) into
//! quasi-probabilities over the recovery-operation basis.
//!
//! For each Pauli index pair (a, b) the superoperator
//! rho -> V_a rho V_b - rho V_b V_a expands in the operation basis with
//! complex coefficients u1[l]; the conjugate family rho -> V_a rho V_b -
//! V_b V_a rho has coefficients conj(u1[l]) taken at the swapped pair. The
//! recovery coefficients combine both families, which makes every q[l] real:
//!
//! ```text
//! q[0] = 1 - dt lambda^2 * 2 Re sum_{a,b} A[a][b] u1[l=0, a, b]
//! q[l] =   - dt lambda^2 * 2 Re sum_{a,b} A[a][b] u1[l, a, b]     (l > 0)
//! ```
//!
//! gamma = sum |q[l]| then normalizes the signed mixture into a sampling
//! distribution.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::generator::{CoeffMatrix, Generator};
use crate::operators::basis::{basis_operations, BasisOp};
use crate::operators::matrix::CMatrix;
use crate::operators::pauli::PauliBasis;
use crate::operators::ptm::{superop_pauli_matrix, Ptm};

/// Coefficients with magnitude below this are zeroed before normalization so
/// floating-point noise cannot spawn ghost sampling branches.
const GHOST_TOL: f64 = 1e-14;

/// Default cap on the per-step normalization.
pub const DEFAULT_GAMMA_CAP: f64 = 10.0;

/// Expansion machinery for one qubit count: the operation list, their
/// transfer matrices, and the factorized linear system.
pub struct BasisCoeffs {
    n: usize,
    ops: Vec<BasisOp>,
    basis_ptms: Vec<DMatrix<f64>>,
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl BasisCoeffs {
    pub fn new(n: usize) -> Result<Self> {
        let pauli = PauliBasis::new(n)?;
        let ops = basis_operations(n)?;
        let m = pauli.len();
        let mut stacked = CMatrix::zeros(m * m, ops.len());
        let mut basis_ptms = Vec::with_capacity(ops.len());
        for (l, op) in ops.iter().enumerate() {
            let k = op.kraus.clone();
            let ptm = superop_pauli_matrix(&pauli, |rho| &k * rho * k.adjoint());
            for a in 0..m {
                for b in 0..m {
                    stacked[(a * m + b, l)] = ptm[(a, b)];
                }
            }
            basis_ptms.push(DMatrix::from_fn(m, m, |a, b| ptm[(a, b)].re));
        }
        let lu = stacked.lu();
        let diag = lu.u().diagonal();
        let dmax = diag.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        let dmin = diag.iter().map(|z| z.norm()).fold(f64::MAX, f64::min);
        if dmin <= 1e-10 * dmax {
            return Err(Error::SingularBasisSystem);
        }
        Ok(Self {
            n,
            ops,
            basis_ptms,
            lu,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ops(&self) -> &[BasisOp] {
        &self.ops
    }

    pub fn basis_ptm(&self, l: usize) -> &DMatrix<f64> {
        &self.basis_ptms[l]
    }

    /// Expansion coefficients u1[l] of rho -> V_alpha rho V_beta - rho V_beta V_alpha.
    pub fn solve_pair(
        &self,
        pauli: &PauliBasis,
        alpha: usize,
        beta: usize,
    ) -> Result<Vec<Complex64>> {
        let m = pauli.len();
        let va = pauli.element(alpha);
        let vb = pauli.element(beta);
        let image = |rho: &CMatrix| va * rho * vb - rho * (vb * va);
        let target = superop_pauli_matrix(pauli, image);
        let mut rhs = DVector::zeros(m * m);
        for a in 0..m {
            for b in 0..m {
                rhs[a * m + b] = target[(a, b)];
            }
        }
        let sol = self.lu.solve(&rhs).ok_or(Error::SingularBasisSystem)?;
        Ok(sol.iter().copied().collect())
    }
}

/// Per-step quasi-probability plan: signed coefficients, normalization,
/// signs and sampling probabilities.
#[derive(Debug, Clone)]
pub struct QuasiProbabilityPlan {
    /// Step start time; the underlying coefficient matrix is evaluated at the
    /// interval endpoint t + dt.
    pub t: f64,
    pub dt: f64,
    pub q: Vec<f64>,
    pub gamma: f64,
    pub alpha: Vec<f64>,
    pub p: Vec<f64>,
}

impl QuasiProbabilityPlan {
    /// Plan that applies the identity operation with certainty.
    pub fn identity(n_ops: usize, t: f64, dt: f64) -> Self {
        let mut q = vec![0.0; n_ops];
        q[0] = 1.0;
        let mut p = vec![0.0; n_ops];
        p[0] = 1.0;
        Self {
            t,
            dt,
            q,
            gamma: 1.0,
            alpha: vec![1.0; n_ops],
            p,
        }
    }

    /// Transfer matrix of the compiled map sum_l q[l] B_l.
    pub fn compiled_ptm(&self, coeffs: &BasisCoeffs) -> Ptm {
        let m = coeffs.basis_ptms[0].nrows();
        let mut acc = DMatrix::zeros(m, m);
        for (l, &ql) in self.q.iter().enumerate() {
            if ql != 0.0 {
                acc += coeffs.basis_ptm(l) * ql;
            }
        }
        Ptm::from_real(coeffs.n, acc)
    }
}

/// Compile the recovery map I - dt * L_N for the coefficient matrix `a`
/// (already evaluated at the step endpoint) into a quasi-probability plan.
pub fn quasi_probs(
    coeffs: &BasisCoeffs,
    pauli: &PauliBasis,
    a: &CoeffMatrix,
    t_start: f64,
    dt: f64,
    lambda: f64,
    gamma_cap: f64,
) -> Result<QuasiProbabilityPlan> {
    let n_ops = coeffs.ops.len();
    let lam2 = lambda * lambda;
    let mut z = vec![Complex64::default(); n_ops];
    for &row in &a.active_rows {
        for &col in &a.active_cols {
            let entry = a.a[(row, col)];
            if entry.norm_sqr() == 0.0 {
                continue;
            }
            let u = coeffs.solve_pair(pauli, row, col)?;
            for (l, ul) in u.iter().enumerate() {
                z[l] += entry * ul;
            }
        }
    }
    let mut q: Vec<f64> = z.iter().map(|zl| -dt * lam2 * 2.0 * zl.re).collect();
    q[0] += 1.0;
    for ql in q.iter_mut() {
        if ql.abs() < GHOST_TOL {
            *ql = 0.0;
        }
    }
    let gamma: f64 = q.iter().map(|ql| ql.abs()).sum();
    if gamma > gamma_cap {
        return Err(Error::GammaCapExceeded {
            gamma,
            cap: gamma_cap,
            t: t_start,
        });
    }
    let alpha: Vec<f64> = q.iter().map(|ql| if *ql < 0.0 { -1.0 } else { 1.0 }).collect();
    let p: Vec<f64> = q.iter().map(|ql| ql.abs() / gamma).collect();
    Ok(QuasiProbabilityPlan {
        t: t_start,
        dt,
        q,
        gamma,
        alpha,
        p,
    })
}

/// Transfer matrix of the recovery map I - dt * L_N(a), for verifying the
/// compiled plan against the generator it came from.
pub fn recovery_ptm(gen: &Generator, a: &CoeffMatrix, dt: f64) -> Result<Ptm> {
    let pauli = gen.pauli();
    let ln = Ptm::of_superop(pauli, |rho| gen.apply_l_n(a, rho))?;
    let m = pauli.len();
    let mat = DMatrix::identity(m, m) - ln.matrix() * dt;
    Ok(Ptm::from_real(pauli.n(), mat))
}

/// Plans for all M steps of a run: plan k covers [k dt, (k+1) dt) and uses
/// the coefficient matrix at the interval endpoint (k+1) dt.
pub fn compile_plans(
    gen: &Generator,
    coeffs: &BasisCoeffs,
    m_steps: usize,
    dt: f64,
    quad_substeps: usize,
    gamma_cap: f64,
) -> Result<Vec<QuasiProbabilityPlan>> {
    let table = gen.coeff_table(m_steps, dt, quad_substeps);
    let pauli = gen.pauli();
    let lambda = gen.model().lambda();
    (0..m_steps)
        .map(|k| {
            quasi_probs(
                coeffs,
                pauli,
                &table[k + 1],
                k as f64 * dt,
                dt,
                lambda,
                gamma_cap,
            )
        })
        .collect()
}

/// Draw an operation index from the plan's sampling distribution.
pub fn sample_index<R: Rng + ?Sized>(plan: &QuasiProbabilityPlan, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (l, &pl) in plan.p.iter().enumerate() {
        if pl == 0.0 {
            continue;
        }
        acc += pl;
        last = l;
        if u < acc {
            return l;
        }
    }
    last
}

/// Total normalization over a sequence of steps.
pub fn gamma_tot(plans: &[QuasiProbabilityPlan]) -> f64 {
    plans.iter().map(|p| p.gamma).product()
}

/// Running normalization after each step (length = plans.len() + 1, starts at 1).
pub fn gamma_cumulative(plans: &[QuasiProbabilityPlan]) -> Vec<f64> {
    let mut out = Vec::with_capacity(plans.len() + 1);
    let mut acc = 1.0;
    out.push(acc);
    for p in plans {
        acc *= p.gamma;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathSpec;
    use crate::generator::SystemModel;
    use crate::operators::matrix::{c64, max_abs};
    use crate::operators::pauli::{sigma_x, sigma_z};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn pauli1() -> PauliBasis {
        PauliBasis::new(1).unwrap()
    }

    #[test]
    fn identity_pair_has_zero_coefficients() {
        let coeffs = BasisCoeffs::new(1).unwrap();
        let u = coeffs.solve_pair(&pauli1(), 0, 0).unwrap();
        assert!(u.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn zz_pair_matches_hand_solution() {
        // sz rho sz - rho = [Z] rho - [I] rho
        let coeffs = BasisCoeffs::new(1).unwrap();
        let u = coeffs.solve_pair(&pauli1(), 3, 3).unwrap();
        assert!((u[0] - c64(-1.0, 0.0)).norm() < 1e-12);
        assert!((u[3] - c64(1.0, 0.0)).norm() < 1e-12);
        for (l, ul) in u.iter().enumerate() {
            if l != 0 && l != 3 {
                assert!(ul.norm() < 1e-12, "l = {l}: {ul}");
            }
        }
    }

    #[test]
    fn random_pairs_reconstruct() {
        let coeffs = BasisCoeffs::new(1).unwrap();
        let pauli = pauli1();
        for &(alpha, beta) in &[(1usize, 2usize), (3, 1), (2, 2), (0, 3)] {
            let u = coeffs.solve_pair(&pauli, alpha, beta).unwrap();
            let va = pauli.element(alpha).clone();
            let vb = pauli.element(beta).clone();
            let target =
                superop_pauli_matrix(&pauli, |rho| &va * rho * &vb - rho * (&vb * &va));
            let mut back = CMatrix::zeros(4, 4);
            for (l, op) in coeffs.ops.iter().enumerate() {
                let k = op.kraus.clone();
                let ptm = superop_pauli_matrix(&pauli, |rho| &k * rho * k.adjoint());
                back += ptm * u[l];
            }
            assert!(
                crate::operators::matrix::max_abs_diff(&back, &target) < 1e-10,
                "pair ({alpha},{beta})"
            );
        }
    }

    #[test]
    fn conjugate_family_symmetry() {
        // coefficients of V_a rho V_b - V_b V_a rho equal conj(u1) at the
        // swapped pair
        let coeffs = BasisCoeffs::new(1).unwrap();
        let pauli = pauli1();
        for &(alpha, beta) in &[(1usize, 2usize), (3, 1), (1, 1)] {
            let u_swapped = coeffs.solve_pair(&pauli, beta, alpha).unwrap();
            let va = pauli.element(alpha).clone();
            let vb = pauli.element(beta).clone();
            let target =
                superop_pauli_matrix(&pauli, |rho| &va * rho * &vb - (&vb * &va) * rho);
            let mut rhs = DVector::zeros(16);
            for a in 0..4 {
                for b in 0..4 {
                    rhs[a * 4 + b] = target[(a, b)];
                }
            }
            let direct = coeffs.lu.solve(&rhs).unwrap();
            for l in 0..16 {
                assert!(
                    (direct[l] - u_swapped[l].conj()).norm() < 1e-12,
                    "pair ({alpha},{beta}), l = {l}"
                );
            }
        }
    }

    fn dephasing_coeff(c: f64) -> CoeffMatrix {
        let mut a = CMatrix::zeros(4, 4);
        a[(3, 3)] = c64(c, 0.0);
        CoeffMatrix {
            t: 1.0,
            a,
            active_rows: vec![3],
            active_cols: vec![3],
        }
    }

    #[test]
    fn zero_coupling_gives_identity_plan() {
        let coeffs = BasisCoeffs::new(1).unwrap();
        let plan = quasi_probs(
            &coeffs,
            &pauli1(),
            &dephasing_coeff(1.0),
            0.0,
            0.1,
            0.0,
            DEFAULT_GAMMA_CAP,
        )
        .unwrap();
        assert_eq!(plan.q[0], 1.0);
        assert!(plan.q[1..].iter().all(|&x| x == 0.0));
        assert_relative_eq!(plan.gamma, 1.0);
    }

    #[test]
    fn dephasing_plan_hand_values() {
        // Gamma_zz = 1, dt * lambda^2 = 0.01
        let coeffs = BasisCoeffs::new(1).unwrap();
        let plan = quasi_probs(
            &coeffs,
            &pauli1(),
            &dephasing_coeff(1.0),
            0.0,
            0.01,
            1.0,
            DEFAULT_GAMMA_CAP,
        )
        .unwrap();
        assert_relative_eq!(plan.q[0], 1.02, epsilon = 1e-12);
        assert_relative_eq!(plan.q[3], -0.02, epsilon = 1e-12);
        assert_relative_eq!(plan.gamma, 1.04, epsilon = 1e-12);
        assert_eq!(plan.alpha[0], 1.0);
        assert_eq!(plan.alpha[3], -1.0);
        assert_relative_eq!(plan.p[0], 1.02 / 1.04, epsilon = 1e-12);
        assert_relative_eq!(plan.p[3], 0.02 / 1.04, epsilon = 1e-12);
    }

    fn build_generator(model: SystemModel, poles: &[(Complex64, Complex64)]) -> Generator {
        Generator::new(model, BathSpec::single_channel(poles).unwrap()).unwrap()
    }

    #[test]
    fn compiled_map_is_exact_for_test_models() {
        let coeffs = BasisCoeffs::new(1).unwrap();
        let models = vec![
            build_generator(
                SystemModel::new(1, CMatrix::zeros(2, 2), vec![sigma_z()], 0.5).unwrap(),
                &[(c64(1., 0.), c64(0., 1.))],
            ),
            build_generator(
                SystemModel::new(1, sigma_z() * c64(-1.0, 0.0), vec![sigma_x()], 0.9).unwrap(),
                &[(c64(0.8, 0.0), c64(-0.7, 0.6)), (c64(0.5, 0.0), c64(1.1, 1.4))],
            ),
        ];
        for gen in &models {
            let plans = compile_plans(gen, &coeffs, 8, 0.05, 4, DEFAULT_GAMMA_CAP).unwrap();
            let table = gen.coeff_table(8, 0.05, 4);
            for (k, plan) in plans.iter().enumerate() {
                let compiled = plan.compiled_ptm(&coeffs);
                let target = recovery_ptm(gen, &table[k + 1], 0.05).unwrap();
                assert!(
                    compiled.max_abs_diff(&target) < 1e-10,
                    "step {k}: diff {}",
                    compiled.max_abs_diff(&target)
                );
                assert!(compiled.is_trace_preserving(1e-9));
                assert!(plan.gamma >= 1.0 - 1e-12);
                assert!(plan.q[0] > 0.0);
            }
        }
    }

    #[test]
    fn gamma_cap_triggers() {
        let coeffs = BasisCoeffs::new(1).unwrap();
        let res = quasi_probs(
            &coeffs,
            &pauli1(),
            &dephasing_coeff(100.0),
            0.0,
            1.0,
            2.0,
            DEFAULT_GAMMA_CAP,
        );
        match res {
            Err(Error::GammaCapExceeded { .. }) => {}
            other => panic!("expected gamma cap error, got {other:?}"),
        }
    }

    #[test]
    fn gamma_tends_to_one_linearly_in_dt() {
        let gen = build_generator(
            SystemModel::new(1, sigma_z() * c64(-1.0, 0.0), vec![sigma_x()], 0.7).unwrap(),
            &[(c64(1.0, 0.0), c64(0.3, 0.8))],
        );
        let coeffs = BasisCoeffs::new(1).unwrap();
        let t = 1.0;
        let a = gen.coeff_matrix(t, 1e-3);
        let mut rates = Vec::new();
        for &dt in &[0.02, 0.01, 0.005] {
            let plan =
                quasi_probs(&coeffs, gen.pauli(), &a, t, dt, 0.7, DEFAULT_GAMMA_CAP).unwrap();
            rates.push((plan.gamma - 1.0) / dt);
        }
        for w in rates.windows(2) {
            assert!(
                (w[0] / w[1] - 1.0).abs() < 0.2,
                "gamma slope not stable: {rates:?}"
            );
        }
    }

    #[test]
    fn sampling_distribution_and_determinism() {
        let coeffs = BasisCoeffs::new(1).unwrap();
        let plan = quasi_probs(
            &coeffs,
            &pauli1(),
            &dephasing_coeff(1.0),
            0.0,
            0.01,
            1.0,
            DEFAULT_GAMMA_CAP,
        )
        .unwrap();
        let n = 100_000;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let mut counts = [0usize; 16];
        for _ in 0..n {
            counts[sample_index(&plan, &mut rng)] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), n);
        let p_z = 0.02 / 1.04;
        let freq = counts[3] as f64 / n as f64;
        let sigma = (p_z * (1.0 - p_z) / n as f64).sqrt();
        assert!(
            (freq - p_z).abs() < 3.0 * sigma,
            "freq {freq} vs {p_z} (3 sigma = {})",
            3.0 * sigma
        );
        // deterministic replay
        let mut rng1 = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let mut rng2 = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(sample_index(&plan, &mut rng1), sample_index(&plan, &mut rng2));
        }
    }

    #[test]
    fn degenerate_plan_always_returns_identity() {
        let plan = QuasiProbabilityPlan::identity(16, 0.0, 0.1);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(sample_index(&plan, &mut rng), 0);
        }
    }

    #[test]
    fn gamma_tot_products() {
        let mk = |gamma: f64| QuasiProbabilityPlan {
            t: 0.0,
            dt: 0.1,
            q: vec![1.0],
            gamma,
            alpha: vec![1.0],
            p: vec![1.0],
        };
        assert_relative_eq!(gamma_tot(&[mk(1.0), mk(1.0)]), 1.0);
        assert_relative_eq!(gamma_tot(&[mk(1.04), mk(1.04)]), 1.0816, epsilon = 1e-12);
        let cum = gamma_cumulative(&[mk(1.04), mk(1.04)]);
        assert_relative_eq!(cum[2], 1.0816, epsilon = 1e-12);
    }

    #[test]
    fn two_qubit_system_is_solvable() {
        let coeffs = BasisCoeffs::new(2).unwrap();
        let pauli = PauliBasis::new(2).unwrap();
        // XI paired with YI
        let u = coeffs.solve_pair(&pauli, 4, 8).unwrap();
        assert_eq!(u.len(), 256);
        // reconstruction check through the stacked system residual
        let va = pauli.element(4).clone();
        let vb = pauli.element(8).clone();
        let target = superop_pauli_matrix(&pauli, |rho| &va * rho * &vb - rho * (&vb * &va));
        let mut back = CMatrix::zeros(16, 16);
        for (l, op) in coeffs.ops.iter().enumerate() {
            if u[l].norm() < 1e-14 {
                continue;
            }
            let k = op.kraus.clone();
            let ptm = superop_pauli_matrix(&pauli, |rho| &k * rho * k.adjoint());
            back += ptm * u[l];
        }
        assert!(crate::operators::matrix::max_abs_diff(&back, &target) < 1e-9);
        assert!(max_abs(&back) > 0.1);
    }
}
