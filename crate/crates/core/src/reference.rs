//! Deterministic oracles: ideal unitary propagation, Runge-Kutta integration
//! of the time-local master equation, the direct second-order perturbative
//! state, and exact (zero-variance) evaluation of the mitigated estimator.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::generator::{CoeffMatrix, Generator};
use crate::operators::matrix::{
    c64, evolution_operator, trace, trace_prod, CMatrix, hermitian_eigen,
};
use crate::operators::pauli::PauliBasis;
use crate::operators::ptm::Ptm;
use crate::pec::{BasisCoeffs, QuasiProbabilityPlan};

/// Density operator at a point in time.
#[derive(Debug, Clone)]
pub struct DensityState {
    pub t: f64,
    pub rho: CMatrix,
}

impl DensityState {
    /// Hermiticity, unit trace and near-positivity checks. Small negative
    /// eigenvalues are tolerated because the perturbative master equation is
    /// not guaranteed completely positive.
    pub fn validate(&self) -> Result<()> {
        let dev = crate::operators::matrix::hermitian_deviation(&self.rho);
        if dev > 1e-8 {
            return Err(Error::NotHermitian { dev, tol: 1e-8 });
        }
        let tr = trace(&self.rho);
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(Error::Config(format!("trace = {tr}")));
        }
        let (vals, _) = hermitian_eigen(&self.rho);
        if vals.iter().any(|&v| v < -1e-6) {
            return Err(Error::Config(format!("negative eigenvalue {}", vals[0])));
        }
        Ok(())
    }
}

/// Unitary propagation rho(t) = U rho0 U^dag with U = exp(-i H t).
pub fn propagate_ideal(h_s: &CMatrix, rho0: &CMatrix, t: f64) -> DensityState {
    let u = evolution_operator(h_s, t);
    DensityState {
        t,
        rho: &u * rho0 * u.adjoint(),
    }
}

/// Simpson-rule accumulator for the coefficient matrix on the ODE grid.
///
/// Each step of width `h` consumes four fresh kernel evaluations (quarter
/// nodes) and yields A at the step start, midpoint and end with O(h^4)
/// quadrature error, matching the integrator order.
struct OdeCoeffStream<'a> {
    gen: &'a Generator,
    integrals: Vec<Vec<Complex64>>,
    v_last: Vec<Vec<Complex64>>,
    v_max: Vec<f64>,
    t: f64,
}

impl<'a> OdeCoeffStream<'a> {
    fn new(gen: &'a Generator) -> Self {
        let m = gen.pauli().len();
        let v0 = gen.v_coeffs(0.0);
        let mut v_max = vec![0.0_f64; m];
        for vp in &v0 {
            for (b, v) in vp.iter().enumerate() {
                v_max[b] = v_max[b].max(v.norm());
            }
        }
        Self {
            gen,
            integrals: vec![vec![Complex64::default(); m]; v0.len()],
            v_last: v0,
            v_max,
            t: 0.0,
        }
    }

    fn coeff_at(&self, t: f64, integrals: &[Vec<Complex64>]) -> CoeffMatrix {
        self.gen.coeff_from_integrals(t, integrals, &self.v_max)
    }

    fn current(&self) -> CoeffMatrix {
        self.coeff_at(self.t, &self.integrals)
    }

    fn absorb(&mut self, v: &[Vec<Complex64>]) {
        for vp in v {
            for (b, val) in vp.iter().enumerate() {
                self.v_max[b] = self.v_max[b].max(val.norm());
            }
        }
    }

    /// Advance by one step of width `h`; returns (A at midpoint, A at end).
    fn advance(&mut self, h: f64) -> (CoeffMatrix, CoeffMatrix) {
        let q = h / 4.0;
        let v1 = self.gen.v_coeffs(self.t + q);
        let v2 = self.gen.v_coeffs(self.t + 2.0 * q);
        let v3 = self.gen.v_coeffs(self.t + 3.0 * q);
        let v4 = self.gen.v_coeffs(self.t + h);
        self.absorb(&v1);
        self.absorb(&v2);
        self.absorb(&v3);
        self.absorb(&v4);
        let n_poles = self.integrals.len();
        let m = self.v_max.len();
        let mut mid = self.integrals.clone();
        let w = h / 12.0; // Simpson on a half panel: (h/2)/6 * {1, 4, 1}
        for mu in 0..n_poles {
            for b in 0..m {
                mid[mu][b] += (self.v_last[mu][b] + v1[mu][b] * 4.0 + v2[mu][b]) * w;
            }
        }
        let mut end = mid.clone();
        for mu in 0..n_poles {
            for b in 0..m {
                end[mu][b] += (v2[mu][b] + v3[mu][b] * 4.0 + v4[mu][b]) * w;
            }
        }
        let a_mid = self.coeff_at(self.t + h / 2.0, &mid);
        let a_end = self.coeff_at(self.t + h, &end);
        self.integrals = end;
        self.v_last = v4;
        self.t += h;
        (a_mid, a_end)
    }
}

fn qme_rhs(gen: &Generator, a: &CoeffMatrix, rho: &CMatrix) -> CMatrix {
    let h = gen.model().hamiltonian();
    let comm = h * rho - rho * h;
    gen.apply_l_n(a, rho) - comm * Complex64::i()
}

/// Integrate the time-local master equation with classic fourth-order
/// Runge-Kutta, recording the state at every step.
pub fn propagate_noisy(
    gen: &Generator,
    rho0: &CMatrix,
    t_end: f64,
    dt_ode: f64,
) -> Result<Vec<DensityState>> {
    let mut out = vec![DensityState {
        t: 0.0,
        rho: rho0.clone(),
    }];
    if t_end <= 0.0 {
        return Ok(out);
    }
    let steps = (t_end / dt_ode).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut stream = OdeCoeffStream::new(gen);
    let mut rho = rho0.clone();
    let mut a_t = stream.current();
    let half = c64(h / 2.0, 0.0);
    let sixth = c64(h / 6.0, 0.0);
    for k in 0..steps {
        let (a_mid, a_end) = stream.advance(h);
        let k1 = qme_rhs(gen, &a_t, &rho);
        let k2 = qme_rhs(gen, &a_mid, &(&rho + &k1 * half));
        let k3 = qme_rhs(gen, &a_mid, &(&rho + &k2 * half));
        let k4 = qme_rhs(gen, &a_end, &(&rho + &k3 * c64(h, 0.0)));
        rho += (k1 + k2 * c64(2.0, 0.0) + k3 * c64(2.0, 0.0) + k4) * sixth;
        let t = (k + 1) as f64 * h;
        let drift = (trace(&rho).re - 1.0).abs();
        if drift > 1e-6 {
            return Err(Error::TraceDrift { drift, t });
        }
        out.push(DensityState { t, rho: rho.clone() });
        a_t = a_end;
    }
    Ok(out)
}

/// Direct evaluation of the second-order perturbative state via 2-D
/// trapezoidal quadrature of the three double integrals plus the unitary term.
pub fn second_order_state(
    gen: &Generator,
    rho0: &CMatrix,
    t: f64,
    nodes: usize,
) -> DensityState {
    let model = gen.model();
    let h_s = model.hamiltonian();
    if t == 0.0 || model.lambda() == 0.0 && t == 0.0 {
        return DensityState {
            t,
            rho: rho0.clone(),
        };
    }
    let m = nodes.max(2);
    let h = t / m as f64;
    let heis = gen.heis();
    let couplings = model.couplings();
    let nj = couplings.len();
    let bath = gen.bath();
    let d = model.dim();

    // S_j(t_i) on the grid
    let s_t: Vec<Vec<CMatrix>> = couplings
        .iter()
        .map(|s| {
            let s_eig = heis.to_eigenbasis(s);
            (0..=m)
                .map(|i| heis.evolve_from_eigenbasis(&s_eig, i as f64 * h))
                .collect()
        })
        .collect();
    let w = |i: usize, last: usize| if i == 0 || i == last { 0.5 * h } else { h };

    let mut correction = CMatrix::zeros(d, d);
    for j in 0..nj {
        for k in 0..nj {
            // I1 = int_0^t int_0^t S_j(t1) rho S_k(t2) C[k][j](t2 - t1)
            let x: Vec<CMatrix> = (0..=m).map(|i| &s_t[j][i] * rho0).collect();
            for l in 0..=m {
                let mut inner = CMatrix::zeros(d, d);
                for (i, xi) in x.iter().enumerate() {
                    let cval = bath.bcf((l as f64 - i as f64) * h)[(k, j)];
                    inner += xi * (cval * w(i, m));
                }
                correction += inner * &s_t[k][l] * c64(w(l, m), 0.0);
            }
            // I2 = -int_0^t dt1 int_0^t1 dt2 rho S_k(t2) S_j(t1) C[k][j](t2 - t1)
            // I3 = -int_0^t dt1 int_0^t1 dt2 S_j(t1) S_k(t2) rho C[j][k](t1 - t2)
            for i in 1..=m {
                let mut inner2 = CMatrix::zeros(d, d);
                let mut inner3 = CMatrix::zeros(d, d);
                for l in 0..=i {
                    let wl = w(l, i);
                    inner2 += &s_t[k][l] * (bath.bcf((l as f64 - i as f64) * h)[(k, j)] * wl);
                    inner3 += &s_t[k][l] * (bath.bcf((i as f64 - l as f64) * h)[(j, k)] * wl);
                }
                let wi = c64(w(i, m), 0.0);
                correction -= rho0 * inner2 * &s_t[j][i] * wi;
                correction += -(&s_t[j][i] * inner3 * rho0) * wi;
            }
        }
    }
    let u = evolution_operator(h_s, t);
    let inside = rho0 + correction * c64(model.lambda_sq(), 0.0);
    DensityState {
        t,
        rho: &u * inside * u.adjoint(),
    }
}

/// Transfer matrices of the noisy step maps E_N((k+1) dt, k dt) for
/// k = 0..m_steps, each obtained by integrating the master equation on the
/// full Pauli basis over the step.
pub fn noisy_step_ptms(
    gen: &Generator,
    m_steps: usize,
    dt_step: f64,
    ode_substeps: usize,
) -> Result<Vec<Ptm>> {
    let pauli = gen.pauli();
    let nb = pauli.len();
    let h = dt_step / ode_substeps.max(1) as f64;
    let mut stream = OdeCoeffStream::new(gen);
    let mut a_t = stream.current();
    let half = c64(h / 2.0, 0.0);
    let sixth = c64(h / 6.0, 0.0);
    let norm = 1.0 / pauli.dim() as f64;
    let mut out = Vec::with_capacity(m_steps);
    for _ in 0..m_steps {
        let mut images: Vec<CMatrix> = pauli.iter().cloned().collect();
        for _ in 0..ode_substeps.max(1) {
            let (a_mid, a_end) = stream.advance(h);
            for img in images.iter_mut() {
                let k1 = qme_rhs(gen, &a_t, img);
                let k2 = qme_rhs(gen, &a_mid, &(&*img + &k1 * half));
                let k3 = qme_rhs(gen, &a_mid, &(&*img + &k2 * half));
                let k4 = qme_rhs(gen, &a_end, &(&*img + &k3 * c64(h, 0.0)));
                *img += (k1 + k2 * c64(2.0, 0.0) + k3 * c64(2.0, 0.0) + k4) * sixth;
            }
            a_t = a_end;
        }
        let mut complex = CMatrix::zeros(nb, nb);
        for (b, img) in images.iter().enumerate() {
            for a in 0..nb {
                complex[(a, b)] = trace_prod(pauli.element(a), img) * norm;
            }
        }
        out.push(Ptm::from_complex(pauli.n(), &complex)?);
    }
    Ok(out)
}

/// Pauli coefficient vector of a density matrix (real for Hermitian input).
pub fn pauli_coeff_vector(pauli: &PauliBasis, rho: &CMatrix) -> DVector<f64> {
    DVector::from_iterator(pauli.len(), pauli.coefficients(rho).into_iter().map(|z| z.re))
}

/// Observable weights w[a] = tr(O V_a), so that tr(O rho) = w . c(rho).
pub fn observable_weights(pauli: &PauliBasis, obs: &CMatrix) -> DVector<f64> {
    DVector::from_iterator(
        pauli.len(),
        pauli.iter().map(|v| trace_prod(obs, v).re),
    )
}

/// Mitigated state after each step, via the transfer-matrix product of the
/// compiled recovery maps with the noisy step maps. This is the N -> infinity
/// limit of the Monte Carlo engine expressed in closed form.
pub fn mitigated_state_series(
    pauli: &PauliBasis,
    coeffs: &BasisCoeffs,
    plans: &[QuasiProbabilityPlan],
    step_ptms: &[Ptm],
    rho0: &CMatrix,
) -> Vec<DensityState> {
    assert_eq!(plans.len(), step_ptms.len());
    let mut c = pauli_coeff_vector(pauli, rho0);
    let mut out = vec![DensityState {
        t: 0.0,
        rho: rho0.clone(),
    }];
    for (plan, step) in plans.iter().zip(step_ptms) {
        c = step.matrix() * c;
        c = plan.compiled_ptm(coeffs).matrix() * c;
        let dim = pauli.dim();
        let mut rho = CMatrix::zeros(dim, dim);
        for (a, ca) in c.iter().enumerate() {
            rho += pauli.element(a) * c64(*ca, 0.0);
        }
        out.push(DensityState {
            t: plan.t + plan.dt,
            rho,
        });
    }
    out
}

/// Exact enumeration of the quasi-probability sum over all operation-index
/// vectors: the zero-variance limit of the Monte Carlo estimator. The branch
/// count is 16^(n M), so M is capped at 6 for one qubit and 3 for two.
pub fn mitigated_expectation_exact(
    gen: &Generator,
    coeffs: &BasisCoeffs,
    plans: &[QuasiProbabilityPlan],
    obs: &CMatrix,
    rho0: &CMatrix,
    ode_substeps: usize,
) -> Result<f64> {
    let pauli = gen.pauli();
    let m_steps = plans.len();
    if m_steps == 0 {
        return Ok(trace_prod(obs, rho0).re);
    }
    let max_steps = if pauli.n() == 1 { 6 } else { 3 };
    if m_steps > max_steps {
        return Err(Error::EnumerationTooLarge {
            steps: m_steps,
            branches: coeffs.ops().len(),
        });
    }
    let dt = plans[0].dt;
    let step_ptms = noisy_step_ptms(gen, m_steps, dt, ode_substeps)?;
    let weights = observable_weights(pauli, obs);
    let c0 = pauli_coeff_vector(pauli, rho0);

    fn walk(
        depth: usize,
        c: &DVector<f64>,
        carried: f64,
        plans: &[QuasiProbabilityPlan],
        step_ptms: &[Ptm],
        coeffs: &BasisCoeffs,
        weights: &DVector<f64>,
        acc: &mut f64,
    ) {
        if depth == plans.len() {
            *acc += carried * weights.dot(c);
            return;
        }
        let after_noise = step_ptms[depth].matrix() * c;
        for (l, &ql) in plans[depth].q.iter().enumerate() {
            if ql == 0.0 {
                continue;
            }
            let child = coeffs.basis_ptm(l) * &after_noise;
            walk(
                depth + 1,
                &child,
                carried * ql,
                plans,
                step_ptms,
                coeffs,
                weights,
                acc,
            );
        }
    }

    let mut acc = 0.0;
    walk(0, &c0, 1.0, plans, &step_ptms, coeffs, &weights, &mut acc);
    Ok(acc)
}
