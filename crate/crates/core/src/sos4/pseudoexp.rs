//! Construction of a degree-4 pseudo-expectation with a large value on the
//! noise polynomial `⟨x⊗4, W⟩` under the balance constraint.
//!
//! The noise polynomial is reduced to `x_n = 1`, whitened coordinatewise,
//! projected onto the null space of the constraint, and mixed into the
//! uniform-balanced moments `ψ0 = e / eᵀe` with a small weight `ε`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::algebra::{projector, projector_algebra, AlgebraElement, Projector, ProjectorMode};
use super::basis::SubsetBasis;
use super::functional::{
    alpha_map, evaluate, moment_index, moment_matrix, noise_cov, reduce_noise, validate_pseudoexp, Functional, NoiseCov,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::sym_norm;
use crate::tensor::DenseTensor;

/// Largest `n` supported by the construction.
pub const SOS_MAX_N: usize = 28;

/// Per-`n` data shared by every draw.
#[derive(Debug)]
pub struct SosContext {
    pub n: usize,
    pub basis: Arc<SubsetBasis>,
    pub projector: AlgebraElement,
    /// First column of the projector.
    pub e: Functional,
    pub ete: f64,
    pub cov: NoiseCov,
    /// Enumerated noise variance per basis element.
    pub variance: Vec<f64>,
}

impl SosContext {
    fn build(n: usize) -> Result<Self> {
        if n < 10 || n % 2 == 1 {
            return invalid(format!("the SoS construction needs an even n >= 10, got {n}"));
        }
        if n > SOS_MAX_N {
            return Err(Error::Capacity(format!("the SoS construction supports n <= {SOS_MAX_N}, got {n}")));
        }
        let m = n - 1;
        let basis = SubsetBasis::shared(m, 4)?;
        let projector = projector_algebra(m)?;
        let values = (0..basis.len()).map(|i| projector.get(basis.size_of(i), 0, 0)).collect();
        let e = Functional::from_values(m, values)?;
        let ete = e.dot(&e)?;
        let cov = noise_cov(n)?;
        let variance = cov.diagonal(&basis);
        Ok(Self { n, basis, projector, e, ete, cov, variance })
    }

    pub fn shared(n: usize) -> Result<Arc<SosContext>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<SosContext>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(c) = cache.lock().expect("sos context cache poisoned").get(&n) {
            return Ok(c.clone());
        }
        let c = Arc::new(SosContext::build(n)?);
        cache.lock().expect("sos context cache poisoned").insert(n, c.clone());
        Ok(c)
    }

    pub fn psi0(&self) -> Functional {
        let mut f = self.e.clone();
        f.values_mut().iter_mut().for_each(|v| *v /= self.ete);
        f
    }
}

/// Quantities of one noise draw that do not depend on `ε`.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub c: Functional,
    pub w: Functional,
    pub e_dot_w: f64,
    /// `(Π - eeᵀ/eᵀe) w`.
    pub psi1_prime: Functional,
    /// Spectral norm of the moment matrix of `psi1_prime`.
    pub psi1_moment_norm: f64,
}

impl NoiseDraw {
    pub fn new(ctx: &SosContext, c: &Functional) -> Result<Self> {
        if c.m() + 1 != ctx.n {
            return invalid(format!("functional over m = {} does not match n = {}", c.m(), ctx.n));
        }
        let wv: Vec<f64> = c.values().iter().zip(&ctx.variance).map(|(v, s)| v / s.sqrt()).collect();
        let w = Functional::from_values(c.m(), wv)?;
        let e_dot_w = ctx.e.dot(&w)?;
        let pw = ctx.projector.matvec(&ctx.basis, w.values())?;
        let ratio = e_dot_w / ctx.ete;
        let p1: Vec<f64> = pw.iter().zip(ctx.e.values()).map(|(p, e)| p - ratio * e).collect();
        let psi1_prime = Functional::from_values(c.m(), p1)?;
        let psi1_moment_norm = sym_norm(&moment_matrix(&psi1_prime)?.matrix)?;
        Ok(Self { c: c.clone(), w, e_dot_w, psi1_prime, psi1_moment_norm })
    }

    /// `ψ0 + (ε / |eᵀw|) ψ1'`.
    pub fn combine(&self, ctx: &SosContext, epsilon: f64) -> Result<Functional> {
        let mut psi = ctx.psi0();
        if epsilon == 0.0 {
            return Ok(psi);
        }
        if self.e_dot_w.abs() < 1e-12 {
            return Err(Error::DegenerateDraw(self.e_dot_w.abs()));
        }
        let weight = epsilon / self.e_dot_w.abs();
        for (p, q) in psi.values_mut().iter_mut().zip(self.psi1_prime.values()) {
            *p += weight * q;
        }
        Ok(psi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoexpDiagnostics {
    pub epsilon: f64,
    pub e_dot_w: f64,
    pub psi1_moment_norm: f64,
}

/// Builds `ψ` from noise coefficients `c` (over `m = n - 1`) and a weight
/// `0 ≤ ε < 1`; `ε = 0` yields `ψ0`.
pub fn build_pseudoexp(c: &Functional, epsilon: f64) -> Result<(Functional, PseudoexpDiagnostics)> {
    if !(0.0..1.0).contains(&epsilon) {
        return invalid(format!("epsilon must lie in [0, 1), got {epsilon}"));
    }
    let ctx = SosContext::shared(c.m() + 1)?;
    let draw = NoiseDraw::new(&ctx, c)?;
    let psi = draw.combine(&ctx, epsilon)?;
    Ok((psi, PseudoexpDiagnostics { epsilon, e_dot_w: draw.e_dot_w, psi1_moment_norm: draw.psi1_moment_norm }))
}

/// `1 / (n (ln n)^0.7)`.
pub fn default_epsilon(n: usize) -> f64 {
    let nf = n as f64;
    1.0 / (nf * nf.ln().powf(0.7))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Initial weight; `None` uses [`default_epsilon`].
    pub epsilon: Option<f64>,
    /// Halvings allowed after a failed PSD check.
    pub max_retries: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { epsilon: None, max_retries: 6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SosBound {
    /// `ψ[g']`, or NaN when no attempt produced a valid pseudo-expectation.
    pub value: f64,
    /// `ψ[g]` for the even lift of `ψ` to all `n` variables.
    pub lifted_value: f64,
    pub epsilon_used: f64,
    pub valid: bool,
    pub attempts: usize,
    pub e_dot_w: f64,
    pub min_eig: f64,
    pub constraint_residual: f64,
    #[serde(skip)]
    pub psi: Option<Functional>,
}

/// Degree-4 SoS lower bound on `max ⟨x⊗4, W⟩` over balanced `x`.
pub fn sos_lower_bound(w: &DenseTensor, schedule: &Schedule) -> Result<SosBound> {
    if w.order() != 4 {
        return invalid(format!("expected an order-4 tensor, got order {}", w.order()));
    }
    let n = w.dim();
    let ctx = SosContext::shared(n)?;
    let c = reduce_noise(w, n)?;
    let mut eps = schedule.epsilon.unwrap_or_else(|| default_epsilon(n));
    if !(0.0..1.0).contains(&eps) {
        return invalid(format!("epsilon must lie in [0, 1), got {eps}"));
    }
    if c.values().iter().all(|&v| v == 0.0) {
        eps = 0.0;
    }
    let draw = NoiseDraw::new(&ctx, &c)?;
    let mut last = None;
    for attempt in 1..=schedule.max_retries + 1 {
        let psi = draw.combine(&ctx, eps)?;
        let report = validate_pseudoexp(&psi)?;
        if report.is_pseudoexpectation {
            let value = evaluate(&psi, &c)?;
            let lifted_value = lifted_evaluate(&psi, w)?;
            return Ok(SosBound {
                value,
                lifted_value,
                epsilon_used: eps,
                valid: true,
                attempts: attempt,
                e_dot_w: draw.e_dot_w,
                min_eig: report.min_eig,
                constraint_residual: report.constraint_residual,
                psi: Some(psi),
            });
        }
        last = Some(report);
        if eps == 0.0 {
            break;
        }
        eps /= 2.0;
    }
    let report = last.expect("at least one attempt");
    Ok(SosBound {
        value: f64::NAN,
        lifted_value: f64::NAN,
        epsilon_used: eps,
        valid: false,
        attempts: schedule.max_retries + 1,
        e_dot_w: draw.e_dot_w,
        min_eig: report.min_eig,
        constraint_residual: report.constraint_residual,
        psi: None,
    })
}

/// Even lift of `ψ` to subsets of `[n]`: `ψ'(S) = ψ(S \ {n-1})` for `|S|`
/// even and 0 for `|S|` odd.
pub fn lift_even(psi: &Functional, set: u32) -> f64 {
    let n = psi.m() + 1;
    if set.count_ones() % 2 == 1 {
        return 0.0;
    }
    psi.get(set & !(1 << (n - 1))).unwrap_or(0.0)
}

/// `ψ'[⟨x⊗4, T⟩]` for the even lift `ψ'`.
pub fn lifted_evaluate(psi: &Functional, t: &DenseTensor) -> Result<f64> {
    let n = psi.m() + 1;
    if t.order() != 4 || t.dim() != n {
        return invalid("lifted evaluation needs an order-4 tensor of dimension m + 1");
    }
    let mut total = 0.0;
    t.for_each(|idx, v| {
        let set = idx.iter().fold(0u32, |acc, &i| acc ^ (1 << i));
        total += v * lift_even(psi, set);
    });
    Ok(total)
}

/// Closed-form block factors of `Σ_X`: the blocks are `u0u0ᵀ`, `u1u1ᵀ`,
/// `u2u2ᵀ`, 0, 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaXBlocks {
    pub n: usize,
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// `max ‖u_r‖²`.
    pub operator_norm: f64,
    /// `‖u1‖²`, `‖u2‖²` with the prefactor `(n-6)` in place of `(n-5)`.
    pub tabulated_norms: [f64; 2],
}

pub fn sigma_x_blocks(n: usize) -> Result<SigmaXBlocks> {
    if n < 8 {
        return invalid(format!("sigma_x_blocks needs n >= 8, got {n}"));
    }
    let nf = n as f64;
    let poly = 3.0 * nf.powi(4) - 24.0 * nf.powi(3) + 59.0 * nf * nf - 66.0 * nf + 32.0;
    let k = |lead: f64| lead * poly / (2.0 * (nf - 1.0) * (3.0 * nf - 14.0));
    let s0 = (nf * (nf - 3.0) * (nf - 5.0) / (3.0 * nf - 14.0)).sqrt();
    let u0 = vec![s0, -s0 / (nf - 1.0).sqrt(), -s0 * ((nf - 2.0) / (2.0 * (nf - 1.0))).sqrt(), 0.0, 0.0];
    let s1 = (k(nf - 5.0) / (nf - 2.0)).sqrt();
    let u1 = vec![s1, -s1 / (nf - 3.0).sqrt(), 0.0, 0.0];
    let u2 = vec![(k(nf - 5.0) / (nf - 3.0)).sqrt(), 0.0, 0.0];
    let sq = |u: &[f64]| u.iter().map(|v| v * v).sum::<f64>();
    let operator_norm = sq(&u0).max(sq(&u1)).max(sq(&u2));
    let tabulated_norms = [k(nf - 6.0) / (nf - 2.0) * (1.0 + 1.0 / (nf - 3.0)), k(nf - 6.0) / (nf - 3.0)];
    Ok(SigmaXBlocks { n, u0, u1, u2, operator_norm, tabulated_norms })
}

/// `Σ_X[I, J] = Σ_K P[I ⊕ K, J ⊕ K]` over subsets of size at most 2, where
/// `P = Π - eeᵀ/eᵀe` is formed in the requested mode.
pub fn sigma_x_matrix(n: usize, mode: ProjectorMode) -> Result<DMatrix<f64>> {
    if n < 10 {
        return invalid(format!("sigma_x_matrix needs n >= 10, got {n}"));
    }
    let m = n - 1;
    let b4 = SubsetBasis::shared(m, 4)?;
    let b2 = SubsetBasis::shared(m, 2)?;
    let entry: Box<dyn Fn(u32, u32) -> f64> = match projector(m, mode)? {
        Projector::Algebra(pi) => Box::new(move |s, t| {
            pi.get(s.count_ones() as usize, t.count_ones() as usize, (s & t).count_ones() as usize)
        }),
        Projector::Dense(pi) => {
            let b = b4.clone();
            Box::new(move |s, t| pi[(b.index_of(s).unwrap(), b.index_of(t).unwrap())])
        }
    };
    let e: Vec<f64> = b4.subsets().iter().map(|&s| entry(s, 0)).collect();
    let ete: f64 = e.iter().map(|v| v * v).sum();
    let p = |s: u32, t: u32| entry(s, t) - e[b4.index_of(s).unwrap()] * e[b4.index_of(t).unwrap()] / ete;
    let k2 = b2.len();
    let mut out = DMatrix::zeros(k2, k2);
    for i in 0..k2 {
        for j in i..k2 {
            let (si, sj) = (b2.subset(i), b2.subset(j));
            let v: f64 = b2.subsets().iter().map(|&k| p(si ^ k, sj ^ k)).sum();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Keeps `moment_index` and `alpha_map` warm for `n`; used before timing runs.
pub fn warm_caches(n: usize) -> Result<()> {
    SosContext::shared(n)?;
    alpha_map(n)?;
    moment_index(n - 1)?;
    Ok(())
}
