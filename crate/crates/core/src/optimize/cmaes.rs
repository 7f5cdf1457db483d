//! Covariance matrix adaptation evolution strategy, `(μ/μ_w, λ)` with
//! rank-one and rank-μ updates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Minimum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaesOptions {
    pub population: usize,
    pub sigma0: f64,
    pub seed: u64,
    /// Stop when the spread of a generation's losses falls below this.
    pub spread_tol: f64,
    pub max_evals: usize,
}

impl Default for CmaesOptions {
    fn default() -> Self {
        Self {
            population: 8,
            sigma0: 0.3,
            seed: 42,
            spread_tol: 1e-10,
            max_evals: 5000,
        }
    }
}

pub fn minimize<F>(mut f: F, x0: &[f64], opts: &CmaesOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let lambda = opts.population.max(2);
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let mu_eff = 1.0 / w.iter().map(|v| v * v).sum::<f64>();

    let cs = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let ds = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let cc = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut mean = DVector::from_column_slice(x0);
    let mut sigma = opts.sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut ps = DVector::<f64>::zeros(n);
    let mut pc = DVector::<f64>::zeros(n);

    let mut evals = 0usize;
    let mut best_x = x0.to_vec();
    let mut best_f = f(x0);
    evals += 1;
    if best_f.is_nan() {
        best_f = f64::INFINITY;
    }
    let mut curve = vec![(0, best_f)];
    let mut path = vec![best_x.clone()];
    let mut converged = false;
    let mut generation = 0usize;

    while evals + lambda <= opts.max_evals {
        generation += 1;
        let eig = SymmetricEigen::new(cov.clone());
        let basis = eig.eigenvectors;
        let scales = eig.eigenvalues.map(|v| v.max(0.0).sqrt());

        let mut pop: Vec<(DVector<f64>, DVector<f64>, f64)> = (0..lambda)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let y = &basis * z.component_mul(&scales);
                let x = &mean + sigma * &y;
                let fx = f(x.as_slice());
                (x, y, if fx.is_nan() { f64::INFINITY } else { fx })
            })
            .collect();
        evals += lambda;
        pop.sort_by(|a, b| a.2.total_cmp(&b.2));

        if pop[0].2 < best_f {
            best_f = pop[0].2;
            best_x = pop[0].0.as_slice().to_vec();
        }
        curve.push((generation, best_f));
        path.push(best_x.clone());

        let y_w: DVector<f64> = pop[..mu]
            .iter()
            .zip(&w)
            .fold(DVector::zeros(n), |acc, (p, wi)| acc + *wi * &p.1);
        mean += sigma * &y_w;

        let inv_sqrt =
            &basis * DMatrix::from_diagonal(&scales.map(|s| if s > 0.0 { 1.0 / s } else { 0.0 })) * basis.transpose();
        ps = (1.0 - cs) * &ps + (cs * (2.0 - cs) * mu_eff).sqrt() * (&inv_sqrt * &y_w);
        let ps_norm = ps.norm();
        let decay = 1.0 - (1.0 - cs).powi(2 * generation as i32);
        let hsig = ps_norm / decay.sqrt() / chi_n < 1.4 + 2.0 / (nf + 1.0);
        let hsig_f = if hsig { 1.0 } else { 0.0 };
        pc = (1.0 - cc) * &pc + hsig_f * (cc * (2.0 - cc) * mu_eff).sqrt() * &y_w;

        let rank_mu = pop[..mu]
            .iter()
            .zip(&w)
            .fold(DMatrix::zeros(n, n), |acc, (p, wi)| acc + *wi * &p.1 * p.1.transpose());
        cov = (1.0 - c1 - cmu) * &cov
            + c1 * (&pc * pc.transpose() + (1.0 - hsig_f) * cc * (2.0 - cc) * &cov)
            + cmu * rank_mu;
        cov = 0.5 * (&cov + cov.transpose());
        sigma *= ((cs / ds) * (ps_norm / chi_n - 1.0)).exp();

        let spread = pop[lambda - 1].2 - pop[0].2;
        if spread < opts.spread_tol {
            converged = true;
            break;
        }
        if !sigma.is_finite() || sigma == 0.0 {
            break;
        }
    }

    Minimum {
        x: best_x,
        f: best_f,
        iterations: generation,
        function_evals: evals,
        gradient_evals: 0,
        curve,
        path,
        converged,
    }
}
