//! Downhill simplex method.

use serde::{Deserialize, Serialize};

use super::Minimum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Edge length of the initial axis-aligned simplex.
    pub initial_edge: f64,
    /// Stop when every vertex lies within this distance of the best one.
    pub diameter_tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_edge: 0.25,
            diameter_tol: 1e-8,
            max_evals: 2000,
        }
    }
}

fn combine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t·(b − a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn minimize<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_edge;
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut curve = Vec::new();
    let mut path = Vec::new();
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        curve.push((iterations, simplex[0].1));
        path.push(simplex[0].0.clone());
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| distance(v, &simplex[0].0))
            .fold(0.0, f64::max);
        if diameter < opts.diameter_tol {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|(v, _)| v[d]).sum::<f64>() / n as f64)
            .collect();
        let (worst, f_worst) = simplex[n].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;

        let xr = combine(&centroid, &worst, -opts.reflection);
        let fr = eval(&xr, &mut evals);
        if fr < f_best {
            let xe = combine(&centroid, &worst, -opts.reflection * opts.expansion);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < f_worst {
            let xc = combine(&centroid, &xr, opts.contraction);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = combine(&centroid, &worst, opts.contraction);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(f_worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let v = combine(&best, &vertex.0, opts.shrink);
            let fv = eval(&v, &mut evals);
            *vertex = (v, fv);
        }
    }

    Minimum {
        x: simplex[0].0.clone(),
        f: simplex[0].1,
        iterations,
        function_evals: evals,
        gradient_evals: 0,
        curve,
        path,
        converged,
    }
}
