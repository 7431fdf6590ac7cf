use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LsqOutcome {
    pub params: DVector<f64>,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_STEPS: usize = 50;
const REL_TOL: f64 = 1e-8;

fn jacobian(
    residuals: &impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    m: usize,
) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(m, x.len());
    for k in 0..x.len() {
        let h = 1e-7 * x[k].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (residuals(&xp) - residuals(&xm)) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

/// Damped Gauss-Newton on `residuals`, starting at `x0`, with a
/// central-difference Jacobian. Stops after 50 steps or once the relative
/// change in cost or parameters drops below 1e-8.
pub fn levenberg_marquardt(
    residuals: impl Fn(&DVector<f64>) -> DVector<f64>,
    x0: DVector<f64>,
) -> LsqOutcome {
    let mut x = x0;
    let mut r = residuals(&x);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = cost == 0.0;
    let mut iterations = 0;
    while !converged && iterations < MAX_STEPS {
        iterations += 1;
        let j = jacobian(&residuals, &x, r.len());
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut improved = false;
        for _ in 0..10 {
            let mut a = jtj.clone();
            for d in 0..a.nrows() {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let xn = &x + &step;
            let rn = residuals(&xn);
            let cn = rn.norm_squared();
            if cn.is_finite() && cn <= cost {
                let dc = (cost - cn) / cost.max(1e-300);
                let dx = step.norm() / x.norm().max(1e-12);
                x = xn;
                r = rn;
                cost = cn;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                converged = dc < REL_TOL || dx < REL_TOL || cost == 0.0;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left
            converged = true;
        }
    }
    LsqOutcome {
        params: x,
        cost,
        iterations,
        converged,
    }
}
