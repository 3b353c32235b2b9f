//! Finite-difference oracles for the network derivatives.
//!
//! These checks are independent of the analytic propagation paths: spatial
//! derivatives are compared against central difference quotients of plain
//! value evaluations, parameter gradients against central differences over
//! the flat parameter vector. Used by the `check-gradients` command and the
//! acceptance suite.

use crate::jetnet::{
    eval_jet_ws, forward_jet_ws, param_gradient, Activation, Anchor, EvalPoint, Jet,
    JetCotangent, NetworkParams, Workspace,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    /// Worst relative error of the jet gradient vs central differences.
    pub max_rel_grad: f64,
    /// Worst relative error of the jet Hessian vs central differences.
    pub max_rel_hess: f64,
    /// Worst relative error of the parameter gradient vs central
    /// differences over every component.
    pub max_rel_param: f64,
    pub instances: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_grad < tol && self.max_rel_hess < tol && self.max_rel_param < tol
    }
}

fn jet_loss(jet: &Jet, dim: usize) -> f64 {
    let mut l = jet.value * jet.value;
    for k in 0..dim {
        l += jet.grad[k] * jet.grad[k];
        for m in 0..dim {
            l += jet.hess[k][m] * jet.hess[k][m];
        }
    }
    l
}

fn jet_loss_cot(jet: &Jet, dim: usize) -> JetCotangent {
    let mut cot = JetCotangent {
        value: 2.0 * jet.value,
        ..Default::default()
    };
    for k in 0..dim {
        cot.grad[k] = 2.0 * jet.grad[k];
        for m in 0..dim {
            cot.hess[k][m] = 2.0 * jet.hess[k][m];
        }
    }
    cot
}

/// Runs `instances` seeded random (network, point) draws for the spatial
/// derivative check and a parameter-gradient check per instance batch.
/// Draws whose pre-activations land within 1e-3 of the activation kink are
/// redrawn so the difference quotients stay meaningful.
pub fn run_gradient_checks(seed: u64, instances: usize) -> GradCheckReport {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut ws = Workspace::new();
    let mut max_rel_grad = 0.0f64;
    let mut max_rel_hess = 0.0f64;

    let mut accepted = 0;
    while accepted < instances {
        let dim = if rng.gen_bool(0.5) { 1 } else { 2 };
        let mut net = NetworkParams::new(dim, &[8, 8], Activation::Elu);
        net.init_random(&mut rng);
        let mut x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if dim == 1 {
            x[1] = 0.0;
        }
        let jet = match forward_jet_ws(&net, x, &mut ws) {
            Ok(j) => j,
            Err(_) => continue,
        };
        if ws.min_abs_preact < 1e-3 {
            continue;
        }
        accepted += 1;

        let h = 1e-4;
        let f = |p: [f64; 2]| net.forward_value(p);
        let f0 = f(x);
        for k in 0..dim {
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let (fp, fm) = (f(xp), f(xm));
            let fd_g = (fp - fm) / (2.0 * h);
            max_rel_grad =
                max_rel_grad.max((jet.grad[k] - fd_g).abs() / jet.grad[k].abs().max(1e-3));
            let fd_h = (fp - 2.0 * f0 + fm) / (h * h);
            max_rel_hess =
                max_rel_hess.max((jet.hess[k][k] - fd_h).abs() / jet.hess[k][k].abs().max(1e-2));
        }
        if dim == 2 {
            let g = |dx: f64, dy: f64| f([x[0] + dx, x[1] + dy]);
            let fd_m = (g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (4.0 * h * h);
            max_rel_hess =
                max_rel_hess.max((jet.hess[0][1] - fd_m).abs() / jet.hess[0][1].abs().max(1e-2));
        }
    }

    // Parameter gradients: composite jet loss over a few points, raw and
    // anchored, against central differences over every component.
    let mut max_rel_param = 0.0f64;
    for case in 0..4 {
        let dim = if case % 2 == 0 { 1 } else { 2 };
        let anchored = case >= 2;
        let mut net = NetworkParams::new(dim, &[6, 6], Activation::Elu);
        net.init_random(&mut rng);
        let anchor = Anchor {
            foot: [0.05, if dim == 2 { -0.1 } else { 0.0 }],
            ghat: 0.7,
            normal: [1.0, 0.0],
            exponent: 1.0,
        };
        let points: Vec<EvalPoint> = (0..5)
            .map(|_| {
                let x = [
                    rng.gen_range(0.3..0.9),
                    if dim == 2 { rng.gen_range(0.2..0.8) } else { 0.0 },
                ];
                if anchored {
                    EvalPoint::anchored(x, anchor)
                } else {
                    EvalPoint::raw(x)
                }
            })
            .collect();

        let loss_of = |flat: &[f64]| -> f64 {
            let mut n = net.clone();
            n.unflatten(flat);
            let mut w = Workspace::new();
            points
                .iter()
                .map(|p| jet_loss(&eval_jet_ws(&n, p, &mut w).unwrap(), dim))
                .sum()
        };

        let samples: Vec<(EvalPoint, JetCotangent)> = points
            .iter()
            .map(|p| {
                let jet = eval_jet_ws(&net, p, &mut ws).unwrap();
                (*p, jet_loss_cot(&jet, dim))
            })
            .collect();
        let mut grad = vec![0.0; net.param_count()];
        param_gradient(&net, &samples, &mut grad).unwrap();

        let theta = net.flatten();
        let delta = 1e-5;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += delta;
            tm[i] -= delta;
            let fd = (loss_of(&tp) - loss_of(&tm)) / (2.0 * delta);
            max_rel_param = max_rel_param.max((grad[i] - fd).abs() / grad[i].abs().max(1e-2));
        }
    }

    GradCheckReport {
        max_rel_grad,
        max_rel_hess,
        max_rel_param,
        instances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_checks_pass_the_tolerance() {
        let report = run_gradient_checks(3, 25);
        assert!(report.passes(1e-5), "{report:?}");
    }
}
