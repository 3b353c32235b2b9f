//! Scratch calibration runs for training budgets.

use defuse_core::fdsolver::{solve_decoupled, BandField};
use defuse_core::geometry::classify;
use defuse_core::problems::{exact_error, get_problem, Region};
use defuse_core::trainer::{train, OptimizerKind, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("1d");

    match which {
        "1d" => run_1d(&args),
        "2d" => run_2d(&args),
        "study" => run_study(&args),
        _ => eprintln!("unknown mode"),
    }
}

fn run_study(args: &[String]) {
    use defuse_core::harness::{convergence_study, StudyConfig};
    let name: String = parse(args, 2, "ex4_1".to_string());
    let gmax: usize = parse(args, 3, 160);
    let epochs: usize = parse(args, 4, 40000);
    let lr: f64 = parse(args, 5, 1e-3);
    let m: usize = parse(args, 6, 100);
    let tau_minus: f64 = parse(args, 7, 1e12);
    let tau_plus: f64 = parse(args, 8, 1.0);
    let oracle: usize = parse(args, 9, 0);

    let mut params = Vec::new();
    let probe = get_problem(&name, &[]).unwrap();
    if probe.tunable.contains(&"tau_minus") {
        params.push(("tau_minus".to_string(), tau_minus));
        params.push(("tau_plus".to_string(), tau_plus));
    }
    let mut grids = vec![];
    let mut n = 10;
    if gmax >= 20 && gmax % 20 == 0 {
        n = gmax;
        let mut v = vec![];
        while n >= 10 {
            v.push(n);
            if n % 2 != 0 { break; }
            n /= 2;
        }
        v.reverse();
        grids = v;
    } else {
        while n <= gmax {
            grids.push(n);
            n *= 2;
        }
    }
    let dim = probe.dim;
    let mut train = TrainConfig::default_for_dim(dim);
    train.epochs = epochs;
    train.learning_rate = lr;
    train.optimizer = OptimizerKind::Adam;
    train.m1 = m;
    train.m2 = m;
    let cfg = StudyConfig {
        grids,
        band_width_cells: 1,
        train,
        oracle: oracle == 1,
        verbose: true,
    };
    let table = convergence_study(&name, &params, &cfg).unwrap();
    println!("{}", defuse_core::harness::table_to_csv(&table));
}

fn parse<T: std::str::FromStr>(args: &[String], k: usize, default: T) -> T {
    args.get(k)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn run_1d(args: &[String]) {
    let n: usize = parse(args, 2, 160);
    let epochs: usize = parse(args, 3, 20000);
    let lr: f64 = parse(args, 4, 1e-4);
    let opt: String = parse(args, 5, "sgd".to_string());
    let tau_minus: f64 = parse(args, 6, 1e12);
    let tau_plus: f64 = parse(args, 7, 1.0);
    let bw: usize = parse(args, 8, 1);
    let seed: u64 = parse(args, 9, 0);

    let p = get_problem(
        "ex4_1",
        &[
            ("tau_minus".into(), tau_minus),
            ("tau_plus".into(), tau_plus),
        ],
    )
    .unwrap();
    let grid = p.grid(n);
    let map = classify(&p.phi, &grid, bw).unwrap();

    let mut cfg = TrainConfig::default_for_dim(1);
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.optimizer = if opt == "adam" {
        OptimizerKind::Adam
    } else {
        OptimizerKind::Sgd
    };
    cfg.seed = n as u64 + seed;

    let t0 = Instant::now();
    let trained = train(&p, &map, &cfg).unwrap();
    let t_train = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let sol = solve_decoupled(&BandField::Net(&trained.net), &p, &grid, &map, true).unwrap();
    let t_solve = t1.elapsed().as_secs_f64();

    // Probe the plus-side trace across the band.
    let a_plus = p.anchor_at([1.0125, 0.0]).unwrap();
    let a_minus = p.anchor_at([0.9875, 0.0]).unwrap();
    println!(
        "anchors: plus(exp={}, ghat={:.3e})  minus(exp={}, ghat={:.3e})  scales=({:.3e},{:.3e})",
        a_plus.exponent, a_plus.ghat, a_minus.exponent, a_minus.ghat,
        trained.net.scale_minus, trained.net.scale_plus
    );
    let exact = p.exact.clone().unwrap();
    let field = BandField::Net(&trained.net);
    for k in 1..=2 * (map.band_width_cells + 1) {
        let x = [1.0 + k as f64 * grid.h(0) / 2.0, 0.0];
        let ut = field.eval(&p, defuse_core::problems::Side::Plus, x).unwrap();
        let ue = (exact.plus)(x).value;
        println!("  d={:.4}  u_t={:+.6e}  u_exact={:+.6e}  ratio={:.4}", x[0] - 1.0, ut, ue, ut / ue);
    }
    let (e1, _) = exact_error(&sol, &p, &map, Region::Omega1).unwrap();
    let (e2, _) = exact_error(&sol, &p, &map, Region::Omega2).unwrap();
    let (ea, einf) = exact_error(&sol, &p, &map, Region::Omega).unwrap();
    let h0 = &trained.loss_history[0];
    let hl = trained.loss_history.last().unwrap();
    println!(
        "1d n={n} bw={bw} epochs={epochs} lr={lr} opt={opt} tau=({tau_minus:e},{tau_plus:e})\n\
         train {t_train:.1}s solve {t_solve:.2}s\n\
         total {:.3e} -> {:.3e}  (l1 {:.2e}->{:.2e} l2 {:.2e}->{:.2e} l3 {:.2e}->{:.2e} l4 {:.2e}->{:.2e})\n\
         err_o1 {e1:.3e} err_o2 {e2:.3e} err_all {ea:.3e} err_inf {einf:.3e}",
        h0.total, hl.total, h0.l1, hl.l1, h0.l2, hl.l2, h0.l3, hl.l3, h0.l4, hl.l4
    );
}

fn run_2d(args: &[String]) {
    let name: String = parse(args, 2, "ex4_3".to_string());
    let n: usize = parse(args, 3, 40);
    let epochs: usize = parse(args, 4, 8000);
    let lr: f64 = parse(args, 5, 1e-4);
    let m: usize = parse(args, 6, 1000);
    let tau_minus: f64 = parse(args, 7, 1e10);
    let tau_plus: f64 = parse(args, 8, 1.0);

    let mut params = Vec::new();
    if name == "ex4_3" || name == "ex4_4" || name == "ex4_10" {
        params.push(("tau_minus".to_string(), tau_minus));
        params.push(("tau_plus".to_string(), tau_plus));
    }
    let p = get_problem(&name, &params).unwrap();
    let grid = p.grid(n);
    let map = classify(&p.phi, &grid, 1).unwrap();
    println!(
        "pairs: {} legs: {}",
        map.node_pairs.len(),
        map.node_pairs.iter().map(|p| p.legs.len()).sum::<usize>()
    );

    let mut cfg = TrainConfig::default_for_dim(2);
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.m1 = m;
    cfg.m2 = m;
    cfg.seed = n as u64;

    let t0 = Instant::now();
    let trained = train(&p, &map, &cfg).unwrap();
    let t_train = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let sol = solve_decoupled(&BandField::Net(&trained.net), &p, &grid, &map, true).unwrap();
    let t_solve = t1.elapsed().as_secs_f64();

    let h0 = &trained.loss_history[0];
    let hl = trained.loss_history.last().unwrap();
    if p.exact.is_some() {
        let (e1, _) = exact_error(&sol, &p, &map, Region::Omega1).unwrap();
        let (e2, _) = exact_error(&sol, &p, &map, Region::Omega2).unwrap();
        let (ea, einf) = exact_error(&sol, &p, &map, Region::Omega).unwrap();
        println!(
            "{name} n={n} epochs={epochs} lr={lr} m={m}\n\
             train {t_train:.1}s ({:.1} ms/step) solve {t_solve:.2}s\n\
             total {:.3e} -> {:.3e}\n\
             err_o1 {e1:.3e} err_o2 {e2:.3e} err_all {ea:.3e} err_inf {einf:.3e}",
            1000.0 * t_train / epochs as f64,
            h0.total,
            hl.total
        );
    } else {
        use defuse_core::problems::residual_metric;
        let e1 = residual_metric(&sol, &p, &map, Region::Omega1);
        let e2 = residual_metric(&sol, &p, &map, Region::Omega2);
        let ea = residual_metric(&sol, &p, &map, Region::Omega);
        println!(
            "{name} n={n} epochs={epochs} lr={lr} m={m}\n\
             train {t_train:.1}s ({:.1} ms/step) solve {t_solve:.2}s\n\
             total {:.3e} -> {:.3e}\n\
             res_o1 {e1:.3e} res_o2 {e2:.3e} res_all {ea:.3e}",
            1000.0 * t_train / epochs as f64,
            h0.total,
            hl.total
        );
    }
}

// Study mode lives in main's dispatch via a recompile; quick helper:
