//! Band sampling, first-order optimizers and the training loop.
//!
//! Training is deterministic: the seed fixes the parameter initialization
//! and the sampling stream, batches never depend on the current parameters,
//! and the loss evaluation reduces in a fixed order regardless of the
//! thread count.

use crate::geometry::{normal_at, RegionMap};
use crate::jetnet::{Activation, NetworkParams, PairedNet};
use crate::loss::{
    auto_weights, BandSample, BatchEval, LegSample, LossBreakdown, LossError, LossWeights,
    PairSample, SampleSet,
};
use crate::problems::{ProblemSpec, Side};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("band has no {0:?}-side area to sample")]
    EmptyBandSide(Side),
    #[error("non-finite parameter update at step {step}")]
    NonFiniteUpdate { step: usize },
    #[error("training diverged at step {step}: total loss grew by more than 1e6 over 1000 steps")]
    Diverged { step: usize },
    #[error("loss evaluation failed at step {step}: {source}")]
    Loss {
        step: usize,
        #[source]
        source: LossError,
    },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightsMode {
    /// Balance the four terms once from the freshly initialized network,
    /// then freeze.
    Auto,
    Explicit(LossWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Draw a fresh interior batch every this many steps.
    pub batch_regen_every: usize,
    pub m1: usize,
    pub m2: usize,
    pub seed: u64,
    pub weights: WeightsMode,
    /// Hidden layer widths; `None` selects the per-dimension default.
    pub hidden: Option<Vec<usize>>,
    pub activation: Activation,
}

impl TrainConfig {
    /// Defaults per dimension: 4x6 network with plain SGD in 1D, 6x15 with
    /// Adam in 2D, learning rate 1e-4, fresh batch every 10 steps.
    pub fn default_for_dim(dim: usize) -> Self {
        if dim == 1 {
            Self {
                epochs: 20_000,
                learning_rate: 1e-4,
                optimizer: OptimizerKind::Sgd,
                adam_beta1: 0.9,
                adam_beta2: 0.999,
                adam_eps: 1e-8,
                batch_regen_every: 10,
                m1: 100,
                m2: 100,
                seed: 0,
                weights: WeightsMode::Auto,
                hidden: None,
                activation: Activation::Elu,
            }
        } else {
            Self {
                epochs: 50_000,
                learning_rate: 1e-4,
                optimizer: OptimizerKind::Adam,
                adam_beta1: 0.9,
                adam_beta2: 0.999,
                adam_eps: 1e-8,
                batch_regen_every: 10,
                m1: 1000,
                m2: 1000,
                seed: 0,
                weights: WeightsMode::Auto,
                hidden: None,
                activation: Activation::Elu,
            }
        }
    }

    pub fn hidden_for_dim(&self, dim: usize) -> Vec<usize> {
        self.hidden
            .clone()
            .unwrap_or_else(|| if dim == 1 { vec![6; 4] } else { vec![15; 6] })
    }
}

/// Training product: the networks (with their ansatz scales), the per-step
/// loss record and the frozen weights actually used.
#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub net: crate::jetnet::BandAnsatz,
    pub loss_history: Vec<LossBreakdown>,
    pub final_total: f64,
    pub weights: LossWeights,
    pub config: TrainConfig,
}

/// Optimizer state persisted across steps (Adam moments).
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One optimizer update in place: plain SGD, or Adam with bias correction.
pub fn step(
    theta: &mut [f64],
    grad: &[f64],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    assert_eq!(theta.len(), grad.len());
    let eta = config.learning_rate;
    match config.optimizer {
        OptimizerKind::Sgd => {
            for (t, g) in theta.iter_mut().zip(grad.iter()) {
                *t -= eta * g;
            }
        }
        OptimizerKind::Adam => {
            state.t += 1;
            let (b1, b2) = (config.adam_beta1, config.adam_beta2);
            let bc1 = 1.0 - b1.powi(state.t as i32);
            let bc2 = 1.0 - b2.powi(state.t as i32);
            for i in 0..theta.len() {
                state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
                state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
                let mh = state.m[i] / bc1;
                let vh = state.v[i] / bc2;
                theta[i] -= eta * mh / (vh.sqrt() + config.adam_eps);
            }
        }
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(TrainError::NonFiniteUpdate { step: state.t as usize });
    }
    Ok(())
}

/// Enriches the geometric node pairs with jump targets, normals,
/// coefficient values and per-node anchors.
pub fn pair_samples(problem: &ProblemSpec, map: &RegionMap) -> Result<Vec<PairSample>, TrainError> {
    let grid = &map.grid;
    let mut out = Vec::with_capacity(map.node_pairs.len());
    for pair in &map.node_pairs {
        let normal = normal_at(&problem.phi, pair.foot)?;
        let mut legs = Vec::with_capacity(pair.legs.len());
        for leg in &pair.legs {
            let xm = grid.node(leg.minus.i, leg.minus.j);
            let xp = grid.node(leg.plus.i, leg.plus.j);
            legs.push(LegSample {
                minus: BandSample {
                    x: xm,
                    anchor: problem.anchor_at(xm)?,
                },
                plus: BandSample {
                    x: xp,
                    anchor: problem.anchor_at(xp)?,
                },
                beta_minus: problem.beta(Side::Minus, xm),
                beta_plus: problem.beta(Side::Plus, xp),
            });
        }
        out.push(PairSample {
            foot: pair.foot,
            normal,
            w: (problem.jump_w)(pair.foot),
            v: (problem.jump_v)(pair.foot, normal),
            legs,
        });
    }
    Ok(out)
}

/// Draws `m1` + `m2` interior points uniformly over the band on each side
/// by rejection sampling on the band cells, and copies the node pairs.
pub fn sample_band(
    map: &RegionMap,
    problem: &ProblemSpec,
    m1: usize,
    m2: usize,
    rng: &mut ChaCha12Rng,
) -> Result<SampleSet, TrainError> {
    let grid = &map.grid;
    let band_cells: Vec<(usize, usize)> = (0..grid.cells(1))
        .flat_map(|cj| (0..grid.cells(0)).map(move |ci| (ci, cj)))
        .filter(|&(ci, cj)| map.band[grid.cell_idx(ci, cj)])
        .collect();
    if band_cells.is_empty() {
        return Err(TrainError::EmptyBandSide(Side::Minus));
    }

    let mut draw_side = |side: Side, m: usize| -> Result<Vec<BandSample>, TrainError> {
        let mut out = Vec::with_capacity(m);
        let mut attempts = 0usize;
        let budget = 1000 + 10_000 * m;
        while out.len() < m {
            attempts += 1;
            if attempts > budget {
                return Err(TrainError::EmptyBandSide(side));
            }
            let (ci, cj) = band_cells[rng.gen_range(0..band_cells.len())];
            let base = grid.node(ci, cj);
            let x = [
                base[0] + rng.gen_range(0.0..1.0) * grid.h(0),
                if grid.dim == 2 {
                    base[1] + rng.gen_range(0.0..1.0) * grid.h(1)
                } else {
                    0.0
                },
            ];
            let phi = problem.phi.value(x);
            let ok = match side {
                Side::Minus => phi < 0.0,
                Side::Plus => phi > 0.0,
            };
            if !ok {
                continue;
            }
            let Ok(anchor) = problem.anchor_at(x) else {
                continue;
            };
            out.push(BandSample { x, anchor });
        }
        Ok(out)
    };

    let interior_minus = draw_side(Side::Minus, m1)?;
    let interior_plus = draw_side(Side::Plus, m2)?;
    Ok(SampleSet {
        interior_minus,
        interior_plus,
        pairs: pair_samples(problem, map)?,
        seed: 0,
    })
}

/// Output scale of one side's network contribution: the network models the
/// residue `(u - (d+1) ghat) / m(d)`, which lives at the scale of the
/// boundary-extension magnitude divided by the band-wide maximum of the
/// distance factor.
fn side_scale(samples: &[BandSample], problem: &ProblemSpec) -> f64 {
    let mut gmax = 0.0f64;
    let mut ghat_max = 0.0f64;
    let mut m_max = 0.0f64;
    for s in samples {
        gmax = gmax.max((problem.g)(s.x).abs());
        ghat_max = ghat_max.max(s.anchor.ghat.abs());
        let d = ((s.x[0] - s.anchor.foot[0]).powi(2) + (s.x[1] - s.anchor.foot[1]).powi(2))
            .sqrt();
        m_max = m_max.max(d.powf(s.anchor.exponent));
    }
    let magnitude = if ghat_max > 0.0 { ghat_max } else { gmax };
    if magnitude <= 0.0 || m_max <= 0.0 {
        1.0
    } else {
        magnitude / m_max
    }
}

/// Trains the paired network on the band: fresh batches on schedule,
/// auto-balanced frozen weights, first-order updates, full loss record.
pub fn train(
    problem: &ProblemSpec,
    map: &RegionMap,
    config: &TrainConfig,
) -> Result<TrainedNet, TrainError> {
    let dim = problem.dim;
    let hidden = config.hidden_for_dim(dim);
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);

    // One network per side, even for homogeneous value jumps: both sides
    // are anchored to the same interface trace, so continuity holds by
    // construction, while the per-side residues may differ in sign and
    // scale and would force a needless internal layer into a shared net.
    let net = {
        let mut minus = NetworkParams::new(dim, &hidden, config.activation);
        let mut plus = NetworkParams::new(dim, &hidden, config.activation);
        minus.init_random(&mut rng);
        plus.init_random(&mut rng);
        PairedNet::Pair { minus, plus }
    };

    let mut samples = sample_band(map, problem, config.m1, config.m2, &mut rng)?;

    let mut ansatz = crate::jetnet::BandAnsatz {
        scale_minus: side_scale(&samples.interior_minus, problem),
        scale_plus: side_scale(&samples.interior_plus, problem),
        net,
    };
    let mut batch = BatchEval::new(problem, &ansatz, &samples);

    let weights = match config.weights {
        WeightsMode::Explicit(w) => w,
        WeightsMode::Auto => {
            let init = batch
                .evaluate(problem, &ansatz, &samples, &LossWeights::uniform(), None)
                .map_err(|source| TrainError::Loss { step: 0, source })?;
            // The anchors satisfy the jump conditions almost by construction
            // at initialization; reciprocal weighting would blow their
            // weights up and starve the residual terms, so the jump terms
            // are floored at the residual scale.
            let residual_scale = init.l1.max(init.l2);
            let terms = [
                init.l1,
                init.l2,
                init.l3.max(residual_scale),
                init.l4.max(residual_scale),
            ];
            auto_weights(&terms)
        }
    };

    let n_params = ansatz.net.param_count();
    let mut theta = ansatz.net.flatten();
    let mut grad = vec![0.0; n_params];
    let mut state = OptimizerState::new(n_params);
    let mut history: Vec<LossBreakdown> = Vec::with_capacity(config.epochs);

    for k in 0..config.epochs {
        if k > 0 && k % config.batch_regen_every == 0 {
            samples = sample_band(map, problem, config.m1, config.m2, &mut rng)?;
            batch = BatchEval::new(problem, &ansatz, &samples);
        }
        let breakdown = batch
            .evaluate(problem, &ansatz, &samples, &weights, Some(&mut grad))
            .map_err(|source| TrainError::Loss { step: k, source })?;
        history.push(breakdown);
        if k >= 1000 {
            let past = history[k - 1000].total;
            if past.is_finite() && breakdown.total > 1e6 * past.max(1e-300) {
                return Err(TrainError::Diverged { step: k });
            }
        }
        step(&mut theta, &grad, &mut state, config)
            .map_err(|_| TrainError::NonFiniteUpdate { step: k })?;
        ansatz.net.unflatten(&theta);
    }

    let final_total = history.last().map(|b| b.total).unwrap_or(0.0);
    Ok(TrainedNet {
        net: ansatz,
        loss_history: history,
        final_total,
        weights,
        config: config.clone(),
    })
}
