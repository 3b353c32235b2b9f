//! Assembly of the four discrete loss terms and their parameter adjoints.
//!
//! `L1`/`L2` are mean squared PDE residuals over the band interior samples
//! of each side plus that side's members of the interface node pairs;
//! `L3`/`L4` are mean squared violations of the value and flux jump
//! conditions over the emitted pair legs. The weighted total drives the
//! optimizer. Evaluation over sites is chunked, with a fixed reduction
//! order so results do not depend on the thread count.

use crate::geometry::Point;
use crate::jetnet::{
    eval_backprop, eval_jet_ws, BandAnsatz, EvalPoint, Jet, JetCotangent, JetError, Workspace,
};
use crate::problems::{ProblemSpec, Side};
use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("non-finite {term} contribution at sample {index}")]
    NonFiniteLoss { term: &'static str, index: usize },
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Positive weights applied to the four loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl LossWeights {
    pub fn uniform() -> Self {
        Self {
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            w4: 1.0,
        }
    }
}

/// Raw loss terms and their weighted total for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub total: f64,
}

/// Weighted sum of the four terms.
pub fn total_loss(weights: &LossWeights, l1: f64, l2: f64, l3: f64, l4: f64) -> LossBreakdown {
    LossBreakdown {
        l1,
        l2,
        l3,
        l4,
        total: weights.w1 * l1 + weights.w2 * l2 + weights.w3 * l3 + weights.w4 * l4,
    }
}

/// Balances the initial loss magnitudes: `w_i = 1 / max(l_i, 1e-12)`,
/// normalized so the largest weight is one. The result stays frozen for
/// the remainder of training.
pub fn auto_weights(initial: &[f64; 4]) -> LossWeights {
    let raw = initial.map(|l| 1.0 / l.max(1e-12));
    let max = raw.iter().cloned().fold(f64::MIN, f64::max);
    LossWeights {
        w1: raw[0] / max,
        w2: raw[1] / max,
        w3: raw[2] / max,
        w4: raw[3] / max,
    }
}

/// One band interior sample: the point plus the frozen anchor data used by
/// the interface-anchored output form.
#[derive(Debug, Clone, Copy)]
pub struct BandSample {
    pub x: Point,
    pub anchor: crate::jetnet::Anchor,
}

/// One oriented jump-condition site: both flanking nodes with their
/// coefficient values and anchors.
#[derive(Debug, Clone, Copy)]
pub struct LegSample {
    pub minus: BandSample,
    pub plus: BandSample,
    pub beta_minus: f64,
    pub beta_plus: f64,
}

/// Jump data shared by the legs of one node pair: the interface foot
/// point, the unit normal there, and the jump targets.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub foot: Point,
    pub normal: [f64; 2],
    pub w: f64,
    pub v: f64,
    pub legs: Vec<LegSample>,
}

/// A full training batch: random interior points on both sides of the band
/// plus the (fixed) interface node pairs.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub interior_minus: Vec<BandSample>,
    pub interior_plus: Vec<BandSample>,
    pub pairs: Vec<PairSample>,
    pub seed: u64,
}

/// PDE residual `-div(beta grad u) - f(x, u)` expanded with the analytic
/// coefficient gradient, evaluated on one side at one point from a jet.
pub fn pde_residual(problem: &ProblemSpec, side: Side, x: Point, jet: &Jet) -> f64 {
    let gb = problem.grad_beta(side, x);
    let beta = problem.beta(side, x);
    let mut flux = gb[0] * jet.grad[0] + beta * jet.hess[0][0];
    if problem.dim == 2 {
        flux += gb[1] * jet.grad[1] + beta * jet.hess[1][1];
    }
    -flux - problem.f(side, x, jet.value)
}

/// Derivative of the source with respect to its `u` argument, by central
/// differences (exactly zero for u-independent sources).
fn source_du(problem: &ProblemSpec, side: Side, x: Point, u: f64) -> f64 {
    let h = 1e-6 * u.abs().max(1.0);
    (problem.f(side, x, u + h) - problem.f(side, x, u - h)) / (2.0 * h)
}

// Both sides use the interface-anchored output form; the anchor trace on
// the minus side is the boundary extension shifted by the value jump.
fn eval_point(ansatz: &BandAnsatz, side: Side, sample: &BandSample) -> EvalPoint {
    EvalPoint::anchored(sample.x, sample.anchor).with_scale(ansatz.scale(side == Side::Minus))
}

fn params_for(ansatz: &BandAnsatz, side: Side) -> &crate::jetnet::NetworkParams {
    match side {
        Side::Minus => ansatz.net.minus(),
        Side::Plus => ansatz.net.plus(),
    }
}

/// One leg flattened for evaluation: site indices plus the jump data.
#[derive(Debug, Clone, Copy)]
struct LegRef {
    minus_site: usize,
    plus_site: usize,
    leg: LegSample,
    normal: [f64; 2],
    w: f64,
    v: f64,
}

/// Flat site list for one batch: interior samples first (minus, then
/// plus), then the leg nodes pairwise.
struct SiteList {
    sites: Vec<(Side, EvalPoint)>,
    n_interior_minus: usize,
    n_interior_plus: usize,
    legs: Vec<LegRef>,
}

fn build_sites(net: &BandAnsatz, samples: &SampleSet) -> SiteList {
    let n_leg_total: usize = samples.pairs.iter().map(|p| p.legs.len()).sum();
    let mut sites = Vec::with_capacity(
        samples.interior_minus.len() + samples.interior_plus.len() + 2 * n_leg_total,
    );
    for s in &samples.interior_minus {
        sites.push((Side::Minus, eval_point(net, Side::Minus, s)));
    }
    for s in &samples.interior_plus {
        sites.push((Side::Plus, eval_point(net, Side::Plus, s)));
    }
    let mut legs = Vec::with_capacity(n_leg_total);
    for pair in &samples.pairs {
        for leg in &pair.legs {
            let minus_site = sites.len();
            sites.push((Side::Minus, eval_point(net, Side::Minus, &leg.minus)));
            let plus_site = sites.len();
            sites.push((Side::Plus, eval_point(net, Side::Plus, &leg.plus)));
            legs.push(LegRef {
                minus_site,
                plus_site,
                leg: *leg,
                normal: pair.normal,
                w: pair.w,
                v: pair.v,
            });
        }
    }
    SiteList {
        sites,
        n_interior_minus: samples.interior_minus.len(),
        n_interior_plus: samples.interior_plus.len(),
        legs,
    }
}

const CHUNK: usize = 64;

/// Reusable per-chunk state: workspaces holding each site's tape between
/// the forward and backward sweeps, and a chunk-local gradient buffer.
#[derive(Default)]
struct ChunkState {
    ws: Vec<Workspace>,
    grad: Vec<f64>,
}

/// Batch evaluator reused across optimizer steps for one sample set.
pub struct BatchEval {
    sites: SiteList,
    jets: Vec<Jet>,
    cots: Vec<JetCotangent>,
    chunks: Vec<ChunkState>,
    /// Mean coefficient over each side's residual sample points, fixed per
    /// batch. Residual samples are weighted by `beta(x) / mean(beta)`: for
    /// degenerate coefficients the squared residual has divergent tails
    /// near the interface, and the coefficient-weighted norm is the natural
    /// bounded topology; for nondegenerate coefficients the weight is one
    /// up to a constant absorbed by the term weights.
    beta_mean: [f64; 2],
}

impl BatchEval {
    pub fn new(problem: &ProblemSpec, net: &BandAnsatz, samples: &SampleSet) -> Self {
        let sites = build_sites(net, samples);
        let n = sites.sites.len();
        let n_chunks = n.div_ceil(CHUNK).max(1);
        let mut chunks = Vec::with_capacity(n_chunks);
        chunks.resize_with(n_chunks, ChunkState::default);

        let mut beta_mean = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for (i, samp) in samples
            .interior_minus
            .iter()
            .map(|s| (0usize, s))
            .chain(samples.interior_plus.iter().map(|s| (1usize, s)))
        {
            beta_mean[i] += problem.beta(if i == 0 { Side::Minus } else { Side::Plus }, samp.x);
            counts[i] += 1;
        }
        for pair in &samples.pairs {
            for leg in &pair.legs {
                beta_mean[0] += leg.beta_minus;
                beta_mean[1] += leg.beta_plus;
                counts[0] += 1;
                counts[1] += 1;
            }
        }
        for i in 0..2 {
            beta_mean[i] = if counts[i] == 0 || beta_mean[i] <= 0.0 {
                1.0
            } else {
                beta_mean[i] / counts[i] as f64
            };
        }

        Self {
            sites,
            jets: vec![Jet::default(); n],
            cots: vec![JetCotangent::default(); n],
            chunks,
            beta_mean,
        }
    }

    /// Residual-term contribution of one site: squared weighted residual
    /// plus the cotangent on that site's jet.
    #[allow(clippy::too_many_arguments)]
    fn residual_term(
        beta_mean: &[f64; 2],
        problem: &ProblemSpec,
        jet: &Jet,
        cot: &mut JetCotangent,
        side: Side,
        x: Point,
        n_terms: usize,
        weight: f64,
        want_grad: bool,
        term: &'static str,
        index: usize,
    ) -> Result<f64, LossError> {
        let mean = beta_mean[if side == Side::Minus { 0 } else { 1 }];
        let omega = problem.beta(side, x) / mean;
        let r = omega * pde_residual(problem, side, x, jet);
        if !r.is_finite() {
            return Err(LossError::NonFiniteLoss { term, index });
        }
        if want_grad {
            let scale = 2.0 * r * omega * weight / n_terms as f64;
            let gb = problem.grad_beta(side, x);
            let beta = problem.beta(side, x);
            let fu = source_du(problem, side, x, jet.value);
            cot.value -= scale * fu;
            for k in 0..problem.dim {
                cot.grad[k] -= scale * gb[k];
                cot.hess[k][k] -= scale * beta;
            }
        }
        Ok(r * r)
    }

    /// Evaluates the four terms and, when `grad` is given, accumulates the
    /// gradient of the weighted total into it (flat paired addressing;
    /// buffer is zeroed first).
    pub fn evaluate(
        &mut self,
        problem: &ProblemSpec,
        net: &BandAnsatz,
        samples: &SampleSet,
        weights: &LossWeights,
        grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown, LossError> {
        let n_sites = self.sites.sites.len();
        let want_grad = grad.is_some();
        let n_params = net.net.param_count();

        // Forward sweep: chunk-parallel; tapes are kept when a gradient is
        // requested.
        let sites = &self.sites.sites;
        let forward: Result<Vec<Vec<Jet>>, JetError> = self
            .chunks
            .par_iter_mut()
            .enumerate()
            .map(|(ci, chunk)| {
                let lo = ci * CHUNK;
                let hi = (lo + CHUNK).min(n_sites);
                let len = hi.saturating_sub(lo);
                if want_grad {
                    chunk.ws.resize_with(len, Workspace::new);
                }
                let mut local = Vec::with_capacity(len);
                let mut scratch = Workspace::new();
                for (k, (side, point)) in sites[lo..hi].iter().enumerate() {
                    let ws = if want_grad {
                        &mut chunk.ws[k]
                    } else {
                        &mut scratch
                    };
                    local.push(eval_jet_ws(params_for(net, *side), point, ws)?);
                }
                Ok(local)
            })
            .collect();
        let mut off = 0;
        for chunk_jets in forward? {
            self.jets[off..off + chunk_jets.len()].copy_from_slice(&chunk_jets);
            off += chunk_jets.len();
        }

        // Scalar pass: loss terms and per-site cotangents.
        for c in self.cots.iter_mut() {
            *c = JetCotangent::default();
        }
        let n_legs = self.sites.legs.len();
        let n_minus_terms = (self.sites.n_interior_minus + n_legs).max(1);
        let n_plus_terms = (self.sites.n_interior_plus + n_legs).max(1);
        let mut l = [0.0_f64; 4];
        let beta_mean = self.beta_mean;

        for (k, s) in samples.interior_minus.iter().enumerate() {
            l[0] += Self::residual_term(
                &beta_mean,
                problem,
                &self.jets[k],
                &mut self.cots[k],
                Side::Minus,
                s.x,
                n_minus_terms,
                weights.w1,
                want_grad,
                "L1",
                k,
            )?;
        }
        let plus_off = self.sites.n_interior_minus;
        for (k, s) in samples.interior_plus.iter().enumerate() {
            l[1] += Self::residual_term(
                &beta_mean,
                problem,
                &self.jets[plus_off + k],
                &mut self.cots[plus_off + k],
                Side::Plus,
                s.x,
                n_plus_terms,
                weights.w2,
                want_grad,
                "L2",
                k,
            )?;
        }

        for (li, leg) in self.sites.legs.iter().enumerate() {
            let (mi, pi) = (leg.minus_site, leg.plus_site);
            l[0] += Self::residual_term(
                &beta_mean,
                problem,
                &self.jets[mi],
                &mut self.cots[mi],
                Side::Minus,
                leg.leg.minus.x,
                n_minus_terms,
                weights.w1,
                want_grad,
                "L1",
                mi,
            )?;
            l[1] += Self::residual_term(
                &beta_mean,
                problem,
                &self.jets[pi],
                &mut self.cots[pi],
                Side::Plus,
                leg.leg.plus.x,
                n_plus_terms,
                weights.w2,
                want_grad,
                "L2",
                pi,
            )?;

            let (jm, jp) = (self.jets[mi], self.jets[pi]);
            let jw = jp.value - jm.value - leg.w;
            let n = leg.normal;
            let dm = jm.grad[0] * n[0] + jm.grad[1] * n[1];
            let dp = jp.grad[0] * n[0] + jp.grad[1] * n[1];
            let jv = leg.leg.beta_plus * dp - leg.leg.beta_minus * dm - leg.v;
            if !jw.is_finite() {
                return Err(LossError::NonFiniteLoss {
                    term: "L3",
                    index: li,
                });
            }
            if !jv.is_finite() {
                return Err(LossError::NonFiniteLoss {
                    term: "L4",
                    index: li,
                });
            }
            l[2] += jw * jw;
            l[3] += jv * jv;

            if want_grad {
                let s3 = 2.0 * jw * weights.w3 / n_legs as f64;
                let s4 = 2.0 * jv * weights.w4 / n_legs as f64;
                self.cots[pi].value += s3;
                self.cots[mi].value -= s3;
                for k in 0..problem.dim {
                    self.cots[pi].grad[k] += s4 * leg.leg.beta_plus * n[k];
                    self.cots[mi].grad[k] -= s4 * leg.leg.beta_minus * n[k];
                }
            }
        }

        l[0] /= n_minus_terms as f64;
        l[1] /= n_plus_terms as f64;
        l[2] /= n_legs.max(1) as f64;
        l[3] /= n_legs.max(1) as f64;

        // Backward sweep over the stored tapes, then an in-order merge of
        // the chunk gradients.
        if let Some(grad_out) = grad {
            assert_eq!(grad_out.len(), n_params, "gradient buffer length");
            let cots = &self.cots;
            let minus_seg = net.net.minus_segment();
            let plus_seg = net.net.plus_segment();
            let back: Result<(), JetError> = self
                .chunks
                .par_iter_mut()
                .enumerate()
                .map(|(ci, chunk)| {
                    let lo = ci * CHUNK;
                    let hi = (lo + CHUNK).min(n_sites);
                    chunk.grad.resize(n_params, 0.0);
                    chunk.grad.iter_mut().for_each(|g| *g = 0.0);
                    for (k, (side, point)) in sites[lo..hi].iter().enumerate() {
                        let seg = match side {
                            Side::Minus => minus_seg.clone(),
                            Side::Plus => plus_seg.clone(),
                        };
                        eval_backprop(
                            params_for(net, *side),
                            point,
                            &cots[lo + k],
                            &mut chunk.ws[k],
                            &mut chunk.grad[seg],
                        )?;
                    }
                    Ok(())
                })
                .collect();
            back?;
            grad_out.iter_mut().for_each(|g| *g = 0.0);
            for chunk in &self.chunks {
                if chunk.grad.is_empty() {
                    continue;
                }
                for (g, c) in grad_out.iter_mut().zip(chunk.grad.iter()) {
                    *g += c;
                }
            }
        }

        Ok(total_loss(weights, l[0], l[1], l[2], l[3]))
    }

    fn adjoints(&self) -> Vec<(EvalPoint, JetCotangent)> {
        self.sites
            .sites
            .iter()
            .zip(self.cots.iter())
            .map(|((_, p), c)| (*p, *c))
            .collect()
    }
}

/// Convenience entry point building a fresh evaluator.
pub fn evaluate(
    problem: &ProblemSpec,
    net: &BandAnsatz,
    samples: &SampleSet,
    weights: &LossWeights,
    grad: Option<&mut [f64]>,
) -> Result<LossBreakdown, LossError> {
    BatchEval::new(problem, net, samples).evaluate(problem, net, samples, weights, grad)
}

/// Mean squared PDE residual of one side over the given interior points
/// (the trainer additionally folds in that side's pair members). Returns
/// the per-sample adjoints consumed by `param_gradient`.
pub fn interior_loss(
    problem: &ProblemSpec,
    net: &BandAnsatz,
    side: Side,
    points: &[BandSample],
) -> Result<(f64, Vec<(EvalPoint, JetCotangent)>), LossError> {
    let samples = SampleSet {
        interior_minus: if side == Side::Minus {
            points.to_vec()
        } else {
            Vec::new()
        },
        interior_plus: if side == Side::Plus {
            points.to_vec()
        } else {
            Vec::new()
        },
        pairs: Vec::new(),
        seed: 0,
    };
    let mut be = BatchEval::new(problem, net, &samples);
    let mut grad = vec![0.0; net.net.param_count()];
    let breakdown = be.evaluate(problem, net, &samples, &LossWeights::uniform(), Some(&mut grad))?;
    let value = match side {
        Side::Minus => breakdown.l1,
        Side::Plus => breakdown.l2,
    };
    Ok((value, be.adjoints()))
}

/// Value- and flux-jump losses over the pair legs, with adjoints.
pub fn jump_losses(
    problem: &ProblemSpec,
    net: &BandAnsatz,
    pairs: &[PairSample],
) -> Result<(f64, f64, Vec<(EvalPoint, JetCotangent)>), LossError> {
    let samples = SampleSet {
        interior_minus: Vec::new(),
        interior_plus: Vec::new(),
        pairs: pairs.to_vec(),
        seed: 0,
    };
    let mut be = BatchEval::new(problem, net, &samples);
    let mut grad = vec![0.0; net.net.param_count()];
    let breakdown = be.evaluate(problem, net, &samples, &LossWeights::uniform(), Some(&mut grad))?;
    Ok((breakdown.l3, breakdown.l4, be.adjoints()))
}
