//! Decoupled neural/finite-difference solver for degenerate elliptic
//! interface problems.
//!
//! A small feed-forward network is trained on a narrow band of cells around
//! the interface to satisfy the PDE residual and the jump conditions. Its
//! values on the band frontier then serve as Dirichlet data that split the
//! original problem into two independent boundary-value problems on the
//! regular subdomains, each solved with a flux-form finite-difference
//! scheme on the uniform grid.
//!
//! Modules follow the pipeline: [`geometry`] classifies the grid around the
//! level set, [`jetnet`] evaluates networks together with exact spatial
//! first and second derivatives, [`loss`] assembles the training objective,
//! [`trainer`] runs the optimizer, [`fdsolver`] solves the decoupled
//! subproblems, [`problems`] holds the built-in benchmark corpus, and
//! [`harness`] drives grid-refinement studies.

pub mod fdsolver;
pub mod geometry;
pub mod gradcheck;
pub mod harness;
pub mod jetnet;
pub mod loss;
pub mod problems;
pub mod trainer;

pub use geometry::{
    classify, normal_at, pair_nodes, project_to_interface, GeometryError, GridSpec, Label,
    LevelSet, NodeIdx, NodePair, PairCase, PairLeg, Point, RegionMap,
};
pub use jetnet::{
    anchored_jet, elu_jet, forward_jet, load_paired, param_gradient, save_paired, Activation,
    Anchor, EvalPoint, Jet, JetCotangent, JetError, NetworkParams, PairedNet, Workspace,
};
pub use loss::{
    auto_weights, evaluate, interior_loss, jump_losses, pde_residual, total_loss, BandSample,
    BatchEval, LegSample, LossBreakdown, LossError, LossWeights, PairSample, SampleSet,
};
pub use fdsolver::{
    apply_flux_stencil, assemble, solve_decoupled, solve_linear, solve_picard, BandField,
    DecoupledSolution, FdError, GridFunction, LinearSystem,
};
pub use gradcheck::{run_gradient_checks, GradCheckReport};
pub use harness::{
    convergence_study, emit_table, order, table_to_csv, table_to_markdown, EmitFormat,
    HarnessError, StudyConfig, StudyTable,
};
pub use problems::{
    exact_error, get_problem, problem_names, residual_metric, ExactSolution, ProblemError,
    ProblemSpec, Region, Side, StudyRow,
};
pub use trainer::{
    sample_band, step, train, OptimizerKind, OptimizerState, TrainConfig, TrainError, TrainedNet,
    WeightsMode,
};
