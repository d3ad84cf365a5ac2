//! Doubly accelerated stochastic variance reduced dual averaging.

pub mod outer;
pub mod params;
pub mod stage;
pub mod warm;

pub use outer::{
    adaptive_restart_check, momentum_point, outer_momentum, run_dasvrda_adaptive, run_dasvrda_ns, run_dasvrda_sc,
    DasvrdaSolver, OuterState, RestartPolicy, RestartProbe, StageEngine,
};
pub use params::{
    choose_stages_for_rho, eta_default, gamma_objective, gamma_star, ns_gap_bound, outer_theta, restart_rho, theta,
    theta_product, warm_default_rounds, warm_next_len, warm_schedule, warm_tail_len, StageParams,
};
pub use stage::{one_stage_accsvrda, one_stage_dasvrg, InnerStage, ZUpdate};
pub use warm::{initial_inner_len, run_dasvrda_warm, WarmStartHint, WarmStartSolver};
