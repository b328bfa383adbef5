//! Parametric toy systems, analytic experts, expert datasets and
//! closed-form oracles.

pub mod dataset;
pub mod env;
pub mod io;
pub mod oracle;

pub use dataset::{
    check_sub_bounds, generate_dataset, grid_domains, grid_domains_within, off_grid_domains, off_grid_domains_within, Dataset,
    Trajectory,
};
pub use env::{DomainSpec, EnvId, EnvState};
pub use oracle::{balldrop_oracle_mse, fit_g_from_context, Lag};
