//! Partial ranking from pairwise comparisons with abstentions.
//!
//! A margin `λ` and item scores `s` are fitted jointly by maximum likelihood:
//! a rater prefers `i` over `j` when `s_i − s_j + ε > λ`, prefers `j` when it
//! is below `−λ`, and abstains otherwise. The fitted margin then cuts the
//! scores into a partial order, `i ≻ j` iff `s_i − s_j > λ`, with
//! Fisher-information bounds on the margin that control the false discovery
//! rate and power of the declared-incomparable pairs.

pub mod cli;
pub mod comparisons;
pub mod evaluate;
pub mod inference;
pub mod links;
pub mod mle;
pub mod partial_order;
pub mod simulate;

pub use comparisons::{ComparisonDataset, Comparison, ItemId, Label};
pub use links::LinkModel;
pub use mle::{fit, FitResult, SolverConfig, Theta};
