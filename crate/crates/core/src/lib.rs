//! Asynchronous stochastic primal-dual methods for resource allocation with
//! coupled constraints.
//!
//! Modules, bottom up:
//!
//! * [`model`]: instance, regularized Lagrangian, gradients, projections, constants.
//! * [`oracle`]: seeded sample streams and stochastic, stale gradients.
//! * [`engine`]: discrete-event timeline of workers, uploads and broadcasts.
//! * [`solvers`]: APD and the synchronous baseline, step-size rules and checks.
//! * [`analysis`]: saddle oracle, error metric, convergence bound, series lemma.
//! * [`bench`]: experiment configs, seeded repetitions, CSV artifacts.
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! ```text
//! cargo run --example saddle_oracle
//! cargo run --example apd_run
//! cargo run --example sync_vs_async
//! cargo run --example schedule_validation
//! cargo run --example theory_bound
//! cargo run --example experiment_csv
//! cargo run --example aux_lemma
//! ```

pub mod analysis;
pub mod bench;
pub mod engine;
pub mod model;
pub mod oracle;
pub mod solvers;
