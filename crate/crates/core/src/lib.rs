//! Collective Lie-Poisson dynamics on centrally extended phase spaces, double
//! Lie groups, and dual phase-space trajectories generated by one group curve.
//!
//! Modules, bottom up:
//! - [`liecore`]: structure-constant algebra, coadjoints, doubles.
//! - [`groups`]: matrix groups, exponential, Iwasawa factorization, dressing.
//! - [`extension`]: cocycles, extended coadjoint action, Lie-Poisson brackets.
//! - [`hamspaces`]: `T*N`, `T*N*` and the chiral space with momentum maps.
//! - [`dynamics`]: flows, group-curve reconstruction, duality runs, sigma blocks.
//! - [`loopx`]: truncated Fourier loops, loop cocycle, monodromy, chiral flow.
//! - [`cli`]: scenario runner and check suite.

pub mod cli;
pub mod dynamics;
pub mod extension;
pub mod groups;
pub mod hamspaces;
pub mod liecore;
pub mod loopx;
