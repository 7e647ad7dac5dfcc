//! Martingale approximations for stationary processes and the machinery
//! around the law of the iterated logarithm for them.
//!
//! The crate is organised the way the argument is:
//!
//! * [`slowly_varying`]: admissible normalizers ℓ and ℓ*(n).
//! * [`coefficients`]: the renewal pair (βₖ, αₙ), their tails and the
//!   boundary functions b(t) = B(e^{it}), a(t) = 1/(1 − b(t)).
//! * [`processes`]: stationary models X_k = g(W_k), their transfer
//!   operator Q and exact conditional expectations E(Sₙ | F₀).
//! * [`martingale`]: the resolvent h_ε, pathwise decompositions
//!   Sₙ = Mₙ(ε) + Rₙ(ε) and two estimators of σ².
//! * [`conditions`]: summability checks that feed the theorems.
//! * [`experiments`]: seeded, replication-parallel Monte Carlo for LIL,
//!   functional LIL, conditional CLT and remainder growth.
//!
//! See the guide in `book/` for the mathematics behind each module.

pub mod coefficients;
pub mod conditions;
mod error;
pub mod experiments;
pub mod martingale;
pub mod numeric;
pub mod processes;
pub mod rng;
pub mod slowly_varying;

pub use error::{Error, Result};
pub use slowly_varying::SlowlyVaryingSpec;

/// Guide chapters compiled as doc-tests so their snippets stay in sync.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/slowly_varying.md")]
    pub struct SlowlyVarying;
    #[doc = include_str!("../../../book/src/coefficients.md")]
    pub struct Coefficients;
    #[doc = include_str!("../../../book/src/processes.md")]
    pub struct Processes;
    #[doc = include_str!("../../../book/src/martingale.md")]
    pub struct Martingale;
    #[doc = include_str!("../../../book/src/conditions.md")]
    pub struct Conditions;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}
