//! Runs the code listings of the guide in `book/` as doctests, one module
//! per chapter so a failure points at its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/channel-model.md")]
pub mod channel_model {}
#[doc = include_str!("../../../book/src/objective.md")]
pub mod objective {}
#[doc = include_str!("../../../book/src/equalizer-relay.md")]
pub mod equalizer_relay {}
#[doc = include_str!("../../../book/src/precoder.md")]
pub mod precoder {}
#[doc = include_str!("../../../book/src/alternating.md")]
pub mod alternating {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/validation.md")]
pub mod validation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
