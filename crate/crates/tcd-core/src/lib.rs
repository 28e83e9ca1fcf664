//! Temporal contrastive decoding for unified audio-language models.
//!
//! At each decoding step the engine contrasts next-token logits computed from
//! the original audio against logits from a temporally blurred "slow path"
//! view of the same audio. Tokens whose evidence survives blurring are
//! language-prior guesses; tokens whose evidence collapses under blurring are
//! transient acoustic cues, and a gated, sparse logit update boosts exactly
//! those. Blur strength and update scale adapt per example from the stability
//! of the encoder's state trajectories.
//!
//! Modules:
//! - [`signal`]: waveform/state blurring, noise reference, synthetic event audio
//! - [`model`]: the abstract model interface plus toy and scripted backends
//! - [`stability`]: layer statistics and the window/scale mapping
//! - [`fusion`]: the per-step gated contrastive logit update
//! - [`engine`]: dual-branch sessions, generation, profiling
//! - [`config`], [`trace`], [`wav`], [`vocab`]: plumbing around the above

pub mod config;
pub mod engine;
pub mod error;
pub mod fusion;
pub mod model;
pub mod signal;
pub mod stability;
pub mod trace;
pub mod vocab;
pub mod wav;

pub use config::{DecodeConfig, SlowPath, Strategy};
pub use engine::{generate, profile, start_session, Session, Transcript};
pub use error::{Result, TcdError};
