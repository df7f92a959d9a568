//! File formats, token-to-TR alignment, FIR delay expansion and the
//! synthetic ground-truth generator.

pub mod align;
mod bold;
pub mod fir;
pub mod hfm;
pub mod synth;

pub use align::{align_tokens_to_tr, AlignedFeatures, TokenTimeline, DEFAULT_TR_SECONDS};
pub use bold::BoldMatrix;
pub use fir::{default_lags, fir_expand};
pub use hfm::{load_matrix, store_matrix};
pub use synth::{synth_generate, token_stream, PlantedHierarchy, SynthOutput, SynthSpec};
