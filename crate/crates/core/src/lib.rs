pub mod bounds;
pub mod channel;
pub mod equalizer;
pub mod error;
pub mod highsnr;
pub mod mixture;
pub mod quad;
pub mod rate_sim;
pub mod scalar;
pub mod special;

pub use channel::{spectral_summary, ChannelResponse, SpectralSummary};
pub use error::{Error, Result};
pub use scalar::InputDistribution;
