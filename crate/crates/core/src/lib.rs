//! Cubic public-key transformation with rank framing, the asymmetric
//! oblivious transfer it induces, and an oblivious Diffie-Hellman key
//! exchange.

pub mod cli;
pub mod cubic_cipher;
pub mod dh_okx;
pub mod numtheory;
pub mod oblivious;
pub mod rank_coding;
pub mod stats;
pub mod wire;

pub use cubic_cipher::{CubicPrivateKey, CubicPublicKey, Mode, RankedCiphertext};
pub use dh_okx::{OkxKey, OkxLocal, OkxParams};
pub use stats::TrialStats;
