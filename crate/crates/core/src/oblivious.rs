//! Asymmetric oblivious transfer from the `a`-to-one power map.
//!
//! The sender picks `x`, publishes `x^a mod n`, and the key owner answers
//! with one of the `a` roots chosen uniformly. Any answer other than `x`
//! hands the sender a factor of `n` through `gcd(x - root, n)`, so transfer
//! succeeds with probability `(a - 1) / a`.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cubic_cipher::{all_roots, encrypt, extract_root, CipherError, CubicPrivateKey, Mode};
use crate::stats::{trial_seed, TrialStats};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OtError {
    #[error("gcd of the root difference with n is trivial")]
    TrivialGcd,
    #[error("oblivious transfer needs a composite-mode key")]
    NotComposite,
    #[error("at least one trial is required")]
    NoTrials,
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

/// Result of one transfer round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtOutcome {
    /// `Some` exactly when the two roots differ.
    pub revealed_factor: Option<BigUint>,
    pub receiver_root: BigUint,
    pub sender_root: BigUint,
}

/// `gcd(x - x1, n)` for two distinct roots of the same ciphertext.
pub fn factor_from_roots(x: &BigUint, x1: &BigUint, n: &BigUint) -> Result<BigUint, OtError> {
    let diff = (x % n + n - x1 % n) % n;
    let g = diff.gcd(n);
    if g.is_one() || &g == n {
        return Err(OtError::TrivialGcd);
    }
    Ok(g)
}

/// One round: the key owner extracts all roots of `sender_root^a` and
/// returns one of them, drawn uniformly from `seed`.
pub fn ot_round(
    key: &CubicPrivateKey,
    sender_root: &BigUint,
    seed: u64,
) -> Result<OtOutcome, OtError> {
    if key.mode() != Mode::Composite {
        return Err(OtError::NotComposite);
    }
    let public = key.public();
    let c = encrypt(sender_root, public)?;
    let one = extract_root(&c, key)?;
    let roots = all_roots(&c, public, &one)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let receiver_root = roots[rng.gen_range(0..roots.len())].clone();
    let revealed_factor = if receiver_root == *sender_root {
        None
    } else {
        Some(factor_from_roots(sender_root, &receiver_root, public.n())?)
    };
    Ok(OtOutcome {
        revealed_factor,
        receiver_root,
        sender_root: sender_root.clone(),
    })
}

/// Empirical probability that a round reveals a factor. Trial `i` draws its
/// plaintext and the receiver's choice from `trial_seed(seed, i)`.
pub fn ot_success_rate(
    key: &CubicPrivateKey,
    trials: u64,
    seed: u64,
) -> Result<TrialStats, OtError> {
    if trials == 0 {
        return Err(OtError::NoTrials);
    }
    if key.mode() != Mode::Composite {
        return Err(OtError::NotComposite);
    }
    let n = key.public().n();
    let successes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i));
            let m = loop {
                let m = rng.gen_biguint_range(&BigUint::one(), n);
                if m.gcd(n).is_one() {
                    break m;
                }
            };
            ot_round(key, &m, rng.next_u64()).map(|o| u64::from(o.revealed_factor.is_some()))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(TrialStats { trials, successes })
}
