//! Oblivious Diffie-Hellman key exchange.
//!
//! Both parties share a prime `p`, a base `g` and a value `c` with `a`
//! distinct `a`-th roots modulo `p`. Each party sends `g^(root + N)` for a
//! root of its choice and a private `N`, then strips a *guessed* root from
//! the peer's message: `(peer / g^guess)^N`. Keys agree when both guesses
//! are right, i.e. with probability `1 / a^2`, and the transcript does not
//! reveal which case occurred.

use std::fmt::Write as _;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cubic_cipher::{is_odd_prime, unity_root, CipherError};
use crate::numtheory::{is_probable_prime, mod_inv, mod_pow, sqrt_mod, NumError, DEFAULT_MR_ROUNDS};
use crate::stats::{trial_seed, TrialStats};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OkxError {
    #[error("exponent {0} must be 2 or an odd prime")]
    BadExponent(u32),
    #[error("prime {p} is not usable with exponent {a}: {reason}")]
    BadPrimeClass { p: BigUint, a: u32, reason: String },
    #[error("base {0} must lie in (1, p) with multiplicative order above 2")]
    BadBase(BigUint),
    #[error("{0} has no full set of roots modulo p")]
    NoRoots(BigUint),
    #[error("invalid local choice: {0}")]
    InvalidLocal(String),
    #[error("peer message {0} outside (0, p)")]
    BadPeerMessage(BigUint),
    #[error("at least one trial is required")]
    NoTrials,
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Parameters both parties agree on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OkxParams {
    p: BigUint,
    g: BigUint,
    c: BigUint,
    a: u32,
    roots: Vec<BigUint>,
}

impl OkxParams {
    /// Validates `(p, g, c, a)` and enumerates the roots of `c`.
    pub fn new(p: BigUint, g: BigUint, c: BigUint, a: u32) -> Result<Self, OkxError> {
        check_prime_class(&p, a)?;
        if g <= BigUint::one() || g >= p || (&g * &g % &p).is_one() {
            return Err(OkxError::BadBase(g));
        }
        if c.is_zero() || c >= p {
            return Err(OkxError::NoRoots(c));
        }
        let roots = enumerate_roots(&p, &c, a)?;
        Ok(Self { p, g, c, a, roots })
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn c(&self) -> &BigUint {
        &self.c
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    /// The `a` roots of `c`, ascending.
    pub fn roots(&self) -> &[BigUint] {
        &self.roots
    }
}

fn check_prime_class(p: &BigUint, a: u32) -> Result<(), OkxError> {
    let bad = |reason: &str| OkxError::BadPrimeClass {
        p: p.clone(),
        a,
        reason: reason.to_string(),
    };
    if a != 2 && !is_odd_prime(a) {
        return Err(OkxError::BadExponent(a));
    }
    if !is_probable_prime(p, DEFAULT_MR_ROUNDS) {
        return Err(bad("not prime"));
    }
    if a == 2 {
        if p % 4u8 != BigUint::from(3u8) {
            return Err(bad("p must be 3 mod 4"));
        }
    } else {
        let a_big = BigUint::from(a);
        if !(p % &a_big).is_one() {
            return Err(bad("p must be 1 mod a"));
        }
        if (p % (&a_big * &a_big)).is_one() {
            return Err(bad("p must not be 1 mod a^2"));
        }
    }
    Ok(())
}

fn enumerate_roots(p: &BigUint, c: &BigUint, a: u32) -> Result<Vec<BigUint>, OkxError> {
    let mut roots = if a == 2 {
        let r = sqrt_mod(c, p).map_err(|_| OkxError::NoRoots(c.clone()))?;
        vec![p - &r, r]
    } else {
        let a_big = BigUint::from(a);
        let e = mod_inv(&a_big, &((p - 1u8) / &a_big))?;
        let r = mod_pow(c, &e, p);
        if mod_pow(&r, &a_big, p) != *c {
            return Err(OkxError::NoRoots(c.clone()));
        }
        let omega = unity_root(p, a)?;
        let mut roots = Vec::with_capacity(a as usize);
        let mut current = r;
        for _ in 0..a {
            roots.push(current.clone());
            current = current * &omega % p;
        }
        roots
    };
    roots.sort();
    Ok(roots)
}

/// Draws `c = r^a` for a random `r` and builds the parameter set.
pub fn okx_setup(p: BigUint, g: BigUint, a: u32, seed: u64) -> Result<OkxParams, OkxError> {
    check_prime_class(&p, a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.gen_biguint_range(&BigUint::one(), &p);
    let c = mod_pow(&r, &BigUint::from(a), &p);
    OkxParams::new(p, g, c, a)
}

/// One party's private choices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OkxLocal {
    /// The blinding exponent `N`, in `[1, p - 2]`.
    pub secret: BigUint,
    /// Which root this party adds to its own exponent.
    pub own_root_index: usize,
    /// Which root this party assumes the peer added.
    pub guess_index: usize,
}

impl OkxLocal {
    pub fn new(secret: impl Into<BigUint>, own_root_index: usize, guess_index: usize) -> Self {
        Self {
            secret: secret.into(),
            own_root_index,
            guess_index,
        }
    }

    /// Uniform secret in `[1, p - 2]`, independent uniform root and guess.
    pub fn random<R: Rng + ?Sized>(params: &OkxParams, rng: &mut R) -> Self {
        let secret = rng.gen_biguint_range(&BigUint::one(), &(&params.p - 1u8));
        let a = params.a as usize;
        Self {
            secret,
            own_root_index: rng.gen_range(0..a),
            guess_index: rng.gen_range(0..a),
        }
    }

    fn validate(&self, params: &OkxParams) -> Result<(), OkxError> {
        let a = params.a as usize;
        if self.own_root_index >= a || self.guess_index >= a {
            return Err(OkxError::InvalidLocal(format!(
                "root indices must be below {a}"
            )));
        }
        if self.secret.is_zero() || self.secret >= &params.p - 1u8 {
            return Err(OkxError::InvalidLocal(format!(
                "secret {} outside [1, p - 2]",
                self.secret
            )));
        }
        Ok(())
    }
}

/// A derived session key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OkxKey(pub BigUint);

/// `g^(root + N) mod p`.
pub fn okx_message(params: &OkxParams, local: &OkxLocal) -> Result<BigUint, OkxError> {
    local.validate(params)?;
    let exp = &params.roots[local.own_root_index] + &local.secret;
    Ok(mod_pow(&params.g, &exp, &params.p))
}

/// `(peer_msg / g^guess)^N mod p`.
pub fn okx_key(
    params: &OkxParams,
    local: &OkxLocal,
    peer_msg: &BigUint,
) -> Result<OkxKey, OkxError> {
    local.validate(params)?;
    if peer_msg.is_zero() || peer_msg >= &params.p {
        return Err(OkxError::BadPeerMessage(peer_msg.clone()));
    }
    let stripped = mod_pow(&params.g, &params.roots[local.guess_index], &params.p);
    let base = peer_msg * mod_inv(&stripped, &params.p)? % &params.p;
    Ok(OkxKey(mod_pow(&base, &local.secret, &params.p)))
}

/// Both directions of one exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OkxSession {
    pub alice_msg: BigUint,
    pub bob_msg: BigUint,
    pub alice_key: OkxKey,
    pub bob_key: OkxKey,
    pub agreed: bool,
}

impl OkxSession {
    /// Decimal transcript, one event per line.
    pub fn transcript(&self, params: &OkxParams) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "params p={} g={} c={} a={}",
            params.p, params.g, params.c, params.a
        );
        let _ = writeln!(out, "A->B {}", self.alice_msg);
        let _ = writeln!(out, "B->A {}", self.bob_msg);
        let _ = writeln!(out, "A key {}", self.alice_key.0);
        let _ = writeln!(out, "B key {}", self.bob_key.0);
        let _ = writeln!(out, "agreed {}", u8::from(self.agreed));
        out
    }
}

pub fn okx_session(
    params: &OkxParams,
    alice: &OkxLocal,
    bob: &OkxLocal,
) -> Result<OkxSession, OkxError> {
    let alice_msg = okx_message(params, alice)?;
    let bob_msg = okx_message(params, bob)?;
    let alice_key = okx_key(params, alice, &bob_msg)?;
    let bob_key = okx_key(params, bob, &alice_msg)?;
    let agreed = alice_key == bob_key;
    Ok(OkxSession {
        alice_msg,
        bob_msg,
        alice_key,
        bob_key,
        agreed,
    })
}

/// Fraction of sessions with equal keys, all choices uniform. Trial `i`
/// draws from `trial_seed(seed, i)`.
pub fn okx_agreement_rate(
    params: &OkxParams,
    trials: u64,
    seed: u64,
) -> Result<TrialStats, OkxError> {
    if trials == 0 {
        return Err(OkxError::NoTrials);
    }
    let successes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i));
            let alice = OkxLocal::random(params, &mut rng);
            let bob = OkxLocal::random(params, &mut rng);
            okx_session(params, &alice, &bob).map(|s| u64::from(s.agreed))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(TrialStats { trials, successes })
}
