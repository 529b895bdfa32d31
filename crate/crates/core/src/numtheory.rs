//! Arbitrary-precision modular arithmetic and constrained prime generation.
//!
//! Every function here is pure: randomness only enters through explicit
//! seeds, so results reproduce across runs and threads.

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default number of Miller-Rabin rounds used by prime generation.
pub const DEFAULT_MR_ROUNDS: u32 = 40;

/// Errors raised by the number-theory primitives.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumError {
    #[error("{value} is not invertible modulo {modulus} (gcd = {gcd})")]
    NotInvertible {
        value: BigUint,
        modulus: BigUint,
        gcd: BigUint,
    },
    #[error("{value} is a quadratic non-residue modulo {modulus}")]
    NonResidue { value: BigUint, modulus: BigUint },
    #[error("square root by exponentiation needs a prime modulus = 3 mod 4, got {0}")]
    UnsupportedModulus(BigUint),
    #[error("moduli {0} and {1} are not coprime")]
    NotCoprime(BigUint, BigUint),
    #[error("prime search exhausted after {candidates} candidates")]
    SearchExhausted { candidates: u64 },
    #[error("invalid prime spec: {0}")]
    InvalidSpec(String),
}

const fn sieve_small_primes() -> [u16; 168] {
    let mut composite = [false; 1000];
    let mut out = [0u16; 168];
    let mut count = 0;
    let mut i = 2;
    while i < 1000 {
        if !composite[i] {
            out[count] = i as u16;
            count += 1;
            let mut j = i * i;
            while j < 1000 {
                composite[j] = true;
                j += i;
            }
        }
        i += 1;
    }
    out
}

/// All primes below 1000.
pub const SMALL_PRIMES: [u16; 168] = sieve_small_primes();

/// `base^exp mod modulus`. The modulus must be at least 2.
pub fn mod_pow(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> BigUint {
    debug_assert!(*modulus >= BigUint::from(2u8));
    base.modpow(exp, modulus)
}

/// Multiplicative inverse of `a` modulo `modulus`.
pub fn mod_inv(a: &BigUint, modulus: &BigUint) -> Result<BigUint, NumError> {
    let m = BigInt::from_biguint(Sign::Plus, modulus.clone());
    let x = BigInt::from_biguint(Sign::Plus, a % modulus);
    let egcd = x.extended_gcd(&m);
    if !egcd.gcd.is_one() {
        return Err(NumError::NotInvertible {
            value: a.clone(),
            modulus: modulus.clone(),
            gcd: egcd.gcd.magnitude().clone(),
        });
    }
    Ok(egcd.x.mod_floor(&m).magnitude().clone())
}

/// Square root modulo a prime `p = 3 (mod 4)` computed as `a^((p+1)/4)`.
///
/// The candidate is squared again before returning; a mismatch means `a` is a
/// non-residue.
pub fn sqrt_mod(a: &BigUint, p: &BigUint) -> Result<BigUint, NumError> {
    if p % 4u8 != BigUint::from(3u8) {
        return Err(NumError::UnsupportedModulus(p.clone()));
    }
    let a = a % p;
    let exp = (p + 1u8) >> 2;
    let r = mod_pow(&a, &exp, p);
    if (&r * &r) % p != a {
        return Err(NumError::NonResidue {
            value: a,
            modulus: p.clone(),
        });
    }
    Ok(r)
}

/// Miller-Rabin probable-prime test.
///
/// Values below 1000 are answered from [`SMALL_PRIMES`]. Witnesses are drawn
/// from a generator seeded by `n` itself, so the answer for a given input
/// never changes between calls.
pub fn is_probable_prime(n: &BigUint, rounds: u32) -> bool {
    if let Some(small) = n.to_u64().filter(|&v| v < 1000) {
        return SMALL_PRIMES.binary_search(&(small as u16)).is_ok();
    }
    for &sp in SMALL_PRIMES.iter() {
        if (n % sp).is_zero() {
            return false;
        }
    }

    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;

    let seed = n.iter_u64_digits().fold(0x6d69_6c6c_6572u64, |acc, w| {
        acc.rotate_left(17) ^ w.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let low = BigUint::from(2u8);
    let high = &n_minus_1; // exclusive, so witnesses lie in [2, n-2]

    'witness: for _ in 0..rounds.max(1) {
        let w = rng.gen_biguint_range(&low, high);
        let mut x = mod_pow(&w, &d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Chinese remaindering of two congruences with coprime moduli.
pub fn crt_pair(
    r1: &BigUint,
    m1: &BigUint,
    r2: &BigUint,
    m2: &BigUint,
) -> Result<BigUint, NumError> {
    let inv = mod_inv(m1, m2).map_err(|_| NumError::NotCoprime(m1.clone(), m2.clone()))?;
    let r1 = r1 % m1;
    let r2 = r2 % m2;
    // x = r1 + m1 * ((r2 - r1) * m1^-1 mod m2)
    let diff = (&r2 + m2 - (&r1 % m2)) % m2;
    let t = (diff * inv) % m2;
    Ok(r1 + m1 * t)
}

/// Sum of the base-10 digits of `n`.
pub fn digit_sum(n: &BigUint) -> u64 {
    n.to_str_radix(10)
        .bytes()
        .map(|b| u64::from(b - b'0'))
        .sum()
}

/// Constraints for [`gen_prime`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeSpec {
    pub bit_length: u64,
    /// `(modulus, residue)` pairs; all must hold simultaneously.
    pub congruences: Vec<(BigUint, BigUint)>,
    pub mr_rounds: u32,
}

impl PrimeSpec {
    pub fn new(bit_length: u64) -> Self {
        Self {
            bit_length,
            congruences: Vec::new(),
            mr_rounds: DEFAULT_MR_ROUNDS,
        }
    }

    pub fn congruent(mut self, residue: u64, modulus: u64) -> Self {
        self.congruences
            .push((BigUint::from(modulus), BigUint::from(residue)));
        self
    }

    /// Folds the congruences into a single class `residue mod modulus`.
    fn combined_class(&self) -> Result<(BigUint, BigUint), NumError> {
        let mut residue = BigUint::zero();
        let mut modulus = BigUint::one();
        for (m, r) in &self.congruences {
            if m.is_zero() {
                return Err(NumError::InvalidSpec("zero modulus".into()));
            }
            if r >= m {
                return Err(NumError::InvalidSpec(format!(
                    "residue {r} not reduced modulo {m}"
                )));
            }
            if !modulus.gcd(m).is_one() {
                return Err(NumError::InvalidSpec(format!(
                    "modulus {m} shares a factor with the other moduli"
                )));
            }
            residue = crt_pair(&residue, &modulus, r, m)?;
            modulus *= m;
        }
        Ok((residue, modulus))
    }

    /// Number of candidates examined before giving up.
    pub fn search_bound(&self) -> u64 {
        64 * self.bit_length
    }
}

/// Finds a probable prime of exactly `spec.bit_length` bits satisfying every
/// congruence in `spec`.
///
/// A random member of the congruence class is chosen from the seed and the
/// search walks the class upwards in steps of the combined modulus, wrapping
/// around inside the bit-length window.
pub fn gen_prime(spec: &PrimeSpec, seed: u64) -> Result<BigUint, NumError> {
    if spec.bit_length < 8 {
        return Err(NumError::InvalidSpec(format!(
            "bit length {} below 8",
            spec.bit_length
        )));
    }
    if spec.mr_rounds == 0 {
        return Err(NumError::InvalidSpec("zero Miller-Rabin rounds".into()));
    }
    let (mut residue, mut modulus) = spec.combined_class()?;
    if modulus.is_even() {
        if residue.is_even() {
            return Err(NumError::SearchExhausted { candidates: 0 });
        }
    } else {
        residue = crt_pair(&residue, &modulus, &BigUint::one(), &BigUint::from(2u8))?;
        modulus <<= 1;
    }

    let low = BigUint::one() << (spec.bit_length - 1);
    let high = BigUint::one() << spec.bit_length;
    let offset = (&residue + &modulus - (&low % &modulus)) % &modulus;
    let first = &low + offset;
    if first >= high {
        return Err(NumError::SearchExhausted { candidates: 0 });
    }
    let members = (&high - &first - 1u8) / &modulus + 1u8;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_biguint_below(&members);
    let bound = spec.search_bound();
    let budget = members.to_u64().map_or(bound, |m| m.min(bound));

    let mut index = start;
    for _ in 0..budget {
        let candidate = &first + &index * &modulus;
        if is_probable_prime(&candidate, spec.mr_rounds) {
            return Ok(candidate);
        }
        index += 1u8;
        if index == members {
            index = BigUint::zero();
        }
    }
    Err(NumError::SearchExhausted { candidates: budget })
}
