//! The cubic public-key transformation `m -> m^a mod n`, generalized to odd
//! prime exponents `a`.
//!
//! The map is `a`-to-one on the unit group because exactly one prime factor
//! `p` of `n` satisfies `p = 1 (mod a)`, and `a^2` does not divide `phi(n)`.
//! A sender attaches the rank of the plaintext among its `a` siblings so the
//! key owner can pick the right root after extraction.

mod keyfile;

pub use keyfile::{parse_key_file, KeyFileError, KeyMaterial, KEY_FILE_VERSION};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numtheory::{
    self, crt_pair, gen_prime, is_probable_prime, mod_inv, mod_pow, sqrt_mod, NumError, PrimeSpec,
    DEFAULT_MR_ROUNDS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CipherError {
    #[error("exponent {0} is not an odd prime")]
    BadExponent(u32),
    #[error("prime {p} is not in the required class for exponent {a}: {reason}")]
    BadPrimeClass { p: BigUint, a: u32, reason: String },
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("value {value} outside [1, {modulus})")]
    OutOfRange { value: BigUint, modulus: BigUint },
    #[error("plaintext {0} shares a factor with the modulus")]
    NotCoprime(BigUint),
    #[error("{0} has no root of the expected form under this key")]
    RootCheckFailed(BigUint),
    #[error("root set of {0} contains repeated values")]
    DegenerateRoots(BigUint),
    #[error("rank {rank} outside [1, {a}]")]
    BadRank { rank: u32, a: u32 },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Whether the modulus is a single prime or a product of two primes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Prime,
    Composite,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Prime => "prime",
            Mode::Composite => "composite",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prime" => Ok(Mode::Prime),
            "composite" => Ok(Mode::Composite),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub(crate) fn is_odd_prime(a: u32) -> bool {
    a >= 3 && is_probable_prime(&BigUint::from(a), 8)
}

/// Public half of a key: the modulus, the published root of unity and the
/// exponent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubicPublicKey {
    n: BigUint,
    alpha: BigUint,
    a: u32,
}

impl CubicPublicKey {
    /// Validates `alpha^a = 1 (mod n)` with `alpha != 1`.
    pub fn new(n: BigUint, alpha: BigUint, a: u32) -> Result<Self, CipherError> {
        if !is_odd_prime(a) {
            return Err(CipherError::BadExponent(a));
        }
        if n < BigUint::from(7u8) {
            return Err(CipherError::InvalidKey(format!("modulus {n} too small")));
        }
        if alpha <= BigUint::one() || alpha >= n {
            return Err(CipherError::InvalidKey(format!(
                "alpha {alpha} outside (1, {n})"
            )));
        }
        if !mod_pow(&alpha, &BigUint::from(a), &n).is_one() {
            return Err(CipherError::InvalidKey(format!(
                "alpha {alpha} is not a root of unity of order {a}"
            )));
        }
        Ok(Self { n, alpha, a })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn alpha(&self) -> &BigUint {
        &self.alpha
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    /// Recovered from public data alone: in composite mode `alpha = 1 (mod q)`,
    /// so `gcd(alpha - 1, n)` is a proper factor.
    pub fn mode(&self) -> Mode {
        if (&self.alpha - 1u8).gcd(&self.n).is_one() {
            Mode::Prime
        } else {
            Mode::Composite
        }
    }

    fn exponent(&self) -> BigUint {
        BigUint::from(self.a)
    }
}

/// Full key, including the factorization and the root-extraction exponent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubicPrivateKey {
    public: CubicPublicKey,
    p: BigUint,
    q: Option<BigUint>,
    phi: BigUint,
    e: BigUint,
}

impl CubicPrivateKey {
    /// Builds a key from explicit primes, checking every class constraint.
    ///
    /// `p` must satisfy `p = 3 (mod 4)`, `p = 1 (mod a)`, `p != 1 (mod a^2)`;
    /// `q`, when present, must satisfy `q != 1 (mod a)`.
    pub fn from_primes(p: BigUint, q: Option<BigUint>, a: u32) -> Result<Self, CipherError> {
        if !is_odd_prime(a) {
            return Err(CipherError::BadExponent(a));
        }
        let a_big = BigUint::from(a);
        let bad = |p: &BigUint, reason: &str| CipherError::BadPrimeClass {
            p: p.clone(),
            a,
            reason: reason.to_string(),
        };
        if !is_probable_prime(&p, DEFAULT_MR_ROUNDS) {
            return Err(bad(&p, "not prime"));
        }
        if &p % 4u8 != BigUint::from(3u8) {
            return Err(bad(&p, "p must be 3 mod 4"));
        }
        if !(&p % &a_big).is_one() {
            return Err(bad(&p, "p must be 1 mod a"));
        }
        if (&p % (&a_big * &a_big)).is_one() {
            return Err(bad(&p, "p must not be 1 mod a^2"));
        }
        if let Some(q) = &q {
            if !is_probable_prime(q, DEFAULT_MR_ROUNDS) {
                return Err(bad(q, "not prime"));
            }
            if *q == p {
                return Err(bad(q, "q must differ from p"));
            }
            if (q % &a_big).is_one() {
                return Err(bad(q, "q must not be 1 mod a"));
            }
        }

        let phi = match &q {
            Some(q) => (&p - 1u8) * (q - 1u8),
            None => &p - 1u8,
        };
        let e = mod_inv(&a_big, &(&phi / &a_big))?;
        let alpha_p = unity_root(&p, a)?;
        let (n, alpha) = match &q {
            Some(q) => (&p * q, crt_pair(&alpha_p, &p, &BigUint::one(), q)?),
            None => (p.clone(), alpha_p),
        };
        Ok(Self {
            public: CubicPublicKey::new(n, alpha, a)?,
            p,
            q,
            phi,
            e,
        })
    }

    pub fn public(&self) -> &CubicPublicKey {
        &self.public
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> Option<&BigUint> {
        self.q.as_ref()
    }

    pub fn phi(&self) -> &BigUint {
        &self.phi
    }

    /// Root-extraction exponent, `a^-1 mod (phi / a)`.
    pub fn e(&self) -> &BigUint {
        &self.e
    }

    pub fn mode(&self) -> Mode {
        if self.q.is_some() {
            Mode::Composite
        } else {
            Mode::Prime
        }
    }
}

/// Generates a key with primes of `bits_per_prime` bits each.
pub fn keygen(
    bits_per_prime: u64,
    mode: Mode,
    a: u32,
    seed: u64,
) -> Result<CubicPrivateKey, CipherError> {
    if !is_odd_prime(a) {
        return Err(CipherError::BadExponent(a));
    }
    if bits_per_prime < 8 {
        return Err(NumError::InvalidSpec(format!("bit length {bits_per_prime} below 8")).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a64 = u64::from(a);

    // p = 1 + a*j (mod a^2) for some j in 1..a, together with p = 3 (mod 4).
    let mut classes: Vec<u64> = (1..a64).map(|j| 1 + a64 * j).collect();
    classes.shuffle(&mut rng);
    let p_seed = rng.next_u64();
    let mut p = None;
    let mut last_err = NumError::SearchExhausted { candidates: 0 };
    for class in classes {
        let spec = PrimeSpec::new(bits_per_prime)
            .congruent(3, 4)
            .congruent(class, a64 * a64);
        match gen_prime(&spec, p_seed) {
            Ok(found) => {
                p = Some(found);
                break;
            }
            Err(err) => last_err = err,
        }
    }
    let p = p.ok_or(last_err)?;

    let q = match mode {
        Mode::Prime => None,
        Mode::Composite => {
            let mut classes: Vec<u64> = (2..a64).collect();
            classes.shuffle(&mut rng);
            let q_seed = rng.next_u64();
            let mut q = None;
            let mut last_err = NumError::SearchExhausted { candidates: 0 };
            for class in classes {
                let spec = PrimeSpec::new(bits_per_prime).congruent(class, a64);
                match gen_prime(&spec, q_seed) {
                    Ok(found) => {
                        q = Some(found);
                        break;
                    }
                    Err(err) => last_err = err,
                }
            }
            Some(q.ok_or(last_err)?)
        }
    };
    CubicPrivateKey::from_primes(p, q, a)
}

/// A primitive `a`-th root of unity modulo the prime `p`.
///
/// For `a = 3` and `p = 3 (mod 4)` this uses the closed form
/// `(-1 +/- sqrt(-3)) / 2` and returns the smaller of the two candidates.
/// Otherwise it returns the first `h^((p-1)/a) != 1` for `h = 2, 3, ...`.
pub fn unity_root(p: &BigUint, a: u32) -> Result<BigUint, CipherError> {
    let a_big = BigUint::from(a);
    if p <= &a_big || !(p % &a_big).is_one() {
        return Err(CipherError::BadPrimeClass {
            p: p.clone(),
            a,
            reason: "p must be 1 mod a".into(),
        });
    }
    if a == 3 && p % 4u8 == BigUint::from(3u8) {
        let s = sqrt_mod(&(p - 3u8), p)?;
        let half = mod_inv(&BigUint::from(2u8), p)?;
        let first = ((&s + p - 1u8) * &half) % p;
        let second = ((p - 1u8 + p - &s) * &half) % p;
        return Ok(first.min(second));
    }
    let cofactor = (p - 1u8) / &a_big;
    let mut h = BigUint::from(2u8);
    while &h < p {
        let omega = mod_pow(&h, &cofactor, p);
        if !omega.is_one() {
            return Ok(omega);
        }
        h += 1u8;
    }
    Err(CipherError::BadPrimeClass {
        p: p.clone(),
        a,
        reason: "no root of unity found".into(),
    })
}

/// `m^a mod n` for a plaintext `1 <= m < n` coprime to `n`.
pub fn encrypt(m: &BigUint, key: &CubicPublicKey) -> Result<BigUint, CipherError> {
    if m.is_zero() || m >= &key.n {
        return Err(CipherError::OutOfRange {
            value: m.clone(),
            modulus: key.n.clone(),
        });
    }
    if !m.gcd(&key.n).is_one() {
        return Err(CipherError::NotCoprime(m.clone()));
    }
    Ok(mod_pow(m, &key.exponent(), &key.n))
}

/// One `a`-th root of `c`, computed as `c^e mod n`.
pub fn extract_root(c: &BigUint, key: &CubicPrivateKey) -> Result<BigUint, CipherError> {
    let n = &key.public.n;
    if c >= n {
        return Err(CipherError::OutOfRange {
            value: c.clone(),
            modulus: n.clone(),
        });
    }
    let root = mod_pow(c, &key.e, n);
    if mod_pow(&root, &key.public.exponent(), n) != *c {
        return Err(CipherError::RootCheckFailed(c.clone()));
    }
    Ok(root)
}

/// Every `a`-th root of `c`, obtained by multiplying `one_root` by powers of
/// alpha. Sorted ascending.
pub fn all_roots(
    c: &BigUint,
    key: &CubicPublicKey,
    one_root: &BigUint,
) -> Result<Vec<BigUint>, CipherError> {
    let n = &key.n;
    if mod_pow(one_root, &key.exponent(), n) != c % n {
        return Err(CipherError::RootCheckFailed(c.clone()));
    }
    let mut roots = Vec::with_capacity(key.a as usize);
    let mut current = one_root % n;
    for _ in 0..key.a {
        roots.push(current.clone());
        current = (&current * &key.alpha) % n;
    }
    roots.sort();
    if roots.windows(2).any(|w| w[0] == w[1]) {
        return Err(CipherError::DegenerateRoots(c.clone()));
    }
    Ok(roots)
}

/// 1-based position of `m` among the sorted roots of its own ciphertext.
pub fn rank_of(m: &BigUint, key: &CubicPublicKey) -> Result<u32, CipherError> {
    let c = encrypt(m, key)?;
    rank_in(&c, m, key)
}

fn rank_in(c: &BigUint, m: &BigUint, key: &CubicPublicKey) -> Result<u32, CipherError> {
    let roots = all_roots(c, key, m)?;
    let pos = roots
        .iter()
        .position(|r| r == m)
        .expect("plaintext is one of its own roots");
    Ok(pos as u32 + 1)
}

/// A ciphertext together with the rank of its plaintext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedCiphertext {
    pub c: BigUint,
    pub rank: u32,
}

/// Encrypts and ranks `m`. Needs only public data.
pub fn encrypt_ranked(m: &BigUint, key: &CubicPublicKey) -> Result<RankedCiphertext, CipherError> {
    let c = encrypt(m, key)?;
    let rank = rank_in(&c, m, key)?;
    Ok(RankedCiphertext { c, rank })
}

/// Extracts a root and selects the sibling named by the rank.
pub fn decrypt_ranked(
    rc: &RankedCiphertext,
    key: &CubicPrivateKey,
) -> Result<BigUint, CipherError> {
    let a = key.public.a;
    if rc.rank == 0 || rc.rank > a {
        return Err(CipherError::BadRank { rank: rc.rank, a });
    }
    let root = extract_root(&rc.c, key)?;
    let mut roots = all_roots(&rc.c, &key.public, &root)?;
    Ok(roots.swap_remove(rc.rank as usize - 1))
}

/// The two closed-form extraction exponents for `a = 3`, in the order
/// `(phi + 3) / 9` and `(2 phi + 3) / 9`. Exactly one is an integer whenever
/// `phi` is divisible by 3 but not 9; the other is `None`.
///
/// In prime mode `phi = p - 1`, so these read `(p + 2) / 9` and `(2p + 1) / 9`.
pub fn cubic_branch_exponents(phi: &BigUint) -> (Option<BigUint>, Option<BigUint>) {
    let nine = BigUint::from(9u8);
    let exact = |num: BigUint| {
        let (quot, rem) = num.div_rem(&nine);
        rem.is_zero().then_some(quot)
    };
    (exact(phi + 3u8), exact(phi * 2u8 + 3u8))
}

/// Which closed-form branch a base-10 digit-sum rule would pick for `phi`:
/// `Some(true)` for "divisible by 6", `Some(false)` for "divisible by 3 but
/// not 6", `None` when the digit sum is not divisible by 3.
pub fn digit_sum_branch(phi: &BigUint) -> Option<bool> {
    let s = numtheory::digit_sum(phi);
    match (s % 3, s % 6) {
        (0, 0) => Some(true),
        (0, _) => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn key31() -> CubicPrivateKey {
        CubicPrivateKey::from_primes(big(31), None, 3).unwrap()
    }

    fn key35() -> CubicPrivateKey {
        CubicPrivateKey::from_primes(big(7), Some(big(5)), 3).unwrap()
    }

    #[test]
    fn key_p31() {
        let key = key31();
        assert_eq!(key.public().alpha(), &big(5));
        assert_eq!(key.e(), &big(7));
        assert_eq!(key.phi(), &big(30));
        assert_eq!(key.mode(), Mode::Prime);
        assert_eq!(key.public().mode(), Mode::Prime);
        // The other primitive root is alpha^2.
        assert_eq!(25 * 25 % 31, 5);
    }

    #[test]
    fn key_n35() {
        let key = key35();
        assert_eq!(key.public().n(), &big(35));
        assert_eq!(key.phi(), &big(24));
        assert_eq!(key.public().alpha(), &big(16));
        assert_eq!(key.e(), &big(3));
        assert_eq!(16u64.pow(3) % 35, 1);
        assert_eq!(key.public().mode(), Mode::Composite);
        assert_eq!(cubic_branch_exponents(key.phi()), (Some(big(3)), None));
    }

    #[test]
    fn key_p67_digit_sum_counterexample() {
        let key = CubicPrivateKey::from_primes(big(67), None, 3).unwrap();
        assert_eq!(key.e(), &big(15));
        assert_eq!(3 * 15 % 22, 1);
        assert_eq!(digit_sum_branch(key.phi()), Some(true));
        // The digit-sum rule picks (p+2)/9, which is not an integer here.
        assert_eq!(cubic_branch_exponents(key.phi()), (None, Some(big(15))));
    }

    #[test]
    fn rejects_bad_primes() {
        // 13 = 1 mod 4
        assert!(matches!(
            CubicPrivateKey::from_primes(big(13), None, 3),
            Err(CipherError::BadPrimeClass { .. })
        ));
        // 19 = 1 mod 9
        assert!(matches!(
            CubicPrivateKey::from_primes(big(19), None, 3),
            Err(CipherError::BadPrimeClass { .. })
        ));
        // q = 13 = 1 mod 3
        assert!(matches!(
            CubicPrivateKey::from_primes(big(31), Some(big(13)), 3),
            Err(CipherError::BadPrimeClass { .. })
        ));
        assert!(matches!(
            CubicPrivateKey::from_primes(big(31), None, 9),
            Err(CipherError::BadExponent(9))
        ));
    }

    #[test]
    fn unity_root_examples() {
        assert_eq!(unity_root(&big(31), 3).unwrap(), big(5));
        assert_eq!(unity_root(&big(7), 3).unwrap(), big(2));
        let w = unity_root(&big(11), 5).unwrap();
        assert_eq!(w, big(4));
        // Fifth roots of unity mod 11 by brute force.
        let fifth: Vec<u64> = (1..11).filter(|x| big(*x).modpow(&big(5), &big(11)) == big(1)).collect();
        assert_eq!(fifth, vec![1, 3, 4, 5, 9]);
        assert!(matches!(
            unity_root(&big(29), 3),
            Err(CipherError::BadPrimeClass { .. })
        ));
    }

    #[test]
    fn encrypt_examples() {
        let k31 = key31();
        let k35 = key35();
        assert_eq!(encrypt(&big(7), k31.public()).unwrap(), big(2));
        assert_eq!(encrypt(&big(1), k31.public()).unwrap(), big(1));
        assert_eq!(encrypt(&big(2), k35.public()).unwrap(), big(8));
        assert!(matches!(
            encrypt(&big(0), k31.public()),
            Err(CipherError::OutOfRange { .. })
        ));
        assert!(matches!(
            encrypt(&big(31), k31.public()),
            Err(CipherError::OutOfRange { .. })
        ));
        assert!(matches!(
            encrypt(&big(10), k35.public()),
            Err(CipherError::NotCoprime(_))
        ));
    }

    #[test]
    fn extract_root_examples() {
        assert_eq!(extract_root(&big(2), &key31()).unwrap(), big(4));
        assert_eq!(extract_root(&big(1), &key31()).unwrap(), big(1));
        let r = extract_root(&big(8), &key35()).unwrap();
        assert_eq!(r, big(22));
        assert_eq!(22u64.pow(3) % 35, 8);
        // 3 is not a cube mod 31 (cubes form an index-3 subgroup).
        assert!(matches!(
            extract_root(&big(3), &key31()),
            Err(CipherError::RootCheckFailed(_))
        ));
    }

    #[test]
    fn all_roots_examples() {
        let k31 = key31();
        let k35 = key35();
        assert_eq!(
            all_roots(&big(2), k31.public(), &big(4)).unwrap(),
            vec![big(4), big(7), big(20)]
        );
        assert_eq!(
            all_roots(&big(1), k31.public(), &big(1)).unwrap(),
            vec![big(1), big(5), big(25)]
        );
        assert_eq!(
            all_roots(&big(8), k35.public(), &big(2)).unwrap(),
            vec![big(2), big(22), big(32)]
        );
        assert!(matches!(
            all_roots(&big(0), k35.public(), &big(0)),
            Err(CipherError::DegenerateRoots(_))
        ));
    }

    #[test]
    fn rank_examples() {
        let k31 = key31();
        let k35 = key35();
        assert_eq!(rank_of(&big(7), k31.public()).unwrap(), 2);
        assert_eq!(rank_of(&big(4), k31.public()).unwrap(), 1);
        assert_eq!(rank_of(&big(2), k35.public()).unwrap(), 1);
    }

    #[test]
    fn ranked_roundtrip_examples() {
        let k31 = key31();
        let k35 = key35();
        let rc = encrypt_ranked(&big(7), k31.public()).unwrap();
        assert_eq!(rc, RankedCiphertext { c: big(2), rank: 2 });
        assert_eq!(decrypt_ranked(&rc, &k31).unwrap(), big(7));

        let rc = encrypt_ranked(&big(1), k31.public()).unwrap();
        assert_eq!(rc, RankedCiphertext { c: big(1), rank: 1 });
        assert_eq!(decrypt_ranked(&rc, &k31).unwrap(), big(1));

        let rc = encrypt_ranked(&big(22), k35.public()).unwrap();
        assert_eq!(rc, RankedCiphertext { c: big(8), rank: 2 });
        let top = RankedCiphertext { c: big(8), rank: 3 };
        assert_eq!(decrypt_ranked(&top, &k35).unwrap(), big(32));
        assert!(matches!(
            decrypt_ranked(&RankedCiphertext { c: big(8), rank: 4 }, &k35),
            Err(CipherError::BadRank { .. })
        ));
    }

    #[test]
    fn keygen_is_deterministic_and_valid() {
        for (mode, a) in [(Mode::Prime, 3), (Mode::Composite, 3), (Mode::Prime, 5), (Mode::Composite, 5)] {
            let k1 = keygen(24, mode, a, 7).unwrap();
            let k2 = keygen(24, mode, a, 7).unwrap();
            assert_eq!(k1, k2);
            assert_eq!(k1.mode(), mode);
            assert_eq!(k1.public().mode(), mode);
            assert_eq!(k1.p().bits(), 24);
            if let Some(q) = k1.q() {
                assert_eq!(q.bits(), 24);
            }
        }
        assert!(matches!(keygen(24, Mode::Prime, 4, 0), Err(CipherError::BadExponent(4))));
    }

    #[test]
    fn public_key_validation() {
        assert!(CubicPublicKey::new(big(31), big(5), 3).is_ok());
        assert!(CubicPublicKey::new(big(31), big(1), 3).is_err());
        assert!(CubicPublicKey::new(big(31), big(6), 3).is_err());
        assert!(CubicPublicKey::new(big(31), big(5), 2).is_err());
    }
}
