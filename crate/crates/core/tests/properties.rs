use std::collections::BTreeMap;
use std::thread;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cubicot::cubic_cipher::{all_roots, encrypt, extract_root, keygen, CubicPrivateKey, Mode};
use cubicot::dh_okx::{okx_agreement_rate, okx_message, okx_session, okx_setup, OkxLocal, OkxParams};
use cubicot::numtheory::{crt_pair, gen_prime, is_probable_prime, mod_inv, mod_pow, sqrt_mod, PrimeSpec};
use cubicot::oblivious::{factor_from_roots, ot_success_rate};
use cubicot::wire::{
    run_okx_peer, tcp_connect, tcp_listen, transport_pair, Frame, LocalChoice, MsgType, OkxPeer,
    Recording, Transport, TranscriptEntry, MAX_PAYLOAD,
};

fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

fn is_prime_u64(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mod_pow_adds_exponents(a in any::<u64>(), e1 in any::<u32>(), e2 in any::<u32>(), m in 2u64..) {
        let (a, m) = (big(a), big(m));
        let lhs = mod_pow(&a, &(big(e1.into()) + big(e2.into())), &m);
        let rhs = mod_pow(&a, &big(e1.into()), &m) * mod_pow(&a, &big(e2.into()), &m) % &m;
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn mod_inv_multiplies_to_one(a in 1u64.., m in 2u64..) {
        let (a, m) = (big(a), big(m));
        match mod_inv(&a, &m) {
            Ok(inv) => prop_assert!((a * inv % &m).is_one()),
            Err(_) => prop_assert!(!a.gcd(&m).is_one()),
        }
    }
}

#[test]
fn sqrt_mod_returns_plus_or_minus_root() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..500u64 {
        let bits = rng.gen_range(8..=32);
        let p = gen_prime(&PrimeSpec::new(bits).congruent(3, 4), i).unwrap();
        for _ in 0..4 {
            let r = rng.gen_biguint_below(&p);
            let root = sqrt_mod(&(&r * &r % &p), &p).unwrap();
            assert!(root == r || root == (&p - &r) % &p, "p={p} r={r} root={root}");
        }
    }
}

#[test]
fn gen_prime_meets_requested_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..200u64 {
        let bits = rng.gen_range(8..=96);
        let spec = match i % 3 {
            0 => PrimeSpec::new(bits).congruent(3, 4).congruent(7, 9),
            1 => PrimeSpec::new(bits).congruent(2, 3),
            _ => PrimeSpec::new(bits).congruent(3, 4).congruent(11, 25),
        };
        let p = gen_prime(&spec, i).unwrap();
        assert!(is_probable_prime(&p, 64));
        assert_eq!(p.bits(), bits);
        for (m, r) in &spec.congruences {
            assert_eq!(&(&p % m), r);
        }
    }
}

#[test]
fn crt_inverts_reductions() {
    // Every coprime pair with m1 * m2 < 10^4. Products up to 2000 are checked
    // for every x; larger ones for a stride through [0, m1 * m2) plus the ends.
    let bad: u64 = (2u64..5000)
        .into_par_iter()
        .map(|m1| {
            let mut bad = 0;
            let bm1 = big(m1);
            for m2 in 2..=(9999 / m1) {
                if m1.gcd(&m2) != 1 {
                    continue;
                }
                let bm2 = big(m2);
                let prod = m1 * m2;
                let step = if prod <= 2000 { 1 } else { 97 };
                let xs = (0..prod).step_by(step).chain([prod - 1, prod / 2]);
                for x in xs {
                    let got = crt_pair(&big(x % m1), &bm1, &big(x % m2), &bm2).unwrap();
                    bad += u64::from(got != big(x));
                }
            }
            bad
        })
        .sum();
    assert_eq!(bad, 0);
}

#[test]
fn unity_root_has_exact_order() {
    for seed in 0..200u64 {
        let a = if seed % 2 == 0 { 3 } else { 5 };
        let mode = if seed % 4 < 2 { Mode::Prime } else { Mode::Composite };
        let key = keygen(8 + seed % 40, mode, a, seed).unwrap();
        let public = key.public();
        for i in 1..a {
            assert!(!mod_pow(public.alpha(), &big(i.into()), public.n()).is_one());
        }
        assert!(mod_pow(public.alpha(), &big(a.into()), public.n()).is_one());
    }
}

#[test]
fn prime_keys_are_exactly_three_to_one() {
    let primes: Vec<u64> = (7..1000)
        .filter(|&p| is_prime_u64(p) && p % 4 == 3 && p % 3 == 1 && p % 9 != 1)
        .collect();
    assert!(primes.len() > 10);
    for p in primes {
        let key = CubicPrivateKey::from_primes(big(p), None, 3).unwrap();
        let mut fibres: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for m in 1..p {
            fibres.entry(m * m % p * m % p).or_default().push(m);
        }
        assert!(fibres.values().all(|f| f.len() == 3), "p={p}");
        for (c, f) in fibres {
            let one = extract_root(&big(c), &key).unwrap();
            let roots: Vec<u64> = all_roots(&big(c), key.public(), &one)
                .unwrap()
                .iter()
                .map(|r| r.to_u64().unwrap())
                .collect();
            assert_eq!(roots, f);
        }
    }
}

#[test]
fn prime_mode_roots_match_enumeration_below_2000() {
    for p in (1000..2000).filter(|&p| is_prime_u64(p) && p % 4 == 3 && p % 3 == 1 && p % 9 != 1) {
        let key = CubicPrivateKey::from_primes(big(p), None, 3).unwrap();
        let mut fibres: BTreeMap<u64, Vec<BigUint>> = BTreeMap::new();
        for x in 1..p {
            fibres.entry(x * x % p * x % p).or_default().push(big(x));
        }
        for m in 1..p {
            let c = encrypt(&big(m), key.public()).unwrap();
            let brute = &fibres[&c.to_u64().unwrap()];
            let one = extract_root(&c, &key).unwrap();
            assert_eq!(&all_roots(&c, key.public(), &one).unwrap(), brute);
        }
    }
}

fn exhaustive_pair_check(key: &CubicPrivateKey) {
    let n = key.public().n().to_u64().unwrap();
    let public = key.public();
    let mut seen = std::collections::HashSet::new();
    for m in 1..n {
        if m.gcd(&n) != 1 {
            continue;
        }
        let c = encrypt(&big(m), public).unwrap();
        if !seen.insert(c.clone()) {
            continue;
        }
        let roots = all_roots(&c, public, &big(m)).unwrap();
        for (i, x) in roots.iter().enumerate() {
            for y in &roots[i + 1..] {
                let f = factor_from_roots(x, y, public.n()).unwrap();
                assert!((public.n() % &f).is_zero());
            }
        }
    }
}

#[test]
fn every_distinct_root_pair_reveals_a_factor() {
    // a = 3: 7*5, 31*11, 43*17; a = 5: 11*7, 11*13, 31*17.
    for (p, q, a) in [(7, 5, 3), (31, 11, 3), (43, 17, 3), (11, 7, 5), (11, 13, 5), (31, 17, 5)] {
        let key = CubicPrivateKey::from_primes(big(p), Some(big(q)), a).unwrap();
        exhaustive_pair_check(&key);
    }
    for seed in 0..3u64 {
        let key = keygen(8, Mode::Composite, 3 + 2 * (seed % 2) as u32, seed).unwrap();
        assert!(key.public().n() < &big(70_000));
        exhaustive_pair_check(&key);
    }
}

#[test]
fn ot_rate_within_four_sigma() {
    for a in [3u32, 5] {
        let key = keygen(16, Mode::Composite, a, 77).unwrap();
        let expected = f64::from(a - 1) / f64::from(a);
        let runs = 40;
        let within = (0..runs)
            .filter(|&run| {
                let stats = ot_success_rate(&key, 2000, 1000 + run).unwrap();
                (stats.rate() - expected).abs() < stats.sigma_bound(expected, 4.0)
            })
            .count();
        assert!(within * 100 >= runs as usize * 95, "a={a}: {within}/{runs}");
        assert_eq!(ot_success_rate(&key, 300, 8), ot_success_rate(&key, 300, 8));
    }
}

#[test]
fn correct_guesses_give_the_plain_dh_key() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..500u64 {
        let a = if case % 2 == 0 { 2 } else { 3 };
        let spec = if a == 2 {
            PrimeSpec::new(rng.gen_range(8..=40)).congruent(3, 4)
        } else {
            PrimeSpec::new(rng.gen_range(8..=40)).congruent(7, 9)
        };
        let p = gen_prime(&spec, case).unwrap();
        let Ok(params) = okx_setup(p.clone(), big(2), a, case) else {
            // g = 2 only has order <= 2 for p <= 3, below the 8-bit floor.
            unreachable!("setup failed for p={p}");
        };
        let alice = OkxLocal::random(&params, &mut rng);
        let mut bob = OkxLocal::random(&params, &mut rng);
        bob.guess_index = alice.own_root_index;
        let alice = OkxLocal {
            guess_index: bob.own_root_index,
            ..alice
        };
        let s = okx_session(&params, &alice, &bob).unwrap();
        let expected = mod_pow(params.g(), &(&alice.secret * &bob.secret), &p);
        assert_eq!(s.alice_key.0, expected);
        assert_eq!(s.bob_key.0, expected);
        assert!(s.agreed);
    }
}

#[test]
fn transcripts_do_not_reveal_the_root() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..200u64 {
        let p = gen_prime(&PrimeSpec::new(20).congruent(3, 4), seed).unwrap();
        let params = okx_setup(p.clone(), big(3), 2, seed).unwrap();
        let order_multiple = &p - 1u8;
        let (x, y) = (&params.roots()[0], &params.roots()[1]);
        let n = rng.gen_biguint_range(&BigUint::one(), &(&p - 1u8));
        // N' = N + (x - y) mod (p - 1) makes g^(y + N') = g^(x + N).
        let shifted = (&n + x + &order_multiple - (y % &order_multiple)) % &order_multiple;
        if shifted.is_zero() {
            continue;
        }
        let with_x = okx_message(&params, &OkxLocal::new(n.clone(), 0, 0)).unwrap();
        let with_y = okx_message(&params, &OkxLocal::new(shifted, 1, 0)).unwrap();
        assert_eq!(with_x, with_y);
    }
}

#[test]
fn agreement_rate_within_four_sigma() {
    let p2 = gen_prime(&PrimeSpec::new(28).congruent(3, 4), 1).unwrap();
    let p3 = gen_prime(&PrimeSpec::new(28).congruent(3, 4).congruent(7, 9), 1).unwrap();
    for (a, p) in [(2u32, p2), (3, p3)] {
        let params = okx_setup(p, big(2), a, 2).unwrap();
        let expected = 1.0 / f64::from(a * a);
        let stats = okx_agreement_rate(&params, 20_000, 9).unwrap();
        assert!(
            (stats.rate() - expected).abs() < stats.sigma_bound(expected, 4.0),
            "a={a}: {stats}"
        );
        assert_eq!(stats, okx_agreement_rate(&params, 20_000, 9).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn frame_codec_roundtrip(kind in 0usize..6, payload in proptest::collection::vec(any::<u8>(), 0..64)) {
        let frame = Frame::new(MsgType::ALL[kind], payload);
        let bytes = frame.encode().unwrap();
        prop_assert_eq!(bytes.len(), 6 + frame.payload.len());
        prop_assert_eq!(Frame::decode(&bytes).unwrap(), frame);
    }
}

#[test]
fn oversize_payload_is_rejected_on_encode() {
    let frame = Frame::new(MsgType::Error, vec![0; MAX_PAYLOAD + 1]);
    assert!(frame.encode().is_err());
}

fn okx_over<T: Transport + Send + 'static>(a_end: T, b_end: T) -> (Vec<TranscriptEntry>, Vec<TranscriptEntry>, BigUint, BigUint) {
    let params = OkxParams::new(big(19), big(2), big(9), 2).unwrap();
    let bob = thread::spawn(move || {
        let mut end = Recording::new(b_end);
        let peer = OkxPeer::join(LocalChoice::Fixed(OkxLocal::new(11u8, 0, 1)));
        let peer = run_okx_peer(&mut end, peer, None).unwrap();
        (end.into_parts().1, peer.key().unwrap().0.clone())
    });
    let mut end = Recording::new(a_end);
    let (peer, opening) = OkxPeer::announce(params, OkxLocal::new(7u8, 0, 0)).unwrap();
    let peer = run_okx_peer(&mut end, peer, Some(opening)).unwrap();
    let (bob_log, bob_key) = bob.join().unwrap();
    (end.into_parts().1, bob_log, peer.key().unwrap().0.clone(), bob_key)
}

#[test]
fn okx_transcripts_are_transport_independent() {
    let (a, b) = transport_pair();
    let mem = okx_over(a, b);

    let acceptor = tcp_listen("127.0.0.1:0").unwrap();
    let addr = acceptor.local_addr().unwrap().to_string();
    let client = thread::spawn(move || tcp_connect(&addr).unwrap());
    let server = acceptor.accept().unwrap();
    let tcp = okx_over(server, client.join().unwrap());

    assert_eq!(mem, tcp);
    // Case 4: Alice guesses right, Bob wrong; nothing on the wire says so.
    assert_eq!((mem.2.clone(), mem.3.clone()), (big(13), big(7)));
    assert_eq!(mem.0.len(), 3);
    let types: Vec<u8> = mem.0.iter().map(|e| e.bytes[1]).collect();
    assert_eq!(types, [MsgType::Params as u8, MsgType::OkxMsg as u8, MsgType::OkxMsg as u8]);
}
