//! Command-line front end. [`run`] returns the process exit code:
//! 0 on success, 1 when a protocol or cryptographic step fails, 2 on usage
//! errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};
use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cubic_cipher::{
    self, all_roots, decrypt_ranked, encrypt_ranked, extract_root, parse_key_file,
    CubicPrivateKey, KeyMaterial, Mode, RankedCiphertext,
};
use crate::dh_okx::{self, okx_agreement_rate, okx_session, OkxLocal, OkxParams};
use crate::numtheory::{gen_prime, PrimeSpec};
use crate::oblivious::ot_success_rate;
use crate::rank_coding::RankCode;
use crate::wire::{
    run_cubic_receiver, run_cubic_sender, run_okx_peer, simulate_cubic_session, tcp_connect,
    tcp_listen, CubicSender, LocalChoice, OkxPeer, TcpEndpoint,
};

pub const DEFAULT_SEED: u64 = 0x5EED;

#[derive(Debug, Parser)]
#[command(name = "cubicot", version, about = "Cubic transformation, oblivious transfer and oblivious key exchange")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED, value_parser = parse_seed)]
    pub seed: u64,
    /// Print one `key=value` record per line.
    #[arg(long, global = true)]
    pub machine: bool,
    /// Network receive timeout in seconds.
    #[arg(long, global = true, default_value_t = 30)]
    pub timeout: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key and write it to a key file.
    Keygen {
        #[arg(long, default_value = "composite")]
        mode: Mode,
        #[arg(long, default_value_t = 32)]
        bits: u64,
        #[arg(long, default_value_t = 3)]
        a: u32,
        #[arg(long)]
        out: PathBuf,
        /// Also write the public half here.
        #[arg(long)]
        public_out: Option<PathBuf>,
        /// Use this prime as p instead of searching.
        #[arg(long, value_parser = parse_big)]
        p: Option<BigUint>,
        /// Use this prime as q (composite mode).
        #[arg(long, value_parser = parse_big)]
        q: Option<BigUint>,
    },
    /// Encrypt a plaintext and print the framed integer.
    Encrypt {
        #[arg(long)]
        key: PathBuf,
        #[arg(long, value_parser = parse_big)]
        m: BigUint,
    },
    /// Decrypt a framed integer.
    Decrypt {
        #[arg(long)]
        key: PathBuf,
        #[arg(long, value_parser = parse_big)]
        frame: BigUint,
    },
    /// List every root of a ciphertext.
    Roots {
        #[arg(long)]
        key: PathBuf,
        #[arg(long, value_parser = parse_big)]
        c: BigUint,
    },
    /// Monte Carlo estimate of the oblivious-transfer success rate.
    OtStats {
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
    /// Oblivious key exchange.
    Okx {
        #[command(subcommand)]
        action: OkxAction,
    },
    /// Send one plaintext to a listening key owner.
    Send {
        addr: String,
        /// Expected public key; the session fails if the peer publishes another.
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long, value_parser = parse_big)]
        m: BigUint,
    },
    /// Listen for one sender and decrypt its message.
    Recv {
        addr: String,
        #[arg(long)]
        key: PathBuf,
    },
    /// Re-run the worked examples and report PASS/FAIL per check.
    DemoPaper,
}

#[derive(Debug, Subcommand)]
pub enum OkxAction {
    /// Run many local sessions and report how often keys agree.
    Simulate {
        #[arg(long, value_parser = parse_big)]
        p: BigUint,
        #[arg(long, value_parser = parse_big, default_value = "2")]
        g: BigUint,
        #[arg(long, default_value_t = 2)]
        a: u32,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// Print the transcript of one sample session first.
        #[arg(long)]
        transcript: bool,
    },
    /// Wait for one peer, announce parameters and exchange messages.
    Listen {
        addr: String,
        #[arg(long, value_parser = parse_big, default_value = "19")]
        p: BigUint,
        #[arg(long, value_parser = parse_big, default_value = "2")]
        g: BigUint,
        #[arg(long, default_value_t = 2)]
        a: u32,
    },
    /// Connect to a listening peer and exchange messages.
    Connect { addr: String },
}

fn parse_big(s: &str) -> Result<BigUint, String> {
    BigUint::parse_bytes(s.as_bytes(), 10).ok_or_else(|| format!("`{s}` is not a decimal integer"))
}

fn parse_seed(s: &str) -> Result<u64, String> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    }
    .map_err(|e| format!("bad seed `{s}`: {e}"))
}

/// Failure classes, mapped onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Protocol(String),
}

fn usage(err: impl std::fmt::Display) -> Failure {
    Failure::Usage(err.to_string())
}

fn protocol(err: impl std::fmt::Display) -> Failure {
    Failure::Protocol(err.to_string())
}

/// Parses `argv` (including the program name) and executes the command.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Protocol(msg)) => {
            let _ = writeln!(err, "failed: {msg}");
            1
        }
    }
}

fn load_key(path: &Path) -> Result<KeyMaterial, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    parse_key_file(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_private(path: &Path) -> Result<CubicPrivateKey, Failure> {
    match load_key(path)? {
        KeyMaterial::Private(key) => Ok(key),
        KeyMaterial::Public(_) => Err(usage(format!("{} holds only a public key", path.display()))),
    }
}

fn join(values: &[BigUint]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let timeout = Duration::from_secs(cli.timeout.max(1));
    let w = |out: &mut dyn Write, line: String| {
        let _ = writeln!(out, "{line}");
    };
    match &cli.command {
        Command::Keygen {
            mode,
            bits,
            a,
            out: path,
            public_out,
            p,
            q,
        } => {
            let key = match p {
                Some(p) => {
                    let q = match (mode, q) {
                        (Mode::Prime, None) => None,
                        (Mode::Prime, Some(_)) => return Err(usage("--q needs --mode composite")),
                        (Mode::Composite, Some(q)) => Some(q.clone()),
                        (Mode::Composite, None) => return Err(usage("--mode composite with --p needs --q")),
                    };
                    CubicPrivateKey::from_primes(p.clone(), q, *a).map_err(usage)?
                }
                None => cubic_cipher::keygen(*bits, *mode, *a, cli.seed).map_err(usage)?,
            };
            std::fs::write(path, key.to_key_file())
                .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
            if let Some(public_path) = public_out {
                std::fs::write(public_path, key.public().to_key_file())
                    .map_err(|e| usage(format!("cannot write {}: {e}", public_path.display())))?;
            }
            let public = key.public();
            if cli.machine {
                w(out, format!(
                    "mode={} a={} n={} alpha={} n_bits={}",
                    key.mode(),
                    public.a(),
                    public.n(),
                    public.alpha(),
                    public.n().bits()
                ));
            } else {
                w(out, format!(
                    "wrote {} key ({} bits, a={}) to {}",
                    key.mode(),
                    public.n().bits(),
                    public.a(),
                    path.display()
                ));
            }
            Ok(0)
        }
        Command::Encrypt { key, m } => {
            let material = load_key(key)?;
            let public = material.public();
            let rc = encrypt_ranked(m, public).map_err(usage)?;
            let framed = RankCode::for_roots(public.a())
                .encode(&rc.c, rc.rank)
                .map_err(protocol)?;
            if cli.machine {
                w(out, format!("c={} rank={} frame={}", rc.c, rc.rank, framed));
            } else {
                w(out, framed.to_string());
            }
            Ok(0)
        }
        Command::Decrypt { key, frame } => {
            let key = load_private(key)?;
            let (c, rank) = RankCode::for_roots(key.public().a())
                .decode(frame)
                .map_err(protocol)?;
            let m = decrypt_ranked(&RankedCiphertext { c: c.clone(), rank }, &key).map_err(protocol)?;
            if cli.machine {
                w(out, format!("c={c} rank={rank} m={m}"));
            } else {
                w(out, m.to_string());
            }
            Ok(0)
        }
        Command::Roots { key, c } => {
            let key = load_private(key)?;
            let one = extract_root(c, &key).map_err(protocol)?;
            let roots = all_roots(c, key.public(), &one).map_err(protocol)?;
            if cli.machine {
                w(out, format!("c={c} roots={}", join(&roots)));
            } else {
                for (rank, root) in roots.iter().enumerate() {
                    w(out, format!("rank {}: {root}", rank + 1));
                }
            }
            Ok(0)
        }
        Command::OtStats { key, trials } => {
            let key = load_private(key)?;
            let stats = ot_success_rate(&key, *trials, cli.seed).map_err(usage)?;
            let fields = [
                format!("a={}", key.public().a()),
                format!("n_bits={}", key.public().n().bits()),
                format!("trials={}", stats.trials),
                format!("successes={}", stats.successes),
                format!("rate={:.6}", stats.rate()),
            ];
            if cli.machine {
                w(out, fields.join(" "));
            } else {
                for field in fields {
                    w(out, field);
                }
            }
            Ok(0)
        }
        Command::Okx { action } => run_okx(cli, action, timeout, out, err),
        Command::Send { addr, key, m } => {
            let expected = key.as_deref().map(load_key).transpose()?;
            let mut transport = connect(addr, timeout)?;
            let mut sender = CubicSender::new(m.clone());
            if let Some(material) = expected {
                sender = sender.expecting(material.public().clone());
            }
            let sent = run_cubic_sender(&mut transport, sender).map_err(protocol)?;
            if cli.machine {
                w(out, format!("c={} rank={} ack=ok", sent.c, sent.rank));
            } else {
                w(out, format!("sent c={} rank={}; acknowledgement matched", sent.c, sent.rank));
            }
            Ok(0)
        }
        Command::Recv { addr, key } => {
            let key = load_private(key)?;
            let acceptor = tcp_listen(addr).map_err(protocol)?;
            let bound = acceptor.local_addr().map_err(protocol)?;
            let _ = writeln!(err, "listening on {bound}");
            let _ = err.flush();
            let mut transport = acceptor.accept().map_err(protocol)?;
            transport.set_timeout(timeout).map_err(protocol)?;
            let got = run_cubic_receiver(&mut transport, key).map_err(protocol)?;
            if cli.machine {
                w(out, format!(
                    "frame={} c={} rank={} m={}",
                    got.framed, got.ciphertext.c, got.ciphertext.rank, got.plaintext
                ));
            } else {
                w(out, got.plaintext.to_string());
            }
            Ok(0)
        }
        Command::DemoPaper => {
            let checks = demo_checks();
            let mut all = true;
            for check in &checks {
                all &= check.pass;
                w(out, format!(
                    "{} {}: {}",
                    if check.pass { "PASS" } else { "FAIL" },
                    check.name,
                    check.detail
                ));
            }
            w(out, format!("overall {}", if all { "PASS" } else { "FAIL" }));
            Ok(if all { 0 } else { 1 })
        }
    }
}

fn connect(addr: &str, timeout: Duration) -> Result<TcpEndpoint, Failure> {
    let mut transport = tcp_connect(addr).map_err(protocol)?;
    transport.set_timeout(timeout).map_err(protocol)?;
    Ok(transport)
}

fn run_okx(
    cli: &Cli,
    action: &OkxAction,
    timeout: Duration,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Failure> {
    match action {
        OkxAction::Simulate {
            p,
            g,
            a,
            trials,
            transcript,
        } => {
            let params = dh_okx::okx_setup(p.clone(), g.clone(), *a, cli.seed).map_err(usage)?;
            if *transcript {
                let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
                let alice = OkxLocal::random(&params, &mut rng);
                let bob = OkxLocal::random(&params, &mut rng);
                let session = okx_session(&params, &alice, &bob).map_err(protocol)?;
                let _ = write!(out, "{}", session.transcript(&params));
            }
            let stats = okx_agreement_rate(&params, *trials, cli.seed).map_err(usage)?;
            let _ = writeln!(
                out,
                "a={} p={} trials={} successes={} rate={:.6}",
                params.a(),
                params.p(),
                stats.trials,
                stats.successes,
                stats.rate()
            );
            Ok(0)
        }
        OkxAction::Listen { addr, p, g, a } => {
            let params = dh_okx::okx_setup(p.clone(), g.clone(), *a, cli.seed).map_err(usage)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let local = OkxLocal::random(&params, &mut rng);
            let acceptor = tcp_listen(addr).map_err(protocol)?;
            let bound = acceptor.local_addr().map_err(protocol)?;
            let _ = writeln!(err, "listening on {bound}");
            let _ = err.flush();
            let mut transport = acceptor.accept().map_err(protocol)?;
            transport.set_timeout(timeout).map_err(protocol)?;
            let (peer, opening) = OkxPeer::announce(params, local).map_err(protocol)?;
            let peer = run_okx_peer(&mut transport, peer, Some(opening)).map_err(protocol)?;
            let _ = write!(out, "{}", peer.transcript("A", "B"));
            Ok(0)
        }
        OkxAction::Connect { addr } => {
            let mut transport = connect(addr, timeout)?;
            let responder_seed = ChaCha8Rng::seed_from_u64(cli.seed ^ 0xB0B).next_u64();
            let peer = OkxPeer::join(LocalChoice::Seeded(responder_seed));
            let peer = run_okx_peer(&mut transport, peer, None).map_err(protocol)?;
            let _ = write!(out, "{}", peer.transcript("B", "A"));
            Ok(0)
        }
    }
}

/// One line of `demo-paper` output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> DemoCheck {
    DemoCheck { name, pass, detail }
}

/// The worked examples: cubic transformation modulo 31 and the key exchange
/// modulo 19.
pub fn demo_checks() -> Vec<DemoCheck> {
    let mut checks = Vec::new();
    let big = |v: u64| BigUint::from(v);

    match CubicPrivateKey::from_primes(big(31), None, 3) {
        Ok(key) => {
            let public = key.public();
            let alpha = public.alpha().clone();
            let alpha2 = &alpha * &alpha % public.n();
            let mut unity = vec![big(1), alpha.clone(), alpha2];
            unity.sort();
            checks.push(check(
                "unity roots mod 31",
                unity == [big(1), big(5), big(25)],
                format!("{{{}}} alpha={alpha}", join(&unity)),
            ));
            checks.push(check("extraction exponent", *key.e() == big(7), format!("e={}", key.e())));
            match encrypt_ranked(&big(7), public) {
                Ok(rc) => {
                    checks.push(check(
                        "encrypt m=7",
                        rc.c == big(2) && rc.rank == 2,
                        format!("c={} rank={}", rc.c, rc.rank),
                    ));
                    let framed = RankCode::Prefix3.encode(&rc.c, rc.rank).ok();
                    checks.push(check(
                        "wire frame",
                        framed == Some(big(9)),
                        framed.map_or("none".into(), |f| format!("{f} (binary {f:b})")),
                    ));
                }
                Err(e) => checks.push(check("encrypt m=7", false, e.to_string())),
            }
            let one = extract_root(&big(2), &key).ok();
            checks.push(check(
                "extract root of 2",
                one == Some(big(4)),
                one.as_ref().map_or("none".into(), |r| format!("2^7 mod 31 = {r}")),
            ));
            let roots = one.and_then(|r| all_roots(&big(2), public, &r).ok());
            checks.push(check(
                "root set of 2",
                roots.as_deref() == Some(&[big(4), big(7), big(20)][..]),
                roots.map_or("none".into(), |r| join(&r)),
            ));
            let m = decrypt_ranked(&RankedCiphertext { c: big(2), rank: 2 }, &key).ok();
            checks.push(check(
                "decrypt frame 9",
                m == Some(big(7)),
                m.map_or("none".into(), |m| format!("m={m}")),
            ));
            let session = simulate_cubic_session(key, big(7));
            checks.push(check(
                "three-stage session",
                session.as_ref().is_ok_and(|(_, got)| got.plaintext == big(7) && got.framed == big(9)),
                match &session {
                    Ok((_, got)) => format!("frame={} ack rank={} m={}", got.framed, got.ciphertext.rank, got.plaintext),
                    Err(e) => e.to_string(),
                },
            ));
        }
        Err(e) => checks.push(check("key p=31", false, e.to_string())),
    }

    match OkxParams::new(big(19), big(2), big(9), 2) {
        Ok(params) => {
            checks.push(check(
                "okx roots of 9 mod 19",
                params.roots() == [big(3), big(16)],
                join(params.roots()),
            ));
            // (own root, guess) indices into [3, 16] for Alice and Bob.
            let cases: [(&'static str, usize, usize, u64, u64); 4] = [
                ("okx case 1", 0, 0, 13, 13),
                ("okx case 2", 1, 0, 16, 13),
                ("okx case 3", 1, 1, 16, 7),
                ("okx case 4", 0, 1, 13, 7),
            ];
            for (name, alice_guess, bob_guess, want_a, want_b) in cases {
                let alice = OkxLocal::new(7u8, 0, alice_guess);
                let bob = OkxLocal::new(11u8, 0, bob_guess);
                match okx_session(&params, &alice, &bob) {
                    Ok(s) => checks.push(check(
                        name,
                        s.alice_msg == big(17)
                            && s.bob_msg == big(6)
                            && s.alice_key.0 == big(want_a)
                            && s.bob_key.0 == big(want_b),
                        format!(
                            "A->B {} B->A {} A key {} B key {} agreed {}",
                            s.alice_msg, s.bob_msg, s.alice_key.0, s.bob_key.0, s.agreed
                        ),
                    )),
                    Err(e) => checks.push(check(name, false, e.to_string())),
                }
            }
        }
        Err(e) => checks.push(check("okx params p=19", false, e.to_string())),
    }

    let example_prime = PrimeSpec::new(8).congruent(3, 4).congruent(7, 9);
    let p = gen_prime(&example_prime, DEFAULT_SEED);
    checks.push(check(
        "prime class 7 mod 36",
        p.as_ref().is_ok_and(|p| p % 36u8 == big(7)),
        p.map_or_else(|e| e.to_string(), |p| format!("p={p}")),
    ));
    checks
}
