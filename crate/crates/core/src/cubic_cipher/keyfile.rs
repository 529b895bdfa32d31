//! Text key files: one `name=value` line per field, decimal integers, fixed
//! order `version, mode, a, n, alpha` followed by `p, q, phi, e` for private
//! keys. Prime-mode private keys write `q=1`.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

use super::{CipherError, CubicPrivateKey, CubicPublicKey, Mode};

pub const KEY_FILE_VERSION: u32 = 1;

const PUBLIC_FIELDS: [&str; 5] = ["version", "mode", "a", "n", "alpha"];
const PRIVATE_FIELDS: [&str; 4] = ["p", "q", "phi", "e"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyFileError {
    #[error("line {line}: expected `{expected}=...`")]
    UnexpectedField { line: usize, expected: &'static str },
    #[error("line {line}: malformed value for `{field}`")]
    BadValue { line: usize, field: &'static str },
    #[error("unsupported key file version {0}")]
    Version(u32),
    #[error("field `{0}` does not match the value derived from the key")]
    Inconsistent(&'static str),
    #[error("key file has {0} lines; expected 5 (public) or 9 (private)")]
    WrongLength(usize),
    #[error(transparent)]
    Key(#[from] CipherError),
}

/// Contents of a key file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyMaterial {
    Public(CubicPublicKey),
    Private(CubicPrivateKey),
}

impl KeyMaterial {
    pub fn public(&self) -> &CubicPublicKey {
        match self {
            KeyMaterial::Public(key) => key,
            KeyMaterial::Private(key) => key.public(),
        }
    }

    pub fn private(&self) -> Option<&CubicPrivateKey> {
        match self {
            KeyMaterial::Public(_) => None,
            KeyMaterial::Private(key) => Some(key),
        }
    }
}

fn write_public(out: &mut String, key: &CubicPublicKey) {
    let _ = writeln!(out, "version={KEY_FILE_VERSION}");
    let _ = writeln!(out, "mode={}", key.mode());
    let _ = writeln!(out, "a={}", key.a());
    let _ = writeln!(out, "n={}", key.n());
    let _ = writeln!(out, "alpha={}", key.alpha());
}

impl CubicPublicKey {
    pub fn to_key_file(&self) -> String {
        let mut out = String::new();
        write_public(&mut out, self);
        out
    }
}

impl CubicPrivateKey {
    pub fn to_key_file(&self) -> String {
        let mut out = String::new();
        write_public(&mut out, self.public());
        let _ = writeln!(out, "p={}", self.p());
        let _ = writeln!(out, "q={}", self.q().cloned().unwrap_or_else(BigUint::one));
        let _ = writeln!(out, "phi={}", self.phi());
        let _ = writeln!(out, "e={}", self.e());
        out
    }
}

fn parse_decimal(value: &str) -> Option<BigUint> {
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if value.len() > 1 && value.starts_with('0') {
        return None;
    }
    BigUint::parse_bytes(value.as_bytes(), 10)
}

/// Parses a public or private key file and checks it for internal
/// consistency.
pub fn parse_key_file(text: &str) -> Result<KeyMaterial, KeyFileError> {
    let lines: Vec<&str> = text.lines().collect();
    let fields: Vec<&'static str> = match lines.len() {
        5 => PUBLIC_FIELDS.to_vec(),
        9 => PUBLIC_FIELDS.iter().chain(PRIVATE_FIELDS.iter()).copied().collect(),
        other => return Err(KeyFileError::WrongLength(other)),
    };

    let mut mode = None;
    let mut values = Vec::with_capacity(fields.len());
    for (idx, (line, field)) in lines.iter().zip(&fields).enumerate() {
        let line_no = idx + 1;
        let value = line
            .strip_prefix(field)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or(KeyFileError::UnexpectedField {
                line: line_no,
                expected: field,
            })?;
        if *field == "mode" {
            mode = Some(value.parse::<Mode>().map_err(|_| KeyFileError::BadValue {
                line: line_no,
                field,
            })?);
            values.push(BigUint::default());
            continue;
        }
        let parsed = parse_decimal(value).ok_or(KeyFileError::BadValue {
            line: line_no,
            field,
        })?;
        values.push(parsed);
    }
    let mode = mode.expect("mode line present");

    let version = u32::try_from(&values[0]).map_err(|_| KeyFileError::Version(u32::MAX))?;
    if version != KEY_FILE_VERSION {
        return Err(KeyFileError::Version(version));
    }
    let a = u32::try_from(&values[2]).map_err(|_| KeyFileError::BadValue { line: 3, field: "a" })?;
    let (n, alpha) = (values[3].clone(), values[4].clone());

    let material = if values.len() == 5 {
        KeyMaterial::Public(CubicPublicKey::new(n, alpha, a)?)
    } else {
        let q = (!values[6].is_one()).then(|| values[6].clone());
        let key = CubicPrivateKey::from_primes(values[5].clone(), q, a)?;
        let checks: [(&'static str, &BigUint, &BigUint); 4] = [
            ("n", &n, key.public().n()),
            ("alpha", &alpha, key.public().alpha()),
            ("phi", &values[7], key.phi()),
            ("e", &values[8], key.e()),
        ];
        for (name, stated, derived) in checks {
            if stated != derived {
                return Err(KeyFileError::Inconsistent(name));
            }
        }
        KeyMaterial::Private(key)
    };
    if material.public().mode() != mode {
        return Err(KeyFileError::Inconsistent("mode"));
    }
    Ok(material)
}
