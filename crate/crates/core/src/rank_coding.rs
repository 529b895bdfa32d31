//! Rank bits appended below the least-significant bit of a ciphertext.
//!
//! The three-root code is prefix-free when read LSB first: `0` is rank 1,
//! `1` then `0` is rank 2, `1` then `1` is rank 3. As integers that is
//! `2c`, `4c + 1` and `4c + 3`. Four roots (square transformations) use a
//! fixed two-bit field `4c + (rank - 1)`.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::ToPrimitive;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RankError {
    #[error("rank {rank} outside [1, {max}]")]
    BadRank { rank: u32, max: u32 },
}

/// Appends the three-root rank code to `c`.
pub fn encode_rank3(c: &BigUint, rank: u32) -> Result<BigUint, RankError> {
    match rank {
        1 => Ok(c << 1),
        2 => Ok((c << 2) + 1u8),
        3 => Ok((c << 2) + 3u8),
        _ => Err(RankError::BadRank { rank, max: 3 }),
    }
}

/// Splits a framed value into ciphertext and rank, reading the low bits
/// one at a time.
pub fn decode_rank3(v: &BigUint) -> (BigUint, u32) {
    if !v.bit(0) {
        return (v >> 1, 1);
    }
    if !v.bit(1) {
        (v >> 2, 2)
    } else {
        (v >> 2, 3)
    }
}

pub fn encode_rank4(c: &BigUint, rank: u32) -> Result<BigUint, RankError> {
    encode_fixed(c, rank, 4)
}

pub fn decode_rank4(v: &BigUint) -> (BigUint, u32) {
    decode_fixed(v, 4).expect("every two-bit field is a valid rank")
}

fn field_width(ranks: u32) -> u32 {
    // ceil(log2(ranks)), at least one bit
    (u32::BITS - (ranks - 1).leading_zeros()).max(1)
}

fn encode_fixed(c: &BigUint, rank: u32, ranks: u32) -> Result<BigUint, RankError> {
    if rank == 0 || rank > ranks {
        return Err(RankError::BadRank { rank, max: ranks });
    }
    Ok((c << field_width(ranks)) + (rank - 1))
}

fn decode_fixed(v: &BigUint, ranks: u32) -> Result<(BigUint, u32), RankError> {
    let width = field_width(ranks);
    let (c, low) = v.div_rem(&(BigUint::from(1u8) << width));
    let rank = low.to_u32().expect("field narrower than 32 bits") + 1;
    if rank > ranks {
        return Err(RankError::BadRank { rank, max: ranks });
    }
    Ok((c, rank))
}

/// How ranks are framed for a transformation with a given number of roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankCode {
    /// Variable-length `0` / `01` / `11` code for three roots.
    Prefix3,
    /// Fixed-width field of `ceil(log2(ranks))` bits holding `rank - 1`.
    Fixed { ranks: u32 },
}

impl RankCode {
    pub fn for_roots(ranks: u32) -> Self {
        if ranks == 3 {
            RankCode::Prefix3
        } else {
            RankCode::Fixed { ranks }
        }
    }

    pub fn encode(&self, c: &BigUint, rank: u32) -> Result<BigUint, RankError> {
        match *self {
            RankCode::Prefix3 => encode_rank3(c, rank),
            RankCode::Fixed { ranks } => encode_fixed(c, rank, ranks),
        }
    }

    pub fn decode(&self, v: &BigUint) -> Result<(BigUint, u32), RankError> {
        match *self {
            RankCode::Prefix3 => Ok(decode_rank3(v)),
            RankCode::Fixed { ranks } => decode_fixed(v, ranks),
        }
    }

    /// Number of bits appended for `rank`.
    pub fn appended_bits(&self, rank: u32) -> u32 {
        match *self {
            RankCode::Prefix3 if rank == 1 => 1,
            RankCode::Prefix3 => 2,
            RankCode::Fixed { ranks } => field_width(ranks),
        }
    }
}
