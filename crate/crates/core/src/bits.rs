//! Bitstring conventions shared by every module.
//!
//! Qubit `q` is bit `q` of a basis-state index and character `q` (from the
//! left) of a bitstring key. A measured bit `b` corresponds to the spin
//! `z = 1 - 2b`, so bit 0 is spin +1.

use crate::{Error, Result};

/// Spin value of qubit `q` in basis state `index`.
#[inline]
pub fn spin(index: usize, q: usize) -> f64 {
    if (index >> q) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn index_to_bitstring(index: usize, n: usize) -> String {
    (0..n).map(|q| if (index >> q) & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn bitstring_to_index(s: &str) -> Result<usize> {
    if s.len() > usize::BITS as usize - 1 {
        return Err(Error::InvalidArgument(format!("bitstring too long: {} chars", s.len())));
    }
    s.chars().enumerate().try_fold(0usize, |acc, (q, c)| match c {
        '0' => Ok(acc),
        '1' => Ok(acc | (1 << q)),
        other => Err(Error::InvalidArgument(format!("bad character {other:?} in bitstring {s:?}"))),
    })
}

pub fn spins_to_index(z: &[i8]) -> Result<usize> {
    z.iter().enumerate().try_fold(0usize, |acc, (q, &s)| match s {
        1 => Ok(acc),
        -1 => Ok(acc | (1 << q)),
        other => Err(Error::InvalidArgument(format!("spin must be +1 or -1, got {other}"))),
    })
}

pub fn index_to_spins(index: usize, n: usize) -> Vec<i8> {
    (0..n).map(|q| if (index >> q) & 1 == 0 { 1 } else { -1 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leftmost_character_is_qubit_zero() {
        assert_eq!(index_to_bitstring(1, 3), "100");
        assert_eq!(bitstring_to_index("001").unwrap(), 4);
        assert_eq!(bitstring_to_index("01").unwrap(), 2);
    }

    #[test]
    fn bit_zero_is_spin_plus_one() {
        assert_eq!(index_to_spins(0b10, 2), vec![1, -1]);
        assert_eq!(spins_to_index(&[1, -1]).unwrap(), 0b10);
        assert_eq!(spin(0b10, 1), -1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(bitstring_to_index("0x1").is_err());
        assert!(spins_to_index(&[0]).is_err());
    }

    #[test]
    fn roundtrip() {
        for i in 0..64 {
            assert_eq!(bitstring_to_index(&index_to_bitstring(i, 6)).unwrap(), i);
            assert_eq!(spins_to_index(&index_to_spins(i, 6)).unwrap(), i);
        }
    }
}
