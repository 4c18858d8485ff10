//! The DES primitive over canonical 56-bit keys.
//!
//! Bit numbering follows FIPS 46: bit 1 is the most significant bit of the
//! 64-bit block. Keys are handled as 56-bit integers with the parity bits
//! already removed; [`strip_parity`] converts from the customary 64-bit form.

/// Initial permutation.
const IP: [u8; 64] = [
    58, 50, 42, 34, 26, 18, 10, 2, 60, 52, 44, 36, 28, 20, 12, 4, 62, 54, 46, 38, 30, 22, 14, 6,
    64, 56, 48, 40, 32, 24, 16, 8, 57, 49, 41, 33, 25, 17, 9, 1, 59, 51, 43, 35, 27, 19, 11, 3,
    61, 53, 45, 37, 29, 21, 13, 5, 63, 55, 47, 39, 31, 23, 15, 7,
];

/// Final permutation (inverse of IP).
const FP: [u8; 64] = [
    40, 8, 48, 16, 56, 24, 64, 32, 39, 7, 47, 15, 55, 23, 63, 31, 38, 6, 46, 14, 54, 22, 62, 30,
    37, 5, 45, 13, 53, 21, 61, 29, 36, 4, 44, 12, 52, 20, 60, 28, 35, 3, 43, 11, 51, 19, 59, 27,
    34, 2, 42, 10, 50, 18, 58, 26, 33, 1, 41, 9, 49, 17, 57, 25,
];

/// Expansion of the 32-bit half into 48 bits.
const E: [u8; 48] = [
    32, 1, 2, 3, 4, 5, 4, 5, 6, 7, 8, 9, 8, 9, 10, 11, 12, 13, 12, 13, 14, 15, 16, 17, 16, 17,
    18, 19, 20, 21, 20, 21, 22, 23, 24, 25, 24, 25, 26, 27, 28, 29, 28, 29, 30, 31, 32, 1,
];

/// Permutation applied to the S-box output.
const P: [u8; 32] = [
    16, 7, 20, 21, 29, 12, 28, 17, 1, 15, 23, 26, 5, 18, 31, 10, 2, 8, 24, 14, 32, 27, 3, 9, 19,
    13, 30, 6, 22, 11, 4, 25,
];

/// Permuted choice 1, applied to the 64-bit key form (parity positions unused).
const PC1: [u8; 56] = [
    57, 49, 41, 33, 25, 17, 9, 1, 58, 50, 42, 34, 26, 18, 10, 2, 59, 51, 43, 35, 27, 19, 11, 3,
    60, 52, 44, 36, 63, 55, 47, 39, 31, 23, 15, 7, 62, 54, 46, 38, 30, 22, 14, 6, 61, 53, 45, 37,
    29, 21, 13, 5, 28, 20, 12, 4,
];

/// Permuted choice 2, selecting the 48-bit round key from C‖D.
const PC2: [u8; 48] = [
    14, 17, 11, 24, 1, 5, 3, 28, 15, 6, 21, 10, 23, 19, 12, 4, 26, 8, 16, 7, 27, 20, 13, 2, 41,
    52, 31, 37, 47, 55, 30, 40, 51, 45, 33, 48, 44, 49, 39, 56, 34, 53, 46, 42, 50, 36, 29, 32,
];

const SHIFTS: [u8; 16] = [1, 1, 2, 2, 2, 2, 2, 2, 1, 2, 2, 2, 2, 2, 2, 1];

const SBOXES: [[u8; 64]; 8] = [
    [
        14, 4, 13, 1, 2, 15, 11, 8, 3, 10, 6, 12, 5, 9, 0, 7, 0, 15, 7, 4, 14, 2, 13, 1, 10, 6,
        12, 11, 9, 5, 3, 8, 4, 1, 14, 8, 13, 6, 2, 11, 15, 12, 9, 7, 3, 10, 5, 0, 15, 12, 8, 2,
        4, 9, 1, 7, 5, 11, 3, 14, 10, 0, 6, 13,
    ],
    [
        15, 1, 8, 14, 6, 11, 3, 4, 9, 7, 2, 13, 12, 0, 5, 10, 3, 13, 4, 7, 15, 2, 8, 14, 12, 0,
        1, 10, 6, 9, 11, 5, 0, 14, 7, 11, 10, 4, 13, 1, 5, 8, 12, 6, 9, 3, 2, 15, 13, 8, 10, 1,
        3, 15, 4, 2, 11, 6, 7, 12, 0, 5, 14, 9,
    ],
    [
        10, 0, 9, 14, 6, 3, 15, 5, 1, 13, 12, 7, 11, 4, 2, 8, 13, 7, 0, 9, 3, 4, 6, 10, 2, 8, 5,
        14, 12, 11, 15, 1, 13, 6, 4, 9, 8, 15, 3, 0, 11, 1, 2, 12, 5, 10, 14, 7, 1, 10, 13, 0, 6,
        9, 8, 7, 4, 15, 14, 3, 11, 5, 2, 12,
    ],
    [
        7, 13, 14, 3, 0, 6, 9, 10, 1, 2, 8, 5, 11, 12, 4, 15, 13, 8, 11, 5, 6, 15, 0, 3, 4, 7, 2,
        12, 1, 10, 14, 9, 10, 6, 9, 0, 12, 11, 7, 13, 15, 1, 3, 14, 5, 2, 8, 4, 3, 15, 0, 6, 10,
        1, 13, 8, 9, 4, 5, 11, 12, 7, 2, 14,
    ],
    [
        2, 12, 4, 1, 7, 10, 11, 6, 8, 5, 3, 15, 13, 0, 14, 9, 14, 11, 2, 12, 4, 7, 13, 1, 5, 0,
        15, 10, 3, 9, 8, 6, 4, 2, 1, 11, 10, 13, 7, 8, 15, 9, 12, 5, 6, 3, 0, 14, 11, 8, 12, 7,
        1, 14, 2, 13, 6, 15, 0, 9, 10, 4, 5, 3,
    ],
    [
        12, 1, 10, 15, 9, 2, 6, 8, 0, 13, 3, 4, 14, 7, 5, 11, 10, 15, 4, 2, 7, 12, 9, 5, 6, 1,
        13, 14, 0, 11, 3, 8, 9, 14, 15, 5, 2, 8, 12, 3, 7, 0, 4, 10, 1, 13, 11, 6, 4, 3, 2, 12,
        9, 5, 15, 10, 11, 14, 1, 7, 6, 0, 8, 13,
    ],
    [
        4, 11, 2, 14, 15, 0, 8, 13, 3, 12, 9, 7, 5, 10, 6, 1, 13, 0, 11, 7, 4, 9, 1, 10, 14, 3,
        5, 12, 2, 15, 8, 6, 1, 4, 11, 13, 12, 3, 7, 14, 10, 15, 6, 8, 0, 5, 9, 2, 6, 11, 13, 8,
        1, 4, 10, 7, 9, 5, 0, 15, 14, 2, 3, 12,
    ],
    [
        13, 2, 8, 4, 6, 15, 11, 1, 10, 9, 3, 14, 5, 0, 12, 7, 1, 15, 13, 8, 10, 3, 7, 4, 12, 5,
        6, 11, 0, 14, 9, 2, 7, 11, 4, 1, 9, 12, 14, 2, 0, 6, 10, 13, 15, 3, 5, 8, 2, 1, 14, 7, 4,
        10, 8, 13, 15, 12, 9, 0, 3, 5, 6, 11,
    ],
];

/// Applies a FIPS-style permutation table: output bit j (1-based, MSB first)
/// is input bit `table[j-1]` of an `in_width`-bit value.
fn permute(x: u64, in_width: u32, table: &[u8]) -> u64 {
    let mut out = 0;
    for &src in table {
        out = (out << 1) | ((x >> (in_width - src as u32)) & 1);
    }
    out
}

/// Drops the eight parity bits of a 64-bit DES key, yielding the canonical
/// 56-bit key value.
pub fn strip_parity(key64: u64) -> u64 {
    let mut out = 0;
    for g in 0..8 {
        let byte = (key64 >> (56 - 8 * g)) & 0xff;
        out = (out << 7) | (byte >> 1);
    }
    out
}

/// Inserts zero parity bits, mapping a canonical 56-bit key back to the
/// 64-bit layout expected by PC-1 (and by external implementations).
pub fn widen_key(key56: u64) -> u64 {
    let mut out = 0;
    for g in 0..8 {
        let seven = (key56 >> (49 - 7 * g)) & 0x7f;
        out = (out << 8) | (seven << 1);
    }
    out
}

fn round_keys(key56: u64) -> [u64; 16] {
    let cd = permute(widen_key(key56), 64, &PC1);
    let mut c = (cd >> 28) as u32;
    let mut d = (cd & 0x0fff_ffff) as u32;
    let mut keys = [0u64; 16];
    for (i, &s) in SHIFTS.iter().enumerate() {
        c = ((c << s) | (c >> (28 - s as u32))) & 0x0fff_ffff;
        d = ((d << s) | (d >> (28 - s as u32))) & 0x0fff_ffff;
        keys[i] = permute(((c as u64) << 28) | d as u64, 56, &PC2);
    }
    keys
}

fn feistel(half: u32, round_key: u64) -> u32 {
    let x = permute(half as u64, 32, &E) ^ round_key;
    let mut s_out = 0u64;
    for (i, sbox) in SBOXES.iter().enumerate() {
        let six = (x >> (42 - 6 * i)) & 0x3f;
        let row = ((six >> 4) & 0b10) | (six & 1);
        let col = (six >> 1) & 0xf;
        s_out = (s_out << 4) | sbox[(row * 16 + col) as usize] as u64;
    }
    permute(s_out, 32, &P) as u32
}

fn rounds(block: u64, keys: impl Iterator<Item = u64>) -> u64 {
    let pre = permute(block, 64, &IP);
    let mut left = (pre >> 32) as u32;
    let mut right = pre as u32;
    for key in keys {
        let next = left ^ feistel(right, key);
        left = right;
        right = next;
    }
    // The halves are swapped before the final permutation.
    permute(((right as u64) << 32) | left as u64, 64, &FP)
}

pub fn encrypt(key56: u64, block: u64) -> u64 {
    rounds(block, round_keys(key56).into_iter())
}

pub fn decrypt(key56: u64, block: u64) -> u64 {
    rounds(block, round_keys(key56).into_iter().rev())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cipher::des_kat_vectors;

    #[test]
    fn parity_round_trip() {
        for k in [0u64, 0x00ff_ffff_ffff_ffff, 0x0123_4567_89ab_cdef & 0x00ff_ffff_ffff_ffff] {
            assert_eq!(strip_parity(widen_key(k)), k);
        }
    }

    #[test]
    fn known_answer_vectors() {
        let vectors = des_kat_vectors();
        assert!(vectors.len() >= 30);
        for (key, pt, ct) in vectors {
            assert_eq!(encrypt(key.0, pt.0), ct.0, "encrypt mismatch for key {:014x}", key.0);
            assert_eq!(decrypt(key.0, ct.0), pt.0, "decrypt mismatch for key {:014x}", key.0);
        }
    }

    // Cross-check against an unrelated DES implementation on random inputs.
    #[test]
    fn matches_reference_implementation() {
        use des::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};

        let mut state = 0x3c6e_f372_fe94_f82bu64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state
        };
        for _ in 0..1000 {
            let key56 = next() & 0x00ff_ffff_ffff_ffff;
            let pt = next();
            let reference = des::Des::new_from_slice(&widen_key(key56).to_be_bytes()).unwrap();
            let mut block = pt.to_be_bytes().into();
            reference.encrypt_block(&mut block);
            let want = u64::from_be_bytes(block.into());
            assert_eq!(encrypt(key56, pt), want);
            reference.decrypt_block(&mut block);
            assert_eq!(u64::from_be_bytes(block.into()), pt);
            assert_eq!(decrypt(key56, want), pt);
        }
    }

    #[test]
    fn wrong_key_does_not_decrypt() {
        let mut state = 0x0f0f_1e1e_2d2d_3c3cu64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            state
        };
        for _ in 0..200 {
            let key = next() & 0x00ff_ffff_ffff_ffff;
            let wrong = (key + 1) & 0x00ff_ffff_ffff_ffff;
            let pt = next();
            // Chance agreement per trial is 2^-64.
            assert_ne!(decrypt(wrong, encrypt(key, pt)), pt);
        }
    }

    #[test]
    fn complementation_property() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..1000 {
            let key = next() & 0x00ff_ffff_ffff_ffff;
            let pt = next();
            let lhs = !encrypt(key, pt);
            let rhs = encrypt(!key & 0x00ff_ffff_ffff_ffff, !pt);
            assert_eq!(lhs, rhs);
        }
    }
}
