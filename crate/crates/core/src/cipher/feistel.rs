//! A scaled-down balanced Feistel cipher with the complementation property.
//!
//! The construction mirrors the structural reasons DES has the property:
//! every round key is a bit-selection of the master key (complementing the
//! key complements each round key), and the round key is XORed into the
//! right half before a fixed public mixing function, so complemented inputs
//! cancel inside the round function.
//!
//! No cryptographic strength is claimed; the cipher only has to be a
//! bijection per key, diffuse well enough for unbiased experiments, and
//! carry the complementation property.

const MUL1: u64 = 0x9e37_79b9_7f4a_7c15;
const MUL2: u64 = 0xbf58_476d_1ce4_e5b9;
const MUL3: u64 = 0x94d0_49bb_1331_11eb;

/// Fixed public mixer on `h`-bit values. Need not be invertible: the Feistel
/// structure supplies bijectivity.
#[inline]
fn mix(x: u64, h: u32, mask: u64) -> u64 {
    let s1 = (h / 2).max(1);
    let s2 = (h / 3).max(1);
    let mut v = x.wrapping_mul(MUL1) & mask;
    v ^= v >> s1;
    v = v.wrapping_mul(MUL2) & mask;
    v ^= v >> s2;
    v = v.wrapping_mul(MUL3) & mask;
    v ^ (v >> s1)
}

/// Round key r: `h` consecutive bits of the master key starting at position
/// 7r (mod k), wrapping and repeating when h > k. A pure bit-selection, so a
/// complemented master key complements every round key.
#[inline]
fn round_key(key: u64, k: u32, round: u32, h: u32, hmask: u64) -> u64 {
    let kmask = (1u64 << k) - 1;
    let s = (round * 7) % k;
    let mut rk = ((key >> s) | (key << (k - s))) & kmask;
    let mut width = k;
    while width < h {
        rk |= rk << width;
        width *= 2;
    }
    rk & hmask
}

#[inline]
pub fn encrypt(block_bits: u32, key_bits: u32, rounds: u32, key: u64, p: u64) -> u64 {
    let h = block_bits / 2;
    let hmask = (1u64 << h) - 1;
    let mut l = p >> h;
    let mut r = p & hmask;
    for rd in 0..rounds {
        let rk = round_key(key, key_bits, rd, h, hmask);
        let next = l ^ mix(r ^ rk, h, hmask);
        l = r;
        r = next;
    }
    (l << h) | r
}

#[inline]
pub fn decrypt(block_bits: u32, key_bits: u32, rounds: u32, key: u64, c: u64) -> u64 {
    let h = block_bits / 2;
    let hmask = (1u64 << h) - 1;
    let mut l = c >> h;
    let mut r = c & hmask;
    for rd in (0..rounds).rev() {
        let rk = round_key(key, key_bits, rd, h, hmask);
        let prev = r ^ mix(l ^ rk, h, hmask);
        r = l;
        l = prev;
    }
    (l << h) | r
}
