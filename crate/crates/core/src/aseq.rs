//! Seeded full-period enumeration of the block space.
//!
//! Trial values are drawn as `perm(0), perm(1), ...` where `perm` is a
//! seed-keyed bijection on `[0, 2^b)` built from width-restricted
//! multiply/xorshift steps (each step is invertible modulo 2^b). Working
//! through a permutation instead of independent random draws removes any
//! risk of repeating a trial value, and random access by index lets workers
//! claim disjoint iteration ranges without shared state.

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
pub struct ASequence {
    bits: u32,
    mask: u64,
    xor1: u64,
    xor2: u64,
    mul1: u64,
    mul2: u64,
    s1: u32,
    s2: u32,
}

impl ASequence {
    pub fn new(bits: u32, seed: u64) -> Self {
        assert!((1..=64).contains(&bits), "sequence width must be within 1..=64");
        let mask = crate::cipher::mask(bits);
        let mut state = seed;
        ASequence {
            bits,
            mask,
            xor1: splitmix64(&mut state) & mask,
            xor2: splitmix64(&mut state) & mask,
            mul1: splitmix64(&mut state) | 1,
            mul2: splitmix64(&mut state) | 1,
            s1: (bits / 2).max(1),
            s2: (bits / 3).max(1),
        }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of distinct values, saturating at u64::MAX for 64-bit widths.
    pub fn period(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            1u64 << self.bits
        }
    }

    /// The index-th element of the permutation. Bijective in `index` over
    /// `[0, 2^bits)`: every step below is invertible on that domain.
    pub fn nth(&self, index: u64) -> u64 {
        debug_assert!(index <= self.mask);
        let mut x = index ^ self.xor1;
        x = x.wrapping_mul(self.mul1) & self.mask;
        x ^= x >> self.s1;
        x = x.wrapping_mul(self.mul2) & self.mask;
        x ^= x >> self.s2;
        x ^ self.xor2
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        (0..=self.mask).map(move |i| self.nth(i))
    }
}
