//! SplitMix64, the single pseudo-random source used for benchmark inputs,
//! victim selection and deterministic scheduling.

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform-ish value in `0..n` (modulo reduction; `n > 0`).
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    /// Benchmark input in `[1, 2^31)`.
    pub fn positive(&mut self) -> i64 {
        1 + self.below((1 << 31) - 1) as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_values_for_seed_42() {
        let mut r = SplitMix64::new(42);
        assert_eq!(r.next_u64(), 0xbdd7_3226_2feb_6e95);
        assert_eq!(r.next_u64(), 0x28ef_e333_b266_f103);
        assert_eq!(r.next_u64(), 0x4752_6757_130f_9f52);
    }

    #[test]
    fn positive_range() {
        let mut r = SplitMix64::new(7);
        for _ in 0..10_000 {
            let v = r.positive();
            assert!((1..1 << 31).contains(&v));
        }
    }
}
