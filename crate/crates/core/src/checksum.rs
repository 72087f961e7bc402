//! Fletcher-style rolling checksum over 64-bit little-endian words.
//!
//! Used to validate payloads end to end: by the per-cell check in debug
//! builds, by the benchmarks and by the stress tests.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rolling {
    a: u64,
    b: u64,
    len: u64,
}

impl Default for Rolling {
    fn default() -> Self {
        Self::new()
    }
}

impl Rolling {
    pub const fn new() -> Self {
        Rolling { a: 1, b: 0, len: 0 }
    }

    /// Feeds `data` as a standalone block. Feeding the same bytes in
    /// different splits gives different values; streams are compared
    /// message by message, which is what the callers do.
    pub fn update(&mut self, data: &[u8]) {
        let mut words = data.chunks_exact(8);
        for w in &mut words {
            let v = u64::from_le_bytes(w.try_into().unwrap());
            self.a = self.a.wrapping_add(v);
            self.b = self.b.wrapping_add(self.a);
        }
        let rest = words.remainder();
        if !rest.is_empty() {
            let mut tail = [0u8; 8];
            tail[..rest.len()].copy_from_slice(rest);
            self.a = self.a.wrapping_add(u64::from_le_bytes(tail));
            self.b = self.b.wrapping_add(self.a);
        }
        self.len = self.len.wrapping_add(data.len() as u64);
        self.b = self.b.wrapping_add(self.len.rotate_left(17));
    }

    pub fn value(&self) -> u64 {
        (self.b.rotate_left(32) ^ self.a).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

pub fn checksum(data: &[u8]) -> u64 {
    let mut r = Rolling::new();
    r.update(data);
    r.value()
}

/// Deterministic payload pattern; `seed` selects the stream.
pub fn fill_pattern(buf: &mut [u8], seed: u64) {
    let mut x = seed ^ 0xD1B5_4A32_D192_ED03;
    for chunk in buf.chunks_mut(8) {
        // splitmix64
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes()[..chunk.len()]);
    }
}
