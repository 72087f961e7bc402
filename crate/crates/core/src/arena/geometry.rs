use crate::error::{Error, Result};

/// Default first-level bucket cap and level count.
pub const DEFAULT_LEVEL_CAP: u64 = 200_000;
pub const DEFAULT_LEVELS: usize = 10;
/// Largest level count the on-device header can describe.
pub const MAX_LEVELS: usize = 32;

/// The `levels` largest primes `<= cap`, in descending order.
pub fn prime_levels(cap: u64, levels: usize) -> Result<Vec<u64>> {
    if levels == 0 {
        return Err(Error::InvalidGeometry("at least one level required".into()));
    }
    if cap < 3 {
        return Err(Error::NotEnoughPrimes {
            cap,
            wanted: levels,
            found: if cap == 2 { 1 } else { 0 },
        });
    }
    let n = usize::try_from(cap).map_err(|_| Error::InvalidGeometry("cap too large".into()))?;
    let mut composite = vec![false; n + 1];
    composite[0] = true;
    composite[1] = true;
    let mut i = 2;
    while i * i <= n {
        if !composite[i] {
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
        i += 1;
    }
    let primes: Vec<u64> = (2..=n)
        .rev()
        .filter(|&k| !composite[k])
        .take(levels)
        .map(|k| k as u64)
        .collect();
    if primes.len() < levels {
        return Err(Error::NotEnoughPrimes {
            cap,
            wanted: levels,
            found: primes.len(),
        });
    }
    Ok(primes)
}

/// Bucket counts of the multi-level hash, one slot per bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashGeometry {
    level_primes: Vec<u64>,
}

impl Default for HashGeometry {
    fn default() -> Self {
        HashGeometry::from_cap(DEFAULT_LEVEL_CAP, DEFAULT_LEVELS).expect("default geometry")
    }
}

impl HashGeometry {
    pub fn from_cap(cap: u64, levels: usize) -> Result<Self> {
        HashGeometry::new(prime_levels(cap, levels)?)
    }

    /// Arbitrary geometry; bucket counts must be distinct primes in strictly
    /// descending order.
    pub fn new(level_primes: Vec<u64>) -> Result<Self> {
        if level_primes.is_empty() || level_primes.len() > MAX_LEVELS {
            return Err(Error::InvalidGeometry(format!(
                "{} levels, 1..={MAX_LEVELS} allowed",
                level_primes.len()
            )));
        }
        if let Some(p) = level_primes.iter().find(|&&p| !is_prime(p)) {
            return Err(Error::InvalidGeometry(format!("{p} is not prime")));
        }
        if level_primes.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidGeometry(
                "bucket counts must be strictly descending".into(),
            ));
        }
        Ok(HashGeometry { level_primes })
    }

    pub fn levels(&self) -> usize {
        self.level_primes.len()
    }

    pub fn level_primes(&self) -> &[u64] {
        &self.level_primes
    }

    pub fn slot_total(&self) -> u64 {
        self.level_primes.iter().sum()
    }

    /// Flattened index of the first slot of `level`.
    pub fn level_base(&self, level: usize) -> u64 {
        self.level_primes[..level].iter().sum()
    }

    /// Flattened slot index for `name` at `level`.
    pub fn slot_for(&self, name: &[u8], level: usize) -> u64 {
        self.level_base(level) + level_hash(name, level) % self.level_primes[level]
    }

    /// (level, bucket) of a flattened slot index.
    pub fn locate(&self, slot: u64) -> (usize, u64) {
        let mut base = 0;
        for (l, &p) in self.level_primes.iter().enumerate() {
            if slot < base + p {
                return (l, slot - base);
            }
            base += p;
        }
        panic!("slot {slot} beyond geometry");
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the name, seeded per level and finished with a
/// multiply-xorshift so that the low-order residues differ between levels.
/// Part of the on-device format: changing it invalidates existing arenas.
pub fn level_hash(name: &[u8], level: usize) -> u64 {
    let mut h = FNV_OFFSET ^ ((level as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for &b in name {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}
