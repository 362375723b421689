//! Block accounting for the proxy cache.
//!
//! Blocks are counters only. The prefix region holds per-title prefix
//! allocations and the suffix region holds interval-cache reservations.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Prefix,
    Suffix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPool {
    total_blocks: u64,
    prefix_capacity: u64,
    suffix_capacity: u64,
    prefix_free: u64,
    suffix_free: u64,
}

impl BlockPool {
    pub fn new(total: u64, prefix_share: f64) -> Result<Self> {
        if total == 0 {
            return Err(Error::Config("total_blocks must be >= 1".into()));
        }
        if !(prefix_share > 0.0 && prefix_share < 1.0) {
            return Err(Error::Config(format!(
                "prefix_share {prefix_share} outside (0, 1)"
            )));
        }
        let prefix_capacity = ((prefix_share * total as f64).round() as u64).min(total);
        let suffix_capacity = total - prefix_capacity;
        Ok(Self {
            total_blocks: total,
            prefix_capacity,
            suffix_capacity,
            prefix_free: prefix_capacity,
            suffix_free: suffix_capacity,
        })
    }

    pub fn total_blocks(&self) -> u64 {
        self.total_blocks
    }

    pub fn capacity(&self, region: Region) -> u64 {
        match region {
            Region::Prefix => self.prefix_capacity,
            Region::Suffix => self.suffix_capacity,
        }
    }

    pub fn free(&self, region: Region) -> u64 {
        match region {
            Region::Prefix => self.prefix_free,
            Region::Suffix => self.suffix_free,
        }
    }

    pub fn used(&self, region: Region) -> u64 {
        self.capacity(region) - self.free(region)
    }

    /// Fraction of the whole pool (both regions) in use.
    pub fn utilization(&self) -> f64 {
        let used = self.used(Region::Prefix) + self.used(Region::Suffix);
        used as f64 / self.total_blocks as f64
    }

    fn free_mut(&mut self, region: Region) -> &mut u64 {
        match region {
            Region::Prefix => &mut self.prefix_free,
            Region::Suffix => &mut self.suffix_free,
        }
    }

    pub fn reserve(&mut self, region: Region, n: u64) -> Result<()> {
        let free = self.free_mut(region);
        if n > *free {
            return Err(Error::Capacity {
                requested: n,
                free: *free,
            });
        }
        *free -= n;
        Ok(())
    }

    pub fn release(&mut self, region: Region, n: u64) -> Result<()> {
        let capacity = self.capacity(region);
        let free = self.free_mut(region);
        if *free + n > capacity {
            return Err(Error::Accounting(format!(
                "releasing {n} blocks to {region:?} region with {free} of {capacity} free",
                free = *free
            )));
        }
        *free += n;
        Ok(())
    }

    /// Checks `free + held == capacity` for one region.
    pub fn check_conserved(&self, region: Region, held: u64) -> Result<()> {
        let free = self.free(region);
        let capacity = self.capacity(region);
        if free + held != capacity {
            return Err(Error::Accounting(format!(
                "{region:?} region: free {free} + held {held} != capacity {capacity}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_split_of_default_pool() {
        let pool = BlockPool::new(1500, 0.5).unwrap();
        assert_eq!(pool.capacity(Region::Prefix), 750);
        assert_eq!(pool.capacity(Region::Suffix), 750);
        assert_eq!(pool.free(Region::Prefix), 750);
        assert_eq!(pool.free(Region::Suffix), 750);
        assert_eq!(pool.utilization(), 0.0);
    }

    #[test]
    fn smallest_split() {
        let pool = BlockPool::new(2, 0.5).unwrap();
        assert_eq!(pool.capacity(Region::Prefix), 1);
        assert_eq!(pool.capacity(Region::Suffix), 1);
    }

    #[test]
    fn bad_share_and_total() {
        assert!(BlockPool::new(1500, 0.0).is_err());
        assert!(BlockPool::new(1500, 1.0).is_err());
        assert!(BlockPool::new(1500, -0.2).is_err());
        assert!(BlockPool::new(0, 0.5).is_err());
    }

    #[test]
    fn reserve_release_arithmetic() {
        let mut pool = BlockPool::new(1500, 0.5).unwrap();
        pool.reserve(Region::Prefix, 30).unwrap();
        assert_eq!(pool.free(Region::Prefix), 720);
        pool.reserve(Region::Prefix, 0).unwrap();
        assert_eq!(pool.free(Region::Prefix), 720);
        pool.release(Region::Prefix, 30).unwrap();
        assert_eq!(pool.free(Region::Prefix), 750);
        pool.release(Region::Prefix, 0).unwrap();
        assert_eq!(pool.free(Region::Prefix), 750);
    }

    #[test]
    fn over_reserve_is_capacity_error() {
        let mut pool = BlockPool::new(20, 0.5).unwrap();
        assert_eq!(
            pool.reserve(Region::Suffix, 11),
            Err(Error::Capacity {
                requested: 11,
                free: 10
            })
        );
        assert_eq!(pool.free(Region::Suffix), 10);
    }

    #[test]
    fn over_release_is_accounting_error() {
        let mut pool = BlockPool::new(1500, 0.5).unwrap();
        assert!(matches!(
            pool.release(Region::Prefix, 1),
            Err(Error::Accounting(_))
        ));
        assert_eq!(pool.free(Region::Prefix), 750);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Reserve(bool, u64),
        Release(bool, u64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (any::<bool>(), 0u64..80).prop_map(|(p, n)| Op::Reserve(p, n)),
            (any::<bool>(), 0u64..80).prop_map(|(p, n)| Op::Release(p, n)),
        ]
    }

    proptest! {
        #[test]
        fn conservation_and_isolation(total in 2u64..400, share in 0.05f64..0.95, ops in prop::collection::vec(op(), 0..60)) {
            let mut pool = BlockPool::new(total, share).unwrap();
            prop_assert_eq!(pool.capacity(Region::Prefix) + pool.capacity(Region::Suffix), total);
            let mut held = [0u64; 2];
            for op in ops {
                let (Op::Reserve(prefix, _) | Op::Release(prefix, _)) = op;
                let (region, idx) = if prefix { (Region::Prefix, 0) } else { (Region::Suffix, 1) };
                let other = if idx == 0 { Region::Suffix } else { Region::Prefix };
                let other_free = pool.free(other);
                match op {
                    Op::Reserve(_, n) => if pool.reserve(region, n).is_ok() { held[idx] += n },
                    Op::Release(_, n) => if pool.release(region, n).is_ok() { held[idx] -= n },
                }
                prop_assert_eq!(pool.free(other), other_free);
                pool.check_conserved(Region::Prefix, held[0]).unwrap();
                pool.check_conserved(Region::Suffix, held[1]).unwrap();
            }
        }
    }
}
