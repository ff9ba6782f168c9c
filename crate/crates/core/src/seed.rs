//! Master-seed splitting.
//!
//! A component seed is the first eight bytes (little-endian) of
//! `SHA-256(master_seed.to_le_bytes() || component_name)`. Adding a component
//! never shifts the seeds of the others.

use sha2::{Digest, Sha256};

pub fn sub_seed(master: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(component.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}
