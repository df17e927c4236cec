//! Named sub-seeds so every random component can be reproduced on its own.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the component called `label` under the run seed `seed`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label.
    let h = label
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01B3));
    splitmix64(seed ^ splitmix64(h))
}

/// Seed for epoch `epoch` of a stream seeded with `seed`.
pub fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(epoch)))
}
