//! Seed splitting: every consumer of randomness gets its own ChaCha stream
//! derived from the run seed, so adding a consumer never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named randomness consumers. The discriminant is the ChaCha stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    FeatureInit = 1,
    ClassifierInit = 2,
    DiscriminatorInit = 3,
    Batches = 4,
    SourceData = 5,
    TargetData = 6,
    HeldOutData = 7,
    Patches = 8,
    Probe = 9,
    Split = 10,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Full serializable state of a ChaCha8 generator as 32-bit words:
/// 8 seed words, 2 stream words and 4 word-position words.
pub fn save_state(rng: &ChaCha8Rng) -> Vec<u32> {
    let mut words = Vec::with_capacity(14);
    for chunk in rng.get_seed().chunks(4) {
        words.push(u32::from_le_bytes(chunk.try_into().expect("4-byte chunk")));
    }
    let stream = rng.get_stream();
    words.push(stream as u32);
    words.push((stream >> 32) as u32);
    let pos = rng.get_word_pos();
    for i in 0..4 {
        words.push((pos >> (32 * i)) as u32);
    }
    words
}

pub fn restore_state(words: &[u32]) -> Option<ChaCha8Rng> {
    if words.len() != 14 {
        return None;
    }
    let mut seed = [0u8; 32];
    for (i, w) in words[..8].iter().enumerate() {
        seed[4 * i..4 * i + 4].copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(u64::from(words[8]) | (u64::from(words[9]) << 32));
    let mut pos = 0u128;
    for i in 0..4 {
        pos |= u128::from(words[10 + i]) << (32 * i);
    }
    rng.set_word_pos(pos);
    Some(rng)
}
