//! Random mutations of a valid stream fed through every decoding layer.

use std::panic::{catch_unwind, AssertUnwindSafe};

use gstream_core::codec::{decode_payload, read_container, read_snapshot};
use gstream_core::pipeline::decode_sequence;
use gstream_core::stream::{FrameDecoder, Role, Session};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub cases: usize,
    pub rejected: usize,
    pub panics: usize,
}

fn mutate(rng: &mut ChaCha8Rng, valid: &[u8]) -> Vec<u8> {
    let mut b = valid.to_vec();
    for _ in 0..rng.random_range(1..=4) {
        if b.is_empty() {
            b.push(rng.random());
            continue;
        }
        let at = rng.random_range(0..b.len());
        match rng.random_range(0..6) {
            0 => b[at] ^= 1 << rng.random_range(0..8),
            1 => b[at] = rng.random(),
            2 => b.truncate(at),
            3 => b.insert(at, rng.random()),
            4 => {
                b.remove(at);
            }
            _ => {
                // overwrite a little-endian u32, where length fields live
                let v: u32 = if rng.random_bool(0.5) { rng.random() } else { rng.random_range(0..64) };
                for (k, byte) in v.to_le_bytes().iter().enumerate() {
                    if let Some(slot) = b.get_mut(at + k) {
                        *slot = *byte;
                    }
                }
            }
        }
    }
    b
}

/// Everything a receiver might do with untrusted bytes; errors are fine.
fn exercise(bytes: &[u8]) -> bool {
    let mut ok = true;
    match read_container(bytes) {
        Ok(c) => {
            ok &= decode_sequence(&c).is_ok();
            for r in &c.records {
                let _ = decode_payload(r.tag as u8, &r.body, &c.header);
            }
            let mut late = Session::new(c.header, Role::Receiver);
            if let Some(r) = c.records.last() {
                let _ = late.apply_bytes(0, 4, &r.body);
            }
        }
        Err(_) => ok = false,
    }
    let _ = read_snapshot(bytes);
    let mut framer = FrameDecoder::new(1 << 16);
    for chunk in bytes.chunks(7) {
        framer.push(chunk);
        while let Ok(Some(_)) = framer.next_message() {}
    }
    ok
}

pub fn run(valid: &[u8], cases: usize, seed: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport { cases, ..FuzzReport::default() };
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    for _ in 0..cases {
        let b = mutate(&mut rng, valid);
        match catch_unwind(AssertUnwindSafe(|| exercise(&b))) {
            Ok(true) => {}
            Ok(false) => report.rejected += 1,
            Err(_) => report.panics += 1,
        }
    }
    std::panic::set_hook(hook);
    report
}
