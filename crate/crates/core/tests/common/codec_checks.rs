//! Entropy-coder and quantizer checks shared by the codec tests and the
//! acceptance run.

use gstream_core::codec::{dequantize, entropy_decode, entropy_encode, quantize, QuantSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let len = rng.random_range(0..4096);
    match rng.random_range(0..4) {
        // uniform bytes
        0 => (0..len).map(|_| rng.random()).collect(),
        // small alphabet
        1 => {
            let k = rng.random_range(1..=8u8);
            (0..len).map(|_| rng.random_range(0..k)).collect()
        }
        // geometric-ish skew
        2 => (0..len).map(|_| (rng.random::<f64>().powi(6) * 255.0) as u8).collect(),
        // runs
        _ => {
            let mut v = Vec::with_capacity(len);
            while v.len() < len {
                let b: u8 = rng.random();
                let run = rng.random_range(1..200);
                v.extend(std::iter::repeat_n(b, run.min(len - v.len())));
            }
            v
        }
    }
}

/// Inputs chosen to stress code construction and the decoder.
pub fn adversarial_inputs() -> Vec<Vec<u8>> {
    let mut cases = vec![vec![], vec![0], vec![255; 100_000], (0..=255).collect::<Vec<u8>>(), [0u8, 1].repeat(5000)];
    // Fibonacci counts force the length limit
    let mut fib = Vec::new();
    let (mut a, mut b) = (1usize, 1usize);
    for sym in 0..25u8 {
        fib.extend(std::iter::repeat_n(sym, a));
        (a, b) = (b, a + b);
    }
    cases.push(fib);
    // every symbol once except one dominant one
    let mut dom = vec![7u8; 1 << 16];
    dom.extend(0..=255u8);
    cases.push(dom);
    // two symbols, one of them only once
    let mut lone = vec![3u8; 9999];
    lone.push(200);
    cases.push(lone);
    cases
}

/// Lossless roundtrip of `random` seeded inputs plus the adversarial set;
/// returns the number of inputs checked.
pub fn huffman_roundtrips(random: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs: Vec<Vec<u8>> = (0..random).map(|_| random_input(&mut rng)).collect();
    inputs.extend(adversarial_inputs());
    for (i, data) in inputs.iter().enumerate() {
        let coded = entropy_encode(data);
        match entropy_decode(&coded, data.len()) {
            Ok(back) if back == *data => {}
            Ok(_) => return Err(format!("input {i} ({} bytes) decoded to different bytes", data.len())),
            Err(e) => return Err(format!("input {i} ({} bytes): {e}", data.len())),
        }
    }
    Ok(inputs.len())
}

/// Largest `|v - dequantized| / step` over random planes at both bit
/// depths; the bound is 1/2. The exact quantizer value is compared in f64;
/// the f32 output may add one f32 rounding on top.
pub fn worst_quantization_error(planes: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for p in 0..planes {
        let bits = if p % 2 == 0 { 8 } else { 16 };
        let scale = 10f32.powi(rng.random_range(-4..4));
        let len = rng.random_range(1..2000);
        let mut values: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0f32..1.0) * scale).collect();
        if p % 7 == 0 {
            values.iter_mut().for_each(|v| *v = scale);
        }
        let spec = QuantSpec::fit(bits, &values).map_err(|e| e.to_string())?;
        let codes = quantize(&values, &spec).map_err(|e| e.to_string())?;
        let back = dequantize(&codes, &spec);
        let step = spec.step();
        for ((v, c), b) in values.iter().zip(&codes).zip(&back) {
            let err = (spec.value(*c) - f64::from(*v)).abs();
            let ratio = if step > 0.0 { err / step } else { err };
            worst = worst.max(ratio);
            if ratio > 0.5 + 1e-9 {
                return Err(format!("plane {p}: {v} -> {} (step {step})", spec.value(*c)));
            }
            let f32_slack = f64::from(f32::EPSILON) * f64::from(v.abs().max(b.abs()));
            if (f64::from(*b) - f64::from(*v)).abs() > 0.5 * step + f32_slack + 1e-12 {
                return Err(format!("plane {p}: f32 output {b} for {v} (step {step})"));
            }
        }
    }
    Ok(worst)
}
