use std::time::Instant;

use iris_core::encoding::{build_filter_bank, FilterBankConfig, IrisCode};
use iris_core::matching::match_codes;
use iris_core::normalization::PolarSize;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Soft benchmark: default-geometry codes at max_shift 8 should clear a
// million comparisons per minute on one core.
#[test]
fn match_rate_exceeds_a_million_per_minute() {
    let bank = build_filter_bank(&FilterBankConfig::default(), PolarSize::default()).unwrap();
    let bits = bank.code_bits();
    let cols = bits / bank.bits_per_column();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let codes: Vec<IrisCode> = (0..64)
        .map(|_| {
            let c: Vec<bool> = (0..bits).map(|_| rng.gen()).collect();
            let m: Vec<bool> = (0..bits).map(|_| rng.gen_bool(0.85)).collect();
            IrisCode::from_bits("t", bank.fingerprint, cols, &c, &m).unwrap()
        })
        .collect();
    let calls = 200_000;
    let start = Instant::now();
    let mut acc = 0.0;
    for i in 0..calls {
        let r = match_codes(&codes[i % 64], &codes[(i * 7 + 1) % 64], 8).unwrap();
        acc += r.hd_raw.unwrap_or(0.0);
    }
    let per_minute = calls as f64 / start.elapsed().as_secs_f64() * 60.0;
    println!("{bits}-bit codes: {per_minute:.3e} match_codes calls per minute (checksum {acc:.3})");
    assert!(per_minute >= 1e6, "{per_minute:.3e} calls per minute");
}
