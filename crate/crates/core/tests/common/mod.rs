#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigstream::Stream;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random walk with uniform increments in `[-step, step]^d`.
pub fn random_walk(rng: &mut ChaCha8Rng, d: usize, len: usize, step: f64) -> Stream {
    let mut p = vec![0.0; d];
    let mut points = Vec::with_capacity(len);
    for _ in 0..len {
        points.push(p.clone());
        for x in p.iter_mut() {
            *x += rng.random_range(-step..=step);
        }
    }
    Stream::new(points).unwrap()
}

/// Random walk rescaled to total 1-variation `length`.
pub fn walk_with_length(rng: &mut ChaCha8Rng, d: usize, len: usize, length: f64) -> Stream {
    let s = random_walk(rng, d, len, 1.0);
    let l = s.length();
    if l == 0.0 {
        s
    } else {
        s.scaled(length / l)
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn report(id: &str, name: &str, pass: bool, detail: &str) {
    println!("[{}] criterion {id}: {name} ({detail})", if pass { "PASS" } else { "FAIL" });
}
