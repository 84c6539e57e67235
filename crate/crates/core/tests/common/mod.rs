#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use rand::Rng;

/// Contribution gain by enumerating every subset of contributing co-players.
pub fn gain_by_subsets(others: &[f64], reward: &[f64]) -> f64 {
    let m = others.len();
    let mut total = 0.0;
    for mask in 0u32..(1 << m) {
        let mut p = 1.0;
        for (i, &x) in others.iter().enumerate() {
            p *= if mask >> i & 1 == 1 { x } else { 1.0 - x };
        }
        let k = mask.count_ones() as usize;
        total += p * (reward[k + 1] - 1.0 - reward[k]);
    }
    total
}

/// Expected payoff of a focal player by enumerating all action profiles.
pub fn payoff_by_profiles(focal: f64, others: &[f64], reward: &[f64]) -> f64 {
    let mut all = vec![focal];
    all.extend_from_slice(others);
    let mut total = 0.0;
    for mask in 0u32..(1 << all.len()) {
        let mut p = 1.0;
        for (i, &x) in all.iter().enumerate() {
            p *= if mask >> i & 1 == 1 { x } else { 1.0 - x };
        }
        let cost = (mask & 1) as f64;
        total += p * (reward[mask.count_ones() as usize] - cost);
    }
    total
}

/// Root of a continuous `f` with a sign change on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let lo_sign = f(lo) > 0.0;
    assert_ne!(lo_sign, f(hi) > 0.0, "no sign change");
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (f(mid) > 0.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn random_reward(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..=n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn run_bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evoq"))
        .args(args)
        .env_remove("EVOQ_THREADS")
        .output()
        .expect("binary runs")
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Rows of a CSV file as string fields, header first.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    read(path)
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

pub fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}
