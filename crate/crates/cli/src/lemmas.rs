//! Randomized cases for the two averaging inequalities, on piecewise constant functions.

use ggflow_core::measures::{lemma_a1_check, lemma_a2_check};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Samples per case.
const SAMPLES: usize = 2000;
const MAX_PIECES: usize = 12;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct A1Counts {
    pub cases: usize,
    pub hypothesis_held: usize,
    pub conclusion_held: usize,
    pub violations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct A2Counts {
    pub cases: usize,
    pub skipped: usize,
    pub passed: usize,
    pub violations: usize,
    pub min_margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub seed: u64,
    pub samples_per_case: usize,
    pub a1: A1Counts,
    pub a2: A2Counts,
}

/// A random step function on `[0, t]` with values in `[0, top]`, sampled at
/// `SAMPLES + 1` equispaced points.
fn random_steps(rng: &mut ChaCha8Rng, t: f64, top: f64) -> Vec<f64> {
    let pieces = rng.gen_range(1..=MAX_PIECES);
    let mut cuts: Vec<f64> = (1..pieces).map(|_| rng.gen_range(0.0..t)).collect();
    cuts.sort_by(f64::total_cmp);
    let values: Vec<f64> = (0..pieces)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..=top) })
        .collect();
    (0..=SAMPLES)
        .map(|i| {
            let s = t * i as f64 / SAMPLES as f64;
            values[cuts.partition_point(|&c| c <= s)]
        })
        .collect()
}

fn trapezoid_mean(f: &[f64]) -> f64 {
    let m = f.len() - 1;
    (f.iter().sum::<f64>() - 0.5 * (f[0] + f[m])) / m as f64
}

pub fn run_suite(cases: usize, seed: u64) -> ggflow_core::Result<LemmaSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a1 = A1Counts::default();
    let mut a2 = A2Counts::default();
    for _ in 0..cases {
        let t = rng.gen_range(0.5..20.0);
        let c = rng.gen_range(0.1..5.0);
        let mut f = random_steps(&mut rng, t, 10.0);
        // Rescale most cases so that the hypothesis holds and the implication is exercised.
        if rng.gen_bool(0.75) {
            let h = lemma_a1_check(&f, t, c)?.hypothesis_value;
            if h > 0.0 {
                let scale = (c / h).min(1.0) * rng.gen_range(0.5..1.0);
                f.iter_mut().for_each(|v| *v *= scale);
            }
        }
        let out = lemma_a1_check(&f, t, c)?;
        a1.cases += 1;
        a1.hypothesis_held += usize::from(out.hypothesis_holds);
        a1.conclusion_held += usize::from(out.hypothesis_holds && out.conclusion_holds);
        a1.violations += usize::from(!out.holds());

        let t = rng.gen_range(0.5..20.0);
        let delta = rng.gen_range(0.5..5.0);
        let f = random_steps(&mut rng, t, delta);
        let mean = trapezoid_mean(&f);
        let rho = rng.gen_range(0.0..1.0) * mean;
        let lambda = rng.gen_range(0.0..1.0) * rho;
        a2.cases += 1;
        if !(lambda > 0.0 && lambda < rho && rho < delta) {
            a2.skipped += 1;
            continue;
        }
        let out = lemma_a2_check(&f, t, delta, rho, lambda)?;
        let margin = out.fraction_above - out.bound;
        a2.min_margin = Some(a2.min_margin.map_or(margin, |m: f64| m.min(margin)));
        if out.holds {
            a2.passed += 1;
        } else {
            a2.violations += 1;
        }
    }
    Ok(LemmaSummary {
        seed,
        samples_per_case: SAMPLES,
        a1,
        a2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_seeded_and_clean() {
        let a = run_suite(200, 3).unwrap();
        assert_eq!(a, run_suite(200, 3).unwrap());
        assert_ne!(a, run_suite(200, 4).unwrap());
        assert_eq!(a.a1.violations + a.a2.violations, 0);
        assert!(a.a1.hypothesis_held > 100);
        assert!(a.a2.passed > 150);
    }
}
