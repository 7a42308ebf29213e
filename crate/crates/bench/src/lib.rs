//! Fixtures shared by the benchmarks.

use ggflow_core::{Momentum, SuperdifferentialPolytope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `count` planar polytopes with `vertices` random vertices each, most of them away
/// from the origin so that the minimal-norm point lies on a face.
pub fn random_polytopes(count: usize, vertices: usize, seed: u64) -> Vec<SuperdifferentialPolytope> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let (cx, cy) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let pts = (0..vertices)
                .map(|_| Momentum::new2(cx + rng.gen_range(-1.0..1.0), cy + rng.gen_range(-1.0..1.0)))
                .collect();
            SuperdifferentialPolytope::new(pts).expect("nonempty planar vertex list")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_seeded() {
        let a = random_polytopes(3, 5, 1);
        assert_eq!(a, random_polytopes(3, 5, 1));
        assert!(a.iter().all(|p| p.vertices().len() == 5 && p.dim() == 2));
    }
}
