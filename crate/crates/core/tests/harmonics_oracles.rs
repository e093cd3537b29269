use std::f64::consts::PI;

use num_complex::Complex64;
use sht_core::harmonics::{flat_index, flat_len, legendre_poly, HarmonicBasis};
use sht_core::quadrature::QuadratureGrid;
use sht_core::rng::{substream, Purpose};
use sht_core::sphere::sample_uniform;

#[test]
fn addition_theorem_to_degree_twenty() {
    let basis = HarmonicBasis::new(20).unwrap();
    let mut rng = substream(1, Purpose::Null, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = sample_uniform(&mut rng);
        let y = sample_uniform(&mut rng);
        let (yx, yy) = (basis.eval(&x), basis.eval(&y));
        for l in 0..=20usize {
            let s: Complex64 = (-(l as i64)..=l as i64)
                .map(|m| yx[flat_index(l, m)] * yy[flat_index(l, m)].conj())
                .sum();
            let want = (2 * l + 1) as f64 / (4.0 * PI) * legendre_poly(l, x.dot(&y));
            worst = worst.max((s.re - want).abs()).max(s.im.abs());
        }
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn orthonormal_under_product_quadrature() {
    // Gauss–Legendre in cos θ is exact for the polynomial part; the φ rule is
    // exact for trigonometric degree below n_phi
    let l_max = 10;
    let grid = QuadratureGrid::new(24, 48).unwrap();
    let basis = HarmonicBasis::new(l_max).unwrap();
    let n = flat_len(l_max);
    let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
    for (x, w) in grid.nodes() {
        let y = basis.eval(x);
        for a in 0..n {
            for b in 0..n {
                gram[a * n + b] += y[a] * y[b].conj() * w;
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((gram[a * n + b] - want).norm() < 1e-6, "({a}, {b}): {}", gram[a * n + b]);
        }
    }
}
