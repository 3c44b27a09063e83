//! Unpenalized thin-plate radial construction: `{1, s1, s2}` followed by
//! `r^2 log r` bumps centred on knots.

use serde::{Deserialize, Serialize};

use crate::sample::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnotPlacement {
    /// Fibonacci lattice `((k + 1/2)/K, frac(k / golden))`.
    #[default]
    FibonacciLattice,
}

/// Knots used for a basis of `d` functions: `d - 3` of them.
pub fn knots(placement: KnotPlacement, d: usize) -> Vec<Point> {
    let count = d.saturating_sub(3);
    match placement {
        KnotPlacement::FibonacciLattice => {
            let inv_golden = (5f64.sqrt() - 1.0) / 2.0;
            (0..count)
                .map(|k| {
                    let s1 = (k as f64 + 0.5) / count as f64;
                    let s2 = (k as f64 * inv_golden).fract();
                    Point::new(s1, s2)
                })
                .collect()
        }
    }
}

/// Thin-plate radial function `r^2 log r`, zero at the origin.
pub fn thin_plate(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

/// Value of column `j` at `p`.
pub fn eval(j: usize, p: &Point, knots: &[Point]) -> f64 {
    match j {
        0 => 1.0,
        1 => p.s1,
        2 => p.s2,
        _ => thin_plate(p.distance(&knots[j - 3])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knots_lie_in_unit_square_and_are_distinct() {
        let k = knots(KnotPlacement::FibonacciLattice, 103);
        assert_eq!(k.len(), 100);
        for p in &k {
            assert!((0.0..1.0).contains(&p.s1) && (0.0..1.0).contains(&p.s2));
        }
        for i in 0..k.len() {
            for j in 0..i {
                assert!(k[i].distance(&k[j]) > 1e-6);
            }
        }
    }

    #[test]
    fn thin_plate_values() {
        assert_eq!(thin_plate(0.0), 0.0);
        assert_eq!(thin_plate(1.0), 0.0);
        assert!((thin_plate(0.5) - 0.25 * 0.5f64.ln()).abs() < 1e-15);
    }
}
