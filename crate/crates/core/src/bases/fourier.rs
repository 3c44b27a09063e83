//! Tensor-product Fourier functions on the unit square.
//!
//! The 1-D system is `{1, sqrt(2) sin(2 pi k s), sqrt(2) cos(2 pi k s)}` for
//! `k = 1..=K`; it is orthonormal under the uniform measure on `[0, 1]`.
//! Tensor products are ordered by total frequency `k1 + k2`, then by the
//! axis-2 frequency (so axis-1 variation comes first), then sine before
//! cosine on axis 1 and on axis 2. The constant function is always first.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use crate::sample::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Wave {
    Const,
    Sin,
    Cos,
}

/// One factor `phi_k(s)` of a tensor product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Factor {
    pub frequency: u32,
    pub wave: Wave,
}

impl Factor {
    pub fn eval(&self, s: f64) -> f64 {
        let arg = 2.0 * PI * f64::from(self.frequency) * s;
        match self.wave {
            Wave::Const => 1.0,
            Wave::Sin => SQRT_2 * arg.sin(),
            Wave::Cos => SQRT_2 * arg.cos(),
        }
    }

    fn all(max_frequency: u32) -> Vec<Factor> {
        let mut out = vec![Factor { frequency: 0, wave: Wave::Const }];
        for k in 1..=max_frequency {
            out.push(Factor { frequency: k, wave: Wave::Sin });
            out.push(Factor { frequency: k, wave: Wave::Cos });
        }
        out
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.wave {
            Wave::Const => write!(f, "1"),
            Wave::Sin => write!(f, "sin{}", self.frequency),
            Wave::Cos => write!(f, "cos{}", self.frequency),
        }
    }
}

/// `h(s) = axis1(s1) * axis2(s2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FourierTerm {
    pub axis1: Factor,
    pub axis2: Factor,
}

impl FourierTerm {
    pub fn eval(&self, p: &Point) -> f64 {
        self.axis1.eval(p.s1) * self.axis2.eval(p.s2)
    }

    pub fn total_frequency(&self) -> u32 {
        self.axis1.frequency + self.axis2.frequency
    }

    /// Largest single-axis frequency, used as the roughness of the term.
    pub fn max_frequency(&self) -> u32 {
        self.axis1.frequency.max(self.axis2.frequency)
    }
}

impl fmt::Display for FourierTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(s1)*{}(s2)", self.axis1, self.axis2)
    }
}

/// Number of tensor functions available with per-axis frequency `<= K`.
pub fn available(max_frequency: u32) -> usize {
    let per_axis = 2 * max_frequency as usize + 1;
    per_axis * per_axis
}

/// All tensor terms with per-axis frequency `<= max_frequency`, in canonical order.
pub fn terms(max_frequency: u32) -> Vec<FourierTerm> {
    let factors = Factor::all(max_frequency);
    let mut out = Vec::with_capacity(factors.len() * factors.len());
    for a in &factors {
        for b in &factors {
            out.push(FourierTerm { axis1: *a, axis2: *b });
        }
    }
    out.sort_by_key(|t| {
        (
            t.total_frequency(),
            t.axis2.frequency,
            t.axis1.wave,
            t.axis2.wave,
        )
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_starts_with_constant_then_axis_one() {
        let t = terms(3);
        assert_eq!(t.len(), available(3));
        assert_eq!(t[0].to_string(), "1(s1)*1(s2)");
        assert_eq!(t[1].to_string(), "sin1(s1)*1(s2)");
        assert_eq!(t[2].to_string(), "cos1(s1)*1(s2)");
        assert_eq!(t[3].to_string(), "1(s1)*sin1(s2)");
        assert_eq!(t[4].to_string(), "1(s1)*cos1(s2)");
        // total frequency 1 occupies indices 1..=4, total 2 the next 8
        assert!(t[1..5].iter().all(|x| x.total_frequency() == 1));
        assert!(t[5..13].iter().all(|x| x.total_frequency() == 2));
        assert_eq!(t[13].total_frequency(), 3);
    }

    #[test]
    fn total_frequency_is_nondecreasing() {
        let t = terms(6);
        assert!(t.windows(2).all(|w| w[0].total_frequency() <= w[1].total_frequency()));
    }
}
