//! Tolerances shared by the checkers and the test suites.

/// Identities that are exact in real arithmetic at desk scale
/// (characterization, lift isometry, transform equality).
pub const IDENTITY_REL: f64 = 1e-9;

/// Agreement between two algorithms computing the same supremum.
pub const MODE_AGREEMENT_REL: f64 = 1e-10;

/// Re-evaluation of one formula through a second code path.
pub const REEVAL_REL: f64 = 1e-12;

/// Additive slack granted to every inequality.
pub const INEQUALITY_SLACK: f64 = 1e-9;

/// `|a - b| / max(|a|, |b|)`, and 0 when both are 0.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
    rel_diff(a, b) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_difference() {
        assert_eq!(rel_diff(0.0, 0.0), 0.0);
        assert_eq!(rel_diff(2.0, 1.0), 0.5);
        assert!(rel_eq(1.0, 1.0 + 1e-13, REEVAL_REL));
        assert!(!rel_eq(1.0, 1.0 + 1e-11, REEVAL_REL));
        assert!(!rel_eq(0.0, 1e-300, IDENTITY_REL));
    }
}
