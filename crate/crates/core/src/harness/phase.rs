//! Phase regions of the scaling `n = k^beta`, `M = k^(gamma+1)`, `d = k^(delta+1)`.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// `beta + gamma < delta + 1`: consistent estimation impossible.
    I,
    /// `beta + gamma >= delta + 2`: possible, and already reachable by earlier
    /// estimators. A sub-region of IV.
    II,
    /// `beta + gamma >= delta + 1` and `2 beta + gamma < delta + 2`: impossible.
    III,
    /// `beta + gamma >= delta + 1` and `2 beta + gamma >= delta + 2`: possible.
    IV,
}

impl Region {
    pub fn consistent_estimation_possible(self) -> bool {
        matches!(self, Region::II | Region::IV)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Region::I => "I",
            Region::II => "II",
            Region::III => "III",
            Region::IV => "IV",
        };
        f.write_str(s)
    }
}

/// Boundary points go to the higher-numbered region on the possible side.
pub fn classify_phase(beta: f64, gamma: f64, delta: f64) -> Region {
    if beta + gamma < delta + 1.0 {
        Region::I
    } else if 2.0 * beta + gamma < delta + 2.0 {
        Region::III
    } else if beta + gamma >= delta + 2.0 {
        Region::II
    } else {
        Region::IV
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        // beta + gamma = delta + 0.5
        assert_eq!(classify_phase(0.5, 0.5, 0.5), Region::I);
        // beta = 1, gamma = 0.5, delta = 0: 2b+g = 2.5, b+g = 1.5
        assert_eq!(classify_phase(1.0, 0.5, 0.0), Region::IV);
        // b+g = d+1.5, 2b+g = d+1.8 -> beta = 0.3, gamma = 1.2
        assert_eq!(classify_phase(0.3, 1.2, 0.0), Region::III);
        assert_eq!(classify_phase(1.5, 1.0, 0.5), Region::II);
    }

    #[test]
    fn boundaries_go_to_possible_side() {
        // beta + gamma = delta + 1 exactly, with 2 beta + gamma >= delta + 2
        assert_eq!(classify_phase(1.0, 0.5, 0.5), Region::IV);
        // 2 beta + gamma = delta + 2 exactly
        assert_eq!(classify_phase(0.5, 1.0, 0.0), Region::IV);
        assert_eq!(classify_phase(1.0, 1.0, 0.0), Region::II);
    }

    #[test]
    fn possibility_flags() {
        assert!(!Region::I.consistent_estimation_possible());
        assert!(!Region::III.consistent_estimation_possible());
        assert!(Region::II.consistent_estimation_possible());
        assert!(Region::IV.consistent_estimation_possible());
    }
}
