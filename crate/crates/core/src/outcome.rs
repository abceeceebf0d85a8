//! Qualitative outcomes shared by the criteria and the direct-integration
//! checks.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundedness {
    AllBounded,
    AllVanish,
    UnboundedSolutionExists,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stability {
    LiapunovStable,
    AsymptoticallyStable,
    Unstable,
    Unknown,
}

impl Boundedness {
    pub fn is_known(self) -> bool {
        self != Boundedness::Unknown
    }
}

impl Stability {
    pub fn is_known(self) -> bool {
        self != Stability::Unknown
    }
}

/// Whether a stability outcome is compatible with a boundedness outcome.
pub fn consistent(b: Boundedness, s: Stability) -> bool {
    use Boundedness::*;
    use Stability::*;
    match (b, s) {
        (Boundedness::Unknown, _) | (_, Stability::Unknown) => true,
        (AllVanish, AsymptoticallyStable) => true,
        (_, AsymptoticallyStable) => false,
        (AllBounded | AllVanish, LiapunovStable) => true,
        (_, LiapunovStable) => false,
        (_, Unstable) => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consistency_table() {
        assert!(consistent(
            Boundedness::AllVanish,
            Stability::AsymptoticallyStable
        ));
        assert!(!consistent(
            Boundedness::AllBounded,
            Stability::AsymptoticallyStable
        ));
        assert!(!consistent(
            Boundedness::UnboundedSolutionExists,
            Stability::LiapunovStable
        ));
        assert!(consistent(Boundedness::AllBounded, Stability::Unstable));
        assert!(consistent(Boundedness::Unknown, Stability::LiapunovStable));
    }
}
