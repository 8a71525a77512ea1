//! Small hand-checkable instances used by tests, the CLI self-test and docs.

use crate::instance::RobustInstance;
use crate::reward::{reward_matrix, RewardSpec};
use crate::types::SamplePathSet;

/// Two one-dimensional paths `(8, 7, 6)` and `(3, 4, 3)` with identity
/// reward.
pub fn two_path_paths() -> SamplePathSet {
    SamplePathSet::from_rows_1d(&[vec![8.0, 7.0, 6.0], vec![3.0, 4.0, 3.0]])
        .expect("fixture is well formed")
}

/// [`two_path_paths`] with boxes of radius 2.
pub fn two_path() -> RobustInstance {
    let paths = two_path_paths();
    let rewards = reward_matrix(&paths, &RewardSpec::Identity).expect("identity reward");
    RobustInstance::build(&paths, rewards, 2.0).expect("fixture is well formed")
}
