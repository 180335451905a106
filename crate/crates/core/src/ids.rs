//! Identifier newtypes shared across the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident($inner:ty)) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.trim().parse().map($name)
            }
        }
    };
}

id_newtype!(
    /// ICU stay identifier (`stay_id`).
    StayId(u64)
);
id_newtype!(
    /// Patient identifier (`subject_id`).
    SubjectId(u64)
);
id_newtype!(
    /// Charted item code (`itemid`).
    ItemId(u32)
);
id_newtype!(
    /// Clinical note identifier.
    NoteId(u64)
);
