pub mod bench;
pub mod decompose;
pub mod roundtrip;
pub mod squeeze;
pub mod truncate;

use std::path::Path;

use serde::Serialize;

use crate::failure::{CmdResult, Failure};

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> CmdResult {
    mpo_core::persistence::save_json(value, path).map_err(|e| Failure::from(e).context(path.display()))
}
