//! Map documents: JSON with keys in sorted order, so equal maps give
//! equal bytes. Floats are written in shortest round-trip form, which makes
//! reading a written map back exact.

use std::fs;
use std::path::Path;

use blockdrive_core::pgmap::{RoadNetwork, MAP_VERSION};

use crate::error::{CliError, Result};

pub fn to_json(net: &RoadNetwork) -> Result<String> {
    // `Value` objects are ordered maps, which sorts every key.
    let value = serde_json::to_value(net)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn from_json(text: &str) -> Result<RoadNetwork> {
    let net: RoadNetwork = serde_json::from_str(text)?;
    if net.version != MAP_VERSION {
        return Err(CliError::Version {
            found: net.version,
            expected: MAP_VERSION,
        });
    }
    Ok(net)
}

pub fn file_name(seed: u64) -> String {
    format!("map_{seed}.json")
}

pub fn write_map(path: &Path, net: &RoadNetwork) -> Result<()> {
    fs::write(path, to_json(net)?).map_err(|e| CliError::io(path, e))
}

pub fn read_map(path: &Path) -> Result<RoadNetwork> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    from_json(&text)
}
