use super::Network;
use crate::error::{Error, Result};

const FEEDER4: &str = include_str!("../../../../fixtures/feeder4.json");
const MV_OBERRHEIN_LIKE: &str = include_str!("../../../../fixtures/mv-oberrhein-like.json");

pub fn fixture_names() -> &'static [&'static str] {
    &["feeder4", "mv-oberrhein-like"]
}

/// Load one of the bundled networks by name.
pub fn fixture(name: &str) -> Result<Network> {
    let text = match name {
        "feeder4" => FEEDER4,
        "mv-oberrhein-like" => MV_OBERRHEIN_LIKE,
        other => {
            return Err(Error::Config(format!(
                "unknown fixture '{other}', expected one of: {}",
                fixture_names().join(", ")
            )))
        }
    };
    Network::from_json(text)
}
