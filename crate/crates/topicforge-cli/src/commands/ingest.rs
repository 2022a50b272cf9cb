use topicforge::corpus::summarize;

use crate::fail::Failure;
use crate::settings::Settings;

/// Validate a dataset and print its summary; no files are written.
pub fn run(settings: &Settings) -> Result<(), Failure> {
    let input = settings.require_path("input")?;
    let records = super::common::read_dataset(&input)?;
    let summary = summarize(&records);
    let rendered =
        serde_json::to_string_pretty(&summary).map_err(|e| Failure::Io(e.to_string()))?;
    println!("{rendered}");
    Ok(())
}
