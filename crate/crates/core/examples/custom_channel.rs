//! Loading a channel from JSON and producing the same report as the command line.

use channel_qfi::cli::{qfi_report, ChannelDocument};
use channel_qfi::numerics::Tolerances;

const DOC: &str = r#"{
  "d_in": 2,
  "d_out": 2,
  "label": "bit flip with phase",
  "kraus": [
    [[[0.9486832980505138, 0], [0, 0]], [[0, 0], [0.9486832980505138, 0]]],
    [[[0, 0], [0.31622776601683794, 0]], [[0.31622776601683794, 0], [0, 0]]]
  ],
  "dkraus": [
    [[[0, -0.4743416490252569], [0, 0]], [[0, 0], [0, 0.4743416490252569]]],
    [[[0, 0], [0, 0.15811388300841897]], [[0, -0.15811388300841897], [0, 0]]]
  ]
}"#;

fn main() -> channel_qfi::Result<()> {
    let tol = Tolerances::default();
    let ch = ChannelDocument::parse(DOC)?.to_channel()?;
    let report = qfi_report(&ch, Some(2), &tol)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
