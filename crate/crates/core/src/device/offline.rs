//! Offline mode: replay a recorded channel trace through a device.

use std::io::{BufRead, Write};

use super::{DeviceError, DeviceInput, DeviceVerdict, Discriminator};

/// Reads device inputs from a tab-separated trace (`time_ms component channel
/// payload`). `A_in` and `V_in` rows become inputs; `V_in` takes its marker
/// from the `tachy` payload entry. Other channels are skipped.
pub fn read_inputs<R: BufRead>(reader: R) -> Result<Vec<DeviceInput>, DeviceError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(DeviceError::Parse {
                line: lineno,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let time: f64 = fields[0].parse().map_err(|_| DeviceError::Parse {
            line: lineno,
            message: format!("bad time `{}`", fields[0]),
        })?;
        match fields[2] {
            "A_in" => out.push(DeviceInput::atrial(time)),
            "V_in" => {
                let tachy = fields[3]
                    .split(',')
                    .filter_map(|kv| kv.split_once('='))
                    .find(|(k, _)| *k == "tachy")
                    .map(|(_, v)| v == "1")
                    .ok_or_else(|| DeviceError::Parse {
                        line: lineno,
                        message: "V_in row without a tachy payload entry".into(),
                    })?;
                out.push(DeviceInput::ventricular(time, tachy));
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Feeds `inputs` to `device` and collects its verdicts.
pub fn run_offline(
    device: &mut dyn Discriminator,
    inputs: &[DeviceInput],
) -> Result<Vec<DeviceVerdict>, DeviceError> {
    let mut out = Vec::new();
    for input in inputs {
        if let Some(v) = device.sense(*input)? {
            out.push(v);
        }
    }
    Ok(out)
}

/// Writes `time_ms\tdecision` rows with a header.
pub fn write_verdicts<W: Write>(mut w: W, verdicts: &[DeviceVerdict]) -> std::io::Result<()> {
    writeln!(w, "time_ms\tdecision")?;
    for v in verdicts {
        writeln!(w, "{}\t{}", v.time, v.decision.as_str())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{DetectionConfig, Gdt, InputKind};

    #[test]
    fn parses_trace_rows() {
        let text = "10\tHA_Heart\tA_in\t-\n\
                    160\tHV_Heart\tV_in\torigin=1,tachy=0\n\
                    170\tHA_Switch\tAT_onset\t-\n\
                    300\tHV_Heart\tV_in\torigin=2,tachy=1\n";
        let inputs = read_inputs(text.as_bytes()).unwrap();
        assert_eq!(inputs.len(), 3);
        assert_eq!(inputs[0].kind, InputKind::A);
        assert!(!inputs[1].tachy_marker);
        assert!(inputs[2].tachy_marker);
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = read_inputs("10\tHA_Heart\tA_in\t-\nbad\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DeviceError::Parse { line: 2, .. }));
    }

    #[test]
    fn offline_replay_matches_direct_feed() {
        let mut text = String::new();
        for k in 1..=40 {
            text.push_str(&format!("{}\tHV_Heart\tV_in\torigin=2,tachy=1\n", 300 * k));
        }
        let inputs = read_inputs(text.as_bytes()).unwrap();
        let mut d = Gdt::new(DetectionConfig::gdt_default()).unwrap();
        let v = run_offline(&mut d, &inputs).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].time, 6000.0);
        let mut buf = Vec::new();
        write_verdicts(&mut buf, &v).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "time_ms\tdecision\n6000\tVT_therapy\n"
        );
    }
}
