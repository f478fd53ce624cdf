//! Plain-text shot records, so estimators can be rerun without resampling.
//!
//! ```text
//! # hshadow-records v1
//! # run protocol k settings bits b_c sign
//! 0 hs 2 XY|ZX 01|11 1 -1
//! 1 os 1 ZZ 10 - 1
//! ```
//!
//! Settings and bits list one group per copy, separated by `|`; each group
//! has one letter or digit per qubit. `b_c` is `-` for original shadows.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::shadows::{PauliSetting, Protocol, RunRecord};

pub const HEADER: &str = "# hshadow-records v1";

pub fn write_records<W: Write>(mut out: W, records: &[RunRecord]) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    writeln!(out, "# run protocol k settings bits b_c sign")?;
    for r in records {
        let settings: Vec<String> = r.settings.iter().map(|s| s.to_string()).collect();
        let bits: Vec<String> = r.bits.iter().map(|b| b.iter().map(|x| char::from(b'0' + x)).collect()).collect();
        let bc = r.control_bit.map_or("-".to_string(), |b| b.to_string());
        writeln!(out, "{} {} {} {} {} {} {}", r.run, r.protocol.name(), r.k, settings.join("|"), bits.join("|"), bc, r.sign())?;
    }
    Ok(())
}

fn parse_line(line: &str, n: usize) -> Result<RunRecord> {
    let err = |msg: String| Error::Record { line: n, msg };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 7 {
        return Err(err(format!("expected 7 fields, found {}", fields.len())));
    }
    let run = fields[0].parse().map_err(|_| err(format!("bad run id '{}'", fields[0])))?;
    let protocol: Protocol = fields[1].parse().map_err(|e: Error| err(e.to_string()))?;
    let k: usize = fields[2].parse().map_err(|_| err(format!("bad k '{}'", fields[2])))?;
    let settings = fields[3].split('|').map(PauliSetting::parse).collect::<Result<Vec<_>>>().map_err(|e| err(e.to_string()))?;
    let bits = fields[4]
        .split('|')
        .map(|g| {
            g.chars()
                .map(|ch| match ch {
                    '0' => Ok(0u8),
                    '1' => Ok(1u8),
                    other => Err(err(format!("bad bit '{other}'"))),
                })
                .collect::<Result<Vec<u8>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let control_bit = match fields[5] {
        "-" => None,
        "0" => Some(0),
        "1" => Some(1),
        other => return Err(err(format!("bad control bit '{other}'"))),
    };
    let record = RunRecord { run, protocol, k, settings, bits, control_bit };
    record.validate().map_err(|e| err(e.to_string()))?;
    let sign: i8 = fields[6].parse().map_err(|_| err(format!("bad sign '{}'", fields[6])))?;
    if sign != record.sign() {
        return Err(err(format!("sign {sign} disagrees with the control bit")));
    }
    Ok(record)
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let trimmed = line.trim();
        if trimmed == HEADER {
            saw_header = true;
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            return Err(Error::Record { line: n, msg: format!("missing '{HEADER}' header") });
        }
        out.push(parse_line(trimmed, n)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ShotEngine, StateSource};
    use crate::mixture::ProductMixture;
    use crate::qcore::NoiseChannel;
    use crate::rng::SeedStream;

    #[test]
    fn round_trip() {
        let src = StateSource::Mixture(ProductMixture::noisy_plus_two_copy());
        for protocol in [Protocol::Os, Protocol::Hs] {
            let engine = ShotEngine::new(&src, protocol, 2, NoiseChannel::None).unwrap();
            let records = engine.sample_runs(50, SeedStream::new(1)).unwrap();
            let mut buf = Vec::new();
            write_records(&mut buf, &records).unwrap();
            assert_eq!(read_records(&buf[..]).unwrap(), records);
        }
    }

    #[test]
    fn rejects_malformed_lines() {
        let ok = format!("{HEADER}\n0 hs 2 X|Y 0|1 1 -1\n");
        assert_eq!(read_records(ok.as_bytes()).unwrap().len(), 1);
        for bad in ["0 hs 2 X|Y 0|1 1 1", "0 hs 2 X|Y 0|2 1 -1", "0 hs 2 X 0 1 -1", "0 zz 2 X|Y 0|1 1 -1", "0 hs 2 X|Y 0|1"] {
            let text = format!("{HEADER}\n{bad}\n");
            assert!(matches!(read_records(text.as_bytes()), Err(Error::Record { line: 2, .. })), "{bad}");
        }
        assert!(read_records("0 os 1 X 0 - 1\n".as_bytes()).is_err());
    }
}
