use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dissolve_gp::data::{parse_groups, CsvFormat};
use dissolve_gp::{fixtures, DissolutionDataset, Error};
use serde::Serialize;

use crate::args::{Common, Inputs};
use crate::CliError;

const BUNDLED: &str = "bundled:";

fn open(path: &str) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Core(Error::Io(std::io::Error::new(e.kind(), format!("{path}: {e}")))))
}

fn read_groups(path: &str, wide: bool) -> Result<Vec<DissolutionDataset>, CliError> {
    if let Some(name) = path.strip_prefix(BUNDLED) {
        let (r, t) = fixtures::by_name(name)
            .ok_or_else(|| CliError::Usage(format!("unknown bundled dataset '{name}' (dataset1, dataset2)")))?;
        return Ok(vec![r, t]);
    }
    let format = if wide {
        let stem = Path::new(path).file_stem().and_then(|s| s.to_str()).unwrap_or("group");
        CsvFormat::Wide { group: stem.to_string() }
    } else {
        CsvFormat::Long
    };
    Ok(parse_groups(open(path)?, &format)?)
}

fn pick(groups: Vec<DissolutionDataset>, label: Option<&str>, source: &str) -> Result<DissolutionDataset, CliError> {
    match label {
        Some(l) => groups
            .into_iter()
            .find(|g| g.group_label == l)
            .ok_or_else(|| CliError::Core(Error::Structure(format!("{source}: no group labelled '{l}'")))),
        None if groups.len() == 1 => Ok(groups.into_iter().next().expect("one group")),
        None => Err(CliError::Usage(format!(
            "{source} holds {} groups; choose one with --group",
            groups.len()
        ))),
    }
}

/// One group from --input (or --reference as a fallback).
pub fn load_single(inputs: &Inputs) -> Result<DissolutionDataset, CliError> {
    let path = inputs
        .input
        .as_deref()
        .or(inputs.reference.as_deref())
        .ok_or_else(|| CliError::Usage("--input is required".into()))?;
    pick(read_groups(path, inputs.wide)?, inputs.group.as_deref(), path)
}

/// Reference and test from --reference/--test, or the two groups of --input.
pub fn load_pair(inputs: &Inputs) -> Result<(DissolutionDataset, DissolutionDataset), CliError> {
    match (&inputs.reference, &inputs.test, &inputs.input) {
        (Some(r), Some(t), None) => {
            let r = pick(read_groups(r, inputs.wide)?, None, r)?;
            let t = pick(read_groups(t, inputs.wide)?, None, t)?;
            Ok((r, t))
        }
        (None, None, Some(path)) => {
            let mut groups = read_groups(path, inputs.wide)?;
            if groups.len() != 2 {
                return Err(CliError::Core(Error::Structure(format!(
                    "{path}: expected two groups (reference first), found {}",
                    groups.len()
                ))));
            }
            let t = groups.pop().expect("two groups");
            let r = groups.pop().expect("two groups");
            Ok((r, t))
        }
        _ => Err(CliError::Usage("give either --input with two groups or both --reference and --test".into())),
    }
}

pub fn read_to_string(path: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Core(Error::Io(std::io::Error::new(e.kind(), format!("{path}: {e}")))))
}

pub fn open_input(path: &str) -> Result<File, CliError> {
    open(path)
}

fn sink(common: &Common) -> Result<Box<dyn Write>, CliError> {
    Ok(match &common.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Pretty JSON with the resolved configuration under `config`.
pub fn write_json<T: Serialize>(common: &Common, config: &serde_json::Value, body: &T) -> Result<(), CliError> {
    let mut value = serde_json::to_value(body).map_err(|e| CliError::Core(Error::Io(std::io::Error::other(e))))?;
    match &mut value {
        serde_json::Value::Object(map) => {
            map.insert("config".into(), config.clone());
        }
        other => {
            value = serde_json::json!({ "config": config, "result": other.take() });
        }
    }
    let mut out = sink(common)?;
    serde_json::to_writer_pretty(&mut out, &value).map_err(|e| CliError::Core(Error::Io(std::io::Error::other(e))))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// CSV body preceded by a `# config:` comment line.
pub fn write_csv(
    common: &Common,
    config: &serde_json::Value,
    body: impl FnOnce(&mut dyn Write) -> dissolve_gp::Result<()>,
) -> Result<(), CliError> {
    let mut out = sink(common)?;
    writeln!(out, "# config: {config}")?;
    body(&mut out)?;
    out.flush()?;
    Ok(())
}
