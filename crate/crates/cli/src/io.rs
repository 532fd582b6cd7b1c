use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use ceilguard_core::synth::truth_from_line;
use ceilguard_core::{parse_event, GroundTruth, PriceEvent};
use serde::Serialize;

fn lines(path: &Path) -> Result<Vec<String>> {
    let reader: Box<dyn BufRead> = if path.as_os_str() == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
    };
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

/// Events as JSON lines; `-` reads stdin.
pub fn read_events(path: &Path) -> Result<Vec<PriceEvent>> {
    lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| parse_event(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

pub fn read_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| truth_from_line(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

/// A single event from a file or stdin, as one JSON document.
pub fn read_single_event(path: &Path) -> Result<PriceEvent> {
    let mut text = String::new();
    if path.as_os_str() == "-" {
        io::stdin().read_to_string(&mut text)?;
    } else {
        text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    }
    parse_event(&text).with_context(|| format!("parsing event {}", path.display()))
}

pub fn write_lines<I: IntoIterator<Item = String>>(path: &Path, lines: I) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for l in lines {
        out.write_all(l.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
