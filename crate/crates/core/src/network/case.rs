//! Plain-text case format.
//!
//! ```text
//! # comments start with '#'
//! v0=1.0
//! vmin=0.95
//! vmax=1.05
//! # id parent r_pu x_pu [p_load_pu q_load_pu]
//! 0 - 0 0
//! 1 0 0.000575 0.000293 0.1 0.06
//! ```
//!
//! The key-value preamble is optional; missing keys fall back to
//! v0 = 1.0 and bounds [0.95, 1.05].

use std::fmt::Write as _;
use std::path::Path;

use super::{BusRecord, NetworkError, RadialNetwork};

pub fn read_case(path: impl AsRef<Path>) -> Result<RadialNetwork, NetworkError> {
    let text = std::fs::read_to_string(path)?;
    parse_case(&text)
}

pub fn parse_case(text: &str) -> Result<RadialNetwork, NetworkError> {
    let mut v0 = 1.0;
    let mut vmin = 0.95;
    let mut vmax = 1.05;
    let mut records = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| NetworkError::Parse { line: line_no, msg };

        if let Some((key, value)) = line.split_once('=') {
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid number '{}'", value.trim())))?;
            match key.trim() {
                "v0" => v0 = value,
                "vmin" => vmin = value,
                "vmax" => vmax = value,
                other => return Err(err(format!("unknown key '{other}'"))),
            }
            continue;
        }

        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 && fields.len() != 6 {
            return Err(err(format!(
                "expected 4 or 6 columns (id parent r x [p q]), found {}",
                fields.len()
            )));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("invalid bus id '{}'", fields[0])))?;
        let parent = match fields[1] {
            "-" => None,
            s => Some(
                s.parse::<usize>()
                    .map_err(|_| err(format!("invalid parent '{s}'")))?,
            ),
        };
        let mut nums = [0.0f64; 4];
        for (slot, s) in nums.iter_mut().zip(&fields[2..]) {
            *slot = s
                .parse()
                .map_err(|_| err(format!("invalid number '{s}'")))?;
            if !slot.is_finite() {
                return Err(err(format!("non-finite value '{s}'")));
            }
        }
        if parent == Some(id) {
            return Err(NetworkError::Cycle(id));
        }
        records.push(BusRecord {
            id,
            parent,
            r: nums[0],
            x: nums[1],
            p_load: nums[2],
            q_load: nums[3],
        });
    }

    RadialNetwork::new(records, v0, vmin, vmax)
}

/// Serializes a network in the case format. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_case(net: &RadialNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "v0={}", net.v0());
    let _ = writeln!(out, "vmin={}", net.v_min());
    let _ = writeln!(out, "vmax={}", net.v_max());
    let _ = writeln!(out, "# id parent r_pu x_pu p_load_pu q_load_pu");
    for b in net.buses() {
        let parent = b.parent.map_or_else(|| "-".to_string(), |p| p.to_string());
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            b.id, parent, b.r, b.x, b.p_load, b.q_load
        );
    }
    out
}
