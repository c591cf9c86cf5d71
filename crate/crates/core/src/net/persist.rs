//! Text model format.
//!
//! ```text
//! IOCNN
//! version 1
//! spec {...model spec as JSON...}
//! policy {...constraint policy as JSON...} | null
//! param <layer> <name> shape <d0>x<d1>... constrained <0|1>
//! <values>
//! running <layer> <mean|var> <len>
//! <values>
//! end
//! crc32 <8 hex digits>
//! ```
//!
//! Values are space-separated decimals with 17 significant digits, which
//! round-trips every f64 exactly. The checksum covers every byte before the
//! `crc32` line.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, ArrayD, IxDyn};

use super::model::{Network, ParamId, ParamName, RunningStats};
use super::spec::ModelSpec;
use crate::constraints::ConstraintPolicy;
use crate::{Error, Result, Scalar};

pub const MAGIC: &str = "IOCNN";
pub const FORMAT_VERSION: u32 = 1;

fn push_values<S: Scalar>(out: &mut String, values: impl Iterator<Item = S>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{:.16e}", v.as_f64()).expect("writing to a String");
    }
    out.push('\n');
}

/// Canonical text of `model`, checksum line included.
pub fn encode_model<S: Scalar>(model: &Network<S>) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").ok();
    writeln!(out, "version {FORMAT_VERSION}").ok();
    writeln!(out, "spec {}", serde_json::to_string(model.spec())?).ok();
    writeln!(out, "policy {}", serde_json::to_string(&model.policy())?).ok();
    let mask: BTreeSet<ParamId> = model.constraint_mask().into_iter().collect();
    for (id, value) in model.params() {
        let shape: Vec<String> = value.shape().iter().map(|d| d.to_string()).collect();
        writeln!(
            out,
            "param {} {} shape {} constrained {}",
            id.layer,
            id.name,
            shape.join("x"),
            u8::from(mask.contains(&id))
        )
        .ok();
        push_values(&mut out, value.iter().copied());
    }
    for (ord, stats) in model.running_stats() {
        writeln!(out, "running {ord} mean {}", stats.mean.len()).ok();
        push_values(&mut out, stats.mean.iter().copied());
        writeln!(out, "running {ord} var {}", stats.var.len()).ok();
        push_values(&mut out, stats.var.iter().copied());
    }
    out.push_str("end\n");
    let crc = crc32fast::hash(out.as_bytes());
    writeln!(out, "crc32 {crc:08x}").ok();
    Ok(out)
}

pub fn save_model<S: Scalar>(model: &Network<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = encode_model(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model<S: Scalar>(path: impl AsRef<Path>) -> Result<Network<S>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_model(&text)
}

fn parse_values<S: Scalar>(line: Option<&str>, expect: usize, what: &str) -> Result<Vec<S>> {
    let line = line.ok_or_else(|| Error::Format(format!("missing values for {what}")))?;
    let vals = line
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map(S::of)
                .map_err(|e| Error::Format(format!("{what}: bad number {t:?}: {e}")))
        })
        .collect::<Result<Vec<S>>>()?;
    if vals.len() != expect {
        return Err(Error::Format(format!(
            "{what}: expected {expect} values, found {}",
            vals.len()
        )));
    }
    Ok(vals)
}

/// Layer ordinal with its mean and variance as they are read.
type PartialStats<S> = (usize, Option<Array1<S>>, Option<Array1<S>>);

pub fn decode_model<S: Scalar>(text: &str) -> Result<Network<S>> {
    let mut lines = text.split('\n');
    if lines.next() != Some(MAGIC) {
        return Err(Error::Format("missing IOCNN magic".into()));
    }
    let version = lines
        .next()
        .and_then(|l| l.strip_prefix("version "))
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Format("missing version line".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }

    let crc_at = text
        .rfind("crc32 ")
        .ok_or_else(|| Error::Format("missing checksum".into()))?;
    let stored = u32::from_str_radix(text[crc_at + 6..].trim_end(), 16)
        .map_err(|_| Error::Format("unreadable checksum".into()))?;
    let computed = crc32fast::hash(&text.as_bytes()[..crc_at]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let spec_line = lines
        .next()
        .and_then(|l| l.strip_prefix("spec "))
        .ok_or_else(|| Error::Format("missing spec line".into()))?;
    let spec: ModelSpec = serde_json::from_str(spec_line)?;
    let policy_line = lines
        .next()
        .and_then(|l| l.strip_prefix("policy "))
        .ok_or_else(|| Error::Format("missing policy line".into()))?;
    let policy: Option<ConstraintPolicy> = serde_json::from_str(policy_line)?;

    let mut params = Vec::new();
    let mut flagged = BTreeSet::new();
    let mut running: Vec<PartialStats<S>> = Vec::new();
    loop {
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let tok: Vec<&str> = header.split(' ').collect();
        match tok.as_slice() {
            ["end"] => break,
            ["param", layer, name, "shape", shape, "constrained", flag] => {
                let layer: usize = layer
                    .parse()
                    .map_err(|_| Error::Format(format!("bad layer in {header:?}")))?;
                let name = ParamName::parse(name)
                    .ok_or_else(|| Error::Format(format!("bad parameter name in {header:?}")))?;
                let dims = shape
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Format(format!("bad shape in {header:?}")))?;
                let id = ParamId::new(layer, name);
                let vals = parse_values::<S>(lines.next(), dims.iter().product(), &id.to_string())?;
                match *flag {
                    "1" => {
                        flagged.insert(id);
                    }
                    "0" => {}
                    _ => return Err(Error::Format(format!("bad flag in {header:?}"))),
                }
                let arr = ArrayD::from_shape_vec(IxDyn(&dims), vals)
                    .map_err(|e| Error::Format(e.to_string()))?;
                params.push((id, arr));
            }
            ["running", layer, which, len] => {
                let layer: usize = layer
                    .parse()
                    .map_err(|_| Error::Format(format!("bad layer in {header:?}")))?;
                let len: usize = len
                    .parse()
                    .map_err(|_| Error::Format(format!("bad length in {header:?}")))?;
                let vals = Array1::from(parse_values::<S>(lines.next(), len, header)?);
                let pos = match running.iter().position(|r| r.0 == layer) {
                    Some(p) => p,
                    None => {
                        running.push((layer, None, None));
                        running.len() - 1
                    }
                };
                match *which {
                    "mean" => running[pos].1 = Some(vals),
                    "var" => running[pos].2 = Some(vals),
                    _ => return Err(Error::Format(format!("bad running field in {header:?}"))),
                }
            }
            _ => return Err(Error::Format(format!("unexpected line {header:?}"))),
        }
    }

    let running = running
        .into_iter()
        .map(|(ord, mean, var)| match (mean, var) {
            (Some(mean), Some(var)) => Ok((ord, RunningStats { mean, var })),
            _ => Err(Error::Format(format!("incomplete running statistics for layer {ord}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let net = Network::from_parts(spec, params, running, policy)?;
    let mask: BTreeSet<ParamId> = net.constraint_mask().into_iter().collect();
    if mask != flagged {
        return Err(Error::Format(
            "constraint flags disagree with the stored policy".into(),
        ));
    }
    Ok(net)
}
