//! Plain-text CSV formats for choice datasets and bandit episodes.
//!
//! Dataset: header `obs,option,chosen,f1,...,fK`, one row per (observation,
//! option), observations and options numbered from 1, `chosen` is 0 or 1 with
//! exactly one 1 per observation.
//!
//! Episode: header `t,arm,reward`, one row per decision, `t` from 1, arms
//! numbered from 1.
//!
//! Floats are written in Rust's shortest round-trip form, so reading back a
//! written file reproduces every value bit for bit.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ChoiceDataset, Observation};

pub fn dataset_to_csv(data: &ChoiceDataset) -> String {
    let mut out = String::from("obs,option,chosen");
    for j in 1..=data.features() {
        write!(out, ",f{j}").unwrap();
    }
    out.push('\n');
    for (k, obs) in data.observations().iter().enumerate() {
        let x = obs.features();
        for i in 0..x.nrows() {
            write!(out, "{},{},{}", k + 1, i + 1, u8::from(i == obs.chosen())).unwrap();
            for v in x.row(i).iter() {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(k, line)| (k + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty())
        .map(|(k, line)| (k, line.split(',').map(str::trim).collect()))
}

fn field<T: std::str::FromStr>(value: &str, name: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(line, format!("cannot parse {name} from {value:?}")))
}

pub fn dataset_from_csv(text: &str) -> Result<ChoiceDataset> {
    let mut rows = records(text);
    let (header_line, header) = rows.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    if header.len() < 4 || header[..3] != ["obs", "option", "chosen"] {
        return Err(Error::parse(header_line, "header must start with obs,option,chosen,f1"));
    }
    let n_obj = header.len() - 3;
    for (j, name) in header[3..].iter().enumerate() {
        if *name != format!("f{}", j + 1) {
            return Err(Error::parse(header_line, format!("expected column f{}, found {name:?}", j + 1)));
        }
    }

    struct Block {
        start_line: usize,
        rows: Vec<Vec<f64>>,
        chosen: Vec<usize>,
    }
    let mut blocks: Vec<Block> = Vec::new();
    for (line, cols) in rows {
        if cols.len() != n_obj + 3 {
            return Err(Error::parse(line, format!("expected {} fields, found {}", n_obj + 3, cols.len())));
        }
        let obs: usize = field(cols[0], "obs", line)?;
        let option: usize = field(cols[1], "option", line)?;
        let chosen: u8 = field(cols[2], "chosen", line)?;
        if chosen > 1 {
            return Err(Error::parse(line, "chosen must be 0 or 1"));
        }
        if obs == blocks.len() + 1 {
            blocks.push(Block {
                start_line: line,
                rows: Vec::new(),
                chosen: Vec::new(),
            });
        } else if obs != blocks.len() {
            return Err(Error::parse(line, format!("observation {obs} out of sequence")));
        }
        let block = blocks.last_mut().expect("pushed above");
        if option != block.rows.len() + 1 {
            return Err(Error::parse(line, format!("option {option} out of sequence")));
        }
        if chosen == 1 {
            block.chosen.push(option - 1);
        }
        let features = cols[3..]
            .iter()
            .map(|v| {
                let x: f64 = field(v, "feature", line)?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::parse(line, "non-finite feature"))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        block.rows.push(features);
    }
    if blocks.is_empty() {
        return Err(Error::parse(header_line, "no observations"));
    }
    let options = blocks[0].rows.len();
    let observations = blocks
        .into_iter()
        .map(|b| {
            if b.rows.len() != options {
                return Err(Error::parse(
                    b.start_line,
                    format!("observation has {} options, expected {options}", b.rows.len()),
                ));
            }
            if b.chosen.len() != 1 {
                return Err(Error::parse(
                    b.start_line,
                    format!("observation has {} chosen options, expected exactly one", b.chosen.len()),
                ));
            }
            let x = DMatrix::from_fn(options, n_obj, |i, j| b.rows[i][j]);
            Observation::new(x, b.chosen[0]).map_err(|e| Error::parse(b.start_line, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    ChoiceDataset::new(observations)
}

pub fn episode_to_csv(choices: &[usize], rewards: &[f64]) -> String {
    let mut out = String::from("t,arm,reward\n");
    for (k, (arm, reward)) in choices.iter().zip(rewards).enumerate() {
        writeln!(out, "{},{},{reward:?}", k + 1, arm + 1).unwrap();
    }
    out
}

/// Zero-based arms and rewards from an episode CSV.
pub fn episode_from_csv(text: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut rows = records(text);
    let (header_line, header) = rows.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    if header != ["t", "arm", "reward"] {
        return Err(Error::parse(header_line, "header must be t,arm,reward"));
    }
    let (mut choices, mut rewards) = (Vec::new(), Vec::new());
    for (line, cols) in rows {
        if cols.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 fields, found {}", cols.len())));
        }
        let t: usize = field(cols[0], "t", line)?;
        if t != choices.len() + 1 {
            return Err(Error::parse(line, format!("t = {t} out of sequence")));
        }
        let arm: usize = field(cols[1], "arm", line)?;
        if arm == 0 {
            return Err(Error::parse(line, "arms are numbered from 1"));
        }
        let reward: f64 = field(cols[2], "reward", line)?;
        if !reward.is_finite() {
            return Err(Error::parse(line, "non-finite reward"));
        }
        choices.push(arm - 1);
        rewards.push(reward);
    }
    if choices.is_empty() {
        return Err(Error::parse(header_line, "no decisions"));
    }
    Ok((choices, rewards))
}
