//! CSV interchange and the binary instance file.
//!
//! CSV files carry a header row. `path_id` counts from 0, `t` and `dim`
//! from 1.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::instance::RobustInstance;
use crate::pipeline::PipelineReport;
use crate::types::{MeanEstimate, RewardMatrix, SamplePathSet, SigmaPolicy};

const INSTANCE_MAGIC: &[u8; 7] = b"ROSTOPI";
const INSTANCE_VERSION: u8 = 1;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(csv_err)?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse(format!(
            "expected header {}, got {}",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, k: usize, line: u64) -> Result<T> {
    let raw = record.get(k).unwrap_or("").trim();
    raw.parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse '{raw}'")))
}

pub fn write_paths<W: Write>(paths: &SamplePathSet, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["path_id", "t", "dim", "value"]).map_err(csv_err)?;
    for i in 0..paths.n_paths() {
        for t in 1..=paths.horizon() {
            for (k, v) in paths.state(i, t).iter().enumerate() {
                w.write_record([i.to_string(), t.to_string(), (k + 1).to_string(), format!("{v:?}")])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a dense path table. Every `(path_id, t, dim)` cell must be present
/// exactly once.
pub fn read_paths<R: Read>(source: R) -> Result<SamplePathSet> {
    let mut r = csv::Reader::from_reader(source);
    check_header(&mut r, &["path_id", "t", "dim", "value"])?;
    let mut cells: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    let (mut n, mut horizon, mut dim) = (0, 0, 0);
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let i: usize = field(&rec, 0, line)?;
        let t: usize = field(&rec, 1, line)?;
        let k: usize = field(&rec, 2, line)?;
        let v: f64 = field(&rec, 3, line)?;
        if t == 0 || k == 0 {
            return Err(Error::Parse(format!("line {line}: t and dim count from 1")));
        }
        if cells.insert((i, t, k), v).is_some() {
            return Err(Error::Parse(format!("line {line}: duplicate cell ({i}, {t}, {k})")));
        }
        n = n.max(i + 1);
        horizon = horizon.max(t);
        dim = dim.max(k);
    }
    if cells.len() != n * horizon * dim || cells.is_empty() {
        return Err(Error::Shape(format!(
            "path table has {} cells, expected {n} x {horizon} x {dim}",
            cells.len()
        )));
    }
    SamplePathSet::new(n, horizon, dim, cells.into_values().collect(), 0, "csv")
}

pub fn write_rewards<W: Write>(rewards: &RewardMatrix, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["path_id", "t", "reward"]).map_err(csv_err)?;
    for i in 0..rewards.n_paths() {
        for t in 1..=rewards.horizon() {
            w.write_record([i.to_string(), t.to_string(), format!("{:?}", rewards.get(i, t))])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_rewards<R: Read>(source: R) -> Result<RewardMatrix> {
    let mut r = csv::Reader::from_reader(source);
    check_header(&mut r, &["path_id", "t", "reward"])?;
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let (mut n, mut horizon) = (0, 0);
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let i: usize = field(&rec, 0, line)?;
        let t: usize = field(&rec, 1, line)?;
        let v: f64 = field(&rec, 2, line)?;
        if t == 0 {
            return Err(Error::Parse(format!("line {line}: t counts from 1")));
        }
        if cells.insert((i, t), v).is_some() {
            return Err(Error::Parse(format!("line {line}: duplicate cell ({i}, {t})")));
        }
        n = n.max(i + 1);
        horizon = horizon.max(t);
    }
    if cells.len() != n * horizon || cells.is_empty() {
        return Err(Error::Shape(format!(
            "reward table has {} cells, expected {n} x {horizon}",
            cells.len()
        )));
    }
    RewardMatrix::new(n, horizon, cells.into_values().collect())
}

pub fn write_sigma<W: Write>(sigma: &SigmaPolicy, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["path_id", "sigma"]).map_err(csv_err)?;
    for (i, s) in sigma.as_slice().iter().enumerate() {
        w.write_record([i.to_string(), s.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sigma<R: Read>(source: R, horizon: usize) -> Result<SigmaPolicy> {
    let mut r = csv::Reader::from_reader(source);
    check_header(&mut r, &["path_id", "sigma"])?;
    let mut cells: BTreeMap<usize, usize> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let i: usize = field(&rec, 0, line)?;
        if cells.insert(i, field(&rec, 1, line)?).is_some() {
            return Err(Error::Parse(format!("line {line}: duplicate path {i}")));
        }
    }
    if cells.keys().enumerate().any(|(k, &i)| k != i) {
        return Err(Error::Shape("sigma table must list paths 0..N exactly once".into()));
    }
    SigmaPolicy::new(cells.into_values().collect(), horizon)
}

/// Per-path stopping periods (empty when the rule never stops) and rewards.
pub fn write_evaluation<W: Write>(stops: &[Option<usize>], rewards: &[f64], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["path_id", "stop", "reward"]).map_err(csv_err)?;
    for (i, (s, g)) in stops.iter().zip(rewards).enumerate() {
        let stop = s.map_or(String::new(), |t| t.to_string());
        w.write_record([i.to_string(), stop, format!("{g:?}")]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn estimate_cells(e: &MeanEstimate) -> [String; 2] {
    [format!("{:?}", e.mean), format!("{:?}", e.std_error)]
}

/// One row per `(N, epsilon)` solve; the chosen row carries the test
/// estimate, and a baseline row (solver `ls`) is appended when present.
pub fn write_report<W: Write>(report: &PipelineReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "N", "epsilon", "solver", "objective", "val_mean", "val_se", "test_mean", "test_se", "seconds",
    ])
    .map_err(csv_err)?;
    for row in &report.rows {
        let chosen = report
            .chosen
            .as_ref()
            .filter(|c| c.n == row.n && c.epsilon == row.epsilon);
        let [val_mean, val_se] = estimate_cells(&row.validation);
        let [test_mean, test_se] = chosen.map_or([String::new(), String::new()], |c| estimate_cells(&c.test));
        w.write_record([
            row.n.to_string(),
            format!("{:?}", row.epsilon),
            row.solver.to_string(),
            format!("{:?}", row.objective),
            val_mean,
            val_se,
            test_mean,
            test_se,
            format!("{:.6}", row.seconds),
        ])
        .map_err(csv_err)?;
    }
    if let Some(b) = &report.baseline {
        let [test_mean, test_se] = estimate_cells(&b.test);
        w.write_record([
            b.training_size.to_string(),
            String::new(),
            "ls".to_string(),
            String::new(),
            String::new(),
            String::new(),
            test_mean,
            test_se,
            format!("{:.6}", b.seconds),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Plot data: validation-best epsilon and its validation mean per `N`.
pub fn write_curve<W: Write>(report: &PipelineReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["N", "best_epsilon", "val_mean", "val_se"]).map_err(csv_err)?;
    for (n, eps) in report.epsilon_curve() {
        let row = report
            .rows
            .iter()
            .find(|r| r.n == n && r.epsilon == eps)
            .expect("curve comes from the rows");
        let [m, se] = estimate_cells(&row.validation);
        w.write_record([n.to_string(), format!("{eps:?}"), m, se]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_instance<W: Write>(instance: &RobustInstance, mut sink: W) -> Result<()> {
    sink.write_all(INSTANCE_MAGIC)?;
    sink.write_all(&[INSTANCE_VERSION])?;
    for v in [instance.n_paths(), instance.horizon(), instance.dim()] {
        sink.write_all(&(v as u64).to_le_bytes())?;
    }
    sink.write_all(&instance.epsilon().to_le_bytes())?;
    for v in instance.states().iter().chain(instance.rewards().values()) {
        sink.write_all(&v.to_le_bytes())?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_instance<R: Read>(mut source: R) -> Result<RobustInstance> {
    let mut head = [0u8; 8];
    source.read_exact(&mut head)?;
    if &head[..7] != INSTANCE_MAGIC {
        return Err(Error::Parse("not an instance file".into()));
    }
    if head[7] != INSTANCE_VERSION {
        return Err(Error::Parse(format!(
            "instance file version {} is not supported (expected {INSTANCE_VERSION})",
            head[7]
        )));
    }
    let mut word = [0u8; 8];
    let mut next = |source: &mut R| -> Result<[u8; 8]> {
        source.read_exact(&mut word)?;
        Ok(word)
    };
    let n = u64::from_le_bytes(next(&mut source)?) as usize;
    let horizon = u64::from_le_bytes(next(&mut source)?) as usize;
    let dim = u64::from_le_bytes(next(&mut source)?) as usize;
    let epsilon = f64::from_le_bytes(next(&mut source)?);
    let cells = n
        .checked_mul(horizon)
        .and_then(|x| x.checked_mul(dim.checked_add(1)?))
        .ok_or_else(|| Error::Parse("instance dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() != cells * 8 {
        return Err(Error::Parse(format!(
            "instance payload has {} bytes, expected {}",
            bytes.len(),
            cells * 8
        )));
    }
    let mut values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let rewards = values.split_off(n * horizon * dim);
    let rewards = RewardMatrix::new(n, horizon, rewards)?;
    RobustInstance::from_parts(n, horizon, dim, values, rewards, epsilon)
}
