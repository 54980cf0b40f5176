//! Long-format CSV ingestion and export.
//!
//! Observations: `replicate,location_id,time_index,value` with an optional
//! `time` column carrying the grid point of each `time_index`. Locations:
//! `location_id,x[,y]`. Every replicate x location x time cell must appear
//! exactly once.

use crate::error::{CliError, CliResult, Stage};
use spatiofd::{SpatialDomain, SpatialFunctionalDataset, TimeGrid};
use spatiofd_simgen::GroundTruth;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

const STAGE: &str = "ingest";
const MAX_LISTED: usize = 20;

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Map each value `v` to `log10(v + 1)`.
    pub log10: bool,
}

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(STAGE, path, e))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| CliError::validation(STAGE, format!("{}: missing column {name:?}", path.display())))
}

fn parse<T: std::str::FromStr>(raw: &str, what: &str, path: &Path, line: u64) -> CliResult<T> {
    raw.parse().map_err(|_| {
        CliError::validation(
            STAGE,
            format!("{}:{line}: cannot parse {what} from {raw:?}", path.display()),
        )
    })
}

pub fn read_locations(path: &Path) -> CliResult<SpatialDomain> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::io(STAGE, path, e))?.clone();
    let id_col = column(&headers, "location_id", path)?;
    let x_col = column(&headers, "x", path)?;
    let y_col = headers.iter().position(|h| h.eq_ignore_ascii_case("y"));
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::io(STAGE, path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        ids.push(rec[id_col].to_string());
        let mut c = vec![parse::<f64>(&rec[x_col], "x", path, line)?];
        if let Some(y) = y_col {
            c.push(parse::<f64>(&rec[y], "y", path, line)?);
        }
        coords.push(c);
    }
    SpatialDomain::new(ids, coords).stage(STAGE)
}

pub fn transform(v: f64, options: IngestOptions) -> CliResult<f64> {
    if !options.log10 {
        return Ok(v);
    }
    if !(v > -1.0) {
        return Err(CliError::validation(
            STAGE,
            format!("log10 transform needs values above -1, got {v}"),
        ));
    }
    Ok((v + 1.0).log10())
}

pub fn read_dataset(data_path: &Path, locations_path: &Path, options: IngestOptions) -> CliResult<SpatialFunctionalDataset> {
    let domain = read_locations(locations_path)?;
    let loc_index: HashMap<&str, usize> = domain.ids().iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();

    let mut rdr = reader(data_path)?;
    let headers = rdr.headers().map_err(|e| CliError::io(STAGE, data_path, e))?.clone();
    let rep_col = column(&headers, "replicate", data_path)?;
    let loc_col = column(&headers, "location_id", data_path)?;
    let t_col = column(&headers, "time_index", data_path)?;
    let v_col = column(&headers, "value", data_path)?;
    let time_col = headers.iter().position(|h| h.eq_ignore_ascii_case("time"));

    let mut cells: HashMap<(u64, usize, u64), f64> = HashMap::new();
    let mut replicates = BTreeSet::new();
    let mut times: BTreeMap<u64, Option<f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::io(STAGE, data_path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let rep: u64 = parse(&rec[rep_col], "replicate", data_path, line)?;
        let loc = &rec[loc_col];
        let j = *loc_index.get(loc).ok_or_else(|| {
            CliError::validation(
                STAGE,
                format!("{}:{line}: location_id {loc:?} not in the locations file", data_path.display()),
            )
        })?;
        let ti: u64 = parse(&rec[t_col], "time_index", data_path, line)?;
        let raw: f64 = parse(&rec[v_col], "value", data_path, line)?;
        if !raw.is_finite() {
            return Err(CliError::validation(
                STAGE,
                format!("{}:{line}: non-finite value", data_path.display()),
            ));
        }
        let value = transform(raw, options)?;
        if let Some(c) = time_col {
            let t: f64 = parse(&rec[c], "time", data_path, line)?;
            match times.get(&ti) {
                Some(Some(prev)) if *prev != t => {
                    return Err(CliError::validation(
                        STAGE,
                        format!("{}:{line}: time_index {ti} has times {prev} and {t}", data_path.display()),
                    ));
                }
                _ => {
                    times.insert(ti, Some(t));
                }
            }
        } else {
            times.entry(ti).or_insert(None);
        }
        if cells.insert((rep, j, ti), value).is_some() {
            return Err(CliError::validation(
                STAGE,
                format!("duplicate cell (replicate {rep}, location {loc}, time {ti})"),
            ));
        }
        replicates.insert(rep);
    }
    if cells.is_empty() {
        return Err(CliError::validation(STAGE, format!("{}: no observations", data_path.display())));
    }

    let reps: Vec<u64> = replicates.into_iter().collect();
    let tidx: Vec<u64> = times.keys().copied().collect();
    let (n, p, t) = (reps.len(), domain.len(), tidx.len());
    let mut values = Vec::with_capacity(n * p * t);
    let mut missing = Vec::new();
    let mut missing_count = 0usize;
    for &rep in &reps {
        for j in 0..p {
            for &ti in &tidx {
                match cells.get(&(rep, j, ti)) {
                    Some(&v) => values.push(v),
                    None => {
                        missing_count += 1;
                        if missing.len() < MAX_LISTED {
                            missing.push(format!("(replicate {rep}, location {}, time {ti})", domain.ids()[j]));
                        }
                        values.push(f64::NAN);
                    }
                }
            }
        }
    }
    if missing_count > 0 {
        let more = if missing_count > missing.len() {
            format!(" and {} more", missing_count - missing.len())
        } else {
            String::new()
        };
        return Err(CliError::validation(
            STAGE,
            format!("missing cells: {}{more}", missing.join(", ")),
        ));
    }

    let grid = if times.values().all(|t| t.is_some()) {
        TimeGrid::new(times.values().map(|t| t.unwrap()).collect())
    } else {
        TimeGrid::uniform(t)
    }
    .stage(STAGE)?;
    let labels = reps
        .iter()
        .map(|&r| usize::try_from(r).map_err(|_| CliError::validation(STAGE, format!("replicate label {r} too large"))))
        .collect::<CliResult<Vec<usize>>>()?;
    SpatialFunctionalDataset::with_labels(values, n, grid, domain, labels).stage(STAGE)
}

fn writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::io("export", path, e))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io("export", path, e))
}

macro_rules! row {
    ($w:expr, $path:expr, [$($field:expr),+ $(,)?]) => {
        $w.write_record(&[$($field.to_string()),+]).map_err(|e| CliError::io("export", $path, e))?
    };
}

pub fn write_locations(domain: &SpatialDomain, path: &Path) -> CliResult<()> {
    let mut w = writer(path)?;
    if domain.dim() == 2 {
        row!(w, path, ["location_id", "x", "y"]);
    } else {
        row!(w, path, ["location_id", "x"]);
    }
    for j in 0..domain.len() {
        let c = domain.coord(j);
        if c.len() == 2 {
            row!(w, path, [domain.ids()[j], c[0], c[1]]);
        } else {
            row!(w, path, [domain.ids()[j], c[0]]);
        }
    }
    finish(w, path)
}

/// Write the dataset in the long format, including the `time` column so the
/// grid survives a round trip. Values use the shortest exact decimal form.
pub fn write_dataset(data: &SpatialFunctionalDataset, data_path: &Path, locations_path: &Path) -> CliResult<()> {
    write_locations(data.domain(), locations_path)?;
    let mut w = writer(data_path)?;
    row!(w, data_path, ["replicate", "location_id", "time_index", "time", "value"]);
    let ids = data.domain().ids();
    let times = data.grid().points();
    for i in 0..data.n() {
        let label = data.replicate_labels()[i];
        for j in 0..data.p() {
            for (m, v) in data.curve(i, j).iter().enumerate() {
                row!(w, data_path, [label, ids[j], m + 1, times[m], v]);
            }
        }
    }
    finish(w, data_path)
}

pub fn write_truth(domain: &SpatialDomain, truth: &GroundTruth, path: &Path) -> CliResult<()> {
    let mut w = writer(path)?;
    row!(w, path, ["location_id", "theta"]);
    for (id, &s) in domain.ids().iter().zip(&truth.support) {
        row!(w, path, [id, u8::from(s)]);
    }
    finish(w, path)
}

pub fn write_q_profile(values: &[f64], path: &Path) -> CliResult<()> {
    let mut w = writer(path)?;
    row!(w, path, ["tau", "q_value"]);
    for (k, v) in values.iter().enumerate() {
        row!(w, path, [k + 1, v]);
    }
    finish(w, path)
}

/// `location_id,W,selected`, rows ordered by decreasing `W`.
pub fn write_recovery(ids: &[String], w_stat: &[f64], selected: &[usize], path: &Path) -> CliResult<()> {
    let chosen: BTreeSet<usize> = selected.iter().copied().collect();
    let mut order: Vec<usize> = (0..w_stat.len()).collect();
    order.sort_by(|&a, &b| w_stat[b].total_cmp(&w_stat[a]).then(a.cmp(&b)));
    let mut w = writer(path)?;
    row!(w, path, ["location_id", "W", "selected"]);
    for j in order {
        row!(w, path, [ids[j], w_stat[j], u8::from(chosen.contains(&j))]);
    }
    finish(w, path)
}

pub fn write_rows<T: serde::Serialize>(rows: &[T], path: &Path) -> CliResult<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io("export", path, e))?;
    }
    finish(w, path)
}
