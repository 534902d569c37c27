//! `synth` data generation and the `sweep` grid runner.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use hybridseq::synth;
use serde::Serialize;

use crate::config::ModelKind;
use crate::error::{CliError, CliResult};
use crate::train::{table_row, write_json, Report, REPORT_FILE, TABLE_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    TextAb,
    TextUniform,
    TextHash,
    TextCode,
    Signal,
}

/// Writes a synthetic corpus. Signals also get `<out>.regimes` with the
/// planted regime of every row.
pub fn cmd_synth(kind: SynthKind, length: usize, seed: u64, out: &Path) -> CliResult<()> {
    if length == 0 {
        return Err(CliError::config("--length: must be > 0"));
    }
    let write = |path: &Path, body: String| fs::write(path, body).map_err(|e| CliError::config(format!("{}: {e}", path.display())));
    match kind {
        SynthKind::TextAb => write(out, synth::text_ab(length)),
        SynthKind::TextUniform => write(out, synth::text_uniform(length, seed)),
        SynthKind::TextHash => write(out, synth::text_hash(length, seed)),
        SynthKind::TextCode => write(out, synth::text_code(length, seed)),
        SynthKind::Signal => {
            let s = synth::signal(length, seed)?;
            write(out, s.to_csv())?;
            let mut regimes: String = s.regimes.iter().map(|r| format!("{r}\n")).collect();
            if regimes.is_empty() {
                regimes.push('\n');
            }
            let mut path = out.as_os_str().to_owned();
            path.push(".regimes");
            write(Path::new(&path), regimes)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub model: ModelKind,
    pub h: Option<usize>,
    pub k: Option<usize>,
}

impl Cell {
    pub fn dir_name(&self) -> String {
        let mut s = self.model.name().to_string();
        if let Some(h) = self.h {
            s.push_str(&format!("-H{h}"));
        }
        if let Some(k) = self.k {
            s.push_str(&format!("-K{k}"));
        }
        s
    }
}

/// Grid in table order: models as given, then H, then K. Sizes a model
/// does not use are left out.
pub fn grid(models: &[ModelKind], hidden: &[usize], states: &[usize]) -> CliResult<Vec<Cell>> {
    let mut cells = Vec::new();
    for &model in models {
        let hs: Vec<Option<usize>> = if model.has_lstm() { hidden.iter().copied().map(Some).collect() } else { vec![None] };
        let ks: Vec<Option<usize>> = if model.has_hmm() { states.iter().copied().map(Some).collect() } else { vec![None] };
        if hs.is_empty() {
            return Err(CliError::config(format!("--hidden: model {} needs at least one size", model.name())));
        }
        if ks.is_empty() {
            return Err(CliError::config(format!("--states: model {} needs at least one size", model.name())));
        }
        for &h in &hs {
            for &k in &ks {
                cells.push(Cell { model, h, k });
            }
        }
    }
    Ok(cells)
}

pub fn threads_from_env() -> CliResult<usize> {
    match std::env::var("HYBRIDSEQ_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::config(format!("HYBRIDSEQ_THREADS: expected a positive integer, got {v:?}"))),
        },
    }
}

#[derive(Debug, Serialize)]
struct SweepRow {
    model: ModelKind,
    #[serde(rename = "H")]
    h: Option<usize>,
    #[serde(rename = "K")]
    k: Option<usize>,
    dir: String,
    exit_code: i32,
    ll_valid: Option<f64>,
    ll_test: Option<f64>,
}

pub struct SweepArgs {
    pub config: PathBuf,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub threads: usize,
}

fn spawn(args: &SweepArgs, cell: &Cell, dir: &Path) -> CliResult<Child> {
    let exe = std::env::current_exe()?;
    let mut cmd = Command::new(exe);
    cmd.arg("train").arg("--config").arg(&args.config);
    for s in &args.sets {
        cmd.arg("--set").arg(s);
    }
    if let Some(seed) = args.seed {
        cmd.arg("--seed").arg(seed.to_string());
    }
    cmd.arg("--set").arg(format!("model={}", cell.model.name()));
    if let Some(h) = cell.h {
        cmd.arg("--set").arg(format!("H={h}"));
    }
    if let Some(k) = cell.k {
        cmd.arg("--set").arg(format!("K={k}"));
    }
    let out_dir = serde_json::to_string(&dir.display().to_string()).expect("strings serialize");
    cmd.arg("--set").arg(format!("output_dir={out_dir}"));
    fs::create_dir_all(dir)?;
    let log = fs::File::create(dir.join("stderr.log"))?;
    Ok(cmd.stdout(Stdio::null()).stderr(log).spawn()?)
}

/// Trains every grid cell in child processes, at most `threads` at a time,
/// then writes `table.md` and `sweep.json` under `out`. Returns the table
/// and the number of failed cells.
pub fn cmd_sweep(args: &SweepArgs, cells: &[Cell]) -> CliResult<(String, usize)> {
    fs::create_dir_all(&args.out)?;
    let mut codes = vec![0; cells.len()];
    let mut running: Vec<(usize, Child)> = Vec::new();
    let mut next = 0;
    while next < cells.len() || !running.is_empty() {
        while next < cells.len() && running.len() < args.threads {
            let dir = args.out.join(cells[next].dir_name());
            log::info!("sweep: starting {}", cells[next].dir_name());
            running.push((next, spawn(args, &cells[next], &dir)?));
            next += 1;
        }
        let (i, mut child) = running.remove(0);
        let status = child.wait()?;
        codes[i] = status.code().unwrap_or(-1);
    }

    let mut table = String::from(TABLE_HEADER);
    let mut rows = Vec::new();
    for (cell, &code) in cells.iter().zip(&codes) {
        let dir = args.out.join(cell.dir_name());
        let report: Option<Report> = (code == 0)
            .then(|| fs::read_to_string(dir.join(REPORT_FILE)).ok())
            .flatten()
            .and_then(|s| serde_json::from_str(&s).ok());
        let ll = report.as_ref().and_then(Report::headline);
        if code == 0 {
            table.push_str(&table_row(cell.model, cell.h, cell.k, ll));
        } else {
            table.push_str(&format!("| {} | {} | {} | failed (exit {code}) |\n", cell.model.method(),
                cell.h.map_or("-".into(), |h| h.to_string()), cell.k.map_or("-".into(), |k| k.to_string())));
        }
        rows.push(SweepRow {
            model: cell.model,
            h: cell.h,
            k: cell.k,
            dir: cell.dir_name(),
            exit_code: code,
            ll_valid: report.as_ref().and_then(|r| r.ll.valid),
            ll_test: report.as_ref().and_then(|r| r.ll.test),
        });
    }
    fs::write(args.out.join("table.md"), &table)?;
    write_json(&args.out.join("sweep.json"), &rows)?;
    Ok((table, codes.iter().filter(|&&c| c != 0).count()))
}
