//! Commands that load a checkpoint: `eval`, `viz` and `tree`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use hybridseq::interpret::{fit_surrogate_tree, hmm_state_labels, kmeans, render_colored_text, TreeConfig};
use hybridseq::Matrix;
use serde::Serialize;

use crate::config::{apply_override, from_value, RunConfig};
use crate::data::{self, Part, SplitName};
use crate::error::{CliError, CliResult};
use crate::model::{Checkpoint, Model, LIBRARY_VERSION};
use crate::train::{table_row, write_json};

/// Where the evaluated symbols come from.
#[derive(Debug, Clone)]
pub struct DataSource {
    pub split: SplitName,
    /// Files read whole; overrides the split of the checkpoint's config.
    pub files: Vec<PathBuf>,
    /// Dotted overrides applied to the checkpoint's config.
    pub sets: Vec<String>,
}

impl DataSource {
    fn label(&self) -> &str {
        if self.files.is_empty() {
            self.split.name()
        } else {
            "data"
        }
    }

    fn parts(&self, ck: &Checkpoint) -> CliResult<Vec<Part>> {
        let parts = if self.files.is_empty() {
            let mut value = serde_json::to_value(&ck.config).map_err(|e| CliError::config(e.to_string()))?;
            for s in &self.sets {
                apply_override(&mut value, s)?;
            }
            let config: RunConfig = from_value(value, "config")?;
            config.validate()?;
            let splits = data::prepare(&config.data, Some(&ck.encoding))?;
            splits.get(self.split).to_vec()
        } else {
            data::prepare_files(ck.config.data.kind, &self.files, &ck.encoding)?
        };
        if parts.is_empty() {
            return Err(CliError::config(format!("split {} has no data", self.label())));
        }
        Ok(parts)
    }
}

#[derive(Debug, Serialize)]
struct EvalReport<'a> {
    library_version: &'a str,
    checkpoint: String,
    split: &'a str,
    ll: f64,
    n_pairs: usize,
}

/// Prints the mean LL and the summary row; returns the unrounded value.
pub fn cmd_eval(checkpoint: &Path, source: &DataSource, out: Option<&Path>) -> CliResult<f64> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    let parts = source.parts(&ck)?;
    let ll = model.evaluate(&parts)?;
    let kind = model.kind();
    let h = ck.config.h.filter(|_| kind.has_lstm());
    let k = ck.config.k.filter(|_| kind.has_hmm());
    println!("{} LL {ll:.4}", source.label());
    print!("{}", table_row(kind, h, k, Some(ll)));
    if let Some(out) = out {
        let report = EvalReport {
            library_version: LIBRARY_VERSION,
            checkpoint: checkpoint.display().to_string(),
            split: source.label(),
            ll,
            n_pairs: parts.iter().map(|p| p.stream.n_pairs()).sum(),
        };
        write_json(out, &report)?;
    }
    Ok(ll)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VizMode {
    HmmStates,
    Kmeans,
}

#[derive(Debug, Clone)]
pub struct VizArgs {
    pub mode: VizMode,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub ansi: bool,
}

fn first_rows(m: &Matrix, n: usize) -> Matrix {
    Matrix::from_vec(n, m.cols(), m.as_slice()[..n * m.cols()].to_vec()).expect("row prefix has a valid shape")
}

/// Colors the first `n` symbols of the first stream by HMM state or by
/// k-means cluster of the LSTM states, and writes an HTML page.
pub fn cmd_viz(checkpoint: &Path, source: &DataSource, args: &VizArgs) -> CliResult<usize> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    match (args.mode, &model) {
        (VizMode::Kmeans, Model::Hmm(_)) => return Err(CliError::mode("kmeans mode needs a checkpoint with an LSTM")),
        (VizMode::HmmStates, Model::Lstm(_)) => return Err(CliError::mode("hmm-states mode needs a checkpoint with an HMM")),
        _ => {}
    }
    let parts = source.parts(&ck)?;
    let part = &parts[0];
    let n = args.n.min(part.symbols.len());
    let labels = match args.mode {
        VizMode::HmmStates => {
            let states = model.hmm_states(&part.stream)?;
            hmm_state_labels(&first_rows(&states, n))
        }
        VizMode::Kmeans => {
            let states = model.lstm_states(&part.stream)?;
            kmeans(&first_rows(&states.rows, n), args.k, args.seed, 100)?.assignments
        }
    };
    let doc = render_colored_text(part.symbols[..n].to_vec(), labels, None)?;
    let mode = match args.mode {
        VizMode::HmmStates => "HMM states",
        VizMode::Kmeans => "LSTM state clusters",
    };
    let title = format!("{} {mode}: {}", model.kind().method(), part.source);
    fs::write(&args.out, doc.to_html(&title)).map_err(|e| CliError::config(format!("{}: {e}", args.out.display())))?;
    if args.ansi {
        let mut stdout = std::io::stdout().lock();
        if let Err(e) = writeln!(stdout, "{}", doc.to_ansi()) {
            if e.kind() != std::io::ErrorKind::BrokenPipe {
                return Err(e.into());
            }
        }
    }
    Ok(n)
}

/// Fits a surrogate tree for one hidden dimension on the first stream and
/// writes `<prefix>.txt` and `<prefix>.json`. Returns the held-out R².
pub fn cmd_tree(checkpoint: &Path, source: &DataSource, dim: usize, config: &TreeConfig, prefix: &Path) -> CliResult<f64> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    if !model.kind().has_lstm() {
        return Err(CliError::mode("tree needs a checkpoint with an LSTM"));
    }
    let parts = source.parts(&ck)?;
    let part = &parts[0];
    let states = model.lstm_states(&part.stream)?;
    let tree = fit_surrogate_tree(&states, dim, &part.ids, config, &|id| ck.encoding.label(id))?;
    let text = tree.to_text();
    let with_ext = |ext: &str| {
        let mut p = prefix.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    fs::write(with_ext(".txt"), &text)?;
    write_json(&with_ext(".json"), &tree)?;
    print!("{text}");
    println!("held-out R2 {:.4}", tree.heldout_r2);
    Ok(tree.heldout_r2)
}
