//! Loading, splitting and encoding the files named in a run config.

use std::path::{Path, PathBuf};

use hybridseq::corpus::{split_ranges, DiscretizationSpec, Sequence, SignalTable, SymbolTable};
use hybridseq::task::PredictionStream;
use hybridseq::Error;
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, DataKind};
use crate::error::{CliError, CliResult};

/// How raw data becomes symbol ids; fitted on the training split and
/// stored in every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Encoding {
    Text { symbols: SymbolTable<char> },
    Signal { feature_names: Vec<String>, discretizer: DiscretizationSpec },
}

impl Encoding {
    /// Rebuilds lookup state lost in serialization.
    pub fn restore(&mut self) {
        if let Encoding::Text { symbols } = self {
            symbols.reindex();
        }
    }

    /// Printable name of a symbol id as used by the models' inputs.
    pub fn label(&self, id: usize) -> String {
        match self {
            Encoding::Text { symbols } => symbols.symbol(id).map_or("<unk>".to_string(), |c| c.to_string()),
            Encoding::Signal { .. } => id.to_string(),
        }
    }
}

/// One contiguous stream: the model view plus the symbols to display.
#[derive(Debug, Clone)]
pub struct Part {
    pub source: String,
    pub stream: PredictionStream,
    /// One display string per step.
    pub symbols: Vec<String>,
    /// One symbol id per step (characters for text, targets for signals).
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Valid, SplitName::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| CliError::config(format!("--split: expected train, valid or test, got {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub encoding: Encoding,
    pub train: Vec<Part>,
    pub valid: Vec<Part>,
    pub test: Vec<Part>,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &[Part] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Valid => &self.valid,
            SplitName::Test => &self.test,
        }
    }
}

pub fn streams(parts: &[Part]) -> Vec<PredictionStream> {
    parts.iter().map(|p| p.stream.clone()).collect()
}

fn source(path: &Path, split: SplitName) -> String {
    format!("{}#{}", path.display(), split.name())
}

/// Raw pieces per split before encoding.
type Pieces<T> = [Vec<(String, T)>; 3];

fn gather<T, F>(config: &DataConfig, read: F, len: fn(&T) -> usize, slice: fn(&T, std::ops::Range<usize>) -> T) -> CliResult<Pieces<T>>
where
    F: Fn(&PathBuf) -> CliResult<T>,
{
    let mut out: Pieces<T> = [Vec::new(), Vec::new(), Vec::new()];
    let fractions = (config.split[0], config.split[1], config.split[2]);
    if config.is_split() {
        for path in &config.train {
            let whole = read(path)?;
            let ranges = split_ranges(len(&whole), fractions)
                .map_err(|e| CliError::from(e).context(&format!("data.split of {}", path.display())))?;
            for (i, r) in ranges.into_iter().enumerate() {
                out[i].push((source(path, SplitName::ALL[i]), slice(&whole, r)));
            }
        }
    } else {
        for (i, paths) in [&config.train, &config.valid, &config.test].into_iter().enumerate() {
            for path in paths {
                out[i].push((source(path, SplitName::ALL[i]), read(path)?));
            }
        }
    }
    Ok(out)
}

fn read_text(path: &PathBuf) -> CliResult<Vec<char>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(text.chars().collect())
}

fn read_signal(path: &PathBuf) -> CliResult<SignalTable> {
    SignalTable::read_csv(path).map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

fn too_short(source: &str) -> CliError {
    CliError::from(Error::InsufficientData(format!("{source} has fewer than two steps")))
}

fn text_part(source: String, chars: &[char], table: &SymbolTable<char>) -> CliResult<Part> {
    if chars.len() < 2 {
        return Err(too_short(&source));
    }
    let ids = table.encode(chars.iter());
    let stream = PredictionStream::text(&ids, table.len())?;
    Ok(Part { source, stream, symbols: chars.iter().map(char::to_string).collect(), ids })
}

fn signal_part(source: String, table: &SignalTable, spec: &DiscretizationSpec) -> CliResult<Part> {
    if table.len() < 2 {
        return Err(too_short(&source));
    }
    let target = table
        .target
        .clone()
        .ok_or_else(|| CliError::config(format!("{source}: signal CSV needs a final `target` column")))?;
    let obs = table.discretize(spec)?;
    let stream = PredictionStream::from_sequence(&Sequence::with_targets(obs, target.clone(), 2)?)?;
    Ok(Part { source, stream, symbols: target.iter().map(usize::to_string).collect(), ids: target })
}

/// Reads and encodes every split. The encoding is fitted on the training
/// split unless one is supplied.
pub fn prepare(config: &DataConfig, encoding: Option<&Encoding>) -> CliResult<Splits> {
    match config.kind {
        DataKind::Text => {
            let pieces = gather(config, read_text, Vec::len, |v, r| v[r].to_vec())?;
            let table = match encoding {
                Some(Encoding::Text { symbols }) => symbols.clone(),
                Some(_) => return Err(CliError::config("data.kind: checkpoint was trained on signal data")),
                None => SymbolTable::build(pieces[0].iter().flat_map(|(_, c)| c.iter().copied()))?,
            };
            let [train, valid, test] = pieces.map(|ps| ps.into_iter().map(|(s, c)| text_part(s, &c, &table)).collect::<CliResult<Vec<_>>>());
            Ok(Splits { encoding: Encoding::Text { symbols: table }, train: train?, valid: valid?, test: test? })
        }
        DataKind::Signal => {
            let pieces = gather(config, read_signal, SignalTable::len, SignalTable::slice)?;
            let (names, spec) = match encoding {
                Some(Encoding::Signal { feature_names, discretizer }) => (feature_names.clone(), discretizer.clone()),
                Some(_) => return Err(CliError::config("data.kind: checkpoint was trained on text data")),
                None => {
                    let first = &pieces[0].first().ok_or(Error::EmptyInput)?.1;
                    let mut columns = vec![Vec::new(); first.columns.len()];
                    for (_, t) in &pieces[0] {
                        if t.columns.len() != columns.len() {
                            return Err(CliError::config("data.train: signal files disagree on their columns"));
                        }
                        for (c, col) in columns.iter_mut().zip(&t.columns) {
                            c.extend_from_slice(col);
                        }
                    }
                    (first.feature_names.clone(), DiscretizationSpec::fit(&columns, config.n_bins)?)
                }
            };
            let [train, valid, test] =
                pieces.map(|ps| ps.into_iter().map(|(s, t)| signal_part(s, &t, &spec)).collect::<CliResult<Vec<_>>>());
            Ok(Splits {
                encoding: Encoding::Signal { feature_names: names, discretizer: spec },
                train: train?,
                valid: valid?,
                test: test?,
            })
        }
    }
}

/// Every file read whole, with a fixed encoding.
pub fn prepare_files(kind: DataKind, files: &[PathBuf], encoding: &Encoding) -> CliResult<Vec<Part>> {
    let config = DataConfig { kind, train: Vec::new(), valid: Vec::new(), test: files.to_vec(), split: [0.9, 0.05, 0.05], n_bins: 2 };
    for (i, p) in files.iter().enumerate() {
        if !p.is_file() {
            return Err(CliError::config(format!("--data[{i}]: no such file: {}", p.display())));
        }
    }
    Ok(prepare(&config, Some(encoding))?.test)
}
