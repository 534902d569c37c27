//! Synthetic corpora with known structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::SignalTable;
use crate::error::{invalid, Result};

pub const SIGNAL_FEATURES: usize = 6;
const REGIME_STAY: f64 = 0.98;
const REGIME_SHIFT: [f64; SIGNAL_FEATURES] = [1.5, -1.5, 1.2, -1.2, 1.0, -1.0];
const PULSE_PERIOD: usize = 4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// "abab..." of the given length.
pub fn text_ab(len: usize) -> String {
    (0..len).map(|i| if i % 2 == 0 { 'a' } else { 'b' }).collect()
}

/// I.i.d. uniform draws over "abcd".
pub fn text_uniform(len: usize, seed: u64) -> String {
    let mut r = rng(seed);
    (0..len).map(|_| b"abcd"[r.random_range(0..4)] as char).collect()
}

/// Random lowercase text in which every '#' is followed by 'x'.
pub fn text_hash(len: usize, seed: u64) -> String {
    let mut r = rng(seed);
    let mut out = String::with_capacity(len);
    while out.len() < len {
        if out.ends_with('#') {
            out.push('x');
        } else if r.random_bool(0.1) {
            out.push('#');
        } else if r.random_bool(0.15) {
            out.push(' ');
        } else {
            out.push(b"abcdefghij"[r.random_range(0..10)] as char);
        }
    }
    out
}

/// Compact code-like lines with `//` line comments and `/* ... */` block
/// comments; code carries no spaces, comment text does.
pub fn text_code(len: usize, seed: u64) -> String {
    const IDENTS: [&str; 8] = ["x", "y", "cnt", "buf", "n", "tot", "i", "len"];
    const WORDS: [&str; 10] = ["the", "value", "is", "reset", "here", "when", "loop", "ends", "note", "fix"];
    let mut r = rng(seed);
    let mut out = String::with_capacity(len + 80);
    let mut depth = 0usize;
    while out.len() < len {
        let words = |r: &mut ChaCha8Rng| {
            let n = r.random_range(2..6);
            (0..n).map(|_| WORDS[r.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        };
        let line = match r.random_range(0..10) {
            0 | 1 => format!("// {}\n", words(&mut r)),
            2 => format!("/* {} */\n", words(&mut r)),
            3 if depth < 3 => {
                depth += 1;
                format!("while({}<{}){{\n", IDENTS[r.random_range(0..8)], r.random_range(1..100))
            }
            4 if depth > 0 => {
                depth -= 1;
                "}\n".to_string()
            }
            _ => {
                let (a, b) = (IDENTS[r.random_range(0..8)], IDENTS[r.random_range(0..8)]);
                let op = ["+", "-", "*"][r.random_range(0..3)];
                let stmt = format!("{a}={b}{op}{};", r.random_range(0..10));
                if r.random_bool(0.3) {
                    format!("{stmt}// {}\n", words(&mut r))
                } else {
                    format!("{stmt}\n")
                }
            }
        };
        out.push_str(&line);
    }
    out.truncate(len);
    out
}

/// Six-feature signal driven by a sticky two-state regime, with a binary
/// target that pulses periodically while regime 1 lasts.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSynth {
    pub table: SignalTable,
    pub regimes: Vec<usize>,
}

pub fn signal(len: usize, seed: u64) -> Result<SignalSynth> {
    if len == 0 {
        return Err(invalid("signal length must be > 0"));
    }
    let mut r = rng(seed);
    let mut regimes = Vec::with_capacity(len);
    let mut columns = vec![Vec::with_capacity(len); SIGNAL_FEATURES];
    let mut target = Vec::with_capacity(len);
    let mut regime = r.random_range(0..2);
    let mut since = 0usize;
    for t in 0..len {
        if t > 0 {
            if r.random_bool(REGIME_STAY) {
                since += 1;
            } else {
                regime = 1 - regime;
                since = 0;
            }
        }
        regimes.push(regime);
        for (d, col) in columns.iter_mut().enumerate() {
            let noise: f64 = r.sample(StandardNormal);
            col.push(REGIME_SHIFT[d] * regime as f64 + noise);
        }
        target.push(usize::from(regime == 1 && since % PULSE_PERIOD == 0));
    }
    let feature_names = (1..=SIGNAL_FEATURES).map(|d| format!("f{d}")).collect();
    Ok(SignalSynth { table: SignalTable { feature_names, columns, target: Some(target) }, regimes })
}

impl SignalSynth {
    pub fn to_csv(&self) -> String {
        let mut out = self.table.feature_names.join(",");
        out.push_str(",target\n");
        let target = self.table.target.as_deref().unwrap_or(&[]);
        for t in 0..self.table.len() {
            for col in &self.table.columns {
                out.push_str(&format!("{:.6},", col[t]));
            }
            out.push_str(&format!("{}\n", target.get(t).copied().unwrap_or(0)));
        }
        out
    }
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// Fraction of positions where `perm[predicted] == truth`, maximized over
/// label permutations of `0..k`.
pub fn aligned_accuracy(predicted: &[usize], truth: &[usize], k: usize) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    permutations(k)
        .iter()
        .map(|perm| predicted.iter().zip(truth).filter(|(&p, &t)| perm[p] == t).count())
        .max()
        .unwrap_or(0) as f64
        / predicted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ab_text() {
        assert_eq!(text_ab(8), "abababab");
    }

    #[test]
    fn hash_is_followed_by_x() {
        let s = text_hash(5000, 1);
        assert_eq!(s.len(), 5000);
        let b = s.as_bytes();
        for i in 0..b.len() - 1 {
            if b[i] == b'#' {
                assert_eq!(b[i + 1], b'x');
            }
        }
        assert!(s.matches('#').count() > 200);
    }

    #[test]
    fn code_text_has_comments() {
        let s = text_code(3000, 2);
        assert_eq!(s.len(), 3000);
        assert!(s.contains("//") && s.contains("/*"));
    }

    #[test]
    fn signal_csv_shape() {
        let s = signal(1000, 3).unwrap();
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1001);
        assert!(lines.iter().all(|l| l.split(',').count() == 7));
        let back = SignalTable::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(back.len(), 1000);
        assert_eq!(back.target, s.table.target);
        // pulses only inside regime 1
        for (t, &y) in s.table.target.as_ref().unwrap().iter().enumerate() {
            if y == 1 {
                assert_eq!(s.regimes[t], 1);
            }
        }
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(text_uniform(100, 5), text_uniform(100, 5));
        assert_ne!(text_uniform(100, 5), text_uniform(100, 6));
        assert_eq!(signal(50, 1).unwrap(), signal(50, 1).unwrap());
    }

    #[test]
    fn alignment_finds_best_permutation() {
        assert_eq!(aligned_accuracy(&[1, 1, 0, 0], &[0, 0, 1, 1], 2), 1.0);
        assert_eq!(aligned_accuracy(&[0, 1, 2, 0], &[2, 0, 1, 1], 3), 0.75);
        assert_eq!(permutations(3).len(), 6);
    }
}
