//! Colored text: one background color per symbol from a label stream, with
//! an optional second label stream for the font color.

use std::fmt::Write as _;

use crate::error::{invalid, Result};

pub const PALETTE_SIZE: usize = 10;

const COLORS: [(u8, u8, u8); PALETTE_SIZE] = [
    (0x4e, 0x79, 0xa7),
    (0xf2, 0x8e, 0x2b),
    (0xe1, 0x57, 0x59),
    (0x76, 0xb7, 0xb2),
    (0x59, 0xa1, 0x4f),
    (0xed, 0xc9, 0x48),
    (0xb0, 0x7a, 0xa1),
    (0xff, 0x9d, 0xa7),
    (0x9c, 0x75, 0x5f),
    (0xba, 0xb0, 0xac),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Palette;

fn linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

impl Palette {
    pub fn len(&self) -> usize {
        PALETTE_SIZE
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rgb(&self, label: usize) -> (u8, u8, u8) {
        COLORS[label]
    }

    pub fn hex(&self, label: usize) -> String {
        let (r, g, b) = COLORS[label];
        format!("#{r:02x}{g:02x}{b:02x}")
    }

    /// Nearest entry of the 6x6x6 color cube of a 256-color terminal.
    pub fn ansi256(&self, label: usize) -> u8 {
        let (r, g, b) = COLORS[label];
        let q = |c: u8| ((c as f64 / 255.0) * 5.0).round() as u8;
        16 + 36 * q(r) + 6 * q(g) + q(b)
    }

    /// Black on light backgrounds, white on dark ones.
    pub fn dark_font(&self, label: usize) -> bool {
        let (r, g, b) = COLORS[label];
        0.2126 * linear(r) + 0.7152 * linear(g) + 0.0722 * linear(b) > 0.179
    }
}

/// Symbols with their background labels and optional font labels.
#[derive(Debug, Clone, PartialEq)]
pub struct VizDocument {
    pub symbols: Vec<String>,
    pub background: Vec<usize>,
    pub font: Option<Vec<usize>>,
    pub palette: Palette,
}

pub fn render_colored_text(symbols: Vec<String>, background: Vec<usize>, font: Option<Vec<usize>>) -> Result<VizDocument> {
    if background.len() != symbols.len() || font.as_ref().is_some_and(|f| f.len() != symbols.len()) {
        return Err(invalid("label streams must have one label per symbol"));
    }
    if let Some(&bad) = background.iter().chain(font.iter().flatten()).find(|&&l| l >= PALETTE_SIZE) {
        return Err(invalid(format!("label {bad} is outside the {PALETTE_SIZE}-color palette")));
    }
    Ok(VizDocument { symbols, background, font, palette: Palette })
}

fn escape_html(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
}

impl VizDocument {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    fn font_hex(&self, i: usize) -> String {
        match &self.font {
            Some(f) => self.palette.hex(f[i]),
            None if self.palette.dark_font(self.background[i]) => "#000000".into(),
            None => "#ffffff".into(),
        }
    }

    fn font_ansi(&self, i: usize) -> u8 {
        match &self.font {
            Some(f) => self.palette.ansi256(f[i]),
            None if self.palette.dark_font(self.background[i]) => 16,
            None => 231,
        }
    }

    /// Standalone HTML page with inline styles and one span per symbol.
    pub fn to_html(&self, title: &str) -> String {
        let mut out = String::from("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>");
        escape_html(title, &mut out);
        out.push_str("</title>\n</head>\n<body>\n");
        if !self.is_empty() {
            out.push_str("<pre style=\"font-family:monospace;line-height:1.3\">");
            for (i, s) in self.symbols.iter().enumerate() {
                let bg = self.palette.hex(self.background[i]);
                let _ = write!(out, "<span style=\"background:{bg};color:{}\">", self.font_hex(i));
                escape_html(s, &mut out);
                out.push_str("</span>");
            }
            out.push_str("</pre>\n");
        }
        out.push_str("</body>\n</html>\n");
        out
    }

    /// 256-color terminal escapes; colors are reset before each line break.
    pub fn to_ansi(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.symbols.iter().enumerate() {
            let _ = write!(out, "\x1b[48;5;{}m\x1b[38;5;{}m", self.palette.ansi256(self.background[i]), self.font_ansi(i));
            if s == "\n" {
                out.push_str("\x1b[0m\n");
            } else {
                out.push_str(s);
            }
        }
        out.push_str("\x1b[0m");
        out
    }
}
