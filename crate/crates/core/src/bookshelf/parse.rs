use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    BookshelfError, Cell, CellKind, ClassifyOptions, Net, Netlist, Orientation, Pin, PinDirection,
    PlacementRow,
};
use crate::geom::Point;

/// One whitespace-separated token with its 1-based column.
#[derive(Debug, Clone, Copy)]
pub(super) struct Token<'a> {
    pub text: &'a str,
    pub column: usize,
}

/// Significant lines of a bookshelf file: comments, blank lines and the
/// `UCLA <kind> 1.0` banner are skipped, and `:` always stands alone.
pub(super) struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

pub(super) struct Line<'a> {
    pub number: usize,
    pub tokens: Vec<Token<'a>>,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate() }
    }
}

impl<'a> Iterator for LineReader<'a> {
    type Item = Line<'a>;

    fn next(&mut self) -> Option<Line<'a>> {
        for (idx, raw) in self.lines.by_ref() {
            let trimmed = raw.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let tokens = tokenize(raw);
            if tokens.is_empty() || tokens[0].text == "UCLA" {
                continue;
            }
            return Some(Line { number: idx + 1, tokens });
        }
        None
    }
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() || ch == ':' {
            if let Some(s) = start.take() {
                tokens.push(Token { text: &line[s..i], column: s + 1 });
            }
            if ch == ':' {
                tokens.push(Token { text: ":", column: i + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token { text: &line[s..], column: s + 1 });
    }
    tokens
}

pub(super) fn syntax(file: &Path, line: usize, tok: Option<&Token<'_>>, message: impl Into<String>) -> BookshelfError {
    BookshelfError::Syntax {
        file: file.to_path_buf(),
        line,
        column: tok.map_or(1, |t| t.column),
        token: tok.map_or_else(|| "<end of line>".to_string(), |t| t.text.to_string()),
        message: message.into(),
    }
}

impl<'a> Line<'a> {
    pub fn get(&self, i: usize, file: &Path, what: &str) -> Result<Token<'a>, BookshelfError> {
        self.tokens
            .get(i)
            .copied()
            .ok_or_else(|| syntax(file, self.number, self.tokens.last(), format!("expected {what}")))
    }

    pub fn number_at<T: std::str::FromStr>(&self, i: usize, file: &Path, what: &str) -> Result<T, BookshelfError> {
        let tok = self.get(i, file, what)?;
        tok.text
            .parse()
            .map_err(|_| syntax(file, self.number, Some(&tok), format!("expected {what}")))
    }

    /// `Key : value` header lines.
    pub fn header_value(&self, key: &str, file: &Path) -> Result<Option<usize>, BookshelfError> {
        if self.tokens[0].text != key {
            return Ok(None);
        }
        let colon = self.get(1, file, "`:`")?;
        if colon.text != ":" {
            return Err(syntax(file, self.number, Some(&colon), "expected `:`"));
        }
        self.number_at(2, file, "count").map(Some)
    }
}

pub(super) fn read_file(path: &Path) -> Result<String, BookshelfError> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            BookshelfError::MissingFile { path: path.to_path_buf() }
        } else {
            BookshelfError::Io { path: path.to_path_buf(), source }
        }
    })
}

/// Parse a design from its `.aux` file with default classification.
pub fn parse_aux(path: impl AsRef<Path>) -> Result<Netlist, BookshelfError> {
    parse_aux_with(path, &ClassifyOptions::default())
}

pub fn parse_aux_with(path: impl AsRef<Path>, classify: &ClassifyOptions) -> Result<Netlist, BookshelfError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut files: HashMap<&str, PathBuf> = HashMap::new();
    let mut reader = LineReader::new(&text);
    let line = reader
        .next()
        .ok_or_else(|| syntax(path, 1, None, "empty .aux file"))?;
    let colon = line.get(1, path, "`:`")?;
    if colon.text != ":" {
        return Err(syntax(path, line.number, Some(&colon), "expected `:` after placement type"));
    }
    for tok in &line.tokens[2..] {
        let ext = Path::new(tok.text)
            .extension()
            .and_then(|e| e.to_str())
            .ok_or_else(|| syntax(path, line.number, Some(tok), "file name without extension"))?;
        let key = match ext {
            "nodes" => "nodes",
            "nets" => "nets",
            "pl" => "pl",
            "scl" => "scl",
            "wts" => "wts",
            _ => return Err(syntax(path, line.number, Some(tok), "unknown bookshelf file kind")),
        };
        files.insert(key, dir.join(tok.text));
    }
    let nodes_path = files
        .get("nodes")
        .ok_or_else(|| syntax(path, line.number, None, "no .nodes file listed"))?;
    let nets_path = files
        .get("nets")
        .ok_or_else(|| syntax(path, line.number, None, "no .nets file listed"))?;

    let mut cells = parse_nodes(nodes_path)?;
    let index: HashMap<String, usize> = cells.iter().enumerate().map(|(i, c)| (c.name.clone(), i)).collect();
    let nets = parse_nets(nets_path, &index)?;
    if let Some(wts) = files.get("wts") {
        // weights are not used by any metric; only check the file is readable
        let text = read_file(wts)?;
        LineReader::new(&text).for_each(drop);
    }
    if let Some(pl_path) = files.get("pl") {
        for entry in super::parse_pl(pl_path)? {
            if let Some(&i) = index.get(&entry.name) {
                let cell = &mut cells[i];
                cell.position = Some(Point::new(entry.x, entry.y));
                cell.orientation = entry.orientation;
                if entry.fixed {
                    cell.movable = false;
                }
            }
        }
    }
    let rows = match files.get("scl") {
        Some(p) => parse_scl(p)?,
        None => Vec::new(),
    };
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("design")
        .to_string();
    Netlist::new(name, cells, nets, rows, None, classify)
}

fn parse_nodes(path: &Path) -> Result<Vec<Cell>, BookshelfError> {
    let text = read_file(path)?;
    let mut cells = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut declared_nodes = None;
    let mut declared_terminals = None;
    let mut terminals = 0;
    for line in LineReader::new(&text) {
        if let Some(n) = line.header_value("NumNodes", path)? {
            declared_nodes = Some(n);
            continue;
        }
        if let Some(n) = line.header_value("NumTerminals", path)? {
            declared_terminals = Some(n);
            continue;
        }
        let name = line.tokens[0].text;
        let width: f64 = line.number_at(1, path, "width")?;
        let height: f64 = line.number_at(2, path, "height")?;
        let movable = match line.tokens.get(3) {
            None => true,
            Some(t) if t.text == "terminal" || t.text == "terminal_NI" => false,
            Some(t) => return Err(syntax(path, line.number, Some(t), "expected `terminal`")),
        };
        if let Some(extra) = line.tokens.get(4) {
            return Err(syntax(path, line.number, Some(extra), "unexpected trailing token"));
        }
        if !movable {
            terminals += 1;
        }
        if seen.insert(name.to_string(), ()).is_some() {
            return Err(BookshelfError::DuplicateCell {
                file: path.to_path_buf(),
                line: line.number,
                name: name.to_string(),
            });
        }
        cells.push(Cell {
            name: name.to_string(),
            width,
            height,
            kind: if movable { CellKind::Standard } else { CellKind::Terminal },
            movable,
            position: None,
            orientation: Orientation::N,
        });
    }
    check_count(path, "NumNodes", declared_nodes, cells.len())?;
    check_count(path, "NumTerminals", declared_terminals, terminals)?;
    Ok(cells)
}

fn check_count(path: &Path, what: &'static str, declared: Option<usize>, found: usize) -> Result<(), BookshelfError> {
    match declared {
        Some(d) if d != found => Err(BookshelfError::CountMismatch {
            file: path.to_path_buf(),
            what,
            declared: d,
            found,
        }),
        _ => Ok(()),
    }
}

fn parse_nets(path: &Path, index: &HashMap<String, usize>) -> Result<Vec<Net>, BookshelfError> {
    let text = read_file(path)?;
    let mut nets: Vec<Net> = Vec::new();
    let mut declared_nets = None;
    let mut declared_pins = None;
    // pins still owed to the most recent NetDegree header
    let mut pending = 0usize;
    let mut last_line = 0;
    for line in LineReader::new(&text) {
        last_line = line.number;
        if let Some(n) = line.header_value("NumNets", path)? {
            declared_nets = Some(n);
            continue;
        }
        if let Some(n) = line.header_value("NumPins", path)? {
            declared_pins = Some(n);
            continue;
        }
        if line.tokens[0].text == "NetDegree" {
            if pending != 0 {
                return Err(syntax(path, line.number, Some(&line.tokens[0]), format!("previous net is missing {pending} pin(s)")));
            }
            let colon = line.get(1, path, "`:`")?;
            if colon.text != ":" {
                return Err(syntax(path, line.number, Some(&colon), "expected `:`"));
            }
            let degree: usize = line.number_at(2, path, "net degree")?;
            if degree == 0 {
                return Err(syntax(path, line.number, line.tokens.get(2), "net degree must be positive"));
            }
            let name = line
                .tokens
                .get(3)
                .map_or_else(|| format!("net{}", nets.len()), |t| t.text.to_string());
            nets.push(Net { name, pins: Vec::with_capacity(degree) });
            pending = degree;
            continue;
        }
        let first = line.tokens[0];
        if pending == 0 {
            return Err(syntax(path, line.number, Some(&first), "pin line outside a net"));
        }
        let cell = *index.get(first.text).ok_or_else(|| BookshelfError::DanglingPinReference {
            file: path.to_path_buf(),
            line: line.number,
            cell: first.text.to_string(),
        })?;
        let dir_tok = line.get(1, path, "pin direction")?;
        let direction = match dir_tok.text {
            "I" => PinDirection::Input,
            "O" => PinDirection::Output,
            "B" => PinDirection::Bidirectional,
            _ => return Err(syntax(path, line.number, Some(&dir_tok), "expected I, O or B")),
        };
        let (dx, dy) = match line.tokens.get(2) {
            None => (0.0, 0.0),
            Some(t) if t.text == ":" => (
                line.number_at(3, path, "x offset")?,
                line.number_at(4, path, "y offset")?,
            ),
            Some(t) => return Err(syntax(path, line.number, Some(t), "expected `:`")),
        };
        nets.last_mut()
            .expect("pending > 0 implies an open net")
            .pins
            .push(Pin { cell, dx, dy, direction });
        pending -= 1;
    }
    if pending != 0 {
        return Err(syntax(path, last_line, None, format!("last net is missing {pending} pin(s)")));
    }
    check_count(path, "NumNets", declared_nets, nets.len())?;
    check_count(path, "NumPins", declared_pins, nets.iter().map(|n| n.pins.len()).sum())?;
    Ok(nets)
}

fn parse_scl(path: &Path) -> Result<Vec<PlacementRow>, BookshelfError> {
    let text = read_file(path)?;
    let mut rows = Vec::new();
    let mut declared = None;
    let mut current: Option<PlacementRow> = None;
    for line in LineReader::new(&text) {
        let key = line.tokens[0];
        match key.text {
            "NumRows" => declared = line.header_value("NumRows", path)?,
            "CoreRow" => {
                if current.is_some() {
                    return Err(syntax(path, line.number, Some(&key), "nested CoreRow"));
                }
                current = Some(PlacementRow {
                    y: 0.0,
                    height: 0.0,
                    x: 0.0,
                    num_sites: 0,
                    site_width: 1.0,
                    site_spacing: f64::NAN,
                });
            }
            "End" => {
                let mut row = current
                    .take()
                    .ok_or_else(|| syntax(path, line.number, Some(&key), "End without CoreRow"))?;
                if row.site_spacing.is_nan() {
                    row.site_spacing = row.site_width;
                }
                if !(row.height > 0.0) || row.num_sites == 0 {
                    return Err(syntax(path, line.number, Some(&key), "row needs positive height and site count"));
                }
                rows.push(row);
            }
            _ => {
                let row = current
                    .as_mut()
                    .ok_or_else(|| syntax(path, line.number, Some(&key), "row attribute outside CoreRow"))?;
                let value = |i: usize| line.number_at::<f64>(i, path, "number");
                match key.text {
                    "Coordinate" => row.y = value(2)?,
                    "Height" => row.height = value(2)?,
                    "Sitewidth" => row.site_width = value(2)?,
                    "Sitespacing" => row.site_spacing = value(2)?,
                    "Siteorient" | "Sitesymmetry" => {}
                    "SubrowOrigin" => {
                        row.x = value(2)?;
                        let sites = line.get(3, path, "NumSites")?;
                        if sites.text != "NumSites" {
                            return Err(syntax(path, line.number, Some(&sites), "expected NumSites"));
                        }
                        row.num_sites = line.number_at(5, path, "site count")?;
                    }
                    _ => return Err(syntax(path, line.number, Some(&key), "unknown row attribute")),
                }
            }
        }
    }
    if current.is_some() {
        return Err(syntax(path, text.lines().count(), None, "unterminated CoreRow"));
    }
    check_count(path, "NumRows", declared, rows.len())?;
    Ok(rows)
}
