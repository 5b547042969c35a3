use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::parse::{read_file, syntax, LineReader};
use super::{BookshelfError, Netlist, Orientation};

/// One placement record from a `.pl` file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlEntry {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub orientation: Orientation,
    pub fixed: bool,
}

/// Read a `.pl` file. Entries come back in file order; names are not
/// checked against any netlist.
pub fn parse_pl(path: impl AsRef<Path>) -> Result<Vec<PlEntry>, BookshelfError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let mut out = Vec::new();
    for line in LineReader::new(&text) {
        let name = line.tokens[0].text.to_string();
        let x = line.number_at(1, path, "x coordinate")?;
        let y = line.number_at(2, path, "y coordinate")?;
        let mut orientation = Orientation::N;
        let mut fixed = false;
        let mut i = 3;
        if let Some(tok) = line.tokens.get(i) {
            if tok.text == ":" {
                let o = line.get(4, path, "orientation")?;
                orientation = o
                    .text
                    .parse()
                    .map_err(|_| syntax(path, line.number, Some(&o), "unknown orientation"))?;
                i = 5;
            }
        }
        if let Some(tok) = line.tokens.get(i) {
            match tok.text {
                "/FIXED" | "/FIXED_NI" => fixed = true,
                _ => return Err(syntax(path, line.number, Some(tok), "expected /FIXED")),
            }
            i += 1;
        }
        if let Some(tok) = line.tokens.get(i) {
            return Err(syntax(path, line.number, Some(tok), "unexpected trailing token"));
        }
        out.push(PlEntry { name, x, y, orientation, fixed });
    }
    Ok(out)
}

/// Write every cell of `netlist` as a `.pl` file. Fails if any cell lacks
/// a position.
pub fn write_pl(netlist: &Netlist, path: impl AsRef<Path>) -> Result<(), BookshelfError> {
    if let Some(cell) = netlist.cells.iter().find(|c| c.position.is_none()) {
        return Err(BookshelfError::UnplacedCell(cell.name.clone()));
    }
    write_pl_placed(netlist, path)
}

/// Write only the cells that carry a position; used to dump partial layouts.
pub fn write_pl_placed(netlist: &Netlist, path: impl AsRef<Path>) -> Result<(), BookshelfError> {
    let path = path.as_ref();
    let io_err = |source| BookshelfError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "UCLA pl 1.0").map_err(io_err)?;
    writeln!(w).map_err(io_err)?;
    for cell in &netlist.cells {
        let Some(p) = cell.position else { continue };
        // `{}` on f64 prints the shortest string that parses back exactly
        if cell.movable {
            writeln!(w, "{} {} {} : {}", cell.name, p.x, p.y, cell.orientation)
        } else {
            writeln!(w, "{} {} {} : {} /FIXED", cell.name, p.x, p.y, cell.orientation)
        }
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
