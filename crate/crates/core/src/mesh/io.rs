//! Native text mesh format.
//!
//! ```text
//! dpinn-mesh v1 dim=2
//! nodes 4
//! 0 0.0 0.0
//! ...
//! elements 1 kind=Q4
//! 0 0 1 2 3
//! set left 2
//! 0 3
//! ```
//!
//! Tokens are whitespace separated and `#` starts a comment. Floats are
//! written with 17 significant digits so that save/load round-trips exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Element, ElementKind, Mesh, Node};
use crate::error::{Error, Result};

const MAGIC: &str = "dpinn-mesh";

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_mesh(BufReader::new(file))
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_mesh(mesh, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_mesh(mesh: &Mesh, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{MAGIC} v1 dim={}", mesh.dim())?;
    writeln!(w, "nodes {}", mesh.node_count())?;
    for node in mesh.nodes() {
        write!(w, "{}", node.id)?;
        for c in &node.coords {
            write!(w, " {c:.16e}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "elements {} kind={}", mesh.element_count(), mesh.kind())?;
    for el in mesh.elements() {
        write!(w, "{}", el.id)?;
        for n in &el.connectivity {
            write!(w, " {n}")?;
        }
        writeln!(w)?;
    }
    for (name, ids) in mesh.node_sets() {
        writeln!(w, "set {name} {}", ids.len())?;
        for chunk in ids.chunks(16) {
            let line: Vec<String> = chunk.iter().map(|i| i.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

struct Tokens {
    items: Vec<(usize, String)>,
    pos: usize,
}

impl Tokens {
    fn new(reader: impl BufRead) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let content = line.split('#').next().unwrap_or("");
            items.extend(content.split_whitespace().map(|t| (i + 1, t.to_string())));
        }
        Ok(Tokens { items, pos: 0 })
    }

    fn last_line(&self) -> usize {
        self.items.last().map_or(1, |t| t.0)
    }

    fn peek(&self) -> Option<&str> {
        self.items.get(self.pos).map(|t| t.1.as_str())
    }

    fn next(&mut self, what: &str) -> Result<(usize, String)> {
        let tok = self.items.get(self.pos).cloned().ok_or_else(|| Error::Parse {
            line: self.last_line(),
            message: format!("unexpected end of file, expected {what}"),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let (line, tok) = self.next(word)?;
        if tok != word {
            return Err(Error::Parse {
                line,
                message: format!("expected `{word}`, found `{tok}`"),
            });
        }
        Ok(())
    }

    fn parse<T: FromStr>(&mut self, what: &str) -> Result<T> {
        let (line, tok) = self.next(what)?;
        tok.parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid {what} `{tok}`"),
        })
    }

    fn key_value(&mut self, key: &str) -> Result<(usize, String)> {
        let (line, tok) = self.next(key)?;
        match tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')) {
            Some(v) => Ok((line, v.to_string())),
            None => Err(Error::Parse {
                line,
                message: format!("expected `{key}=...`, found `{tok}`"),
            }),
        }
    }
}

pub fn read_mesh(mut reader: impl Read) -> Result<Mesh> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let mut t = Tokens::new(text.as_bytes())?;

    t.expect(MAGIC)?;
    let (line, version) = t.next("version")?;
    if version != "v1" {
        return Err(Error::Parse {
            line,
            message: format!("unsupported version `{version}`"),
        });
    }
    let (line, dim) = t.key_value("dim")?;
    let dim: usize = match dim.as_str() {
        "2" => 2,
        "3" => 3,
        _ => {
            return Err(Error::Parse {
                line,
                message: format!("dim must be 2 or 3, found `{dim}`"),
            })
        }
    };

    t.expect("nodes")?;
    let n_nodes: usize = t.parse("node count")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let id = t.parse("node id")?;
        let coords = (0..dim)
            .map(|_| t.parse::<f64>("coordinate"))
            .collect::<Result<Vec<_>>>()?;
        nodes.push(Node { id, coords });
    }

    t.expect("elements")?;
    let n_elems: usize = t.parse("element count")?;
    let (line, kind) = t.key_value("kind")?;
    let kind = ElementKind::from_str(&kind).map_err(|_| Error::Parse {
        line,
        message: format!("unknown element kind `{kind}`"),
    })?;
    let mut elements = Vec::with_capacity(n_elems);
    for _ in 0..n_elems {
        let id = t.parse("element id")?;
        let connectivity = (0..kind.node_count())
            .map(|_| t.parse::<usize>("node id"))
            .collect::<Result<Vec<_>>>()?;
        elements.push(Element { id, kind, connectivity });
    }

    let mut sets = BTreeMap::new();
    while t.peek().is_some() {
        t.expect("set")?;
        let (line, name) = t.next("set name")?;
        let count: usize = t.parse("set size")?;
        let ids = (0..count)
            .map(|_| t.parse::<usize>("node id"))
            .collect::<Result<Vec<_>>>()?;
        if sets.insert(name.clone(), ids).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate set `{name}`"),
            });
        }
    }

    Mesh::new(dim, nodes, elements, sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_ELEMENT: &str = "\
dpinn-mesh v1 dim=2
# unit square
nodes 4
0 0 0
1 1 0
2 1 1
3 0 1
elements 1 kind=Q4
0 0 1 2 3
set left 2
0 3
";

    #[test]
    fn reads_minimal_file() {
        let mesh = read_mesh(ONE_ELEMENT.as_bytes()).unwrap();
        assert_eq!(mesh.node_count(), 4);
        assert_eq!(mesh.element_count(), 1);
        assert_eq!(mesh.node_set("left").unwrap(), &[0, 3]);
    }

    #[test]
    fn missing_node_is_validation_error() {
        let bad = ONE_ELEMENT.replace("0 0 1 2 3", "0 0 1 2 9");
        assert!(matches!(read_mesh(bad.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn bad_float_reports_line() {
        let bad = ONE_ELEMENT.replace("2 1 1", "2 1 x1");
        match read_mesh(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_rejected() {
        let bad = ONE_ELEMENT.replace("kind=Q4", "kind=T3");
        assert!(matches!(read_mesh(bad.as_bytes()), Err(Error::Parse { line: 8, .. })));
    }
}
