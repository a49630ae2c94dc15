//! Field export: legacy ASCII VTK unstructured grids and flat nodal CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mesh::{ElementKind, Mesh};

/// Nodal coordinates and displacements in a common node order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub coords: Array2<f64>,
    pub displacement: Array2<f64>,
}

impl NodalField {
    pub fn new(coords: Array2<f64>, displacement: Array2<f64>) -> Result<Self> {
        if coords.dim() != displacement.dim() || !(2..=3).contains(&coords.ncols()) {
            return Err(Error::ShapeMismatch(format!(
                "coordinates {:?} and displacements {:?} do not match",
                coords.dim(),
                displacement.dim()
            )));
        }
        Ok(NodalField { coords, displacement })
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn node_count(&self) -> usize {
        self.coords.nrows()
    }
}

fn vtk_cell_type(kind: ElementKind) -> u8 {
    match kind {
        ElementKind::Q4 => 9,
        ElementKind::H8 => 12,
    }
}

/// Writes the meshes as one unstructured grid with nodes stacked in mesh
/// order, carrying `displacement` vectors and their `magnitude`.
pub fn write_vtk(w: &mut impl Write, meshes: &[&Mesh], field: &Array2<f64>, title: &str) -> Result<()> {
    let total: usize = meshes.iter().map(|m| m.node_count()).sum();
    if field.nrows() != total {
        return Err(Error::ShapeMismatch(format!(
            "field has {} rows for {total} nodes",
            field.nrows()
        )));
    }
    let cells: usize = meshes.iter().map(|m| m.element_count()).sum();
    let entries: usize = meshes
        .iter()
        .map(|m| m.element_count() * (m.kind().node_count() + 1))
        .sum();
    let pad = |v: &[f64]| -> [f64; 3] {
        let mut out = [0.0; 3];
        out[..v.len()].copy_from_slice(v);
        out
    };
    let mut inner = || -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {total} double")?;
        for m in meshes {
            for n in m.nodes() {
                let [x, y, z] = pad(&n.coords);
                writeln!(w, "{x:.16e} {y:.16e} {z:.16e}")?;
            }
        }
        writeln!(w, "CELLS {cells} {entries}")?;
        let mut offset = 0;
        for m in meshes {
            for e in m.elements() {
                write!(w, "{}", e.connectivity.len())?;
                for n in &e.connectivity {
                    write!(w, " {}", n + offset)?;
                }
                writeln!(w)?;
            }
            offset += m.node_count();
        }
        writeln!(w, "CELL_TYPES {cells}")?;
        for m in meshes {
            for _ in 0..m.element_count() {
                writeln!(w, "{}", vtk_cell_type(m.kind()))?;
            }
        }
        writeln!(w, "POINT_DATA {total}")?;
        writeln!(w, "VECTORS displacement double")?;
        for row in field.rows() {
            let [x, y, z] = pad(row.as_slice().unwrap_or(&row.to_vec()));
            writeln!(w, "{x:.16e} {y:.16e} {z:.16e}")?;
        }
        writeln!(w, "SCALARS magnitude double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for row in field.rows() {
            writeln!(w, "{:.16e}", row.dot(&row).sqrt())?;
        }
        Ok(())
    };
    inner().map_err(|e| Error::io("<vtk output>", e))
}

pub fn save_vtk(path: impl AsRef<Path>, meshes: &[&Mesh], field: &Array2<f64>, title: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_vtk(&mut w, meshes, field, title)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn header(dim: usize) -> Vec<&'static str> {
    let mut h = vec!["node_id", "x", "y"];
    if dim == 3 {
        h.push("z");
    }
    h.extend(["ux", "uy"]);
    if dim == 3 {
        h.push("uz");
    }
    h
}

/// Writes `node_id,x,y[,z],ux,uy[,uz]` rows.
pub fn write_field_csv(w: impl Write, field: &NodalField) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Validation(format!("cannot write CSV: {e}"));
    out.write_record(header(field.dim())).map_err(csv_err)?;
    for i in 0..field.node_count() {
        let mut rec = vec![i.to_string()];
        rec.extend(field.coords.row(i).iter().map(|v| format!("{v:.16e}")));
        rec.extend(field.displacement.row(i).iter().map(|v| format!("{v:.16e}")));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn save_field_csv(path: impl AsRef<Path>, field: &NodalField) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_field_csv(BufWriter::new(file), field)
}

/// Reads a field written by [`write_field_csv`]. Node ids must be `0..N` in
/// order.
pub fn read_field_csv(r: impl Read) -> Result<NodalField> {
    let mut rdr = csv::Reader::from_reader(r);
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let cols: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let dim = match cols.len() {
        5 => 2,
        7 => 3,
        n => return Err(parse_err(1, format!("expected 5 or 7 columns, found {n}"))),
    };
    if cols != header(dim) {
        return Err(parse_err(1, format!("unexpected header {cols:?}")));
    }
    let (mut coords, mut disp) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let id: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad node id `{}`", &rec[0])))?;
        if id != i {
            return Err(parse_err(line, format!("node id {id} out of order, expected {i}")));
        }
        for (k, v) in rec.iter().enumerate().skip(1) {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad number `{v}`")))?;
            if k <= dim {
                coords.push(x);
            } else {
                disp.push(x);
            }
        }
    }
    let n = coords.len() / dim;
    NodalField::new(
        Array2::from_shape_vec((n, dim), coords).expect("row length checked"),
        Array2::from_shape_vec((n, dim), disp).expect("row length checked"),
    )
}

pub fn load_field_csv(path: impl AsRef<Path>) -> Result<NodalField> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_field_csv(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::block;

    #[test]
    fn csv_roundtrip_is_exact() {
        let coords = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 0.1, 1.0 / 3.0]).unwrap();
        let disp = Array2::from_shape_vec((2, 2), vec![1e-17, -2.5, std::f64::consts::PI, 0.0]).unwrap();
        let field = NodalField::new(coords, disp).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &field).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("node_id,x,y,ux,uy\n"));
        assert_eq!(read_field_csv(buf.as_slice()).unwrap(), field);
    }

    #[test]
    fn csv_rejects_out_of_order_ids() {
        let text = "node_id,x,y,ux,uy\n1,0,0,0,0\n";
        assert!(matches!(
            read_field_csv(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn vtk_layout() {
        let a = block([0.0, 0.0], [1.0, 1.0], [1, 1]).unwrap();
        let b = block([1.0, 0.0], [1.0, 1.0], [2, 1]).unwrap();
        let field = Array2::from_shape_fn((10, 2), |(i, c)| if c == 0 { 3.0 } else { 4.0 * (i % 2) as f64 });
        let mut buf = Vec::new();
        write_vtk(&mut buf, &[&a, &b], &field, "test").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("POINTS 10 double"));
        assert!(text.contains("CELLS 3 15"));
        assert!(text.contains("4 4 5 8 7"));
        assert!(text.contains("VECTORS displacement double"));
        let mags: Vec<&str> = text
            .lines()
            .skip_while(|l| *l != "LOOKUP_TABLE default")
            .skip(1)
            .collect();
        assert_eq!(mags.len(), 10);
        assert_eq!(mags[1].parse::<f64>().unwrap(), 5.0);
    }
}
