use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fracture::{FractureNetwork, IntersectionData};
use crate::geometry::Point;
use crate::harness::metrics::ReferenceSolution;
use crate::interpretation::{InterpretedField, Partition};
use crate::mesh::Mesh;

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:.12e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// One row per element: `CELL_ID,XC,YC,LEVEL,IS_FRACTURED,VALUE`.
pub fn write_cell_field(path: &Path, mesh: &Mesh, x: Option<&IntersectionData>, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["CELL_ID", "XC", "YC", "LEVEL", "IS_FRACTURED", "VALUE"])?;
    for (e, el) in mesh.elements().iter().enumerate() {
        let c = el.center();
        let fractured = x.is_some_and(|x| x.fractured[e]);
        w.write_record([
            e.to_string(),
            format!("{:.12e}", c.x),
            format!("{:.12e}", c.y),
            el.level().to_string(),
            (fractured as u8).to_string(),
            format!("{:.12e}", values[e]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a centroid table `X,Y,AREA,VALUE[,ON_FRACTURE]`.
pub fn ingest_reference(path: &Path) -> Result<ReferenceSolution> {
    let ingest = |line: usize, message: String| Error::Ingestion {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_uppercase()).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(cx), Some(cy), Some(ca), Some(cv)) = (col("X"), col("Y"), col("AREA"), col("VALUE")) else {
        return Err(ingest(1, "header must contain X, Y, AREA and VALUE".into()));
    };
    let cf = col("ON_FRACTURE");
    let mut r = ReferenceSolution {
        centroid: Vec::new(),
        area: Vec::new(),
        value: Vec::new(),
        on_fracture: Vec::new(),
    };
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| ingest(line, e.to_string()))?;
        let num = |c: usize, name: &str| -> Result<f64> {
            let s = rec.get(c).ok_or_else(|| ingest(line, format!("missing {name}")))?;
            let v: f64 = s.parse().map_err(|_| ingest(line, format!("{name} is not a number: {s:?}")))?;
            if !v.is_finite() {
                return Err(ingest(line, format!("{name} is not finite")));
            }
            Ok(v)
        };
        let (x, y, a, v) = (num(cx, "X")?, num(cy, "Y")?, num(ca, "AREA")?, num(cv, "VALUE")?);
        if !(a > 0.0) {
            return Err(ingest(line, format!("AREA must be positive, got {a}")));
        }
        let f = match cf {
            Some(c) => match rec.get(c).map(str::to_ascii_lowercase).as_deref() {
                Some("1") | Some("true") => true,
                Some("0") | Some("false") | Some("") | None => false,
                Some(s) => return Err(ingest(line, format!("ON_FRACTURE must be 0/1, got {s:?}"))),
            },
            None => false,
        };
        r.centroid.push(Point::new(x, y));
        r.area.push(a);
        r.value.push(v);
        r.on_fracture.push(f);
    }
    Ok(r)
}

pub fn write_reference(path: &Path, r: &ReferenceSolution) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["X", "Y", "AREA", "VALUE", "ON_FRACTURE"])?;
    for i in 0..r.len() {
        w.write_record([
            format!("{:.15e}", r.centroid[i].x),
            format!("{:.15e}", r.centroid[i].y),
            format!("{:.15e}", r.area[i]),
            format!("{:.15e}", r.value[i]),
            (r.on_fracture[i] as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const VTK_LINE: u8 = 3;
const VTK_POLYGON: u8 = 7;
const VTK_QUAD: u8 = 9;

fn vtk_header(w: &mut impl Write, title: &str, points: &[Point]) -> std::io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", points.len())?;
    for p in points {
        writeln!(w, "{:.12e} {:.12e} 0", p.x, p.y)?;
    }
    Ok(())
}

fn vtk_cells(w: &mut impl Write, cells: &[(u8, Vec<usize>)]) -> std::io::Result<()> {
    let size: usize = cells.iter().map(|c| c.1.len() + 1).sum();
    writeln!(w, "CELLS {} {size}", cells.len())?;
    for (_, ids) in cells {
        write!(w, "{}", ids.len())?;
        for i in ids {
            write!(w, " {i}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {}", cells.len())?;
    for (t, _) in cells {
        writeln!(w, "{t}")?;
    }
    Ok(())
}

fn scalars(w: &mut impl Write, name: &str, values: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(w, "{v:.12e}")?;
    }
    Ok(())
}

/// Nodal pressure on the mesh quadrilaterals.
pub fn write_vtk_pressure(path: &Path, mesh: &Mesh, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    vtk_header(&mut w, "pressure", mesh.vertices())?;
    let cells: Vec<(u8, Vec<usize>)> = mesh.elements().iter().map(|e| (VTK_QUAD, e.vertices.to_vec())).collect();
    vtk_cells(&mut w, &cells)?;
    writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
    scalars(&mut w, "pressure", values.iter().copied())?;
    w.flush()?;
    Ok(())
}

/// Concentration on matrix elements and subelements, plus fracture traces
/// as line cells carrying a display width.
pub fn write_vtk_concentration(
    path: &Path,
    mesh: &Mesh,
    x: &IntersectionData,
    part: &Partition,
    raw: &[f64],
    interpreted: &InterpretedField,
    trace_width: f64,
) -> Result<()> {
    let mut points: Vec<Point> = mesh.vertices().to_vec();
    let mut cells: Vec<(u8, Vec<usize>)> = Vec::new();
    let mut value = Vec::new();
    let mut interp = Vec::new();
    let mut kind = Vec::new();
    for (e, el) in mesh.elements().iter().enumerate() {
        if part.of_element[e].is_empty() {
            cells.push((VTK_QUAD, el.vertices.to_vec()));
            value.push(raw[e]);
            interp.push(raw[e]);
            kind.push(0.0);
        } else {
            for &k in &part.of_element[e] {
                let start = points.len();
                points.extend(&part.subelements[k].polygon);
                cells.push((VTK_POLYGON, (start..points.len()).collect()));
                value.push(raw[e]);
                interp.push(interpreted.subelement[k]);
                kind.push(1.0);
            }
        }
    }
    for e in x.fractured_elements() {
        for s in &x.segments[e] {
            let start = points.len();
            points.push(s.a);
            points.push(s.b);
            cells.push((VTK_LINE, vec![start, start + 1]));
            value.push(raw[e]);
            interp.push(interpreted.element[e]);
            kind.push(2.0);
        }
    }
    let widths: Vec<f64> = kind.iter().map(|&k| if k == 2.0 { trace_width } else { 0.0 }).collect();
    let mut w = BufWriter::new(fs::File::create(path)?);
    vtk_header(&mut w, "concentration", &points)?;
    vtk_cells(&mut w, &cells)?;
    writeln!(w, "CELL_DATA {}", cells.len())?;
    scalars(&mut w, "concentration", value)?;
    scalars(&mut w, "interpreted", interp)?;
    scalars(&mut w, "kind", kind)?;
    scalars(&mut w, "width", widths)?;
    w.flush()?;
    Ok(())
}

/// Fracture network as line cells.
pub fn write_vtk_network(path: &Path, net: &FractureNetwork, width: f64) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    vtk_header(&mut w, "fractures", &net.nodes)?;
    let cells: Vec<(u8, Vec<usize>)> = net.edges.iter().map(|e| (VTK_LINE, e.nodes.to_vec())).collect();
    vtk_cells(&mut w, &cells)?;
    writeln!(w, "CELL_DATA {}", cells.len())?;
    scalars(&mut w, "width", vec![width; cells.len()])?;
    scalars(&mut w, "aperture", net.edges.iter().map(|e| e.props.aperture))?;
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::data(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.csv");
        fs::write(&path, "X,Y,AREA,VALUE\n0.25,0.5,0.5,1.0\n0.75,0.5,0.5,2.0\n").unwrap();
        let r = ingest_reference(&path).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.range(), 1.0);
        let out = dir.path().join("out.csv");
        write_reference(&out, &r).unwrap();
        assert_eq!(ingest_reference(&out).unwrap(), r);
    }

    #[test]
    fn nan_row_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "X,Y,AREA,VALUE,ON_FRACTURE\n0.25,0.5,0.5,1.0,0\n0.75,0.5,0.5,NaN,1\n").unwrap();
        match ingest_reference(&path) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn vtk_pressure_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::uniform(2, 1, crate::geometry::Rect::new(0.0, 2.0, 0.0, 1.0)).unwrap();
        let path = dir.path().join("p.vtk");
        write_vtk_pressure(&path, &mesh, &vec![1.0; mesh.n_vertices()]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 6 double"));
        assert!(text.contains("CELLS 2 10"));
        assert!(text.contains("POINT_DATA 6"));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
