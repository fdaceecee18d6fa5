use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundaryTags, Mesh};
use crate::error::Result;

/// On-disk mesh description.
///
/// ```json
/// {"vertices": [[0,0],[1,0],[0,1]], "triangles": [[0,1,2]],
///  "boundary_tags": [[0,1,1]], "coefficient": [1.0]}
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshFile {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// `[a, b, tag]` triples; untagged boundary edges get tag 0.
    #[serde(default)]
    pub boundary_tags: Vec<[usize; 3]>,
    #[serde(default)]
    pub coefficient: Option<Vec<f64>>,
}

impl MeshFile {
    pub fn into_mesh(self) -> Result<Mesh> {
        let tags: BoundaryTags = self
            .boundary_tags
            .iter()
            .map(|t| (super::key(t[0], t[1]), t[2] as u32))
            .collect();
        let mesh = Mesh::new(self.vertices, self.triangles, &tags)?;
        match self.coefficient {
            Some(c) => mesh.with_coefficient(c),
            None => Ok(mesh),
        }
    }

    pub fn from_mesh(mesh: &Mesh) -> MeshFile {
        MeshFile {
            vertices: mesh.vertices().to_vec(),
            triangles: mesh.triangles().to_vec(),
            boundary_tags: mesh
                .boundary_tags()
                .iter()
                .map(|(k, &t)| [k[0], k[1], t as usize])
                .collect(),
            coefficient: Some(mesh.coefficients().to_vec()),
        }
    }
}

pub fn read_mesh_json(path: &Path) -> Result<Mesh> {
    let text = fs::read_to_string(path)?;
    let file: MeshFile = serde_json::from_str(&text)?;
    file.into_mesh()
}

/// SVG drawing of the mesh, elements shaded by `shade` (values in `[0, 1]`)
/// when given.
pub fn write_svg(mesh: &Mesh, shade: Option<&[f64]>, path: &Path) -> Result<()> {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for v in mesh.vertices() {
        x0 = x0.min(v[0]);
        x1 = x1.max(v[0]);
        y0 = y0.min(v[1]);
        y1 = y1.max(v[1]);
    }
    let size = 800.0;
    let scale = size / (x1 - x0).max(y1 - y0);
    let px = |v: [f64; 2]| ((v[0] - x0) * scale + 10.0, (y1 - v[1]) * scale + 10.0);
    let w = (x1 - x0) * scale + 20.0;
    let h = (y1 - y0) * scale + 20.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#
    )
    .ok();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).ok();
    for e in 0..mesh.num_elements() {
        let pts: Vec<String> = mesh
            .element_vertices(e)
            .iter()
            .map(|&v| {
                let (a, b) = px(v);
                format!("{a:.2},{b:.2}")
            })
            .collect();
        let fill = match shade {
            Some(vals) => {
                let t = vals[e].clamp(0.0, 1.0);
                let r = (255.0 * t) as u8;
                let g = (255.0 * (1.0 - t)) as u8;
                format!("rgb({r},{g},96)")
            }
            None => "none".to_string(),
        };
        writeln!(
            s,
            r#"<polygon points="{}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#,
            pts.join(" ")
        )
        .ok();
    }
    s.push_str("</svg>\n");
    fs::write(path, s)?;
    Ok(())
}

/// VTK unstructured grid with one cell array per `(name, values)` pair.
pub fn write_vtu(mesh: &Mesh, cell_data: &[(&str, &[f64])], path: &Path) -> Result<()> {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\"?>\n");
    s.push_str("<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n<UnstructuredGrid>\n");
    writeln!(
        s,
        "<Piece NumberOfPoints=\"{}\" NumberOfCells=\"{}\">",
        mesh.num_vertices(),
        mesh.num_elements()
    )
    .ok();
    s.push_str("<Points>\n<DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n");
    for v in mesh.vertices() {
        writeln!(s, "{:e} {:e} 0", v[0], v[1]).ok();
    }
    s.push_str("</DataArray>\n</Points>\n<Cells>\n<DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n");
    for t in mesh.triangles() {
        writeln!(s, "{} {} {}", t[0], t[1], t[2]).ok();
    }
    s.push_str("</DataArray>\n<DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n");
    for e in 0..mesh.num_elements() {
        writeln!(s, "{}", 3 * (e + 1)).ok();
    }
    s.push_str("</DataArray>\n<DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n");
    for _ in 0..mesh.num_elements() {
        s.push_str("5\n");
    }
    s.push_str("</DataArray>\n</Cells>\n<CellData>\n");
    for (name, vals) in cell_data {
        writeln!(s, "<DataArray type=\"Float64\" Name=\"{name}\" format=\"ascii\">").ok();
        for v in vals.iter() {
            writeln!(s, "{v:e}").ok();
        }
        s.push_str("</DataArray>\n");
    }
    s.push_str("</CellData>\n</Piece>\n</UnstructuredGrid>\n</VTKFile>\n");
    fs::write(path, s)?;
    Ok(())
}
