use crate::error::{Error, Result};
use crate::flux::FaceFlux;
use crate::fracture::IntersectionData;
use crate::geometry::{point_segment_distance, Point};
use crate::mesh::Mesh;
use crate::pressure::PressureField;
use crate::reference::{ReferenceMesh, TpfaSolution};

/// Cellwise reference data on a mesh finer than the computational one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub centroid: Vec<Point>,
    pub area: Vec<f64>,
    pub value: Vec<f64>,
    pub on_fracture: Vec<bool>,
}

impl ReferenceSolution {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn from_tpfa(r: &ReferenceMesh, s: &TpfaSolution) -> ReferenceSolution {
        ReferenceSolution {
            centroid: r.mesh.elements().iter().map(|e| e.center()).collect(),
            area: r.mesh.elements().iter().map(|e| e.area()).collect(),
            value: s.pressure.clone(),
            on_fracture: (0..r.mesh.n_elements()).map(|e| r.is_fracture(e)).collect(),
        }
    }

    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .value
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        hi - lo
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.value.len();
        if self.centroid.len() != n || self.area.len() != n || self.on_fracture.len() != n {
            return Err(Error::data("reference columns differ in length"));
        }
        if let Some(i) = (0..n).find(|&i| !(self.area[i] > 0.0) || !self.value[i].is_finite()) {
            return Err(Error::data(format!("reference cell {i} has non-positive area or non-finite value")));
        }
        Ok(())
    }
}

/// `sum |K| (p_h(x_K) - p_ref)^2` over the selected reference cells.
fn weighted_sq(mesh: &Mesh, p: &PressureField, r: &ReferenceSolution, pick: &dyn Fn(usize) -> Option<f64>) -> Result<f64> {
    if r.is_empty() {
        return Err(Error::data("empty reference solution"));
    }
    let mut s = 0.0;
    for i in 0..r.len() {
        let Some(w) = pick(i) else { continue };
        let ph = p
            .value(mesh, r.centroid[i])
            .ok_or_else(|| Error::data(format!("reference centroid {:?} outside the mesh", r.centroid[i])))?;
        s += w * (ph - r.value[i]).powi(2);
    }
    Ok(s)
}

/// Normalized L2 pressure error over the matrix cells of the reference.
pub fn err_matrix(mesh: &Mesh, p: &PressureField, r: &ReferenceSolution) -> Result<f64> {
    let s = weighted_sq(mesh, p, r, &|i| (!r.on_fracture[i]).then_some(r.area[i]))?;
    let omega = mesh.total_area();
    Ok((s / omega).sqrt() / r.range())
}

/// Normalized L2 error along the fractures. Strip cells of width `aperture`
/// carry arc length `|K| / w`.
pub fn err_fracture(mesh: &Mesh, p: &PressureField, r: &ReferenceSolution, aperture: f64, gamma_length: f64) -> Result<f64> {
    let s = weighted_sq(mesh, p, r, &|i| r.on_fracture[i].then_some(r.area[i] / aperture))?;
    Ok((s / gamma_length).sqrt() / r.range())
}

/// Values at `n` uniformly spaced points from `a` to `b`, with arc length.
pub fn sample_line(a: Point, b: Point, n: usize, eval: &dyn Fn(Point) -> Option<f64>) -> Result<Vec<(f64, f64)>> {
    let n = n.max(2);
    let len = a.distance(b);
    (0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            let p = a.lerp(b, t);
            eval(p)
                .map(|v| (t * len, v))
                .ok_or_else(|| Error::invalid(format!("sample point {p:?} outside the domain")))
        })
        .collect()
}

/// Boundary face holding the fracture crossing closest to `point`.
pub fn qoi_face(mesh: &Mesh, x: &IntersectionData, point: Point) -> Result<usize> {
    let tol = 1e-8 * mesh.domain().diameter();
    let mut best: Option<(f64, usize)> = None;
    for (f, face) in mesh.faces().iter().enumerate() {
        if !face.is_boundary() || point_segment_distance(point, face.a, face.b) > tol {
            continue;
        }
        for c in &x.crossings[f] {
            let d = c.point.distance(point);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, f));
            }
        }
    }
    match best {
        // perturbed networks sit up to a small shift away from their input coordinates
        Some((d, f)) if d <= 1e-3 * mesh.h_min() + tol => Ok(f),
        _ => Err(Error::config(format!("no fracture leaves the domain through {point:?}"))),
    }
}

/// Tracer flow rate out through each fracture outlet face: `V_F` times the
/// upwind concentration.
pub fn qoi(mesh: &Mesh, flux: &FaceFlux, c: &[f64], faces: &[usize], c_inflow: f64) -> Vec<f64> {
    faces
        .iter()
        .map(|&f| {
            let q = flux.q[f];
            if q >= 0.0 {
                q * c[mesh.face(f).minus]
            } else {
                q * c_inflow
            }
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `|| a - b ||_{L2}` for piecewise constants with the given cell areas.
pub fn l2_difference(areas: &[f64], a: &[f64], b: &[f64]) -> f64 {
    areas
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}
