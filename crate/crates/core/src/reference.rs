//! Equi-dimensional reference model: fracture strips of width `w` are meshed
//! as ordinary cells with permeability `kappa_G` and solved by two-point
//! finite volumes on a graded rectilinear grid.

use log::warn;

use crate::boundary::{BoundaryFaces, Condition};
use crate::error::{Error, Result};
use crate::flux::FaceFlux;
use crate::fracture::FractureNetwork;
use crate::geometry::{Point, Rect};
use crate::linalg::{self, SolveStats, SolverOptions, TripletBuilder};
use crate::mesh::Mesh;
use crate::transport::{TransportInput, TransportParams, TransportSystem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    /// Cells across each fracture strip.
    pub cells_across: usize,
    /// Growth factor of cell sizes away from strips.
    pub ratio: f64,
    /// Largest cell size.
    pub h_max: f64,
    pub max_cells: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            cells_across: 10,
            ratio: 1.2,
            h_max: 1.0 / 128.0,
            max_cells: 2_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceMesh {
    pub mesh: Mesh,
    /// Network edge whose strip contains the cell center, if any.
    pub strip: Vec<Option<usize>>,
    /// Cells across each strip that were actually achieved.
    pub cells_across: usize,
}

impl ReferenceMesh {
    pub fn is_fracture(&self, e: usize) -> bool {
        self.strip[e].is_some()
    }

    pub fn n_fracture_cells(&self) -> usize {
        self.strip.iter().filter(|s| s.is_some()).count()
    }

    /// Cellwise permeability: `kappa_G` in strips, `kappa` elsewhere.
    pub fn permeability(&self, net: &FractureNetwork, kappa: f64) -> Vec<f64> {
        self.strip
            .iter()
            .map(|s| s.map_or(kappa, |j| net.edges[j].props.permeability))
            .collect()
    }

    pub fn porosity(&self, net: &FractureNetwork, phi: f64) -> Vec<f64> {
        self.strip.iter().map(|s| s.map_or(phi, |j| net.edges[j].props.porosity)).collect()
    }
}

/// Breakpoints on `[lo, hi]` resolving each interval of `fine` with `n` cells
/// and growing geometrically in between.
fn graded_axis(lo: f64, hi: f64, fine: &[(f64, f64)], n: usize, ratio: f64, h_max: f64) -> Vec<f64> {
    let mut iv: Vec<(f64, f64)> = fine.iter().map(|&(a, b)| (a.max(lo), b.min(hi))).filter(|(a, b)| b > a).collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in iv {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    // fill a gap from size ha at the left end to hb at the right end
    let fill = |out: &mut Vec<f64>, a: f64, b: f64, ha: f64, hb: f64| {
        let mut left = vec![a];
        let mut right = vec![b];
        let (mut hl, mut hr) = (ha, hb);
        loop {
            let gap = right.last().unwrap() - left.last().unwrap();
            if gap <= 2.0 * hl.max(hr) {
                break;
            }
            if hl <= hr {
                left.push(left.last().unwrap() + hl);
                hl = (hl * ratio).min(h_max);
            } else {
                right.push(right.last().unwrap() - hr);
                hr = (hr * ratio).min(h_max);
            }
        }
        let (x0, x1) = (*left.last().unwrap(), *right.last().unwrap());
        let m = ((x1 - x0) / hl.max(hr)).ceil().max(1.0) as usize;
        out.extend(left.iter().skip(1));
        for k in 1..m {
            out.push(x0 + (x1 - x0) * k as f64 / m as f64);
        }
        right.reverse();
        out.extend(right.iter().take(right.len() - 1));
    };
    let mut out = vec![lo];
    let mut at = lo;
    let mut h_at = h_max;
    for &(a, b) in &merged {
        let h = (b - a) / n as f64;
        if a > at {
            fill(&mut out, at, a, h_at, h);
            out.push(a);
        }
        // strips closer than their own width share a fine block
        let m = ((b - a) / h).round().max(1.0) as usize;
        for k in 1..=m {
            out.push(a + (b - a) * k as f64 / m as f64);
        }
        at = b;
        h_at = h;
    }
    if hi > at {
        fill(&mut out, at, hi, h_at, h_max);
        out.push(hi);
    }
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (hi - lo));
    *out.last_mut().unwrap() = hi;
    out
}

/// Edge whose strip of width `w` contains `p`.
fn strip_of(net: &FractureNetwork, p: Point) -> Option<usize> {
    (0..net.n_edges()).find(|&j| {
        let (a, b) = net.endpoints(j);
        let half = 0.5 * net.edges[j].props.aperture;
        let len = a.distance(b);
        let t = net.tangent(j);
        let s = (p - a).dot(t);
        let d = (p - a).cross(t).abs();
        d < half && s > -half && s < len + half
    })
}

pub fn build_reference_mesh(domain: Rect, net: &FractureNetwork, opts: ReferenceOptions) -> Result<ReferenceMesh> {
    let mut fine_x = Vec::new();
    let mut fine_y = Vec::new();
    for j in 0..net.n_edges() {
        let (a, b) = net.endpoints(j);
        let half = 0.5 * net.edges[j].props.aperture;
        let t = net.tangent(j);
        if t.x.abs() < 1e-12 {
            fine_x.push((a.x - half, a.x + half));
        } else if t.y.abs() < 1e-12 {
            fine_y.push((a.y - half, a.y + half));
        } else {
            // oblique strips are only staircased; refine their bounding box
            fine_x.push((a.x.min(b.x) - half, a.x.max(b.x) + half));
            fine_y.push((a.y.min(b.y) - half, a.y.max(b.y) + half));
        }
    }
    let mut n = opts.cells_across.max(1);
    loop {
        let xs = graded_axis(domain.min.x, domain.max.x, &fine_x, n, opts.ratio, opts.h_max);
        let ys = graded_axis(domain.min.y, domain.max.y, &fine_y, n, opts.ratio, opts.h_max);
        let cells = (xs.len() - 1) * (ys.len() - 1);
        if cells > opts.max_cells {
            if n == 1 {
                return Err(Error::config(format!(
                    "reference mesh needs {cells} cells, above the cap of {}",
                    opts.max_cells
                )));
            }
            n -= 1;
            continue;
        }
        if n < opts.cells_across {
            warn!(
                "reference mesh resolves fracture strips with {n} cells instead of {}",
                opts.cells_across
            );
        }
        let mesh = Mesh::rectilinear(xs, ys)?;
        let strip = mesh.elements().iter().map(|e| strip_of(net, e.center())).collect();
        return Ok(ReferenceMesh {
            mesh,
            strip,
            cells_across: n,
        });
    }
}

#[derive(Debug, Clone)]
pub struct TpfaSolution {
    pub pressure: Vec<f64>,
    pub flux: FaceFlux,
    pub stats: SolveStats,
}

/// Two-point flux finite volumes on a conforming rectangular mesh with a
/// scalar permeability per cell. `source` is a volume rate per area.
pub fn solve_pressure_tpfa(mesh: &Mesh, kappa: &[f64], source: &[f64], bc: &BoundaryFaces, opts: SolverOptions) -> Result<TpfaSolution> {
    let ne = mesh.n_elements();
    if !mesh.hanging().is_empty() {
        return Err(Error::invalid("two-point fluxes need a conforming mesh"));
    }
    if let Some(e) = kappa.iter().position(|&k| !(k > 0.0)) {
        return Err(Error::Material(format!("cell {e} has non-positive permeability {}", kappa[e])));
    }
    let half = |e: usize, f: usize| mesh.element(e).center().distance(mesh.face(f).midpoint());
    let mut trans = vec![0.0; mesh.n_faces()];
    let mut t = TripletBuilder::new(ne, ne);
    let mut rhs: Vec<f64> = (0..ne).map(|e| source[e] * mesh.element(e).area()).collect();
    for (f, face) in mesh.faces().iter().enumerate() {
        let k = face.minus;
        match face.plus {
            Some(l) => {
                let tr = face.length() / (half(k, f) / kappa[k] + half(l, f) / kappa[l]);
                trans[f] = tr;
                t.push(k, k, tr);
                t.push(l, l, tr);
                t.push(k, l, -tr);
                t.push(l, k, -tr);
            }
            None => match bc.condition(f) {
                Some(Condition::Dirichlet(p)) => {
                    let tr = face.length() * kappa[k] / half(k, f);
                    trans[f] = tr;
                    t.push(k, k, tr);
                    rhs[k] += tr * p;
                }
                Some(Condition::Neumann(un)) => rhs[k] -= un * face.length(),
                None => return Err(Error::config(format!("boundary face {f} has no condition"))),
            },
        }
    }
    let a = t.build();
    let (pressure, stats) = linalg::solve_spd(&a, &rhs, opts)?;
    let mut flux = FaceFlux::zeros(mesh.n_faces());
    for (f, face) in mesh.faces().iter().enumerate() {
        let pk = pressure[face.minus];
        flux.q[f] = match (face.plus, bc.condition(f)) {
            (Some(l), _) => trans[f] * (pk - pressure[l]),
            (None, Some(Condition::Dirichlet(p))) => trans[f] * (pk - p),
            (None, Some(Condition::Neumann(un))) => {
                flux.frozen[f] = true;
                un * face.length()
            }
            (None, None) => unreachable!(),
        };
    }
    Ok(TpfaSolution { pressure, flux, stats })
}

/// Continuum transport on the reference mesh: every cell is a matrix cell.
pub fn transport_reference(
    mesh: &Mesh,
    flux: &FaceFlux,
    porosity: &[f64],
    source: &[f64],
    params: TransportParams,
) -> Result<TransportSystem> {
    TransportSystem::new(mesh, flux, TransportInput::continuum(mesh, porosity, source), params)
}
