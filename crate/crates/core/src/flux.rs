//! Face fluxes from the Q1 pressure and their correction to a locally
//! conservative flux by a weighted graph-Laplacian problem.

use rayon::prelude::*;

use crate::boundary::{BoundaryFaces, Condition};
use crate::error::{Error, Result};
use crate::fracture::{FaceClass, IntersectionData};
use crate::geometry::{Point, GAUSS2};
use crate::linalg::{self, SolverOptions, TripletBuilder};
use crate::mesh::Mesh;
use crate::pressure::{Materials, PressureField};

/// Integrated flux `Q_F` per finest face, positive along `n_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFlux {
    pub q: Vec<f64>,
    /// Faces whose flux is a prescribed datum and never corrected.
    pub frozen: Vec<bool>,
}

impl FaceFlux {
    pub fn zeros(n_faces: usize) -> FaceFlux {
        FaceFlux {
            q: vec![0.0; n_faces],
            frozen: vec![false; n_faces],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.q.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Net flow out of the domain through boundary faces.
    pub fn boundary_outflow(&self, mesh: &Mesh) -> f64 {
        mesh.faces()
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_boundary())
            .map(|(i, _)| self.q[i])
            .sum()
    }
}

/// Face weights of the averaging and correction steps.
#[derive(Debug, Clone)]
pub struct FaceWeights {
    /// Weight of the minus side in the face average.
    pub theta: Vec<f64>,
    /// `omega_F`; `None` on faces excluded from the correction.
    pub omega: Vec<Option<f64>>,
}

/// Normal permeability of a cell, with fractured cells treated as `kappa_G * I`.
pub fn cell_delta(x: &IntersectionData, mat: &Materials, e: usize, n: Point) -> f64 {
    if x.fractured[e] {
        x.segments[e]
            .iter()
            .map(|s| x.network.edges[s.edge].props.permeability)
            .fold(0.0, f64::max)
    } else {
        mat.kappa[e].normal_component(n)
    }
}

pub fn face_weights(mesh: &Mesh, x: &IntersectionData, mat: &Materials, bc: &BoundaryFaces) -> FaceWeights {
    let mut theta = vec![1.0; mesh.n_faces()];
    let mut omega = vec![None; mesh.n_faces()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let dm = cell_delta(x, mat, face.minus, face.normal);
        match face.plus {
            Some(p) => {
                let dp = cell_delta(x, mat, p, face.normal);
                theta[f] = dp / (dp + dm);
                omega[f] = Some((dp + dm) / (2.0 * dp * dm));
            }
            None => {
                if bc.is_dirichlet(f) {
                    omega[f] = Some(1.0 / dm);
                }
            }
        }
    }
    FaceWeights { theta, omega }
}

fn fracture_rate(x: &IntersectionData, mesh: &Mesh, p: &PressureField, f: usize, sides: &[usize]) -> f64 {
    x.crossings[f]
        .iter()
        .map(|c| {
            let k = x.network.edges[c.edge].props.effective_permeability();
            let g: f64 = sides.iter().map(|&e| p.gradient_in(mesh, e, c.point).dot(c.tangent)).sum::<f64>() / sides.len() as f64;
            -k * g
        })
        .sum()
}

/// Face flux from the averaged normal flux of the pressure solution.
pub fn average_flux(mesh: &Mesh, p: &PressureField, x: &IntersectionData, mat: &Materials, bc: &BoundaryFaces) -> FaceFlux {
    let w = face_weights(mesh, x, mat, bc);
    let side_flux = |e: usize, f: usize| -> f64 {
        let face = mesh.face(f);
        let k = mat.kappa[e];
        GAUSS2
            .iter()
            .map(|&(g, wg)| {
                let q = face.a.lerp(face.b, g);
                -wg * face.length() * k.apply(p.gradient_in(mesh, e, q)).dot(face.normal)
            })
            .sum()
    };
    let results: Vec<(f64, bool)> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|f| {
            let face = mesh.face(f);
            match (face.plus, bc.condition(f)) {
                (None, Some(Condition::Neumann(un))) => (un * face.length(), true),
                (None, _) => (side_flux(face.minus, f) + fracture_rate(x, mesh, p, f, &[face.minus]), false),
                (Some(plus), _) if x.face_class[f] == FaceClass::Fracture => (fracture_rate(x, mesh, p, f, &[face.minus, plus]), false),
                (Some(plus), _) => {
                    let t = w.theta[f];
                    (t * side_flux(face.minus, f) + (1.0 - t) * side_flux(plus, f), false)
                }
            }
        })
        .collect();
    FaceFlux {
        q: results.iter().map(|r| r.0).collect(),
        frozen: results.iter().map(|r| r.1).collect(),
    }
}

/// Source integral of each element: `int_K q` on matrix cells, `int_{K cap G} q_G` on fractured cells.
pub fn element_sources(mesh: &Mesh, x: &IntersectionData, mat: &Materials) -> Vec<f64> {
    (0..mesh.n_elements())
        .map(|e| {
            if x.fractured[e] {
                x.segments[e].iter().map(|s| mat.fracture_source[s.edge] * s.length()).sum()
            } else {
                mat.source[e] * mesh.element(e).area()
            }
        })
        .collect()
}

/// Conservation defect per element, `R_K = (source_K - sum_F Q_F n_K.n_F) / |K|`.
pub fn residual(mesh: &Mesh, flux: &FaceFlux, sources: &[f64]) -> Vec<f64> {
    (0..mesh.n_elements())
        .map(|e| {
            let out: f64 = mesh.element_faces(e).iter().map(|&(f, s)| s * flux.q[f]).sum();
            (sources[e] - out) / mesh.element(e).area()
        })
        .collect()
}

/// Largest `|R_K| |K|`.
pub fn max_defect(mesh: &Mesh, flux: &FaceFlux, sources: &[f64]) -> f64 {
    residual(mesh, flux, sources)
        .iter()
        .enumerate()
        .map(|(e, r)| (r * mesh.element(e).area()).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct Correction {
    pub flux: FaceFlux,
    /// Potential per element.
    pub y: Vec<f64>,
    /// Added flux per face.
    pub delta: Vec<f64>,
}

/// Minimal piecewise-constant correction making the flux locally conservative.
pub fn postprocess(mesh: &Mesh, flux: &FaceFlux, sources: &[f64], weights: &FaceWeights) -> Result<Correction> {
    let ne = mesh.n_elements();
    let r = residual(mesh, flux, sources);
    let rhs: Vec<f64> = (0..ne).map(|e| r[e] * mesh.element(e).area()).collect();
    let coef: Vec<Option<f64>> = mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(f, face)| {
            if flux.frozen[f] {
                None
            } else {
                weights.omega[f].map(|w| face.length() / w)
            }
        })
        .collect();
    let grounded = mesh
        .faces()
        .iter()
        .enumerate()
        .any(|(f, face)| face.is_boundary() && coef[f].is_some());

    let scale = flux.max_abs().max(sources.iter().fold(0.0, |m: f64, s| m.max(s.abs())));
    let pin = if grounded {
        None
    } else {
        let defect: f64 = rhs.iter().sum();
        if defect.abs() > 1e-8 * scale.max(f64::MIN_POSITIVE) * (ne as f64).sqrt() {
            return Err(Error::Compatibility { defect });
        }
        Some(0usize)
    };

    let index = |e: usize| -> Option<usize> {
        match pin {
            Some(p) if e == p => None,
            Some(p) if e > p => Some(e - 1),
            _ => Some(e),
        }
    };
    let n = if pin.is_some() { ne - 1 } else { ne };
    let mut t = TripletBuilder::new(n, n);
    for (f, face) in mesh.faces().iter().enumerate() {
        let Some(c) = coef[f] else { continue };
        let im = index(face.minus);
        match face.plus {
            None => {
                if let Some(i) = im {
                    t.push(i, i, c);
                }
            }
            Some(p) => {
                let ip = index(p);
                if let Some(i) = im {
                    t.push(i, i, c);
                }
                if let Some(j) = ip {
                    t.push(j, j, c);
                }
                if let (Some(i), Some(j)) = (im, ip) {
                    t.push(i, j, -c);
                    t.push(j, i, -c);
                }
            }
        }
    }
    let a = t.build();
    let b: Vec<f64> = (0..ne).filter_map(|e| index(e).map(|_| rhs[e])).collect();
    let mut y = vec![0.0; ne];
    if n > 0 && b.iter().any(|v| *v != 0.0) {
        // The graph residual is the element defect itself, so stop once it is
        // far below the flux scale rather than at a fixed fraction of |b|.
        let target = 1e-11 * scale / linalg::norm2(&b);
        let (sol, _) = linalg::solve_spd(
            &a,
            &b,
            SolverOptions {
                rel_tol: target.max(1e-12),
                max_iter: 50_000,
            },
        )?;
        for e in 0..ne {
            if let Some(i) = index(e) {
                y[e] = sol[i];
            }
        }
    }
    let mut q = flux.q.clone();
    let mut delta = vec![0.0; mesh.n_faces()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let Some(c) = coef[f] else { continue };
        let jump = match face.plus {
            Some(p) => y[face.minus] - y[p],
            None => y[face.minus],
        };
        delta[f] = c * jump;
        q[f] += delta[f];
    }
    Ok(Correction {
        flux: FaceFlux {
            q,
            frozen: flux.frozen.clone(),
        },
        y,
        delta,
    })
}
