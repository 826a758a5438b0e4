//! Boundary-condition layouts and their assignment to mesh boundary faces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::mesh::{Mesh, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum Condition {
    /// Prescribed pressure.
    Dirichlet(f64),
    /// Prescribed outward normal velocity `u . n` (negative for inflow).
    Neumann(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub side: Side,
    /// Interval along the side in the tangential coordinate (x on bottom/top, y on left/right).
    pub from: f64,
    pub to: f64,
    pub condition: Condition,
}

#[derive(Debug, Clone, Default)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

fn tangential(side: Side, p: Point) -> f64 {
    if side.is_horizontal() {
        p.x
    } else {
        p.y
    }
}

fn side_range(side: Side, d: &Rect) -> (f64, f64) {
    if side.is_horizontal() {
        (d.min.x, d.max.x)
    } else {
        (d.min.y, d.max.y)
    }
}

impl Layout {
    /// One condition per full side.
    pub fn sides(domain: &Rect, conditions: [(Side, Condition); 4]) -> Layout {
        Layout {
            segments: conditions
                .iter()
                .map(|&(side, condition)| {
                    let (from, to) = side_range(side, domain);
                    Segment { side, from, to, condition }
                })
                .collect(),
        }
    }

    pub fn all_dirichlet(domain: &Rect, p: f64) -> Layout {
        Layout::sides(domain, Side::ALL.map(|s| (s, Condition::Dirichlet(p))))
    }

    /// Check that the segments cover every side without overlap.
    pub fn validate(&self, domain: &Rect) -> Result<()> {
        let tol = 1e-9 * domain.diameter();
        for side in Side::ALL {
            let mut segs: Vec<&Segment> = self.segments.iter().filter(|s| s.side == side).collect();
            segs.sort_by(|a, b| a.from.total_cmp(&b.from));
            let (lo, hi) = side_range(side, domain);
            let mut at = lo;
            for s in segs {
                if !(s.to > s.from) {
                    return Err(Error::config(format!("{side:?} boundary segment [{}, {}] is empty", s.from, s.to)));
                }
                if s.from > at + tol {
                    return Err(Error::config(format!("{side:?} boundary not covered on [{at}, {}]", s.from)));
                }
                if s.from < at - tol {
                    return Err(Error::config(format!("{side:?} boundary segments overlap near {}", s.from)));
                }
                at = s.to;
            }
            if (at - hi).abs() > tol {
                return Err(Error::config(format!("{side:?} boundary not covered up to {hi}")));
            }
        }
        Ok(())
    }

    /// Segment containing the tangential interval `[s0, s1]` of a side.
    fn find(&self, side: Side, s0: f64, s1: f64, tol: f64) -> Result<usize> {
        self.segments
            .iter()
            .position(|s| s.side == side && s0 >= s.from - tol && s1 <= s.to + tol)
            .ok_or_else(|| {
                Error::config(format!(
                    "boundary face [{s0}, {s1}] on {side:?} straddles a boundary-condition breakpoint"
                ))
            })
    }

    /// Neumann datum `u . n` at a boundary point, if it lies on a Neumann segment.
    pub fn neumann_at(&self, p: Point, domain: &Rect, tol: f64) -> Option<f64> {
        self.segments.iter().find_map(|s| {
            let on_side = match s.side {
                Side::Bottom => (p.y - domain.min.y).abs() <= tol,
                Side::Top => (p.y - domain.max.y).abs() <= tol,
                Side::Left => (p.x - domain.min.x).abs() <= tol,
                Side::Right => (p.x - domain.max.x).abs() <= tol,
            };
            let t = tangential(s.side, p);
            match s.condition {
                Condition::Neumann(v) if on_side && t >= s.from - tol && t <= s.to + tol => Some(v),
                _ => None,
            }
        })
    }
}

/// Assignment of boundary faces to boundary-condition segments.
#[derive(Debug, Clone)]
pub struct BoundaryFaces {
    /// Per mesh face: the segment index for boundary faces.
    pub segment: Vec<Option<usize>>,
    pub dirichlet: Vec<usize>,
    pub neumann: Vec<usize>,
    pub layout: Layout,
}

impl BoundaryFaces {
    pub fn condition(&self, face: usize) -> Option<Condition> {
        self.segment[face].map(|s| self.layout.segments[s].condition)
    }

    pub fn is_dirichlet(&self, face: usize) -> bool {
        matches!(self.condition(face), Some(Condition::Dirichlet(_)))
    }

    pub fn is_neumann(&self, face: usize) -> bool {
        matches!(self.condition(face), Some(Condition::Neumann(_)))
    }

    /// Prescribed pressures at vertices lying on Dirichlet faces.
    pub fn dirichlet_vertices(&self, mesh: &Mesh) -> Vec<Option<f64>> {
        let mut out = vec![None; mesh.n_vertices()];
        for &f in &self.dirichlet {
            if let Some(Condition::Dirichlet(p)) = self.condition(f) {
                for &v in &mesh.face(f).vertices {
                    out[v].get_or_insert(p);
                }
            }
        }
        out
    }
}

pub fn classify_boundary(mesh: &Mesh, layout: &Layout) -> Result<BoundaryFaces> {
    let domain = mesh.domain();
    layout.validate(&domain)?;
    let tol = 1e-9 * domain.diameter();
    let mut segment = vec![None; mesh.n_faces()];
    let mut dirichlet = Vec::new();
    let mut neumann = Vec::new();
    for (f, face) in mesh.faces().iter().enumerate() {
        let Some(side) = face.side else { continue };
        let (s0, s1) = {
            let (a, b) = (tangential(side, face.a), tangential(side, face.b));
            (a.min(b), a.max(b))
        };
        let s = layout.find(side, s0, s1, tol)?;
        segment[f] = Some(s);
        match layout.segments[s].condition {
            Condition::Dirichlet(_) => dirichlet.push(f),
            Condition::Neumann(_) => neumann.push(f),
        }
    }
    Ok(BoundaryFaces {
        segment,
        dirichlet,
        neumann,
        layout: layout.clone(),
    })
}
