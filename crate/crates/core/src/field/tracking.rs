use serde::{Deserialize, Serialize};

use super::{DisplacementFrame, GridSpec};
use crate::error::{Result, TevError};

pub const DEFAULT_DISPLACEMENT_CAP_MM: f64 = 5.0;

/// Interpolation nodes closer than this to a marker take its value exactly.
const SNAP_MM: f64 = 1e-9;
const MIN_MARKERS: usize = 4;

/// Uniform marker lattice over the sensing area, spanning it edge to edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerLayout {
    pub rows: usize,
    pub cols: usize,
    pub width_mm: f64,
    pub height_mm: f64,
}

impl Default for MarkerLayout {
    fn default() -> Self {
        MarkerLayout {
            rows: 8,
            cols: 8,
            width_mm: 20.0,
            height_mm: 20.0,
        }
    }
}

impl MarkerLayout {
    pub fn rest_positions(&self) -> Vec<[f64; 2]> {
        let spec = GridSpec {
            rows: self.rows,
            cols: self.cols,
            width_mm: self.width_mm,
            height_mm: self.height_mm,
        };
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(spec.node(r, c));
            }
        }
        out
    }
}

/// Marker rest positions and their current displacements, in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerFlow {
    rest: Vec<[f64; 2]>,
    displacement: Vec<[f64; 2]>,
    pub timestamp: f64,
}

impl MarkerFlow {
    /// Markers at rest.
    pub fn at_rest(rest: Vec<[f64; 2]>) -> Self {
        let displacement = vec![[0.0, 0.0]; rest.len()];
        MarkerFlow {
            rest,
            displacement,
            timestamp: 0.0,
        }
    }

    pub fn new(rest: Vec<[f64; 2]>, displacement: Vec<[f64; 2]>, timestamp: f64, cap_mm: f64) -> Result<Self> {
        if rest.len() != displacement.len() {
            return Err(TevError::Shape(format!(
                "{} rest positions but {} displacements",
                rest.len(),
                displacement.len()
            )));
        }
        for (index, d) in displacement.iter().enumerate() {
            let magnitude = d[0].hypot(d[1]);
            if magnitude > cap_mm {
                return Err(TevError::DisplacementCap {
                    index,
                    magnitude,
                    cap: cap_mm,
                });
            }
        }
        Ok(MarkerFlow {
            rest,
            displacement,
            timestamp,
        })
    }

    pub fn rest(&self) -> &[[f64; 2]] {
        &self.rest
    }

    pub fn displacement(&self) -> &[[f64; 2]] {
        &self.displacement
    }

    pub fn len(&self) -> usize {
        self.rest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    /// Where each marker currently is.
    pub fn current_positions(&self) -> Vec<[f64; 2]> {
        self.rest
            .iter()
            .zip(&self.displacement)
            .map(|(r, d)| [r[0] + d[0], r[1] + d[1]])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub match_radius_mm: f64,
    /// Fraction of markers allowed to go unmatched before the frame is lost.
    pub max_unmatched_fraction: f64,
    pub displacement_cap_mm: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            match_radius_mm: 3.0,
            max_unmatched_fraction: 0.2,
            displacement_cap_mm: DEFAULT_DISPLACEMENT_CAP_MM,
        }
    }
}

/// Matches markers to detected centroids one to one, closest pairs first,
/// searching around each marker's last known position. Unmatched markers
/// keep their previous displacement.
pub fn track_markers(
    prev: &MarkerFlow,
    detected: &[[f64; 2]],
    timestamp: f64,
    cfg: &TrackConfig,
) -> Result<MarkerFlow> {
    let r2 = cfg.match_radius_mm * cfg.match_radius_mm;
    let expected = prev.current_positions();
    let mut pairs = Vec::new();
    for (m, e) in expected.iter().enumerate() {
        for (d, p) in detected.iter().enumerate() {
            let dist2 = (p[0] - e[0]).powi(2) + (p[1] - e[1]).powi(2);
            if dist2 <= r2 {
                pairs.push((dist2, m, d));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut marker_match: Vec<Option<usize>> = vec![None; prev.len()];
    let mut taken = vec![false; detected.len()];
    for (_, m, d) in pairs {
        if marker_match[m].is_none() && !taken[d] {
            marker_match[m] = Some(d);
            taken[d] = true;
        }
    }
    let mut unmatched = 0;
    let displacement: Vec<[f64; 2]> = prev
        .rest
        .iter()
        .zip(&prev.displacement)
        .zip(&marker_match)
        .map(|((rest, last), m)| match m {
            Some(d) => [detected[*d][0] - rest[0], detected[*d][1] - rest[1]],
            None => {
                unmatched += 1;
                *last
            }
        })
        .collect();
    if unmatched as f64 > cfg.max_unmatched_fraction * prev.len() as f64 {
        return Err(TevError::TrackingLoss {
            unmatched,
            total: prev.len(),
        });
    }
    MarkerFlow::new(prev.rest.clone(), displacement, timestamp, cfg.displacement_cap_mm)
}

/// Inverse-distance-weighted (power 2) interpolation of the marker
/// displacements at every grid node, projected onto the X and Y axes.
pub fn interpolate_field(flow: &MarkerFlow, grid: &GridSpec) -> Result<DisplacementFrame> {
    if flow.len() < MIN_MARKERS {
        return Err(TevError::DegenerateField { markers: flow.len() });
    }
    Ok(DisplacementFrame::from_fn(grid.rows, grid.cols, |r, c| {
        let node = grid.node(r, c);
        let mut wsum = 0.0;
        let mut acc = [0.0f64; 2];
        for (p, d) in flow.rest.iter().zip(&flow.displacement) {
            let dist2 = (p[0] - node[0]).powi(2) + (p[1] - node[1]).powi(2);
            if dist2 <= SNAP_MM * SNAP_MM {
                return [d[0] as f32, d[1] as f32];
            }
            let w = 1.0 / dist2;
            wsum += w;
            acc[0] += w * d[0];
            acc[1] += w * d[1];
        }
        [(acc[0] / wsum) as f32, (acc[1] / wsum) as f32]
    }))
}
