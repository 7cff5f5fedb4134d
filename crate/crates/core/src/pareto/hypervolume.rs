//! Hypervolume by recursive slicing along the last objective.
//!
//! For each slice between consecutive values of the last objective, the
//! (k-1)-dimensional volume of the projections of the points above that slice
//! is computed recursively. Projections that are dominated inside the slice
//! are pruned before recursing. Two objectives use a sorted sweep directly.

use rand::Rng;

use super::{check_dim, dominates_raw, ParetoError, ParetoFront, ValueVector};
use crate::aggregate::RandomStream;

/// Largest objective count handled by the exact algorithm.
pub const MAX_EXACT_OBJECTIVES: usize = 6;

/// Sample budget and stream for a Monte Carlo hypervolume estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub samples: usize,
    pub stream: RandomStream,
}

impl MonteCarlo {
    pub fn new(samples: usize, stream: RandomStream) -> Self {
        Self { samples, stream }
    }
}

/// A sampled hypervolume with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

pub(crate) fn exact(points: &[&[f64]], reference: &[f64]) -> f64 {
    let above: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(x, r)| x > r))
        .map(|p| p.to_vec())
        .collect();
    if above.is_empty() {
        return 0.0;
    }
    slice_volume(above, reference)
}

fn slice_volume(mut pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    let d = reference.len();
    match d {
        1 => pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) - reference[0],
        2 => sweep_2d(&mut pts, reference),
        _ => {
            let last = d - 1;
            pts.sort_by(|a, b| b[last].total_cmp(&a[last]));
            let mut active: Vec<Vec<f64>> = Vec::new();
            let mut volume = 0.0;
            for i in 0..pts.len() {
                let proj = &pts[i][..last];
                if !active
                    .iter()
                    .any(|q| q.as_slice() == proj || dominates_raw(q, proj))
                {
                    active.retain(|q| !dominates_raw(proj, q));
                    active.push(proj.to_vec());
                }
                let floor = pts.get(i + 1).map_or(reference[last], |p| p[last]);
                let height = pts[i][last] - floor;
                if height > 0.0 {
                    volume += height * slice_volume(active.clone(), &reference[..last]);
                }
            }
            volume
        }
    }
}

fn sweep_2d(pts: &mut [Vec<f64>], reference: &[f64]) -> f64 {
    pts.sort_by(|a, b| b[0].total_cmp(&a[0]));
    let mut best_y = reference[1];
    let mut area = 0.0;
    for i in 0..pts.len() {
        best_y = best_y.max(pts[i][1]);
        let next_x = pts.get(i + 1).map_or(reference[0], |p| p[0]);
        area += (pts[i][0] - next_x) * (best_y - reference[1]);
    }
    area
}

/// Uniform sampling inside the box spanned by the reference point and the
/// elementwise maximum of the front.
pub fn hypervolume_monte_carlo(
    front: &ParetoFront,
    reference: &ValueVector,
    mc: MonteCarlo,
) -> Result<McEstimate, ParetoError> {
    if mc.samples == 0 {
        return Err(ParetoError::NoSamples);
    }
    let k = reference.dim();
    if let Some(d) = front.dim() {
        check_dim(k, d)?;
    }
    let r = reference.as_slice();
    let above: Vec<&[f64]> = front
        .rows()
        .filter(|p| p.iter().zip(r).all(|(x, y)| x > y))
        .collect();
    if above.is_empty() {
        return Ok(McEstimate {
            value: 0.0,
            std_error: 0.0,
        });
    }
    let mut upper = r.to_vec();
    for p in &above {
        for (u, &x) in upper.iter_mut().zip(p.iter()) {
            *u = u.max(x);
        }
    }
    let box_volume: f64 = upper.iter().zip(r).map(|(u, l)| u - l).product();
    let mut rng = mc.stream.rng();
    let mut sample = vec![0.0; k];
    let mut hits = 0usize;
    for _ in 0..mc.samples {
        for i in 0..k {
            sample[i] = r[i] + rng.gen::<f64>() * (upper[i] - r[i]);
        }
        if above
            .iter()
            .any(|p| p.iter().zip(&sample).all(|(x, s)| x >= s))
        {
            hits += 1;
        }
    }
    let n = mc.samples as f64;
    let frac = hits as f64 / n;
    Ok(McEstimate {
        value: frac * box_volume,
        std_error: box_volume * (frac * (1.0 - frac) / n).sqrt(),
    })
}
