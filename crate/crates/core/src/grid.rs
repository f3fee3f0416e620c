//! Deterministic sampling of chart domains: vertex grids for sup-type
//! reductions, cell-center grids with volume weights for quadrature, uniform
//! time knots, and seeded point clouds.
//!
//! Vertex grids nest under per-axis doubling, so sup-based quantities are
//! nondecreasing under refinement. The polar locus r = 0 is never sampled.

use crate::chart::{Chart, ChartKind};
use crate::smooth::SplitMix64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Spatial and temporal resolution of a report; hashed for reproducibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Subdivisions per spatial axis.
    pub per_axis: usize,
    /// Subdivisions of the time interval (knot count is this plus one).
    pub time_knots: usize,
}

impl GridSpec {
    pub fn new(per_axis: usize, time_knots: usize) -> Self {
        GridSpec {
            per_axis,
            time_knots,
        }
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("grid:{}:{}", self.per_axis, self.time_knots));
        let out = h.finalize();
        out[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Vertex grid in working coordinates. Nested under doubling of `per_axis`.
pub fn vertex_grid(chart: &Chart, per_axis: usize) -> Vec<Vec<f64>> {
    let dim = chart.dim();
    let iv = &chart.domain.intervals;
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for axis in 0..dim {
        let [lo, hi] = iv[axis];
        let step = (hi - lo) / per_axis as f64;
        let radial = matches!(chart.kind, ChartKind::DarbouxPolar { n } if axis < n);
        let vals: Vec<f64> = if chart.domain.periodic[axis] {
            (0..per_axis).map(|i| lo + step * i as f64).collect()
        } else if radial {
            (1..=per_axis).map(|i| lo + step * i as f64).collect()
        } else {
            (0..=per_axis).map(|i| lo + step * i as f64).collect()
        };
        axes.push(vals);
    }
    product_points(chart, &axes)
}

/// Cell-center grid with midpoint-rule weights (display density included).
pub fn weighted_center_grid(chart: &Chart, per_axis: usize) -> Vec<(Vec<f64>, f64)> {
    let dim = chart.dim();
    let iv = &chart.domain.intervals;
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut cell = 1.0;
    for axis in 0..dim {
        let [lo, hi] = iv[axis];
        let step = (hi - lo) / per_axis as f64;
        cell *= step;
        axes.push(
            (0..per_axis)
                .map(|i| lo + step * (i as f64 + 0.5))
                .collect(),
        );
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        let display: Vec<f64> = (0..dim).map(|a| axes[a][idx[a]]).collect();
        let density = chart
            .volume_density(&display)
            .expect("cell centers lie inside the domain");
        out.push((chart.to_working(&display), density * cell));
        // odometer
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] < per_axis {
                break;
            }
            idx[a] = 0;
            a += 1;
            if a == dim {
                return out;
            }
        }
    }
}

fn product_points(chart: &Chart, axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = axes.len();
    let mut out = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        let display: Vec<f64> = (0..dim).map(|a| axes[a][idx[a]]).collect();
        out.push(chart.to_working(&display));
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
            if a == dim {
                return out;
            }
        }
    }
}

/// Uniform time knots over [a, b], endpoints included.
pub fn time_knots(a: f64, b: f64, subdivisions: usize) -> Vec<f64> {
    let k = subdivisions.max(1);
    (0..=k)
        .map(|j| a + (b - a) * j as f64 / k as f64)
        .collect()
}

/// Seeded uniform cloud in the display box, returned in working coordinates.
/// Radial axes are kept away from the polar locus by `radial_floor`.
pub fn seeded_cloud(chart: &Chart, count: usize, seed: u64, radial_floor: f64) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    let dim = chart.dim();
    let iv = &chart.domain.intervals;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut display = Vec::with_capacity(dim);
        for axis in 0..dim {
            let [lo, hi] = iv[axis];
            let radial = matches!(chart.kind, ChartKind::DarbouxPolar { n } if axis < n);
            let lo = if radial { lo.max(radial_floor) } else { lo };
            display.push(rng.range(lo, hi));
        }
        out.push(chart.to_working(&display));
    }
    out
}

/// Composite Simpson weights over `2m` subdivisions of [a, b].
/// Returns (knots, weights) with sum(weights) = b - a.
pub fn simpson(a: f64, b: f64, half_panels: usize) -> (Vec<f64>, Vec<f64>) {
    let m = half_panels.max(1);
    let n = 2 * m;
    let h = (b - a) / n as f64;
    let knots: Vec<f64> = (0..=n).map(|j| a + h * j as f64).collect();
    let mut w = vec![0.0; n + 1];
    for j in 0..=n {
        w[j] = if j == 0 || j == n {
            h / 3.0
        } else if j % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
    (knots, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;

    #[test]
    fn vertex_grids_nest_under_doubling() {
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        let coarse = vertex_grid(&chart, 4);
        let fine = vertex_grid(&chart, 8);
        for p in &coarse {
            assert!(
                fine.iter()
                    .any(|q| p.iter().zip(q).all(|(a, b)| (a - b).abs() < 1e-13)),
                "coarse point {p:?} missing from fine grid"
            );
        }
    }

    #[test]
    fn center_grid_weights_integrate_volume() {
        // On the torus the density is 1 so the weights sum to (2 pi)^3.
        let chart = Chart::torus3().unwrap();
        let total: f64 = weighted_center_grid(&chart, 8).iter().map(|(_, w)| w).sum();
        let exact = (std::f64::consts::TAU).powi(3);
        assert!((total - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn polar_locus_excluded() {
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        for p in vertex_grid(&chart, 6) {
            let r = p[0].hypot(p[1]);
            assert!(r > 1e-9);
        }
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let (knots, w) = simpson(0.0, 1.0, 8);
        let val: f64 = knots
            .iter()
            .zip(&w)
            .map(|(t, w)| w * (t * t * t - 2.0 * t))
            .sum();
        assert!((val - (0.25 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn cloud_is_deterministic_and_inside() {
        let chart = Chart::darboux(1, 1.0, 1.0).unwrap();
        let a = seeded_cloud(&chart, 64, 9, 0.05);
        let b = seeded_cloud(&chart, 64, 9, 0.05);
        assert_eq!(a, b);
        for p in &a {
            assert!(chart.contains_working(p));
        }
    }
}
