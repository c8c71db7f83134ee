use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{linspace, AreaBounds, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMode {
    /// Center of the service area.
    Centroid,
    /// Minimizer of the expected round delay over a lattice.
    GridSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementSearch {
    pub mode: PlacementMode,
    /// Lattice points per horizontal axis.
    pub grid_n: usize,
    pub altitude_m: f64,
    pub min_altitude_m: f64,
    /// Also search altitude on `altitude_levels` points in `[min_altitude_m, max_altitude_m]`.
    pub search_altitude: bool,
    pub max_altitude_m: f64,
    pub altitude_levels: usize,
    /// Fading draws averaged per candidate position.
    pub eval_samples: usize,
}

impl Default for PlacementSearch {
    fn default() -> Self {
        Self {
            mode: PlacementMode::Centroid,
            grid_n: 11,
            altitude_m: 100.0,
            min_altitude_m: 20.0,
            search_altitude: false,
            max_altitude_m: 300.0,
            altitude_levels: 5,
            eval_samples: 200,
        }
    }
}

impl PlacementSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_altitude_m.is_finite() && self.min_altitude_m > 0.0) {
            return Err(Error::Config(format!(
                "placement.min_altitude_m must be > 0, got {}",
                self.min_altitude_m
            )));
        }
        if !(self.altitude_m.is_finite() && self.altitude_m >= self.min_altitude_m) {
            return Err(Error::Config(format!(
                "uav altitude {} must be >= the minimum altitude {}",
                self.altitude_m, self.min_altitude_m
            )));
        }
        if self.eval_samples == 0 {
            return Err(Error::Config("placement.eval_samples must be >= 1".into()));
        }
        if self.mode == PlacementMode::GridSearch && self.grid_n == 0 {
            return Err(Error::Config("placement.grid_n must be >= 1".into()));
        }
        if self.search_altitude
            && (self.altitude_levels == 0 || self.max_altitude_m.is_nan() || self.max_altitude_m < self.min_altitude_m)
        {
            return Err(Error::Config(
                "altitude search needs altitude_levels >= 1 and max_altitude_m >= min_altitude_m"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementSolution {
    pub position: Position,
    pub objective_s: f64,
}

/// Picks the UAV position.
///
/// `expected_delay` maps a candidate position to its expected round delay.
/// Grid search evaluates the lattice (plus the centroid itself, so it never
/// does worse than centroid placement) and breaks exact ties toward the
/// centroid.
pub fn place_uav<F>(
    area: &AreaBounds,
    search: &PlacementSearch,
    expected_delay: F,
) -> Result<PlacementSolution>
where
    F: Fn(&Position) -> f64 + Sync,
{
    area.validate()?;
    search.validate()?;
    let (cx, cy) = area.center();
    let centroid = Position::new(cx, cy, search.altitude_m);
    if search.mode == PlacementMode::Centroid {
        return Ok(PlacementSolution {
            position: centroid,
            objective_s: expected_delay(&centroid),
        });
    }

    let altitudes = if search.search_altitude {
        linspace(search.min_altitude_m, search.max_altitude_m, search.altitude_levels)
    } else {
        vec![search.altitude_m]
    };
    let mut candidates = vec![centroid];
    for &z in &altitudes {
        for (x, y) in area.lattice(search.grid_n) {
            candidates.push(Position::new(x, y, z));
        }
    }
    let scored: Vec<(Position, f64)> = candidates
        .par_iter()
        .map(|p| {
            let v = expected_delay(p);
            (*p, if v.is_nan() { f64::INFINITY } else { v })
        })
        .collect();

    let mut best = scored[0];
    for &(p, v) in &scored[1..] {
        let closer = p.distance(&centroid) < best.0.distance(&centroid);
        if v < best.1 || (v == best.1 && closer) {
            best = (p, v);
        }
    }
    Ok(PlacementSolution {
        position: best.0,
        objective_s: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn search(mode: PlacementMode) -> PlacementSearch {
        PlacementSearch {
            mode,
            grid_n: 11,
            altitude_m: 30.0,
            min_altitude_m: 10.0,
            search_altitude: false,
            max_altitude_m: 30.0,
            altitude_levels: 1,
            eval_samples: 1,
        }
    }

    #[test]
    fn centroid_of_square() {
        let s = place_uav(&AreaBounds::square(100.0), &search(PlacementMode::Centroid), |_| 1.0).unwrap();
        assert_eq!(s.position, Position::new(50.0, 50.0, 30.0));
        assert_eq!(s.objective_s, 1.0);
    }

    #[test]
    fn grid_finds_bowl_minimum() {
        let target = Position::new(20.0, 70.0, 30.0);
        let s = place_uav(&AreaBounds::square(100.0), &search(PlacementMode::GridSearch), |p| {
            p.distance(&target)
        })
        .unwrap();
        assert_eq!(s.position, target);
    }

    #[test]
    fn flat_objective_ties_to_centroid() {
        let s = place_uav(&AreaBounds::square(100.0), &search(PlacementMode::GridSearch), |_| 3.0).unwrap();
        assert_eq!(s.position, Position::new(50.0, 50.0, 30.0));
    }

    #[test]
    fn altitude_search_respects_bounds() {
        let mut cfg = search(PlacementMode::GridSearch);
        cfg.search_altitude = true;
        cfg.max_altitude_m = 100.0;
        cfg.altitude_levels = 4;
        // prefers low altitude
        let s = place_uav(&AreaBounds::square(100.0), &cfg, |p| p.z).unwrap();
        assert_eq!(s.position.z, 10.0);
        assert!(s.position.z >= cfg.min_altitude_m);
    }

    #[test]
    fn invalid_search_rejected() {
        let mut cfg = search(PlacementMode::Centroid);
        cfg.altitude_m = 5.0;
        assert!(place_uav(&AreaBounds::square(1.0), &cfg, |_| 0.0).is_err());
    }
}
