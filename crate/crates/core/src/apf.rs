//! Artificial potential field layer: attraction to the target, repulsion from
//! the nearest obstacle point, pairwise inter-individual forces between
//! teammates, and the wall-following rule that redirects motion along an
//! obstacle when repulsion opposes the goal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Arena, NearestPoint, Surface, Vec2};

/// Distance floor reported for a point that overlaps a virtual obstacle disc.
pub const VIRTUAL_MIN_DISTANCE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApfParams {
    /// Repulsion scale.
    pub eta: f64,
    /// Cohesion scale in mm; teammates settle at `2 * lambda`.
    pub lambda: f64,
    /// Obstacle influence range in mm.
    pub rho0: f64,
    /// Inter-individual force norm above which wall following defers to it.
    pub b_threshold: f64,
}

impl Default for ApfParams {
    fn default() -> Self {
        Self {
            eta: 0.0,
            lambda: 1000.0,
            rho0: 500.0,
            b_threshold: 1.0,
        }
    }
}

impl ApfParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta >= 0.0
            && self.lambda > 0.0
            && self.rho0 > 0.0
            && self.b_threshold >= 0.0
            && self.eta.is_finite()
            && self.lambda.is_finite()
            && self.rho0.is_finite()
            && self.b_threshold.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid APF parameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceSet {
    pub f_a: Vec2,
    pub f_r: Vec2,
    pub f_in: Vec2,
    pub f_ar: Vec2,
    pub f_total: Vec2,
}

impl ForceSet {
    pub fn new(f_a: Vec2, f_r: Vec2, f_in: Vec2) -> Self {
        let f_ar = f_a + f_r;
        Self {
            f_a,
            f_r,
            f_in,
            f_ar,
            f_total: f_ar + f_in,
        }
    }

    /// True when the attraction/repulsion resultant points more than 90
    /// degrees away from the attraction. A vanishing resultant is the
    /// balanced local minimum and also counts.
    pub fn opposes_goal(&self) -> bool {
        let dot = self.f_ar.dot(self.f_a);
        dot < 0.0 || (self.f_ar == Vec2::ZERO && self.f_r != Vec2::ZERO)
    }
}

/// Unit vector from `p` toward `target`; zero when they coincide.
pub fn attractive_force(p: Vec2, target: Vec2) -> Vec2 {
    (target - p).normalized()
}

pub fn repulsive_force(p: Vec2, obstacle_point: Vec2, eta: f64, rho0: f64) -> Result<Vec2> {
    let away = p - obstacle_point;
    let d = away.norm();
    if d == 0.0 {
        return Err(Error::PenetratingObstacle);
    }
    if d > rho0 {
        return Ok(Vec2::ZERO);
    }
    let magnitude = eta * (rho0 - d) / (d * d * d * rho0);
    Ok(away * (magnitude / d))
}

pub fn interindividual_force(p: Vec2, neighbors: &[Vec2], lambda: f64) -> Result<Vec2> {
    let mut sum = Vec2::ZERO;
    for &q in neighbors {
        let toward = q - p;
        let d = toward.norm();
        if d == 0.0 {
            return Err(Error::PenetratingTeammate);
        }
        sum += toward * ((0.5 - lambda / d) / d);
    }
    Ok(sum)
}

/// Picks the commanded heading for one agent.
///
/// Outside wall following this is the heading of the total force (or the
/// current heading if it vanishes). In wall following the agent moves along
/// `n1 = rot90(f_r)` or `n2 = -n1`: toward whichever is closer to the
/// current heading, or to `f_in` once `|f_in| >= b_threshold`. Ties pick `n1`.
pub fn resolve_heading(forces: &ForceSet, current_heading: f64, b_threshold: f64) -> f64 {
    if !forces.opposes_goal() {
        if forces.f_total == Vec2::ZERO {
            return current_heading;
        }
        return forces.f_total.heading();
    }
    assert!(forces.f_r != Vec2::ZERO, "wall following requires a repulsive force");
    let n1 = forces.f_r.perp().normalized();
    let reference = if forces.f_in.norm() < b_threshold {
        Vec2::from_heading(current_heading)
    } else {
        forces.f_in
    };
    // angle(n1, ref) <= angle(-n1, ref) exactly when n1 . ref >= 0
    if n1.dot(reference) >= 0.0 {
        n1.heading()
    } else {
        (-n1).heading()
    }
}

/// Obstacle view for one pursuer: the arena plus discs at captured teammates.
#[derive(Clone, Debug)]
pub struct ObstacleQuery<'a> {
    arena: &'a Arena,
    discs: Vec<Vec2>,
    disc_radius: f64,
}

pub fn effective_obstacle_set<'a>(arena: &'a Arena, captured_teammates: &[Vec2], disc_radius: f64) -> ObstacleQuery<'a> {
    ObstacleQuery {
        arena,
        discs: captured_teammates.to_vec(),
        disc_radius,
    }
}

impl<'a> ObstacleQuery<'a> {
    pub fn arena(&self) -> &'a Arena {
        self.arena
    }

    /// Nearest point over real obstacles, walls and virtual discs. Real
    /// surfaces win ties. A point overlapping a disc reports
    /// [`VIRTUAL_MIN_DISTANCE`] with the point placed toward the disc center.
    pub fn nearest_obstacle_point(&self, p: Vec2) -> Result<NearestPoint> {
        let mut best = self.arena.nearest_obstacle_point(p)?;
        for (k, &c) in self.discs.iter().enumerate() {
            let toward = c - p;
            let center_distance = toward.norm();
            if center_distance == 0.0 {
                return Err(Error::PenetratingQuery { x: p.x, y: p.y });
            }
            let distance = (center_distance - self.disc_radius).max(VIRTUAL_MIN_DISTANCE);
            if distance < best.distance {
                best = NearestPoint {
                    point: p + toward * (distance / center_distance),
                    distance,
                    surface: Surface::Virtual(k),
                };
            }
        }
        Ok(best)
    }
}

/// Full force computation for an agent at `p` chasing `target`.
pub fn compute_forces(
    query: &ObstacleQuery<'_>,
    p: Vec2,
    target: Vec2,
    neighbors: &[Vec2],
    params: &ApfParams,
) -> Result<ForceSet> {
    let f_a = attractive_force(p, target);
    let nearest = query.nearest_obstacle_point(p)?;
    let f_r = repulsive_force(p, nearest.point, params.eta, params.rho0)?;
    let f_in = interindividual_force(p, neighbors, params.lambda)?;
    Ok(ForceSet::new(f_a, f_r, f_in))
}

/// Commanded heading from the potential field, with wall following enabled.
pub fn apf_heading(
    query: &ObstacleQuery<'_>,
    p: Vec2,
    target: Vec2,
    neighbors: &[Vec2],
    current_heading: f64,
    params: &ApfParams,
) -> Result<f64> {
    let forces = compute_forces(query, p, target, neighbors, params)?;
    Ok(resolve_heading(&forces, current_heading, params.b_threshold))
}

/// Plain gradient following: the heading of the total force, never wall
/// following. Used to show the local-minimum failure mode.
pub fn gradient_heading(
    query: &ObstacleQuery<'_>,
    p: Vec2,
    target: Vec2,
    neighbors: &[Vec2],
    current_heading: f64,
    params: &ApfParams,
) -> Result<f64> {
    let forces = compute_forces(query, p, target, neighbors, params)?;
    if forces.f_total == Vec2::ZERO {
        Ok(current_heading)
    } else {
        Ok(forces.f_total.heading())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: Vec2, b: Vec2) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn attraction_examples() {
        assert!(close(attractive_force(Vec2::new(0.0, 0.0), Vec2::new(3.0, 4.0)), Vec2::new(0.6, 0.8)));
        assert_eq!(attractive_force(Vec2::new(5.0, 5.0), Vec2::new(5.0, 9.0)), Vec2::new(0.0, 1.0));
        assert_eq!(attractive_force(Vec2::new(5.0, 5.0), Vec2::new(5.0, 5.0)), Vec2::ZERO);
    }

    #[test]
    fn repulsion_examples() {
        let p = Vec2::ZERO;
        assert_eq!(repulsive_force(p, Vec2::new(500.0, 0.0), 3e8, 500.0).unwrap(), Vec2::ZERO);
        assert_eq!(repulsive_force(p, Vec2::new(501.0, 0.0), 3e8, 500.0).unwrap(), Vec2::ZERO);
        let f = repulsive_force(p, Vec2::new(400.0, 0.0), 3e8, 500.0).unwrap();
        assert!(close(f, Vec2::new(-0.9375, 0.0)), "{f:?}");
        assert!(matches!(repulsive_force(p, p, 1.0, 500.0), Err(Error::PenetratingObstacle)));
    }

    #[test]
    fn interindividual_examples() {
        let p = Vec2::ZERO;
        assert_eq!(interindividual_force(p, &[Vec2::new(2000.0, 0.0)], 1000.0).unwrap(), Vec2::ZERO);
        assert!(close(interindividual_force(p, &[Vec2::new(100.0, 0.0)], 30.0).unwrap(), Vec2::new(0.2, 0.0)));
        assert!(close(interindividual_force(p, &[Vec2::new(500.0, 0.0)], 1000.0).unwrap(), Vec2::new(-1.5, 0.0)));
        assert_eq!(interindividual_force(p, &[], 30.0).unwrap(), Vec2::ZERO);
        assert!(matches!(interindividual_force(p, &[p], 30.0), Err(Error::PenetratingTeammate)));
    }

    #[test]
    fn heading_pass_through() {
        let forces = ForceSet::new(Vec2::new(1.0, 0.0), Vec2::new(-0.2, 0.1), Vec2::ZERO);
        let h = resolve_heading(&forces, 0.0, 1.0);
        assert!((h - (0.1f64).atan2(0.8)).abs() < 1e-15);
        assert!((h.to_degrees() - 7.125).abs() < 1e-3);
    }

    #[test]
    fn heading_wall_following_by_current_heading() {
        let forces = ForceSet::new(Vec2::new(1.0, 0.0), Vec2::new(-2.0, 0.0), Vec2::ZERO);
        assert_eq!(resolve_heading(&forces, 30f64.to_radians(), 1.0), FRAC_PI_2);
    }

    #[test]
    fn heading_wall_following_by_teammate_force() {
        let forces = ForceSet::new(Vec2::new(1.0, 0.0), Vec2::new(-2.0, 0.0), Vec2::new(0.0, -3.0));
        assert_eq!(resolve_heading(&forces, 30f64.to_radians(), 1.0), -FRAC_PI_2);
    }

    #[test]
    fn exactly_ninety_degrees_does_not_wall_follow() {
        // f_ar = (0, 1) is exactly perpendicular to f_a.
        let forces = ForceSet::new(Vec2::new(1.0, 0.0), Vec2::new(-1.0, 1.0), Vec2::ZERO);
        assert_eq!(resolve_heading(&forces, PI, 1.0), FRAC_PI_2);
    }

    #[test]
    fn candidate_tie_picks_ccw_rotation_of_repulsion() {
        // heading 0 is perpendicular to both (0, 1) and (0, -1)
        let forces = ForceSet::new(Vec2::new(1.0, 0.0), Vec2::new(-3.0, 0.0), Vec2::ZERO);
        assert_eq!(resolve_heading(&forces, 0.0, 1.0), -FRAC_PI_2);
    }

    #[test]
    fn balanced_minimum_wall_follows() {
        let forces = ForceSet::new(Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0), Vec2::ZERO);
        assert!(forces.opposes_goal());
        assert_eq!(resolve_heading(&forces, FRAC_PI_2, 1.0), FRAC_PI_2);
    }

    #[test]
    fn virtual_obstacles() {
        let arena = Arena::empty(4000.0, 4000.0).unwrap();
        let p = Vec2::new(2000.0, 1000.0);
        let plain = arena.nearest_obstacle_point(p).unwrap();
        assert_eq!(effective_obstacle_set(&arena, &[], 80.0).nearest_obstacle_point(p).unwrap(), plain);

        let q = effective_obstacle_set(&arena, &[Vec2::new(2200.0, 1000.0)], 80.0);
        let n = q.nearest_obstacle_point(p).unwrap();
        assert_eq!(n.distance, 120.0);
        assert_eq!(n.surface, Surface::Virtual(0));
        assert!(close(n.point, Vec2::new(2120.0, 1000.0)));

        // wall at distance 100 and disc boundary at distance 100
        let p = Vec2::new(100.0, 2000.0);
        let q = effective_obstacle_set(&arena, &[Vec2::new(280.0, 2000.0)], 80.0);
        let n = q.nearest_obstacle_point(p).unwrap();
        assert_eq!(n.distance, 100.0);
        assert!(matches!(n.surface, Surface::Wall(_)));
    }

    #[test]
    fn overlapping_disc_reports_floor_distance() {
        let arena = Arena::empty(4000.0, 4000.0).unwrap();
        let p = Vec2::new(2000.0, 2000.0);
        let q = effective_obstacle_set(&arena, &[Vec2::new(2050.0, 2000.0)], 80.0);
        let n = q.nearest_obstacle_point(p).unwrap();
        assert_eq!(n.distance, VIRTUAL_MIN_DISTANCE);
        let f = repulsive_force(p, n.point, 1.0, 500.0).unwrap();
        assert!(f.x < 0.0);
    }

    proptest! {
        #[test]
        fn attraction_is_unit(px in -1e4..1e4f64, py in -1e4..1e4f64, tx in -1e4..1e4f64, ty in -1e4..1e4f64) {
            prop_assume!(px != tx || py != ty);
            let f = attractive_force(Vec2::new(px, py), Vec2::new(tx, ty));
            prop_assert!((f.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn repulsion_grows_toward_obstacle(d1 in 1.0..499.0f64, frac in 0.01..0.99f64, eta in 1.0..3e8f64) {
            let d2 = d1 * frac;
            let o = Vec2::ZERO;
            let f1 = repulsive_force(Vec2::new(d1, 0.0), o, eta, 500.0).unwrap().norm();
            let f2 = repulsive_force(Vec2::new(d2, 0.0), o, eta, 500.0).unwrap().norm();
            prop_assert!(f2 > f1);
        }

        #[test]
        fn pairwise_forces_are_opposite(ax in 0.0..4000.0f64, ay in 0.0..4000.0f64, bx in 0.0..4000.0f64, by in 0.0..4000.0f64, lambda in 30.0..3000.0f64) {
            let (a, b) = (Vec2::new(ax, ay), Vec2::new(bx, by));
            prop_assume!(a.distance(b) > 1e-3);
            let fab = interindividual_force(a, &[b], lambda).unwrap();
            let fba = interindividual_force(b, &[a], lambda).unwrap();
            prop_assert!((fab + fba).norm() <= 1e-12 * (1.0 + fab.norm()));
        }

        #[test]
        fn wall_following_heading_is_perpendicular(
            rx in -50.0..-1.5f64, ry in -1.0..1.0f64, ix in -5.0..5.0f64, iy in -5.0..5.0f64, h in -3.1..3.1f64,
        ) {
            let forces = ForceSet::new(Vec2::new(1.0, 0.0), Vec2::new(rx, ry), Vec2::new(ix, iy));
            prop_assume!(forces.opposes_goal());
            let heading = resolve_heading(&forces, h, 1.0);
            let dir = Vec2::from_heading(heading);
            prop_assert!(dir.dot(forces.f_r.normalized()).abs() < 1e-12);
        }

        #[test]
        fn wall_following_choice_is_scale_invariant(
            rx in -50.0..-1.5f64, ry in -1.0..1.0f64, ix in -5.0..5.0f64, iy in -5.0..5.0f64,
            h in -3.1..3.1f64, s in 1.01..10.0f64,
        ) {
            let base = ForceSet::new(Vec2::new(1.0, 0.0), Vec2::new(rx, ry), Vec2::new(ix, iy));
            let scaled = ForceSet::new(Vec2::new(1.0, 0.0), Vec2::new(rx, ry) * s, Vec2::new(ix, iy) * s);
            prop_assume!(base.opposes_goal());
            // same side of the B comparison
            prop_assume!((base.f_in.norm() < 1.0) == (scaled.f_in.norm() < 1.0));
            let a = resolve_heading(&base, h, 1.0);
            let b = resolve_heading(&scaled, h, 1.0);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
