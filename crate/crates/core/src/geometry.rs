//! Arena geometry: the rectangular field, axis-aligned obstacles and spawn
//! regions. All lengths are millimeters.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of consecutive rejected draws after which spawning gives up.
pub const MAX_SPAWN_REJECTIONS: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_heading(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (other - self).norm()
    }

    /// Unit vector in the same direction, or zero for the zero vector.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n == 0.0 {
            Vec2::ZERO
        } else {
            Vec2::new(self.x / n, self.y / n)
        }
    }

    /// Counter-clockwise rotation by 90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Heading in (-pi, pi].
    pub fn heading(self) -> f64 {
        wrap_angle(self.y.atan2(self.x))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// Axis-aligned rectangle. Used both for obstacles and spawn regions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

pub type RectObstacle = Rect;
pub type RectRegion = Rect;

impl Rect {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            min: Vec2::new(xmin, ymin),
            max: Vec2::new(xmax, ymax),
        }
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }

    /// Strict interior test; boundary points are not inside.
    pub fn contains_strict(&self, p: Vec2) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min.x < other.max.x
            && other.min.x < self.max.x
            && self.min.y < other.max.y
            && other.min.y < self.max.y
    }
}

/// Which surface produced a nearest-point answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surface {
    Obstacle(usize),
    Wall(Wall),
    /// Disc placed at a captured teammate.
    Virtual(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wall {
    Left,
    Bottom,
    Right,
    Top,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestPoint {
    pub point: Vec2,
    pub distance: f64,
    pub surface: Surface,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
    pub obstacles: Vec<RectObstacle>,
    pub pursuer_spawn: RectRegion,
    pub evader_spawn: RectRegion,
}

impl Arena {
    pub fn new(
        width: f64,
        height: f64,
        obstacles: Vec<RectObstacle>,
        pursuer_spawn: RectRegion,
        evader_spawn: RectRegion,
    ) -> Result<Self> {
        let arena = Self {
            width,
            height,
            obstacles,
            pursuer_spawn,
            evader_spawn,
        };
        arena.validate()?;
        Ok(arena)
    }

    /// Obstacle-free arena whose spawn regions both cover the whole field.
    pub fn empty(width: f64, height: f64) -> Result<Self> {
        let all = Rect::new(0.0, 0.0, width, height);
        Self::new(width, height, Vec::new(), all, all)
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width, self.height)
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return Err(Error::InvalidArena(format!(
                "dimensions must be positive and finite, got {}x{}",
                self.width, self.height
            )));
        }
        let bounds = self.bounds();
        let inside = |r: &Rect| bounds.contains(r.min) && bounds.contains(r.max);
        for (k, o) in self.obstacles.iter().enumerate() {
            if !(o.min.x < o.max.x && o.min.y < o.max.y) {
                return Err(Error::InvalidArena(format!("obstacle {k} has min corner not below max corner")));
            }
            if !inside(o) {
                return Err(Error::InvalidArena(format!("obstacle {k} extends outside the arena")));
            }
        }
        for (name, region) in [("pursuer_spawn", &self.pursuer_spawn), ("evader_spawn", &self.evader_spawn)] {
            if !(region.min.x <= region.max.x && region.min.y <= region.max.y) {
                return Err(Error::InvalidArena(format!("{name} has min corner above max corner")));
            }
            if !inside(region) {
                return Err(Error::InvalidArena(format!("{name} extends outside the arena")));
            }
            if let Some(k) = self.obstacles.iter().position(|o| o.intersects(region)) {
                return Err(Error::InvalidArena(format!("{name} intersects obstacle {k}")));
            }
        }
        Ok(())
    }

    fn walls(&self, p: Vec2) -> [(Wall, Vec2); 4] {
        [
            (Wall::Left, Vec2::new(0.0, p.y)),
            (Wall::Bottom, Vec2::new(p.x, 0.0)),
            (Wall::Right, Vec2::new(self.width, p.y)),
            (Wall::Top, Vec2::new(p.x, self.height)),
        ]
    }

    /// Closest point over all obstacle boundaries and the four walls.
    ///
    /// Ties go to the lowest obstacle index; walls come after obstacles in
    /// the order left, bottom, right, top.
    pub fn nearest_obstacle_point(&self, p: Vec2) -> Result<NearestPoint> {
        if !p.is_finite() || !self.bounds().contains(p) || self.obstacles.iter().any(|o| o.contains_strict(p)) {
            return Err(Error::PenetratingQuery { x: p.x, y: p.y });
        }
        let mut best: Option<NearestPoint> = None;
        let mut consider = |point: Vec2, surface: Surface| {
            let distance = p.distance(point);
            if best.is_none_or(|b| distance < b.distance) {
                best = Some(NearestPoint { point, distance, surface });
            }
        };
        for (k, o) in self.obstacles.iter().enumerate() {
            consider(o.clamp(p), Surface::Obstacle(k));
        }
        for (wall, point) in self.walls(p) {
            consider(point, Surface::Wall(wall));
        }
        Ok(best.expect("walls always produce a candidate"))
    }

    /// Whether a disc intersects an obstacle or leaves the arena. Touching
    /// counts as a collision.
    pub fn in_collision(&self, p: Vec2, radius: f64) -> bool {
        if !p.is_finite() {
            return true;
        }
        if p.x - radius <= 0.0 || p.y - radius <= 0.0 || p.x + radius >= self.width || p.y + radius >= self.height {
            return true;
        }
        self.obstacles.iter().any(|o| p.distance(o.clamp(p)) <= radius)
    }

    /// Uniform rejection sampling inside `region`. Candidates must be
    /// collision-free at `clearance` and at least `2 * clearance` away from
    /// every point in `occupied`.
    pub fn sample_spawn<R: Rng + ?Sized>(
        &self,
        region: &RectRegion,
        clearance: f64,
        occupied: &[Vec2],
        rng: &mut R,
    ) -> Result<Vec2> {
        for _ in 0..MAX_SPAWN_REJECTIONS {
            let u: f64 = rng.gen();
            let v: f64 = rng.gen();
            let p = Vec2::new(
                region.min.x + u * (region.max.x - region.min.x),
                region.min.y + v * (region.max.y - region.min.y),
            );
            if self.in_collision(p, clearance) {
                continue;
            }
            if occupied.iter().any(|q| q.distance(p) < 2.0 * clearance) {
                continue;
            }
            return Ok(p);
        }
        Err(Error::SpawnInfeasible {
            attempts: MAX_SPAWN_REJECTIONS,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn big_arena() -> Arena {
        Arena::empty(3600.0, 5000.0).unwrap()
    }

    #[test]
    fn nearest_wall_in_empty_arena() {
        let n = big_arena().nearest_obstacle_point(Vec2::new(100.0, 100.0)).unwrap();
        assert_eq!(n.point, Vec2::new(0.0, 100.0));
        assert_eq!(n.distance, 100.0);
        assert_eq!(n.surface, Surface::Wall(Wall::Left));
    }

    #[test]
    fn center_of_square_breaks_tie_to_first_wall() {
        let arena = Arena::empty(1000.0, 1000.0).unwrap();
        let n = arena.nearest_obstacle_point(Vec2::new(500.0, 500.0)).unwrap();
        assert_eq!(n.distance, 500.0);
        assert_eq!(n.surface, Surface::Wall(Wall::Left));
    }

    #[test]
    fn nearest_point_on_rectangle() {
        let mut arena = Arena::empty(3600.0, 5000.0).unwrap();
        arena.obstacles.push(Rect::new(600.0, 400.0, 800.0, 700.0));
        let n = arena.nearest_obstacle_point(Vec2::new(500.0, 500.0)).unwrap();
        assert_eq!(n.point, Vec2::new(600.0, 500.0));
        assert_eq!(n.distance, 100.0);
        assert_eq!(n.surface, Surface::Obstacle(0));
    }

    #[test]
    fn obstacle_ties_go_to_lowest_index_then_walls() {
        let mut arena = Arena::empty(1000.0, 1000.0).unwrap();
        arena.obstacles.push(Rect::new(300.0, 100.0, 400.0, 200.0));
        arena.obstacles.push(Rect::new(100.0, 300.0, 200.0, 400.0));
        // Equidistant from the nearest corners of both obstacles.
        let n = arena.nearest_obstacle_point(Vec2::new(250.0, 250.0)).unwrap();
        assert_eq!(n.surface, Surface::Obstacle(0));
        let mut arena = Arena::empty(1000.0, 1000.0).unwrap();
        arena.obstacles.push(Rect::new(200.0, 400.0, 300.0, 600.0));
        let n = arena.nearest_obstacle_point(Vec2::new(100.0, 500.0)).unwrap();
        assert_eq!(n.distance, 100.0);
        assert_eq!(n.surface, Surface::Obstacle(0));
    }

    #[test]
    fn penetrating_query_is_an_error() {
        let mut arena = Arena::empty(1000.0, 1000.0).unwrap();
        arena.obstacles.push(Rect::new(400.0, 400.0, 600.0, 600.0));
        assert!(matches!(
            arena.nearest_obstacle_point(Vec2::new(500.0, 500.0)),
            Err(Error::PenetratingQuery { .. })
        ));
        assert!(arena.nearest_obstacle_point(Vec2::new(-1.0, 500.0)).is_err());
    }

    #[test]
    fn collision_rules() {
        let mut arena = big_arena();
        assert!(!arena.in_collision(Vec2::new(1800.0, 2500.0), 80.0));
        assert!(arena.in_collision(Vec2::new(50.0, 2500.0), 100.0));
        arena.obstacles.push(Rect::new(1000.0, 1000.0, 1200.0, 1200.0));
        assert!(arena.in_collision(Vec2::new(900.0, 1100.0), 100.0));
        assert!(!arena.in_collision(Vec2::new(899.0, 1100.0), 100.0));
        assert!(arena.in_collision(Vec2::new(100.0, 2500.0), 100.0));
    }

    #[test]
    fn degenerate_spawn_region_returns_its_point() {
        let arena = big_arena();
        let region = Rect::new(700.0, 900.0, 700.0, 900.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(arena.sample_spawn(&region, 80.0, &[], &mut rng).unwrap(), Vec2::new(700.0, 900.0));
    }

    #[test]
    fn infeasible_spawn_region_errors() {
        let arena = big_arena();
        let region = Rect::new(10.0, 10.0, 20.0, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            arena.sample_spawn(&region, 80.0, &[], &mut rng),
            Err(Error::SpawnInfeasible { .. })
        ));
    }

    #[test]
    fn spawn_is_deterministic_per_seed() {
        let arena = big_arena();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| arena.sample_spawn(&arena.pursuer_spawn, 80.0, &[], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn spawn_mean_matches_region_center() {
        // Monte-Carlo oracle: the mean of uniform draws converges to the center.
        let arena = big_arena();
        let region = Rect::new(500.0, 800.0, 2500.0, 1800.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let mut sum = Vec2::ZERO;
        for _ in 0..n {
            sum += arena.sample_spawn(&region, 80.0, &[], &mut rng).unwrap();
        }
        let mean = sum * (1.0 / n as f64);
        assert!(mean.distance(region.center()) < 0.02 * region.diagonal());
    }

    #[test]
    fn invalid_arenas_are_rejected() {
        let all = Rect::new(0.0, 0.0, 100.0, 100.0);
        assert!(Arena::new(0.0, 100.0, vec![], all, all).is_err());
        assert!(Arena::new(100.0, 100.0, vec![Rect::new(50.0, 50.0, 150.0, 60.0)], Rect::new(0.0, 0.0, 10.0, 10.0), Rect::new(0.0, 0.0, 10.0, 10.0)).is_err());
        assert!(Arena::new(100.0, 100.0, vec![Rect::new(5.0, 5.0, 8.0, 8.0)], Rect::new(0.0, 0.0, 10.0, 10.0), Rect::new(20.0, 20.0, 30.0, 30.0)).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    fn brute_force_distance(arena: &Arena, p: Vec2) -> f64 {
        // Sample every boundary at 0.5 mm spacing.
        let step = 0.5;
        let mut best = f64::INFINITY;
        let mut edge = |a: Vec2, b: Vec2| {
            let len = a.distance(b);
            let n = (len / step).ceil() as usize;
            for k in 0..=n {
                let t = k as f64 / n as f64;
                best = best.min(p.distance(a + (b - a) * t));
            }
        };
        let mut rects = arena.obstacles.clone();
        rects.push(arena.bounds());
        for r in rects {
            let c = [r.min, Vec2::new(r.max.x, r.min.y), r.max, Vec2::new(r.min.x, r.max.y)];
            for k in 0..4 {
                edge(c[k], c[(k + 1) % 4]);
            }
        }
        best
    }

    fn cluttered() -> Arena {
        Arena::new(
            2000.0,
            1500.0,
            vec![Rect::new(300.0, 300.0, 700.0, 500.0), Rect::new(1200.0, 800.0, 1500.0, 1300.0)],
            Rect::new(0.0, 0.0, 200.0, 200.0),
            Rect::new(1700.0, 0.0, 2000.0, 200.0),
        )
        .unwrap()
    }

    fn free_point() -> impl Strategy<Value = Vec2> {
        let arena = cluttered();
        (0.0..arena.width, 0.0..arena.height)
            .prop_map(|(x, y)| Vec2::new(x, y))
            .prop_filter("outside obstacles", move |p| !arena.obstacles.iter().any(|o| o.contains(*p)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn nearest_distance_matches_brute_force(p in free_point()) {
            let arena = cluttered();
            let d = arena.nearest_obstacle_point(p).unwrap().distance;
            let brute = brute_force_distance(&arena, p);
            prop_assert!(d <= brute + 1e-9);
            prop_assert!(brute - d <= 1.0);
        }

        #[test]
        fn nearest_distance_is_lipschitz(
            p in free_point(),
            q in free_point(),
        ) {
            let arena = cluttered();
            let dp = arena.nearest_obstacle_point(p).unwrap().distance;
            let dq = arena.nearest_obstacle_point(q).unwrap().distance;
            prop_assert!((dp - dq).abs() <= p.distance(q) + 1e-9);
        }

        #[test]
        fn spawned_points_are_collision_free(seed in any::<u64>()) {
            let arena = cluttered();
            let region = Rect::new(0.0, 0.0, 2000.0, 1500.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut taken = Vec::new();
            for _ in 0..4 {
                let p = arena.sample_spawn(&region, 80.0, &taken, &mut rng).unwrap();
                prop_assert!(!arena.in_collision(p, 80.0));
                prop_assert!(taken.iter().all(|q: &Vec2| q.distance(p) >= 160.0));
                taken.push(p);
            }
        }
    }
}
