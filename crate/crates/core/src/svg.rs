//! Static SVG rendering of a recorded episode.
//!
//! Coordinates stay in millimeters; the y axis is flipped so the arena's
//! origin sits at the bottom-left as in the simulator. Numbers are printed
//! with one decimal, which makes the output byte-stable for identical input.

use std::fmt::Write;

use crate::geometry::Arena;
use crate::trajectory::{Role, Trajectory, TrajectoryRow};

const PURSUER_COLORS: [&str; 6] = ["#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b"];
const EVADER_COLOR: &str = "#d62728";
const PIXELS_PER_MM: f64 = 0.1;
const STROKE_MM: f64 = 20.0;
const MARKER_RADIUS_MM: f64 = 60.0;

pub fn render(arena: &Arena, trajectory: &Trajectory) -> String {
    let (w, h) = (arena.width, arena.height);
    let flip = |y: f64| h - y;
    let mut out = String::new();
    // Writing to a String cannot fail.
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.1}" height="{:.1}" viewBox="0 0 {w:.1} {h:.1}">"#,
        w * PIXELS_PER_MM,
        h * PIXELS_PER_MM,
    );
    let _ = writeln!(
        out,
        r##"<rect class="arena" x="0.0" y="0.0" width="{w:.1}" height="{h:.1}" fill="#ffffff" stroke="#000000" stroke-width="{STROKE_MM:.1}"/>"##
    );
    for o in &arena.obstacles {
        let _ = writeln!(
            out,
            r##"<rect class="obstacle" x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#7f7f7f"/>"##,
            o.min.x,
            flip(o.max.y),
            o.width(),
            o.height()
        );
    }
    for id in trajectory.agent_ids() {
        let mut rows: Vec<&TrajectoryRow> = trajectory.rows.iter().filter(|r| r.agent_id == id).collect();
        rows.sort_by_key(|r| r.step);
        let evader = rows.first().is_some_and(|r| r.role == Role::Evader);
        let color = if evader {
            EVADER_COLOR
        } else {
            PURSUER_COLORS[id % PURSUER_COLORS.len()]
        };
        let points: Vec<String> = rows.iter().map(|r| format!("{:.1},{:.1}", r.x_mm, flip(r.y_mm))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="{}" data-agent="{id}" points="{}" fill="none" stroke="{color}" stroke-width="{STROKE_MM:.1}"/>"#,
            if evader { "evader" } else { "pursuer" },
            points.join(" ")
        );
        if let Some(first) = rows.iter().find(|r| r.captured) {
            let _ = writeln!(
                out,
                r##"<circle class="capture" data-agent="{id}" cx="{:.1}" cy="{:.1}" r="{MARKER_RADIUS_MM:.1}" fill="none" stroke="#000000" stroke-width="{STROKE_MM:.1}"/>"##,
                first.x_mm,
                flip(first.y_mm)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    fn arena() -> Arena {
        let spawn = Rect::new(0.0, 1000.0, 1000.0, 2000.0);
        Arena::new(1000.0, 2000.0, vec![Rect::new(100.0, 200.0, 300.0, 500.0)], spawn, spawn).unwrap()
    }

    fn row(step: usize, agent_id: usize, role: Role, x: f64, y: f64, captured: bool) -> TrajectoryRow {
        TrajectoryRow {
            step,
            agent_id,
            role,
            x_mm: x,
            y_mm: y,
            heading_rad: 0.0,
            captured,
            r_main: 0.0,
            r_time: 0.0,
            r_tm: 0.0,
            r_o: 0.0,
            r_pot: 0.0,
        }
    }

    #[test]
    fn empty_trajectory_draws_arena_only() {
        let svg = render(&arena(), &Trajectory::default());
        assert!(svg.contains(r#"class="arena""#));
        assert_eq!(svg.matches(r#"class="obstacle""#).count(), 1);
        assert!(!svg.contains("<polyline"));
        // Obstacle top edge at y = 500 maps to 2000 - 500.
        assert!(svg.contains(r#"x="100.0" y="1500.0" width="200.0" height="300.0""#));
    }

    #[test]
    fn polylines_and_capture_markers() {
        let mut t = Trajectory::default();
        for step in 0..3 {
            let s = step as f64;
            for id in 0..3 {
                t.rows.push(row(step, id, Role::Pursuer, 10.0 * s, 100.0 * id as f64, id == 1 && step >= 1));
            }
            t.rows.push(row(step, 3, Role::Evader, 500.0, 500.0 + s, false));
        }
        let svg = render(&arena(), &t);
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches(r#"class="evader""#).count(), 1);
        assert_eq!(svg.matches(r#"class="capture""#).count(), 1);
        assert!(svg.contains(r#"cx="10.0" cy="1900.0""#));
        assert!(svg.contains(r#"points="500.0,1500.0 500.0,1499.0 500.0,1498.0""#));
        assert_eq!(svg, render(&arena(), &t));
    }
}
