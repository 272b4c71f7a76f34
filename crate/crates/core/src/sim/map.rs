use serde::{Deserialize, Serialize};

use super::MapConfig;

/// Road-structure label of a 1 m cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellClass {
    OffMap,
    Walkway,
    Crossing,
    Road,
}

impl CellClass {
    /// Ordinal code used in the observation's structure layer.
    pub fn code(self) -> f32 {
        match self {
            CellClass::OffMap => 0.0,
            CellClass::Walkway => 1.0 / 3.0,
            CellClass::Crossing => 2.0 / 3.0,
            CellClass::Road => 1.0,
        }
    }
}

/// Axis-aligned crosswalk rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crosswalk {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Crosswalk {
    pub fn center_x(&self) -> f64 {
        0.5 * (self.x.0 + self.x.1)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.x.0..self.x.1).contains(&p[0]) && (self.y.0..self.y.1).contains(&p[1])
    }
}

/// Polyline the ego follows, parameterized by arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    waypoints: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

impl Route {
    pub fn new(waypoints: Vec<[f64; 2]>) -> Self {
        assert!(waypoints.len() >= 2, "route needs at least two waypoints");
        let mut cumulative = vec![0.0];
        for w in waypoints.windows(2) {
            let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cumulative.push(cumulative.last().unwrap() + d);
        }
        Self {
            waypoints,
            cumulative,
        }
    }

    pub fn waypoints(&self) -> &[[f64; 2]] {
        &self.waypoints
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment(&self, s: f64) -> usize {
        let s = s.clamp(0.0, self.length());
        match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.waypoints.len() - 2),
            Err(i) => (i - 1).min(self.waypoints.len() - 2),
        }
    }

    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let s = s.clamp(0.0, self.length());
        let i = self.segment(s);
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let span = self.cumulative[i + 1] - self.cumulative[i];
        let t = if span > 0.0 { (s - self.cumulative[i]) / span } else { 0.0 };
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        (b[1] - a[1]).atan2(b[0] - a[0])
    }
}

/// The route runs along +x on `y = 0`; the crossing road runs along y at
/// `x = intersection_at`. Crosswalks sit just outside the intersection box on
/// all four arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticMap {
    origin: [f64; 2],
    cols: usize,
    rows: usize,
    cells: Vec<CellClass>,
    route: Route,
    crosswalks: Vec<Crosswalk>,
    intersection: Crosswalk,
    road_half_width: f64,
    sidewalk_width: f64,
}

/// Margin around the route so an ego-centric window always fits.
const MARGIN_BEHIND: f64 = 25.0;
const MARGIN_AHEAD: f64 = 45.0;
const HALF_HEIGHT: f64 = 20.0;
const WAYPOINT_SPACING: f64 = 5.0;

impl StaticMap {
    pub fn build(cfg: &MapConfig) -> Self {
        let hw = cfg.road_half_width();
        let sw = cfg.sidewalk_width;
        let xi = cfg.intersection_at;
        let cw = cfg.crosswalk_width;
        // Half-cell offsets put cell centers on whole meters, so the default
        // geometry's edges fall on cell boundaries.
        let origin = [-MARGIN_BEHIND - 0.5, -HALF_HEIGHT - 0.5];
        let cols = (cfg.route_length + MARGIN_BEHIND + MARGIN_AHEAD).ceil() as usize + 1;
        let rows = (2.0 * HALF_HEIGHT) as usize + 1;

        let crosswalks = vec![
            Crosswalk { x: (xi - hw - cw, xi - hw), y: (-hw, hw) },
            Crosswalk { x: (xi + hw, xi + hw + cw), y: (-hw, hw) },
            Crosswalk { x: (xi - hw, xi + hw), y: (hw, hw + sw) },
            Crosswalk { x: (xi - hw, xi + hw), y: (-hw - sw, -hw) },
        ];
        let intersection = Crosswalk { x: (xi - hw, xi + hw), y: (-hw, hw) };

        let classify = |x: f64, y: f64| -> CellClass {
            let on_main = y.abs() < hw;
            let on_side = (x - xi).abs() < hw;
            if crosswalks.iter().any(|c| c.contains([x, y])) {
                CellClass::Crossing
            } else if on_main || on_side {
                CellClass::Road
            } else if y.abs() < hw + sw || (x - xi).abs() < hw + sw {
                CellClass::Walkway
            } else {
                CellClass::OffMap
            }
        };
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = origin[0] + c as f64 + 0.5;
                let y = origin[1] + r as f64 + 0.5;
                cells.push(classify(x, y));
            }
        }

        let n = (cfg.route_length / WAYPOINT_SPACING).ceil().max(1.0) as usize;
        let waypoints = (0..=n)
            .map(|i| [cfg.route_length * i as f64 / n as f64, 0.0])
            .collect();

        Self {
            origin,
            cols,
            rows,
            cells,
            route: Route::new(waypoints),
            crosswalks,
            intersection,
            road_half_width: hw,
            sidewalk_width: sw,
        }
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    pub fn crosswalks(&self) -> &[Crosswalk] {
        &self.crosswalks
    }

    /// Crosswalks that span the main road.
    pub fn main_crosswalks(&self) -> &[Crosswalk] {
        &self.crosswalks[..2]
    }

    pub fn intersection(&self) -> Crosswalk {
        self.intersection
    }

    pub fn road_half_width(&self) -> f64 {
        self.road_half_width
    }

    pub fn sidewalk_width(&self) -> f64 {
        self.sidewalk_width
    }

    /// Lateral position of the sidewalk band's center on `side` (+1 / -1).
    pub fn sidewalk_center(&self, side: f64) -> f64 {
        side.signum() * (self.road_half_width + 0.5 * self.sidewalk_width)
    }

    /// World-frame bounds `(min, max)` of the gridded area.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        (
            self.origin,
            [self.origin[0] + self.cols as f64, self.origin[1] + self.rows as f64],
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Class of the cell containing `p`; outside the grid is off-map.
    pub fn class_at(&self, p: [f64; 2]) -> CellClass {
        let cx = (p[0] - self.origin[0]).floor();
        let cy = (p[1] - self.origin[1]).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.cols as f64 || cy >= self.rows as f64 {
            return CellClass::OffMap;
        }
        self.cells[cy as usize * self.cols + cx as usize]
    }

    pub fn clamp_to_bounds(&self, p: [f64; 2]) -> [f64; 2] {
        let (lo, hi) = self.bounds();
        [
            p[0].clamp(lo[0], hi[0] - 1e-9),
            p[1].clamp(lo[1], hi[1] - 1e-9),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> StaticMap {
        StaticMap::build(&MapConfig::default())
    }

    #[test]
    fn route_cells_are_drivable() {
        let m = map();
        let mut s = 0.0;
        while s <= m.route().length() {
            let p = m.route().point_at(s);
            for dy in [-1.0, 0.0, 1.0] {
                let c = m.class_at([p[0], p[1] + dy]);
                assert!(matches!(c, CellClass::Road | CellClass::Crossing), "{s} {dy} {c:?}");
            }
            s += 0.25;
        }
    }

    #[test]
    fn cross_section_away_from_intersection() {
        let m = map();
        assert_eq!(m.class_at([20.0, 0.0]), CellClass::Road);
        assert_eq!(m.class_at([20.0, 3.4]), CellClass::Road);
        assert_eq!(m.class_at([20.0, 3.6]), CellClass::Walkway);
        assert_eq!(m.class_at([20.0, -5.4]), CellClass::Walkway);
        assert_eq!(m.class_at([20.0, 5.6]), CellClass::OffMap);
        assert_eq!(m.class_at([-100.0, 0.0]), CellClass::OffMap);
    }

    #[test]
    fn crosswalks_flank_the_intersection() {
        let m = map();
        assert_eq!(m.class_at([70.0, 0.0]), CellClass::Crossing);
        assert_eq!(m.class_at([80.0, -2.0]), CellClass::Crossing);
        assert_eq!(m.class_at([75.0, 0.0]), CellClass::Road);
        assert_eq!(m.class_at([75.0, 4.5]), CellClass::Crossing);
        assert_eq!(m.class_at([75.0, 12.0]), CellClass::Road);
        assert_eq!(m.class_at([79.0, 12.0]), CellClass::Walkway);
        assert_eq!(m.main_crosswalks()[0].center_x(), 70.0);
    }

    #[test]
    fn map_covers_observation_window() {
        let m = map();
        let (lo, hi) = m.bounds();
        assert!(lo[0] <= -9.0 && hi[0] >= m.route().length() + 36.0);
        assert!(lo[1] <= -15.0 && hi[1] >= 15.0);
    }

    #[test]
    fn route_interpolation() {
        let r = Route::new(vec![[0.0, 0.0], [3.0, 4.0], [3.0, 10.0]]);
        assert_eq!(r.length(), 11.0);
        assert_eq!(r.point_at(2.5), [1.5, 2.0]);
        assert_eq!(r.point_at(8.0), [3.0, 7.0]);
        assert_eq!(r.point_at(99.0), [3.0, 10.0]);
        assert!((r.heading_at(9.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
