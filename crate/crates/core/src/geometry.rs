//! Farm layout, compass-angle arithmetic, upstream ordering and the wake graph.
//!
//! Angles are compass degrees: 0° is north, 90° is east, and a wind
//! direction names where the wind comes *from*. Positions are meters with
//! `x` pointing east and `y` pointing north.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Radius, in rotor diameters, within which an upstream turbine is linked
/// to a downstream one in the wake graph.
pub const WAKE_GRAPH_RADIUS_DIAMETERS: f64 = 8.0;

/// Projection differences below this (meters) count as "same streamwise position".
pub(crate) const STREAMWISE_TOL_M: f64 = 1e-6;

/// Wraps an angle into `[-180, 180)`.
pub fn wrap_angle(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("cannot wrap non-finite angle {x}")));
    }
    Ok(wrap_unchecked(x))
}

#[inline]
pub(crate) fn wrap_unchecked(x: f64) -> f64 {
    let mut r = (x + 180.0).rem_euclid(360.0);
    // rem_euclid can round up to the modulus for tiny negative inputs
    if r >= 360.0 {
        r -= 360.0;
    }
    r - 180.0
}

/// Maps an angle into `[0, 360)`.
#[inline]
pub fn modulo_360(x: f64) -> f64 {
    let r = x.rem_euclid(360.0);
    if r >= 360.0 {
        r - 360.0
    } else {
        r
    }
}

/// Yaw offset between the wind direction `k` and nacelle orientation `beta`.
pub fn yaw_angle(k: f64, beta: f64) -> Result<f64> {
    wrap_angle(k - beta)
}

/// Unit vector of the direction the wind travels toward.
pub fn flow_vector(k: f64) -> [f64; 2] {
    let r = k.to_radians();
    [-r.sin(), -r.cos()]
}

/// Crosswind unit vector: the flow vector rotated 90° counter-clockwise.
pub(crate) fn crosswind_vector(k: f64) -> [f64; 2] {
    let f = flow_vector(k);
    [-f[1], f[0]]
}

/// Compass bearing of the displacement `(dx, dy)`, in `[0, 360)`.
pub fn bearing(dx: f64, dy: f64) -> f64 {
    modulo_360(dx.atan2(dy).to_degrees())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarmLayout {
    positions: Vec<[f64; 2]>,
    rotor_diameter: f64,
}

impl FarmLayout {
    pub fn new(positions: Vec<[f64; 2]>, rotor_diameter: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Config("layout needs at least one turbine".into()));
        }
        if !(rotor_diameter > 0.0 && rotor_diameter.is_finite()) {
            return Err(Error::Config(format!("rotor diameter must be positive, got {rotor_diameter}")));
        }
        for (i, p) in positions.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::Config(format!("turbine {i} has a non-finite position")));
            }
            for (j, q) in positions.iter().enumerate().skip(i + 1) {
                if p == q {
                    return Err(Error::Config(format!("turbines {i} and {j} share a position")));
                }
            }
        }
        Ok(Self { positions, rotor_diameter })
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn rotor_diameter(&self) -> f64 {
        self.rotor_diameter
    }

    pub fn n_turbines(&self) -> usize {
        self.positions.len()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (p, q) = (self.positions[i], self.positions[j]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    pub fn min_spacing(&self) -> f64 {
        let n = self.n_turbines();
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                best = best.min(self.distance(i, j));
            }
        }
        best
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.n_turbines() as f64;
        let (sx, sy) = self.positions.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        [sx / n, sy / n]
    }

    /// Projection of each hub onto the flow vector for direction `k`.
    pub fn streamwise(&self, k: f64) -> Vec<f64> {
        let f = flow_vector(k);
        self.positions.iter().map(|p| p[0] * f[0] + p[1] * f[1]).collect()
    }

    /// Parses the plain-text layout format: a `d=<meters>` header, then one
    /// `x y` line per turbine. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Config("empty layout file".into()))?;
        let d = header
            .strip_prefix("d=")
            .ok_or_else(|| Error::Config(format!("expected `d=<meters>` header, got `{header}`")))?
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Config(format!("bad rotor diameter: {e}")))?;
        let mut positions = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let mut coord = || -> Result<f64> {
                it.next()
                    .ok_or_else(|| Error::Config(format!("expected `x y`, got `{line}`")))?
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad coordinate in `{line}`: {e}")))
            };
            let (x, y) = (coord()?, coord()?);
            if it.next().is_some() {
                return Err(Error::Config(format!("trailing fields in `{line}`")));
            }
            positions.push([x, y]);
        }
        Self::new(positions, d)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("d={}\n", self.rotor_diameter);
        for p in &self.positions {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Hexagonally packed 19-turbine diamond: rows of 3, 4, 5, 4, 3 turbines,
/// every nearest neighbour exactly `spacing_diameters * d` away. Centered on
/// the origin; the middle row runs west-east.
pub fn diamond_layout(spacing_diameters: f64, d: f64) -> Result<FarmLayout> {
    if !(spacing_diameters > 0.0) {
        return Err(Error::Config(format!("spacing must be positive, got {spacing_diameters}")));
    }
    let s = spacing_diameters * d;
    let row_pitch = s * 3f64.sqrt() / 2.0;
    let mut positions = Vec::with_capacity(19);
    for row in -2i32..=2 {
        let count = 5 - row.unsigned_abs() as usize;
        for k in 0..count {
            let x = (k as f64 - (count as f64 - 1.0) / 2.0) * s;
            positions.push([x, row as f64 * row_pitch]);
        }
    }
    FarmLayout::new(positions, d)
}

/// `n` turbines on a west-east line.
pub fn row_layout(n: usize, spacing_diameters: f64, d: f64) -> Result<FarmLayout> {
    let s = spacing_diameters * d;
    FarmLayout::new((0..n).map(|i| [i as f64 * s, 0.0]).collect(), d)
}

/// A center turbine with four neighbours to the north, east, south and west.
pub fn cross_layout(spacing_diameters: f64, d: f64) -> Result<FarmLayout> {
    let s = spacing_diameters * d;
    FarmLayout::new(vec![[0.0, 0.0], [0.0, s], [s, 0.0], [0.0, -s], [-s, 0.0]], d)
}

/// Turbine indices from upstream to downstream for wind direction `k`,
/// ties broken by index.
pub fn upstream_order(layout: &FarmLayout, k: f64) -> Vec<usize> {
    let keys: Vec<i64> = layout
        .streamwise(k)
        .into_iter()
        .map(|p| (p / STREAMWISE_TOL_M).round() as i64)
        .collect();
    let mut order: Vec<usize> = (0..layout.n_turbines()).collect();
    order.sort_by_key(|&i| (keys[i], i));
    order
}

/// Directed graph linking each turbine to the downstream turbines it can wake.
#[derive(Debug, Clone, PartialEq)]
pub struct WakeGraph {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// Per edge: `[distance / (8 d), sin(rel_angle), cos(rel_angle)]`.
    pub edge_features: Vec<[f64; 3]>,
}

pub const EDGE_FEATURES: usize = 3;

impl WakeGraph {
    pub fn empty(n_nodes: usize) -> Self {
        Self { n_nodes, edges: Vec::new(), edge_features: Vec::new() }
    }

    /// Kahn's algorithm; `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indegree = vec![0usize; self.n_nodes];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.n_nodes];
        for &(i, j) in &self.edges {
            indegree[j] += 1;
            out[i].push(j);
        }
        let mut ready: Vec<usize> = (0..self.n_nodes).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.n_nodes);
        while let Some(i) = ready.pop() {
            order.push(i);
            for &j in &out[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(j);
                }
            }
        }
        (order.len() == self.n_nodes).then_some(order)
    }

    /// Graph with node indices relabeled by `perm` (old index -> new index).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            n_nodes: self.n_nodes,
            edges: self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect(),
            edge_features: self.edge_features.clone(),
        }
    }
}

pub fn build_wake_graph(layout: &FarmLayout, k: f64) -> WakeGraph {
    let n = layout.n_turbines();
    let d = layout.rotor_diameter();
    let radius = WAKE_GRAPH_RADIUS_DIAMETERS * d;
    let proj = layout.streamwise(k);
    let pos = layout.positions();
    let mut graph = WakeGraph::empty(n);
    for i in 0..n {
        for j in 0..n {
            if i == j || proj[j] - proj[i] <= STREAMWISE_TOL_M {
                continue;
            }
            let dist = layout.distance(i, j);
            // pairs exactly 8 d apart are excluded whatever the rounding
            if dist >= radius - STREAMWISE_TOL_M {
                continue;
            }
            let rel = wrap_unchecked(bearing(pos[j][0] - pos[i][0], pos[j][1] - pos[i][1]) - k).to_radians();
            graph.edges.push((i, j));
            graph.edge_features.push([dist / radius, rel.sin(), rel.cos()]);
        }
    }
    graph
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(350.0 - 10.0).unwrap(), -20.0);
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert_eq!(wrap_angle(539.5).unwrap(), 179.5);
        assert_eq!(wrap_angle(180.0).unwrap(), -180.0);
        assert!(wrap_angle(-1e-17).unwrap() < 180.0);
        assert!(matches!(wrap_angle(f64::NAN), Err(Error::Domain(_))));
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn yaw_examples() {
        assert_eq!(yaw_angle(256.0, 250.0).unwrap(), 6.0);
        assert_eq!(yaw_angle(0.0, 350.0).unwrap(), 10.0);
        assert_eq!(yaw_angle(180.0, 180.0).unwrap(), 0.0);
    }

    #[test]
    fn flow_vector_convention() {
        let check = |k: f64, e: [f64; 2]| {
            let f = flow_vector(k);
            assert!(close(f[0], e[0], 1e-12) && close(f[1], e[1], 1e-12), "{k}: {f:?}");
        };
        check(270.0, [1.0, 0.0]);
        check(0.0, [0.0, -1.0]);
        check(180.0, [0.0, 1.0]);
    }

    #[test]
    fn upstream_order_examples() {
        let row = row_layout(3, 4.0, 100.0).unwrap();
        assert_eq!(upstream_order(&row, 270.0), vec![0, 1, 2]);
        assert_eq!(upstream_order(&row, 90.0), vec![2, 1, 0]);
        // perpendicular to the flow: tie-break by index
        assert_eq!(upstream_order(&row, 0.0), vec![0, 1, 2]);
        assert_eq!(upstream_order(&row, 180.0), vec![0, 1, 2]);
    }

    #[test]
    fn wake_graph_examples() {
        let pair = FarmLayout::new(vec![[0.0, 0.0], [500.0, 0.0]], 100.0).unwrap();
        let g = build_wake_graph(&pair, 270.0);
        assert_eq!(g.edges, vec![(0, 1)]);
        assert!(close(g.edge_features[0][0], 0.625, 1e-12));
        // straight downstream sits at bearing K + 180
        assert!(close(g.edge_features[0][1], 0.0, 1e-12));
        assert!(close(g.edge_features[0][2], -1.0, 1e-12));

        let far = FarmLayout::new(vec![[0.0, 0.0], [900.0, 0.0]], 100.0).unwrap();
        assert!(build_wake_graph(&far, 270.0).edges.is_empty());
    }

    #[test]
    fn diamond_graph_is_acyclic_for_every_direction() {
        let layout = diamond_layout(4.0, 240.0).unwrap();
        for k in 0..360 {
            let g = build_wake_graph(&layout, k as f64);
            assert!(g.topological_order().is_some(), "cycle at {k}");
            for f in &g.edge_features {
                assert!(f[0] > 0.0 && f[0] < 1.0);
            }
        }
    }

    #[test]
    fn diamond_layout_geometry() {
        let layout = diamond_layout(4.0, 240.0).unwrap();
        assert_eq!(layout.n_turbines(), 19);
        assert!((layout.min_spacing() - 960.0).abs() <= 960.0 * 1e-9);
        // every turbine has its 180° image in the layout
        let c = layout.centroid();
        for p in layout.positions() {
            let img = [2.0 * c[0] - p[0], 2.0 * c[1] - p[1]];
            assert!(layout
                .positions()
                .iter()
                .any(|q| close(q[0], img[0], 1e-9) && close(q[1], img[1], 1e-9)));
        }
        let unit = diamond_layout(1.0, 1.0).unwrap();
        assert!((unit.min_spacing() - 1.0).abs() < 1e-9);
        assert!(diamond_layout(0.0, 1.0).is_err());
    }

    #[test]
    fn layout_validation() {
        assert!(FarmLayout::new(vec![], 1.0).is_err());
        assert!(FarmLayout::new(vec![[0.0, 0.0]], 0.0).is_err());
        assert!(FarmLayout::new(vec![[1.0, 2.0], [1.0, 2.0]], 1.0).is_err());
    }

    #[test]
    fn layout_file_roundtrip() {
        let layout = diamond_layout(4.0, 240.0).unwrap();
        let parsed = FarmLayout::parse(&layout.to_text()).unwrap();
        assert_eq!(parsed, layout);
        let text = "# two machines\nd=240\n0 0\n960 0 # east\n";
        assert_eq!(FarmLayout::parse(text).unwrap().n_turbines(), 2);
        assert!(FarmLayout::parse("0 0\n").is_err());
        assert!(FarmLayout::parse("d=240\n0\n").is_err());
        assert!(FarmLayout::parse("d=240\n0 0 0\n").is_err());
    }

    proptest! {
        #[test]
        fn wrap_is_periodic(x in -720.0f64..720.0, k in -10i32..=10) {
            let a = wrap_angle(x).unwrap();
            let b = wrap_angle(x + 360.0 * k as f64).unwrap();
            prop_assert!((-180.0..180.0).contains(&a));
            // the two may land on opposite ends of the interval at the cut
            let diff = (a - b).abs();
            prop_assert!(diff < 1e-9 || (diff - 360.0).abs() < 1e-9);
        }

        #[test]
        fn yaw_recovers_offset(k in 0.0f64..360.0, a in -180.0f64..180.0) {
            let beta = modulo_360(k - a);
            let y = yaw_angle(k, beta).unwrap();
            let w = wrap_angle(a).unwrap();
            let diff = (y - w).abs();
            prop_assert!(diff < 1e-9 || (diff - 360.0).abs() < 1e-9);
        }

        #[test]
        fn wake_graph_translation_invariant(k in 0.0f64..360.0, dx in -5e3f64..5e3, dy in -5e3f64..5e3) {
            let layout = diamond_layout(4.0, 240.0).unwrap();
            let moved = FarmLayout::new(
                layout.positions().iter().map(|p| [p[0] + dx, p[1] + dy]).collect(),
                240.0,
            ).unwrap();
            let (a, b) = (build_wake_graph(&layout, k), build_wake_graph(&moved, k));
            prop_assert_eq!(&a.edges, &b.edges);
            for (fa, fb) in a.edge_features.iter().zip(&b.edge_features) {
                for c in 0..3 {
                    prop_assert!((fa[c] - fb[c]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn reversing_wind_reverses_edges(k in 0.0f64..180.0) {
            let layout = diamond_layout(4.0, 240.0).unwrap();
            let mut fwd: Vec<(usize, usize)> = build_wake_graph(&layout, k).edges;
            let mut back: Vec<(usize, usize)> =
                build_wake_graph(&layout, k + 180.0).edges.into_iter().map(|(i, j)| (j, i)).collect();
            fwd.sort();
            back.sort();
            prop_assert_eq!(fwd, back);
        }
    }
}
