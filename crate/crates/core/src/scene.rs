//! Pixelated region of interest and ground-truth scene sampling.
//!
//! Two grids coexist over the same `L × W` rectangle: positioning pixels,
//! which may hold one transmitting vehicle each, and sensing pixels, which
//! may hold a passive scatterer. Both grids are indexed row-major with the
//! column index running along the length axis.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constellation::ConstellationSpec;
use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiConfig {
    pub length: f64,
    pub width: f64,
    pub positioning_pixel: [f64; 2],
    pub sensing_pixel: [f64; 2],
    pub n_base_stations: usize,
    /// Radius of the base-station circle; defaults to `1.5 · max(L, W)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs_radius: Option<f64>,
    /// Minimum allowed distance between a base station and any pixel center.
    #[serde(default = "default_exclusion_radius")]
    pub exclusion_radius: f64,
}

fn default_exclusion_radius() -> f64 {
    0.01
}

impl RoiConfig {
    /// 15 m square, 1 m sensing pixels, 1.5 m positioning pixels, 50 BSs.
    pub fn full_scale() -> Self {
        RoiConfig {
            length: 15.0,
            width: 15.0,
            positioning_pixel: [1.5, 1.5],
            sensing_pixel: [1.0, 1.0],
            n_base_stations: 50,
            bs_radius: None,
            exclusion_radius: 0.01,
        }
    }

    /// 12 m square with 6×6 positioning and 8×8 sensing pixels, 30 BSs.
    pub fn desk_default() -> Self {
        RoiConfig {
            length: 12.0,
            width: 12.0,
            positioning_pixel: [2.0, 2.0],
            sensing_pixel: [1.5, 1.5],
            n_base_stations: 30,
            bs_radius: None,
            exclusion_radius: 0.01,
        }
    }
}

/// One rectangular pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub cols: usize,
    pub rows: usize,
    pub pixel_length: f64,
    pub pixel_width: f64,
}

impl PixelGrid {
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn center(&self, index: usize) -> Point {
        let (i, j) = self.row_col(index);
        [
            (j as f64 + 0.5) * self.pixel_length,
            (i as f64 + 0.5) * self.pixel_width,
        ]
    }

    /// Index of the pixel containing `point`, if it lies inside the grid.
    pub fn index_of(&self, point: Point) -> Option<usize> {
        let j = (point[0] / self.pixel_length).floor();
        let i = (point[1] / self.pixel_width).floor();
        if j < 0.0 || i < 0.0 || j >= self.cols as f64 || i >= self.rows as f64 {
            return None;
        }
        Some(self.index(i as usize, j as usize))
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|n| self.center(n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiGeometry {
    pub length: f64,
    pub width: f64,
    pub positioning: PixelGrid,
    pub sensing: PixelGrid,
    pub base_stations: Vec<Point>,
    pub exclusion_radius: f64,
}

fn pixel_count(total: f64, pixel: f64, pair: &str) -> Result<usize> {
    if !(total > 0.0 && pixel > 0.0) || !total.is_finite() || !pixel.is_finite() {
        return Err(Error::config(pair, format!("dimensions must be positive, got {total} and {pixel}")));
    }
    let ratio = total / pixel;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::config(
            pair,
            format!("{total} is not an integer multiple of {pixel}"),
        ));
    }
    Ok(n as usize)
}

pub fn build_geometry(config: &RoiConfig) -> Result<RoiGeometry> {
    let cols_p = pixel_count(config.length, config.positioning_pixel[0], "length/positioning_pixel.length")?;
    let rows_p = pixel_count(config.width, config.positioning_pixel[1], "width/positioning_pixel.width")?;
    let cols_s = pixel_count(config.length, config.sensing_pixel[0], "length/sensing_pixel.length")?;
    let rows_s = pixel_count(config.width, config.sensing_pixel[1], "width/sensing_pixel.width")?;
    if config.n_base_stations == 0 {
        return Err(Error::config("n_base_stations", "at least one base station is required"));
    }
    if !(config.exclusion_radius > 0.0) {
        return Err(Error::config("exclusion_radius", "must be positive"));
    }

    let radius = config
        .bs_radius
        .unwrap_or(1.5 * config.length.max(config.width));
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::config("bs_radius", "must be positive"));
    }
    let center = [config.length / 2.0, config.width / 2.0];
    let k = config.n_base_stations;
    let base_stations = (0..k)
        .map(|n| {
            let phi = 2.0 * PI * (n as f64 + 0.5) / k as f64;
            [center[0] + radius * phi.cos(), center[1] + radius * phi.sin()]
        })
        .collect();

    let geometry = RoiGeometry {
        length: config.length,
        width: config.width,
        positioning: PixelGrid {
            cols: cols_p,
            rows: rows_p,
            pixel_length: config.positioning_pixel[0],
            pixel_width: config.positioning_pixel[1],
        },
        sensing: PixelGrid {
            cols: cols_s,
            rows: rows_s,
            pixel_length: config.sensing_pixel[0],
            pixel_width: config.sensing_pixel[1],
        },
        base_stations,
        exclusion_radius: config.exclusion_radius,
    };
    geometry.validate()?;
    Ok(geometry)
}

impl RoiGeometry {
    pub fn n_positioning(&self) -> usize {
        self.positioning.len()
    }

    pub fn n_sensing(&self) -> usize {
        self.sensing.len()
    }

    pub fn n_base_stations(&self) -> usize {
        self.base_stations.len()
    }

    pub fn positioning_centers(&self) -> Vec<Point> {
        self.positioning.centers()
    }

    pub fn sensing_centers(&self) -> Vec<Point> {
        self.sensing.centers()
    }

    /// Checks grid consistency and the base-station exclusion radius.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::Invariant { what: "geometry", message };
        for (grid, name) in [(&self.positioning, "positioning"), (&self.sensing, "sensing")] {
            if grid.is_empty() {
                return Err(invalid(format!("{name} grid is empty")));
            }
            let l = grid.cols as f64 * grid.pixel_length;
            let w = grid.rows as f64 * grid.pixel_width;
            if (l - self.length).abs() > 1e-9 * self.length || (w - self.width).abs() > 1e-9 * self.width {
                return Err(invalid(format!("{name} grid does not tile the ROI")));
            }
        }
        if self.base_stations.is_empty() {
            return Err(invalid("no base stations".into()));
        }
        for (k, bs) in self.base_stations.iter().enumerate() {
            let too_close = self
                .positioning_centers()
                .into_iter()
                .chain(self.sensing_centers())
                .any(|c| distance(c, *bs) <= self.exclusion_radius);
            if too_close {
                return Err(invalid(format!(
                    "base station {k} lies within {} m of a pixel center",
                    self.exclusion_radius
                )));
            }
        }
        Ok(())
    }
}

/// How present targets get their scattering coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScatterDraw {
    /// Every target scatters with coefficient 1.
    #[default]
    Unit,
    /// Coefficients drawn uniformly on (0, 1].
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_vehicles: usize,
    pub target_density: f64,
    pub constellation: ConstellationSpec,
    pub scattering: ScatterDraw,
    /// Vehicle speeds are uniform on `[0, max_speed]` with a random heading sign.
    pub max_speed: f64,
}

impl SceneSpec {
    pub fn new(n_vehicles: usize, target_density: f64, constellation: ConstellationSpec) -> Self {
        SceneSpec {
            n_vehicles,
            target_density,
            constellation,
            scattering: ScatterDraw::Unit,
            max_speed: 0.0,
        }
    }
}

/// Contents of the region of interest.
///
/// `v` is the signed speed along the length axis; vehicles drive parallel
/// to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub p: Vec<u8>,
    pub s: Vec<Complex64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl GroundTruth {
    pub fn empty(n_positioning: usize, n_sensing: usize) -> Self {
        GroundTruth {
            p: vec![0; n_positioning],
            s: vec![Complex64::new(0.0, 0.0); n_positioning],
            x: vec![0.0; n_sensing],
            v: vec![0.0; n_positioning],
        }
    }

    pub fn n_vehicles(&self) -> usize {
        self.p.iter().filter(|&&b| b == 1).count()
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.p.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i)
    }

    pub fn validate(&self, geometry: &RoiGeometry) -> Result<()> {
        let invalid = |message: String| Error::Invariant { what: "ground truth", message };
        let np = geometry.n_positioning();
        let ns = geometry.n_sensing();
        if self.p.len() != np || self.s.len() != np || self.v.len() != np {
            return Err(invalid(format!("p, s, v must have length {np}")));
        }
        if self.x.len() != ns {
            return Err(invalid(format!("x must have length {ns}")));
        }
        for (n, (&p, &s)) in self.p.iter().zip(&self.s).enumerate() {
            match p {
                0 => {
                    if s != Complex64::new(0.0, 0.0) || self.v[n] != 0.0 {
                        return Err(invalid(format!("pixel {n} is empty but carries a symbol or speed")));
                    }
                }
                1 => {
                    if (s.norm() - 1.0).abs() > 1e-9 {
                        return Err(invalid(format!("symbol at pixel {n} is not unit-modulus")));
                    }
                }
                other => return Err(invalid(format!("p[{n}] = {other} is not binary"))),
            }
        }
        if let Some(n) = self.x.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid(format!("x[{n}] = {} outside [0, 1]", self.x[n])));
        }
        if self.v.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite speed".into()));
        }
        Ok(())
    }
}

pub fn sample_scene(geometry: &RoiGeometry, spec: &SceneSpec, seed: u64) -> Result<GroundTruth> {
    let np = geometry.n_positioning();
    let ns = geometry.n_sensing();
    if spec.n_vehicles > np {
        return Err(Error::domain(format!(
            "{} vehicles requested but only {np} positioning pixels exist",
            spec.n_vehicles
        )));
    }
    if !(0.0..=1.0).contains(&spec.target_density) {
        return Err(Error::domain(format!(
            "target density {} outside [0, 1]",
            spec.target_density
        )));
    }
    if !(spec.max_speed >= 0.0) || !spec.max_speed.is_finite() {
        return Err(Error::domain("max_speed must be finite and non-negative"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = GroundTruth::empty(np, ns);
    let mut occupied = index::sample(&mut rng, np, spec.n_vehicles).into_vec();
    occupied.sort_unstable();

    let points = spec.constellation.points();
    for &n in &occupied {
        truth.p[n] = 1;
        truth.s[n] = points[rng.random_range(0..points.len())];
        let speed = spec.max_speed * rng.random::<f64>();
        truth.v[n] = if rng.random::<bool>() { speed } else { -speed };
    }
    for x in truth.x.iter_mut() {
        if rng.random::<f64>() < spec.target_density {
            *x = match spec.scattering {
                ScatterDraw::Unit => 1.0,
                // random() covers [0, 1); flip it onto (0, 1]
                ScatterDraw::Uniform => 1.0 - rng.random::<f64>(),
            };
        }
    }
    Ok(truth)
}

/// Geometry plus ground truth, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub geometry: RoiGeometry,
    pub truth: GroundTruth,
}

impl SceneFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: SceneFile = serde_json::from_str(text)?;
        scene.geometry.validate()?;
        scene.truth.validate(&scene.geometry)?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(l: f64, lp: f64, ls: f64, k: usize) -> RoiConfig {
        RoiConfig {
            length: l,
            width: l,
            positioning_pixel: [lp, lp],
            sensing_pixel: [ls, ls],
            n_base_stations: k,
            bs_radius: None,
            exclusion_radius: 0.01,
        }
    }

    #[test]
    fn full_scale_grid_sizes() {
        let g = build_geometry(&RoiConfig::full_scale()).unwrap();
        assert_eq!(g.n_sensing(), 225);
        assert_eq!(g.n_positioning(), 100);
        assert_eq!(g.n_base_stations(), 50);
    }

    #[test]
    fn two_by_two_centers() {
        let g = build_geometry(&square(2.0, 1.0, 1.0, 4)).unwrap();
        assert_eq!(g.n_positioning(), 4);
        assert_eq!(
            g.positioning_centers(),
            vec![[0.5, 0.5], [1.5, 0.5], [0.5, 1.5], [1.5, 1.5]]
        );
    }

    #[test]
    fn non_divisible_is_rejected() {
        let err = build_geometry(&square(3.0, 2.0, 1.0, 4)).unwrap_err();
        match err {
            Error::Config { field, .. } => assert!(field.contains("positioning_pixel")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bs_inside_exclusion_is_rejected() {
        let mut cfg = square(2.0, 1.0, 1.0, 4);
        // four BSs at 45° offsets on this radius land exactly on the pixel centers
        cfg.bs_radius = Some(0.5f64.hypot(0.5));
        cfg.exclusion_radius = 0.2;
        assert!(build_geometry(&cfg).is_err());
    }

    #[test]
    fn empty_and_targetless_scenes() {
        let g = build_geometry(&RoiConfig::desk_default()).unwrap();
        let t = sample_scene(&g, &SceneSpec::new(0, 0.0, ConstellationSpec::Qpsk), 3).unwrap();
        assert!(t.p.iter().all(|&b| b == 0));
        assert!(t.s.iter().all(|s| s.norm() == 0.0));
        assert!(t.x.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn too_many_vehicles() {
        let g = build_geometry(&square(2.0, 1.0, 1.0, 4)).unwrap();
        let spec = SceneSpec::new(5, 0.1, ConstellationSpec::Qpsk);
        assert!(matches!(sample_scene(&g, &spec, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let g = build_geometry(&RoiConfig::desk_default()).unwrap();
        let mut spec = SceneSpec::new(5, 0.2, ConstellationSpec::Qpsk);
        spec.max_speed = 20.0;
        assert_eq!(sample_scene(&g, &spec, 17).unwrap(), sample_scene(&g, &spec, 17).unwrap());
    }

    #[test]
    fn target_density_is_binomial() {
        // 100 × 100 sensing pixels
        let cfg = square(100.0, 10.0, 1.0, 8);
        let g = build_geometry(&cfg).unwrap();
        let gamma = 0.15;
        let t = sample_scene(&g, &SceneSpec::new(10, gamma, ConstellationSpec::Qpsk), 99).unwrap();
        let n = t.x.len() as f64;
        let hits = t.x.iter().filter(|&&x| x > 0.0).count() as f64;
        let sd = (n * gamma * (1.0 - gamma)).sqrt();
        assert!((hits - n * gamma).abs() <= 3.0 * sd, "hits {hits}");
    }

    #[test]
    fn scene_file_round_trip_and_validation() {
        let g = build_geometry(&RoiConfig::desk_default()).unwrap();
        let mut spec = SceneSpec::new(3, 0.1, ConstellationSpec::Qpsk);
        spec.scattering = ScatterDraw::Uniform;
        let truth = sample_scene(&g, &spec, 5).unwrap();
        let file = SceneFile { geometry: g, truth };
        let text = file.to_json().unwrap();
        assert_eq!(SceneFile::from_json(&text).unwrap(), file);

        let mut bad = file.clone();
        bad.truth.x[0] = 1.5;
        assert!(SceneFile::from_json(&bad.to_json().unwrap()).is_err());
        let mut bad = file;
        let empty = bad.truth.p.iter().position(|&b| b == 0).unwrap();
        bad.truth.s[empty] = Complex64::new(1.0, 0.0);
        assert!(SceneFile::from_json(&bad.to_json().unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn sampled_scene_invariants(seed in any::<u64>(), nv in 0usize..=36, gamma in 0.0f64..=1.0) {
            let g = build_geometry(&RoiConfig::desk_default()).unwrap();
            let mut spec = SceneSpec::new(nv, gamma, ConstellationSpec::Qpsk);
            spec.scattering = ScatterDraw::Uniform;
            spec.max_speed = 30.0;
            let t = sample_scene(&g, &spec, seed).unwrap();
            prop_assert_eq!(t.n_vehicles(), nv);
            for n in 0..t.p.len() {
                prop_assert_eq!(t.p[n] == 1, t.s[n].norm() > 0.0);
                if t.p[n] == 1 {
                    prop_assert!((t.s[n].norm() - 1.0).abs() < 1e-12);
                    prop_assert!(t.v[n].abs() <= 30.0);
                }
            }
            prop_assert!(t.x.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!(t.validate(&g).is_ok());
        }

        #[test]
        fn pixel_index_round_trip(cols in 1usize..20, rows in 1usize..20, l in 0.1f64..3.0, w in 0.1f64..3.0) {
            let grid = PixelGrid { cols, rows, pixel_length: l, pixel_width: w };
            for n in 0..grid.len() {
                prop_assert_eq!(grid.index_of(grid.center(n)), Some(n));
            }
        }
    }
}
