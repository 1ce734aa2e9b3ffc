//! Deterministic free-space reference gains between pixels and base stations.
//!
//! Rows of every gain matrix index the scattering pixel and columns index
//! the transmitting positioning pixel, so `p^T H^V_k s` and `x^T H^s_k s`
//! are the vehicle-scattered and target-scattered parts of `y_k`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scene::{distance, GroundTruth, Point, RoiGeometry};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// Free-space amplitude `λ/(4πd)` with propagation phase `e^{-j2πd/λ}`.
fn friis(d: f64, wavelength: f64) -> Complex64 {
    let cycles = d / wavelength;
    // reduce to one cycle before taking the phase
    let phase = -2.0 * PI * (cycles - cycles.floor());
    Complex64::from_polar(wavelength / (4.0 * PI * d), phase)
}

/// LOS gain between two points; fails inside one wavelength.
pub fn los_gain(a: Point, b: Point, wavelength: f64) -> Result<Complex64> {
    if !(wavelength > 0.0) {
        return Err(Error::domain("wavelength must be positive"));
    }
    let d = distance(a, b);
    if d < wavelength {
        return Err(Error::domain(format!(
            "distance {d} m between {a:?} and {b:?} is below the {wavelength} m exclusion radius"
        )));
    }
    Ok(friis(d, wavelength))
}

/// Per-BS vehicle channels `H^V_k`: LOS gains on the diagonal, single-bounce
/// vehicle-vehicle paths `los(j→i)·los(i→k)·ρ_v` off the diagonal.
pub fn build_vehicle_channel(
    geometry: &RoiGeometry,
    wavelength: f64,
    vehicle_scattering: f64,
) -> Result<Vec<Array2<Complex64>>> {
    let centers = geometry.positioning_centers();
    let np = centers.len();
    let mut pair = Array2::<Complex64>::zeros((np, np));
    for i in 0..np {
        for j in 0..np {
            if i != j {
                pair[(i, j)] = los_gain(centers[i], centers[j], wavelength).map_err(|_| {
                    Error::domain(format!("positioning pixels {i} and {j} are closer than one wavelength"))
                })?;
            }
        }
    }
    geometry
        .base_stations
        .par_iter()
        .map(|&bs| {
            let to_bs = centers
                .iter()
                .map(|&c| los_gain(c, bs, wavelength))
                .collect::<Result<Vec<_>>>()?;
            Ok(Array2::from_shape_fn((np, np), |(i, j)| {
                if i == j {
                    to_bs[i]
                } else {
                    pair[(i, j)] * to_bs[i] * vehicle_scattering
                }
            }))
        })
        .collect()
}

/// Per-BS sensing channels `H^s_k` (`N_s × N_p`): vehicle `n_p` to sensing
/// pixel `n_s` to BS `k`.
pub fn build_sensing_channel(geometry: &RoiGeometry, wavelength: f64) -> Result<Vec<Array2<Complex64>>> {
    let pos = geometry.positioning_centers();
    let sens = geometry.sensing_centers();
    let mut first_leg = Array2::<Complex64>::zeros((sens.len(), pos.len()));
    for (m, &sc) in sens.iter().enumerate() {
        for (n, &pc) in pos.iter().enumerate() {
            let d = distance(sc, pc);
            if d < wavelength {
                log::warn!("sensing pixel {m} and positioning pixel {n} are {d} m apart; flooring at one wavelength");
            }
            first_leg[(m, n)] = friis(d.max(wavelength), wavelength);
        }
    }
    geometry
        .base_stations
        .par_iter()
        .map(|&bs| {
            let to_bs = sens
                .iter()
                .map(|&c| los_gain(c, bs, wavelength))
                .collect::<Result<Vec<_>>>()?;
            let mut h = first_leg.clone();
            for (m, mut row) in h.rows_mut().into_iter().enumerate() {
                row.mapv_inplace(|g| g * to_bs[m]);
            }
            Ok(h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub wavelength: f64,
    pub carrier_hz: f64,
    pub vehicle: Vec<Array2<Complex64>>,
    pub sensing: Vec<Array2<Complex64>>,
}

impl ChannelSet {
    pub fn build(geometry: &RoiGeometry, carrier_hz: f64, vehicle_scattering: f64) -> Result<Self> {
        if !(carrier_hz > 0.0) || !carrier_hz.is_finite() {
            return Err(Error::config("carrier_hz", "must be positive"));
        }
        let wavelength = wavelength(carrier_hz);
        Ok(ChannelSet {
            wavelength,
            carrier_hz,
            vehicle: build_vehicle_channel(geometry, wavelength, vehicle_scattering)?,
            sensing: build_sensing_channel(geometry, wavelength)?,
        })
    }

    pub fn n_base_stations(&self) -> usize {
        self.vehicle.len()
    }

    pub fn n_positioning(&self) -> usize {
        self.vehicle.first().map_or(0, |h| h.ncols())
    }

    pub fn n_sensing(&self) -> usize {
        self.sensing.first().map_or(0, |h| h.nrows())
    }

    /// `H^LOS_k`: the diagonal of `H^V_k`.
    pub fn los_part(&self, k: usize) -> Array2<Complex64> {
        let h = &self.vehicle[k];
        Array2::from_shape_fn(h.raw_dim(), |(i, j)| if i == j { h[(i, j)] } else { Complex64::new(0.0, 0.0) })
    }

    /// `H^NLOS_k`: `H^V_k` with the diagonal removed.
    pub fn nlos_part(&self, k: usize) -> Array2<Complex64> {
        let h = &self.vehicle[k];
        Array2::from_shape_fn(h.raw_dim(), |(i, j)| if i != j { h[(i, j)] } else { Complex64::new(0.0, 0.0) })
    }

    /// Mean diagonal over mean off-diagonal power of `H^V`, in dB, across all BSs.
    pub fn los_dominance_db(&self) -> f64 {
        let (mut diag, mut nd, mut off, mut no) = (0.0, 0usize, 0.0, 0usize);
        for h in &self.vehicle {
            for ((i, j), g) in h.indexed_iter() {
                if i == j {
                    diag += g.norm_sqr();
                    nd += 1;
                } else {
                    off += g.norm_sqr();
                    no += 1;
                }
            }
        }
        if no == 0 || off == 0.0 {
            return f64::INFINITY;
        }
        10.0 * ((diag / nd as f64) / (off / no as f64)).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerSpec {
    /// Symbol duration in seconds.
    pub symbol_duration: f64,
    pub enabled: bool,
}

/// `e^{j2πTv/λ}`, with the phase reduced modulo whole cycles.
pub fn doppler_phase(projected_speed: f64, symbol_duration: f64, wavelength: f64) -> Complex64 {
    let cycles = symbol_duration * projected_speed / wavelength;
    Complex64::from_polar(1.0, 2.0 * PI * (cycles - cycles.round()))
}

/// Vehicle speed projected on the pixel-to-BS direction. Vehicles drive
/// along the length axis.
pub fn projected_speed(speed: f64, pixel: Point, bs: Point) -> f64 {
    let d = distance(pixel, bs);
    speed * (bs[0] - pixel[0]) / d
}

/// Copy of `channels` with each moving transmitter's columns rotated by its
/// per-BS Doppler phase. Used for measurement synthesis only.
pub fn apply_doppler(
    channels: &ChannelSet,
    spec: &DopplerSpec,
    truth: &GroundTruth,
    geometry: &RoiGeometry,
) -> Result<ChannelSet> {
    if !spec.enabled {
        return Err(Error::domain("apply_doppler called with Doppler disabled"));
    }
    if !(spec.symbol_duration > 0.0) {
        return Err(Error::domain("symbol duration must be positive"));
    }
    let centers = geometry.positioning_centers();
    let mut out = channels.clone();
    for (k, &bs) in geometry.base_stations.iter().enumerate() {
        for n in truth.occupied() {
            let v = truth.v[n];
            if v == 0.0 {
                continue;
            }
            let rot = doppler_phase(projected_speed(v, centers[n], bs), spec.symbol_duration, channels.wavelength);
            out.vehicle[k].column_mut(n).mapv_inplace(|g| g * rot);
            out.sensing[k].column_mut(n).mapv_inplace(|g| g * rot);
        }
    }
    Ok(out)
}

const CACHE_MAGIC: &[u8; 8] = b"ISACCH01";

/// Hash identifying the inputs a `ChannelSet` was built from.
pub fn geometry_hash(geometry: &RoiGeometry, carrier_hz: f64, vehicle_scattering: f64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(geometry).expect("geometry serializes"));
    hasher.update(carrier_hz.to_le_bytes());
    hasher.update(vehicle_scattering.to_le_bytes());
    hasher.finalize().into()
}

impl ChannelSet {
    /// Binary cache: magic, `u64` dims (K, N_p, N_s), `f64` λ and carrier,
    /// 32-byte hash, then each BS's `H^V` and `H^s` row-major as `(re, im)`
    /// pairs. Everything little-endian.
    pub fn write_cache<W: Write>(&self, mut w: W, hash: &[u8; 32]) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        for dim in [self.n_base_stations(), self.n_positioning(), self.n_sensing()] {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        w.write_all(&self.wavelength.to_le_bytes())?;
        w.write_all(&self.carrier_hz.to_le_bytes())?;
        w.write_all(hash)?;
        for (hv, hs) in self.vehicle.iter().zip(&self.sensing) {
            for g in hv.iter().chain(hs.iter()) {
                w.write_all(&g.re.to_le_bytes())?;
                w.write_all(&g.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(mut r: R, expected_hash: Option<&[u8; 32]>) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let mut u = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut u)?;
            Ok(u64::from_le_bytes(u))
        };
        let k = next_u64(&mut r)? as usize;
        let np = next_u64(&mut r)? as usize;
        let ns = next_u64(&mut r)? as usize;
        let wavelength = f64::from_bits(next_u64(&mut r)?);
        let carrier_hz = f64::from_bits(next_u64(&mut r)?);
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        if let Some(expected) = expected_hash {
            if &hash != expected {
                return Err(Error::Cache("geometry hash does not match".into()));
            }
        }
        let next_c64 = |r: &mut R| -> Result<Complex64> {
            let mut b = [0u8; 16];
            r.read_exact(&mut b)?;
            let re = f64::from_le_bytes(b[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(b[8..].try_into().expect("8 bytes"));
            Ok(Complex64::new(re, im))
        };
        let mut vehicle = Vec::with_capacity(k);
        let mut sensing = Vec::with_capacity(k);
        for _ in 0..k {
            let hv: Vec<_> = (0..np * np).map(|_| next_c64(&mut r)).collect::<Result<_>>()?;
            let hs: Vec<_> = (0..ns * np).map(|_| next_c64(&mut r)).collect::<Result<_>>()?;
            vehicle.push(Array2::from_shape_vec((np, np), hv).map_err(|e| Error::Cache(e.to_string()))?);
            sensing.push(Array2::from_shape_vec((ns, np), hs).map_err(|e| Error::Cache(e.to_string()))?);
        }
        Ok(ChannelSet { wavelength, carrier_hz, vehicle, sensing })
    }

    /// Loads `channels-<hash>.bin` from `dir` or builds and stores it.
    pub fn load_or_build(
        geometry: &RoiGeometry,
        carrier_hz: f64,
        vehicle_scattering: f64,
        dir: &Path,
    ) -> Result<Self> {
        let hash = geometry_hash(geometry, carrier_hz, vehicle_scattering);
        let name: String = hash[..8].iter().map(|b| format!("{b:02x}")).collect();
        let path = dir.join(format!("channels-{name}.bin"));
        if let Ok(file) = std::fs::File::open(&path) {
            match Self::read_cache(std::io::BufReader::new(file), Some(&hash)) {
                Ok(set) => return Ok(set),
                Err(e) => log::warn!("ignoring channel cache {}: {e}", path.display()),
            }
        }
        let set = Self::build(geometry, carrier_hz, vehicle_scattering)?;
        std::fs::create_dir_all(dir)?;
        let file = std::fs::File::create(&path)?;
        set.write_cache(std::io::BufWriter::new(file), &hash)?;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::ConstellationSpec;
    use crate::scene::{build_geometry, sample_scene, RoiConfig, SceneSpec};

    // independent scalar evaluation of λ/(4πd)·e^{-j2πd/λ}
    fn reference(d: f64, lambda: f64) -> (f64, f64) {
        let amp = lambda / (4.0 * PI * d);
        let ph = -2.0 * PI * d / lambda;
        (amp * ph.cos(), amp * ph.sin())
    }

    #[test]
    fn los_gain_one_metre() {
        let g = los_gain([0.0, 0.0], [1.0, 0.0], 0.01).unwrap();
        let (re, im) = reference(1.0, 0.01);
        assert!((g.norm() - 7.957_747_154_594_767e-4).abs() < 1e-15);
        assert!((g.re - re).abs() < 1e-15 && (g.im - im).abs() < 1e-15);
        assert!(g.im.abs() < 1e-15);
    }

    #[test]
    fn los_gain_at_one_wavelength() {
        let g = los_gain([0.0, 0.0], [0.0, 0.01], 0.01).unwrap();
        assert!((g.norm() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((g - Complex64::new(1.0 / (4.0 * PI), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn los_gain_inverse_distance() {
        for d in [0.37, 2.0, 13.1] {
            let a = los_gain([0.0, 0.0], [d, 0.0], 0.0123).unwrap().norm();
            let b = los_gain([0.0, 0.0], [2.0 * d, 0.0], 0.0123).unwrap().norm();
            assert!((a / b - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn los_gain_inside_exclusion() {
        assert!(matches!(los_gain([0.0, 0.0], [0.005, 0.0], 0.01), Err(Error::Domain(_))));
    }

    fn tiny(k: usize, lp: f64, ls: f64, l: f64) -> RoiGeometry {
        build_geometry(&RoiConfig {
            length: l,
            width: l,
            positioning_pixel: [lp, lp],
            sensing_pixel: [ls, ls],
            n_base_stations: k,
            bs_radius: None,
            exclusion_radius: 0.01,
        })
        .unwrap()
    }

    #[test]
    fn single_pixel_vehicle_channel_is_los() {
        let g = tiny(3, 2.0, 1.0, 2.0);
        let hv = build_vehicle_channel(&g, 0.01, 1.0).unwrap();
        for (k, h) in hv.iter().enumerate() {
            assert_eq!(h.dim(), (1, 1));
            assert_eq!(h[(0, 0)], los_gain(g.positioning_centers()[0], g.base_stations[k], 0.01).unwrap());
        }
    }

    #[test]
    fn vehicle_channel_structure() {
        let g = build_geometry(&RoiConfig::desk_default()).unwrap();
        let lambda = 0.01;
        let hv = build_vehicle_channel(&g, lambda, 1.0).unwrap();
        let c = g.positioning_centers();
        for (k, h) in hv.iter().enumerate() {
            let bs = g.base_stations[k];
            for i in 0..c.len() {
                let diag = los_gain(c[i], bs, lambda).unwrap();
                assert_eq!(h[(i, i)], diag);
                for j in 0..c.len() {
                    if i == j {
                        continue;
                    }
                    let expect = los_gain(c[i], c[j], lambda).unwrap().norm() * diag.norm();
                    assert!((h[(i, j)].norm() - expect).abs() <= 1e-12 * expect);
                    assert!(h[(i, j)].norm() < h[(i, i)].norm().min(h[(j, j)].norm()));
                }
            }
        }
    }

    #[test]
    fn symmetric_pixels_have_equal_los() {
        // 2×1 pixels, one BS on the perpendicular bisector
        let mut g = tiny(1, 1.0, 1.0, 2.0);
        g.base_stations = vec![[1.0, 30.0]];
        let hv = build_vehicle_channel(&g, 0.01, 1.0).unwrap();
        assert!((hv[0][(0, 0)].norm() - hv[0][(1, 1)].norm()).abs() < 1e-18);
    }

    #[test]
    fn sensing_channel_shape_and_paths() {
        let g = build_geometry(&RoiConfig::desk_default()).unwrap();
        let lambda = 0.01;
        let hs = build_sensing_channel(&g, lambda).unwrap();
        let pc = g.positioning_centers();
        let sc = g.sensing_centers();
        assert_eq!(hs[0].dim(), (g.n_sensing(), g.n_positioning()));
        let k = 4;
        let (m, n) = (10, 7);
        let expect = los_gain(pc[n], sc[m], lambda).unwrap() * los_gain(sc[m], g.base_stations[k], lambda).unwrap();
        assert!((hs[k][(m, n)] - expect).norm() < 1e-20);
    }

    #[test]
    fn farther_scatterer_is_weaker() {
        let mut g = tiny(1, 1.0, 1.0, 4.0);
        g.base_stations = vec![[-20.0, 0.5]];
        let hs = build_sensing_channel(&g, 0.01).unwrap();
        // transmitter at pixel (0,3); sensing pixels (0,1) and (0,0) lie between it and the BS
        let tx = g.positioning.index(0, 3);
        let near = g.sensing.index(1, 1);
        let far = g.sensing.index(3, 0);
        assert!(hs[0][(far, tx)].norm() < hs[0][(near, tx)].norm());
    }

    #[test]
    fn coincident_centers_are_floored() {
        // same grid for both kinds puts every sensing center on a positioning center
        let g = tiny(2, 1.0, 1.0, 2.0);
        let hs = build_sensing_channel(&g, 0.01).unwrap();
        assert!(hs.iter().all(|h| h.iter().all(|z| z.is_finite())));
    }

    #[test]
    fn los_dominance_margin_full_scale_geometry() {
        let g = build_geometry(&RoiConfig::full_scale()).unwrap();
        let set = ChannelSet::build(&g, 30e9, 1.0).unwrap();
        let margin = set.los_dominance_db();
        assert!(margin >= 20.0, "margin {margin}");
        // frozen from the first run of this geometry
        assert!((margin - FULL_SCALE_LOS_MARGIN_DB).abs() < 1e-6, "margin {margin}");
    }

    const FULL_SCALE_LOS_MARGIN_DB: f64 = 75.230_444_323_883_35;

    #[test]
    fn build_is_deterministic() {
        let g = build_geometry(&RoiConfig::desk_default()).unwrap();
        assert_eq!(ChannelSet::build(&g, 30e9, 1.0).unwrap(), ChannelSet::build(&g, 30e9, 1.0).unwrap());
    }

    #[test]
    fn doppler_phase_at_reference_constants() {
        let rot = doppler_phase(10.0, 1.0 / 30_000.0, 0.01);
        let expect = Complex64::from_polar(1.0, 2.0 * PI / 30.0);
        assert!((rot - expect).norm() < 1e-14);
        assert!((rot.norm() - 1.0).abs() < 1e-15);
        assert_eq!(doppler_phase(1.0, 0.5, 0.5), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn doppler_preserves_magnitudes_and_zero_speed() {
        let g = build_geometry(&RoiConfig::desk_default()).unwrap();
        let set = ChannelSet::build(&g, 30e9, 1.0).unwrap();
        let spec = DopplerSpec { symbol_duration: 1.0 / 30_000.0, enabled: true };

        let still = sample_scene(&g, &SceneSpec::new(4, 0.1, ConstellationSpec::Qpsk), 1).unwrap();
        assert_eq!(apply_doppler(&set, &spec, &still, &g).unwrap(), set);

        let mut moving_spec = SceneSpec::new(4, 0.1, ConstellationSpec::Qpsk);
        moving_spec.max_speed = 30.0;
        let moving = sample_scene(&g, &moving_spec, 1).unwrap();
        let hit = apply_doppler(&set, &spec, &moving, &g).unwrap();
        assert_ne!(hit, set);
        for (a, b) in hit.vehicle.iter().chain(&hit.sensing).zip(set.vehicle.iter().chain(&set.sensing)) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x.norm() - y.norm()).abs() <= 1e-15 * y.norm());
            }
        }
    }

    #[test]
    fn cache_round_trip_and_hash_check() {
        let g = build_geometry(&RoiConfig::desk_default()).unwrap();
        let set = ChannelSet::build(&g, 30e9, 1.0).unwrap();
        let hash = geometry_hash(&g, 30e9, 1.0);
        let mut buf = Vec::new();
        set.write_cache(&mut buf, &hash).unwrap();
        let expected_len = 8 + 5 * 8 + 32 + 16 * 30 * (36 * 36 + 64 * 36);
        assert_eq!(buf.len(), expected_len);
        assert_eq!(ChannelSet::read_cache(&buf[..], Some(&hash)).unwrap(), set);
        let other = geometry_hash(&g, 28e9, 1.0);
        assert!(matches!(ChannelSet::read_cache(&buf[..], Some(&other)), Err(Error::Cache(_))));
    }

    #[test]
    fn load_or_build_reuses_cache() {
        let dir = tempfile::tempdir().unwrap();
        let g = build_geometry(&RoiConfig::desk_default()).unwrap();
        let a = ChannelSet::load_or_build(&g, 30e9, 1.0, dir.path()).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let b = ChannelSet::load_or_build(&g, 30e9, 1.0, dir.path()).unwrap();
        assert_eq!(a, b);
    }
}
