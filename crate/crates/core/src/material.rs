//! Kelvin–Voigt parameter fields over grid elements.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Vec3};

/// Spring (shear modulus) and dashpot (shear viscosity) in parallel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KelvinVoigt {
    /// Shear modulus, Pa.
    pub mu: f64,
    /// Shear viscosity, Pa·s.
    pub eta: f64,
    /// Density, kg/m³.
    pub rho: f64,
}

impl KelvinVoigt {
    /// Baseline soft-tissue parameters used when a scenario does not override them.
    pub const BASELINE: KelvinVoigt = KelvinVoigt { mu: 2500.0, eta: 1.0, rho: 1000.0 };

    pub fn new(mu: f64, eta: f64, rho: f64) -> Result<Self> {
        let m = Self { mu, eta, rho };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::InvalidMaterial(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidMaterial(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::InvalidMaterial(format!("rho must be > 0, got {}", self.rho)));
        }
        Ok(())
    }

    pub fn complex_modulus(&self, omega: f64) -> Complex64 {
        complex_modulus(self, omega)
    }

    /// Complex shear wavenumber `omega * sqrt(rho / G*)`, with positive real part.
    pub fn wavenumber(&self, omega: f64) -> Complex64 {
        let k = omega * (Complex64::new(self.rho, 0.0) / self.complex_modulus(omega)).sqrt();
        if k.re < 0.0 {
            -k
        } else {
            k
        }
    }
}

/// `G*(omega) = mu + i*omega*eta`: storage modulus `mu`, loss modulus `omega*eta`.
pub fn complex_modulus(m: &KelvinVoigt, omega: f64) -> Complex64 {
    Complex64::new(m.mu, omega * m.eta)
}

/// Axis-aligned box of homogeneous material.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub name: String,
    pub min: Vec3,
    pub max: Vec3,
    pub material: KelvinVoigt,
}

impl ZoneSpec {
    pub fn contains(&self, x: Vec3) -> bool {
        (0..3).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a])
    }

    fn volume(&self) -> f64 {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }

    fn overlap_volume(&self, other: &ZoneSpec) -> f64 {
        (0..3)
            .map(|a| (self.max[a].min(other.max[a]) - self.min[a].max(other.min[a])).max(0.0))
            .product()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    grid: Grid,
    zones: Vec<ZoneSpec>,
    element_zone: Vec<usize>,
}

impl MaterialField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn zones(&self) -> &[ZoneSpec] {
        &self.zones
    }

    #[inline]
    pub fn zone_of(&self, element: usize) -> usize {
        self.element_zone[element]
    }

    #[inline]
    pub fn element(&self, element: usize) -> &KelvinVoigt {
        &self.zones[self.element_zone[element]].material
    }

    pub fn element_zones(&self) -> &[usize] {
        &self.element_zone
    }

    /// Density at a node: mean over the elements sharing it.
    pub fn node_density(&self, node: usize) -> f64 {
        let (sum, count) = self.node_elements(node).fold((0.0, 0usize), |(s, c), e| (s + self.element(e).rho, c + 1));
        sum / count as f64
    }

    /// Zone at a node when all adjacent elements agree, `None` on an interface.
    pub fn node_zone(&self, node: usize) -> Option<usize> {
        let mut zones = self.node_elements(node).map(|e| self.element_zone[e]);
        let first = zones.next()?;
        zones.all(|z| z == first).then_some(first)
    }

    /// Elements that contain `node` (one to eight).
    pub fn node_elements(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let g = self.grid;
        let ijk = g.node_ijk(node);
        let cells = g.elements_per_axis();
        (0..8).filter_map(move |a| {
            let mut e = [0usize; 3];
            for d in 0..3 {
                let shift = (a >> d) & 1;
                if ijk[d] < shift || ijk[d] - shift >= cells[d] {
                    return None;
                }
                e[d] = ijk[d] - shift;
            }
            Some(g.element_index(e))
        })
    }

    /// True when `node` lies within `layers` elements of a zone interface.
    pub fn near_interface(&self, node: usize, layers: usize) -> bool {
        if self.zones.len() < 2 {
            return false;
        }
        let g = self.grid;
        let ijk = g.node_ijk(node);
        let n = g.nodes_per_axis();
        let lo = ijk.map(|i| i.saturating_sub(layers));
        let hi = [0, 1, 2].map(|d| (ijk[d] + layers).min(n[d] - 1));
        let mut seen = None;
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    for e in self.node_elements(g.node_index([i, j, k])) {
                        let z = self.element_zone[e];
                        match seen {
                            None => seen = Some(z),
                            Some(s) if s != z => return true,
                            _ => {}
                        }
                    }
                }
            }
        }
        false
    }
}

pub fn uniform_material(grid: &Grid, material: KelvinVoigt) -> Result<MaterialField> {
    material.validate()?;
    let zone = ZoneSpec { name: "domain".into(), min: [0.0; 3], max: grid.extent(), material };
    Ok(MaterialField { grid: *grid, zones: vec![zone], element_zone: vec![0; grid.element_count()] })
}

/// Assigns each element the zone containing its centroid.
///
/// The zones must tile the domain: each box inside the domain, no two with a
/// positive-volume overlap, and volumes summing to the domain volume.
pub fn zoned_material(grid: &Grid, zones: Vec<ZoneSpec>) -> Result<MaterialField> {
    if zones.is_empty() {
        return Err(Error::ZoneGap("no zones given".into()));
    }
    let extent = grid.extent();
    let tol = 1e-9 * extent.iter().cloned().fold(0.0, f64::max);
    for z in &zones {
        z.material.validate().map_err(|e| Error::InvalidMaterial(format!("zone `{}`: {e}", z.name)))?;
        for (a, &len) in extent.iter().enumerate() {
            if z.min[a].partial_cmp(&z.max[a]) != Some(std::cmp::Ordering::Less) {
                return Err(Error::ZoneGap(format!("zone `{}` has an empty box", z.name)));
            }
            if z.min[a] < -tol || z.max[a] > len + tol {
                return Err(Error::ZoneGap(format!("zone `{}` extends outside the domain", z.name)));
            }
        }
    }
    let domain_volume = grid.volume();
    for (i, a) in zones.iter().enumerate() {
        for b in &zones[i + 1..] {
            if a.overlap_volume(b) > 1e-9 * domain_volume {
                return Err(Error::ZoneOverlap { first: a.name.clone(), second: b.name.clone() });
            }
        }
    }
    let covered: f64 = zones.iter().map(ZoneSpec::volume).sum();
    if (covered - domain_volume).abs() > 1e-9 * domain_volume {
        return Err(Error::ZoneGap(format!(
            "zones cover {:.6e} m³ of a {:.6e} m³ domain",
            covered, domain_volume
        )));
    }

    let mut element_zone = Vec::with_capacity(grid.element_count());
    for e in 0..grid.element_count() {
        let c = grid.element_centroid(e);
        let zone = zones
            .iter()
            .position(|z| z.contains(c))
            .ok_or_else(|| Error::ZoneGap(format!("element {e} centroid {c:?} is in no zone")))?;
        element_zone.push(zone);
    }
    Ok(MaterialField { grid: *grid, zones, element_zone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn zone(name: &str, min: Vec3, max: Vec3, mu: f64) -> ZoneSpec {
        ZoneSpec { name: name.into(), min, max, material: KelvinVoigt { mu, eta: 1.0, rho: 1000.0 } }
    }

    #[test]
    fn complex_modulus_of_baseline() {
        let g = complex_modulus(&KelvinVoigt::BASELINE, 2.0 * PI * 50.0);
        assert_eq!(g.re, 2500.0);
        assert_relative_eq!(g.im, 314.159, epsilon = 1e-3);
        let m = KelvinVoigt::new(1.0, 0.0, 1.0).unwrap();
        assert_eq!(m.complex_modulus(1e3), Complex64::new(1.0, 0.0));
        assert_eq!(KelvinVoigt::BASELINE.complex_modulus(0.0), Complex64::new(2500.0, 0.0));
    }

    #[test]
    fn complex_modulus_linear_in_eta() {
        let w = 123.0;
        let at = |eta: f64| complex_modulus(&KelvinVoigt { mu: 10.0, eta, rho: 1.0 }, w);
        let base = at(0.0);
        let sum = (at(0.5) - base) + (at(1.5) - base);
        assert_relative_eq!((at(2.0) - base).im, sum.im, max_relative = 1e-14);
        assert_eq!((at(2.0) - base).re, 0.0);
    }

    #[test]
    fn wavenumber_satisfies_dispersion() {
        let m = KelvinVoigt::BASELINE;
        let w = 2.0 * PI * 50.0;
        let k = m.wavenumber(w);
        let lhs = m.complex_modulus(w) * k * k;
        assert_relative_eq!(lhs.re, m.rho * w * w, max_relative = 1e-12);
        assert!(lhs.im.abs() < 1e-9 * lhs.re);
        // e^{-ikx} with Im k < 0 decays along +x
        assert!(k.re > 0.0 && k.im < 0.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(KelvinVoigt::new(2500.0, 1.0, 0.0).is_err());
        assert!(KelvinVoigt::new(2500.0, 1.0, -1.0).is_err());
        assert!(KelvinVoigt::new(0.0, 1.0, 1.0).is_err());
        assert!(KelvinVoigt::new(1.0, -1e-3, 1.0).is_err());
        let g = Grid::new([1.0; 3], [3; 3]).unwrap();
        assert!(uniform_material(&g, KelvinVoigt { mu: 1.0, eta: 0.0, rho: 0.0 }).is_err());
        assert!(uniform_material(&g, KelvinVoigt { mu: 1.0, eta: 0.0, rho: 1.0 }).is_ok());
    }

    #[test]
    fn single_zone_equals_uniform() {
        let g = Grid::new([0.1; 3], [5; 3]).unwrap();
        let u = uniform_material(&g, KelvinVoigt::BASELINE).unwrap();
        let z = zoned_material(&g, vec![zone("all", [0.0; 3], [0.1; 3], 2500.0)]).unwrap();
        for e in 0..g.element_count() {
            assert_eq!(u.element(e), z.element(e));
            assert_eq!(z.zone_of(e), 0);
        }
    }

    #[test]
    fn two_half_zones() {
        let g = Grid::new([0.1; 3], [9; 3]).unwrap();
        let f = zoned_material(
            &g,
            vec![
                zone("soft", [0.0; 3], [0.05, 0.1, 0.1], 2096.37),
                zone("stiff", [0.05, 0.0, 0.0], [0.1; 3], 4192.74),
            ],
        )
        .unwrap();
        for e in 0..g.element_count() {
            let expect = if g.element_centroid(e)[0] < 0.05 { 2096.37 } else { 4192.74 };
            assert_eq!(f.element(e).mu, expect);
        }
        let mid = g.node_index([4, 4, 4]);
        assert_eq!(f.node_zone(mid), None);
        assert_eq!(f.node_zone(g.node_index([1, 4, 4])), Some(0));
        assert!(f.near_interface(g.node_index([3, 4, 4]), 1));
        assert!(!f.near_interface(g.node_index([2, 4, 4]), 1));
    }

    #[test]
    fn stacked_slabs_vary_along_stacking_axis_only() {
        let g = Grid::new([0.1; 3], [10; 3]).unwrap();
        let f = zoned_material(
            &g,
            vec![
                zone("a", [0.0; 3], [0.1, 0.1, 0.03], 1.0),
                zone("b", [0.0, 0.0, 0.03], [0.1, 0.1, 0.07], 2.0),
                zone("c", [0.0, 0.0, 0.07], [0.1; 3], 3.0),
            ],
        )
        .unwrap();
        for e in 0..g.element_count() {
            let [i, j, k] = g.element_ijk(e);
            assert_eq!(f.zone_of(e), f.zone_of(g.element_index([0, 0, k])), "element {i},{j},{k}");
        }
        let ids: Vec<usize> = (0..9).map(|k| f.zone_of(g.element_index([0, 0, k]))).collect();
        assert_eq!(ids, vec![0, 0, 0, 1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn overlap_and_gap_detected() {
        let g = Grid::new([0.1; 3], [5; 3]).unwrap();
        let err = zoned_material(
            &g,
            vec![zone("left", [0.0; 3], [0.06, 0.1, 0.1], 1.0), zone("right", [0.05, 0.0, 0.0], [0.1; 3], 2.0)],
        )
        .unwrap_err();
        assert_eq!(err, Error::ZoneOverlap { first: "left".into(), second: "right".into() });
        let err = zoned_material(
            &g,
            vec![zone("left", [0.0; 3], [0.04, 0.1, 0.1], 1.0), zone("right", [0.05, 0.0, 0.0], [0.1; 3], 2.0)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZoneGap(_)));
    }
}
