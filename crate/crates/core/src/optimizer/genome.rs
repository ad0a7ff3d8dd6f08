//! Fixed-capacity genome: `n_max` HAPS slots in normalized coordinates
//! plus a real-valued count gene whose rounding selects the active prefix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geodesy::{ConeGeometry, ConicalRegion, GeoBox, GeodeticPosition};

use super::GaParams;

pub type Gene = [f64; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub slots: Vec<Gene>,
    pub count_gene: f64,
}

impl Individual {
    pub fn active_count(&self, n_min: usize, n_max: usize) -> usize {
        let n = self.count_gene.round();
        if n.is_nan() {
            return n_min;
        }
        (n.max(n_min as f64).min(n_max as f64)) as usize
    }

    pub fn active_slots(&self, n_min: usize, n_max: usize) -> &[Gene] {
        let n = self.active_count(n_min, n_max).min(self.slots.len());
        &self.slots[..n]
    }

    /// Genes in a fixed order: slot genes row by row, then the count gene.
    pub fn gene_count(&self) -> usize {
        3 * self.slots.len() + 1
    }
}

/// Maps normalized genes to geodetic positions through the cone's
/// bounding box and back.
#[derive(Clone, Debug)]
pub struct GenomeSpace {
    geometry: ConeGeometry,
    bounds: GeoBox,
    pub n_min: usize,
    pub n_max: usize,
}

fn unit(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn sanitize(x: f64, lo: f64, hi: f64, fallback: f64) -> f64 {
    if x.is_nan() {
        fallback
    } else {
        x.clamp(lo, hi)
    }
}

impl GenomeSpace {
    pub fn new(region: ConicalRegion, n_min: usize, n_max: usize) -> Self {
        let geometry = region.geometry();
        let bounds = geometry.bounding_box();
        Self {
            geometry,
            bounds,
            n_min,
            n_max,
        }
    }

    pub fn from_params(region: ConicalRegion, params: &GaParams) -> Self {
        Self::new(region, params.n_min, params.n_max)
    }

    pub fn region(&self) -> &ConicalRegion {
        self.geometry.region()
    }

    pub fn geometry(&self) -> &ConeGeometry {
        &self.geometry
    }

    pub fn bounds(&self) -> &GeoBox {
        &self.bounds
    }

    pub fn count_bounds(&self) -> (f64, f64) {
        (self.n_min as f64, self.n_max as f64)
    }

    pub fn encode(&self, p: &GeodeticPosition) -> Gene {
        let b = &self.bounds;
        [
            unit(p.lat, b.lat_min, b.lat_max),
            unit(p.lon, b.lon_min, b.lon_max),
            unit(p.alt, b.alt_min, b.alt_max),
        ]
    }

    pub fn decode(&self, g: &Gene) -> GeodeticPosition {
        let b = &self.bounds;
        let lerp = |t: f64, lo: f64, hi: f64| lo + t.clamp(0.0, 1.0) * (hi - lo);
        GeodeticPosition {
            lat: lerp(g[0], b.lat_min, b.lat_max),
            lon: lerp(g[1], b.lon_min, b.lon_max),
            alt: lerp(g[2], b.alt_min, b.alt_max).clamp(b.alt_min, b.alt_max),
        }
    }

    pub fn active_positions(&self, ind: &Individual) -> Vec<GeodeticPosition> {
        ind.active_slots(self.n_min, self.n_max)
            .iter()
            .map(|g| self.decode(g))
            .collect()
    }

    pub fn random_individual<R: Rng + ?Sized>(&self, rng: &mut R) -> Individual {
        let (lo, hi) = self.count_bounds();
        let count_gene = lo + (hi - lo) * rng.random::<f64>();
        let slots = (0..self.n_max)
            .map(|_| self.encode(&self.geometry.sample(rng)))
            .collect();
        self.repair(&Individual { slots, count_gene })
    }

    fn zenith_gene(&self) -> Gene {
        let r = self.region();
        self.encode(&GeodeticPosition {
            alt: 0.5 * (r.min_alt + r.max_alt),
            ..r.center
        })
    }

    fn repair_slot(&self, g: &Gene) -> Gene {
        let g = g.map(|x| sanitize(x, 0.0, 1.0, 0.5));
        let region = self.region();
        if region.contains(&self.decode(&g)) {
            return g;
        }
        let mut p = self.geometry.project(&self.decode(&g));
        for _ in 0..4 {
            let g = self.encode(&p);
            let q = self.decode(&g);
            if region.contains(&q) {
                return g;
            }
            p = self.geometry.pull_inside(&q);
        }
        self.zenith_gene()
    }

    /// Clamps the count gene and moves every slot onto the feasible region.
    /// Slots that already decode inside the region are left bit-identical.
    pub fn repair(&self, ind: &Individual) -> Individual {
        let (lo, hi) = self.count_bounds();
        let mut slots: Vec<Gene> = ind.slots.iter().take(self.n_max).map(|g| self.repair_slot(g)).collect();
        while slots.len() < self.n_max {
            slots.push(self.zenith_gene());
        }
        Individual {
            slots,
            count_gene: sanitize(ind.count_gene, lo, hi, 0.5 * (lo + hi)),
        }
    }

    pub fn is_valid(&self, ind: &Individual) -> bool {
        let (lo, hi) = self.count_bounds();
        ind.slots.len() == self.n_max
            && ind.count_gene >= lo
            && ind.count_gene <= hi
            && ind.slots.iter().flatten().all(|x| (0.0..=1.0).contains(x))
            && ind.slots.iter().all(|g| self.region().contains(&self.decode(g)))
    }
}

pub fn initialize_population<R: Rng + ?Sized>(params: &GaParams, space: &GenomeSpace, rng: &mut R) -> Vec<Individual> {
    (0..params.n_pop).map(|_| space.random_individual(rng)).collect()
}

pub fn repair(ind: &Individual, space: &GenomeSpace) -> Individual {
    space.repair(ind)
}
