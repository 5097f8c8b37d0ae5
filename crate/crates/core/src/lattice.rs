//! Lattice layouts and the classical Bose-Hubbard Hamiltonian
//!
//! `H = Σ_bonds −(hop/2)(a_i* a_j + c.c.) + Σ_ℓ (g_ℓ/2)|a_ℓ|⁴`.
//!
//! Sites are numbered left ring first, then the chain (if any), then the
//! right ring. Inside each ring the first site is the contact site.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Labelled group of sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    LeftRing,
    RightRing,
    Chain,
    /// Every site of the lattice.
    Whole,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::LeftRing => "left",
            Region::RightRing => "right",
            Region::Chain => "chain",
            Region::Whole => "whole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub hop: f64,
}

/// Topology of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    Ring { m: usize },
    /// Two `m`-site rings whose contact sites share one bond of hop `epsilon`.
    TwoRingsPoint { m: usize, epsilon: f64 },
    /// Two `m`-site rings bridged by a `chain_len`-site tight-binding chain,
    /// attached through bonds of hop `epsilon`.
    TwoRingsChain { m: usize, chain_len: usize, epsilon: f64 },
}

impl Layout {
    pub fn ring_size(&self) -> usize {
        match *self {
            Layout::Ring { m } | Layout::TwoRingsPoint { m, .. } | Layout::TwoRingsChain { m, .. } => m,
        }
    }

    pub fn n_sites(&self) -> usize {
        match *self {
            Layout::Ring { m } => m,
            Layout::TwoRingsPoint { m, .. } => 2 * m,
            Layout::TwoRingsChain { m, chain_len, .. } => 2 * m + chain_len,
        }
    }

    /// Builds the site graph; `couplings.hop` is the ring and chain hopping `J`.
    pub fn build(&self, couplings: &Couplings) -> Result<SiteGraph> {
        let hop = couplings.hop;
        if !(hop.is_finite() && hop > 0.0) {
            return Err(Error::Layout(format!("hopping J must be positive, got {hop}")));
        }
        let m = self.ring_size();
        if m < 3 {
            return Err(Error::Layout(format!("ring size must be at least 3, got {m}")));
        }
        if let Layout::TwoRingsPoint { epsilon, .. } | Layout::TwoRingsChain { epsilon, .. } = *self {
            if !(epsilon > 0.0 && epsilon <= hop) {
                return Err(Error::Layout(format!(
                    "junction hop must satisfy 0 < epsilon <= J = {hop}, got {epsilon}"
                )));
            }
        }

        let n = self.n_sites();
        let mut bonds = Vec::new();
        let ring = |offset: usize, bonds: &mut Vec<Bond>| {
            for l in 0..m {
                bonds.push(Bond { i: offset + l, j: offset + (l + 1) % m, hop });
            }
        };
        let mut regions = Vec::new();
        let mut g_site = vec![couplings.g_ring; n];
        match *self {
            Layout::Ring { .. } => {
                ring(0, &mut bonds);
                regions.push((Region::Whole, (0..m).collect()));
            }
            Layout::TwoRingsPoint { epsilon, .. } => {
                ring(0, &mut bonds);
                ring(m, &mut bonds);
                bonds.push(Bond { i: 0, j: m, hop: epsilon });
                regions.push((Region::LeftRing, (0..m).collect()));
                regions.push((Region::RightRing, (m..2 * m).collect()));
            }
            Layout::TwoRingsChain { chain_len, epsilon, .. } => {
                let right = m + chain_len;
                ring(0, &mut bonds);
                ring(right, &mut bonds);
                if chain_len == 0 {
                    bonds.push(Bond { i: 0, j: right, hop: epsilon });
                } else {
                    bonds.push(Bond { i: 0, j: m, hop: epsilon });
                    for c in m..right - 1 {
                        bonds.push(Bond { i: c, j: c + 1, hop });
                    }
                    bonds.push(Bond { i: right - 1, j: right, hop: epsilon });
                }
                for g in &mut g_site[m..right] {
                    *g = couplings.g_chain;
                }
                regions.push((Region::LeftRing, (0..m).collect()));
                regions.push((Region::Chain, (m..right).collect()));
                regions.push((Region::RightRing, (right..right + m).collect()));
            }
        }
        let graph = SiteGraph { layout: *self, hop, n_sites: n, bonds, g_site, regions };
        debug_assert!(graph.check().is_ok());
        Ok(graph)
    }
}

/// Hopping and per-region interaction constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    pub hop: f64,
    pub g_ring: f64,
    pub g_chain: f64,
}

impl Couplings {
    pub fn uniform(hop: f64, g: f64) -> Couplings {
        Couplings { hop, g_ring: g, g_chain: g }
    }
}

/// Lattice with per-bond hopping and per-site interaction; the single source
/// of truth for the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteGraph {
    layout: Layout,
    hop: f64,
    n_sites: usize,
    bonds: Vec<Bond>,
    g_site: Vec<f64>,
    regions: Vec<(Region, Vec<usize>)>,
}

impl SiteGraph {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Regular (non-junction) hopping `J`.
    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn g_site(&self) -> &[f64] {
        &self.g_site
    }

    /// Regions partitioning the sites (never includes `Whole`).
    pub fn regions(&self) -> impl Iterator<Item = (Region, &[usize])> {
        self.regions
            .iter()
            .filter(|(r, _)| *r != Region::Whole || self.regions.len() == 1)
            .map(|(r, s)| (*r, s.as_slice()))
    }

    /// Sites of `region`; `Whole` always resolves to every site.
    pub fn region_sites(&self, region: Region) -> Result<Vec<usize>> {
        if region == Region::Whole {
            return Ok((0..self.n_sites).collect());
        }
        self.regions
            .iter()
            .find(|(r, _)| *r == region)
            .map(|(_, s)| s.clone())
            .filter(|s| !s.is_empty())
            .ok_or(Error::EmptyRegion(region))
    }

    pub fn has_region(&self, region: Region) -> bool {
        self.region_sites(region).is_ok()
    }

    /// Whether `region` is a ring, with its sites in cyclic order.
    pub fn is_ring(&self, region: Region) -> bool {
        match (self.layout, region) {
            (Layout::Ring { .. }, Region::Whole) => true,
            (Layout::Ring { .. }, _) => false,
            (_, Region::LeftRing | Region::RightRing) => true,
            _ => false,
        }
    }

    /// Ring sites for a ring region, error otherwise.
    pub fn ring_sites(&self, region: Region) -> Result<Vec<usize>> {
        if !self.is_ring(region) {
            return Err(Error::NotARing(region));
        }
        self.region_sites(region)
    }

    /// Bond joining sites `i` and `j` in either orientation.
    pub fn find_bond(&self, i: usize, j: usize) -> Result<Bond> {
        self.bonds
            .iter()
            .find(|b| (b.i == i && b.j == j) || (b.i == j && b.j == i))
            .copied()
            .ok_or(Error::UnknownBond(i, j))
    }

    /// Ordered path of bonds from the left contact through the chain to the
    /// right contact (empty for single rings).
    pub fn junction_path(&self) -> Vec<Bond> {
        match self.layout {
            Layout::Ring { .. } => Vec::new(),
            Layout::TwoRingsPoint { m, .. } => vec![self.bonds[2 * m]],
            Layout::TwoRingsChain { m, .. } => self.bonds[2 * m..].to_vec(),
        }
    }

    /// Copy of the graph without the junction bonds.
    pub fn without_junctions(&self) -> SiteGraph {
        let mut g = self.clone();
        let path = self.junction_path();
        if let (Some(first), Some(last)) = (path.first(), path.last()) {
            g.bonds.retain(|b| b != first && b != last);
        }
        g
    }

    /// Verifies the structural invariants of the graph.
    pub fn check(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for b in &self.bonds {
            if b.i == b.j || b.i >= self.n_sites || b.j >= self.n_sites {
                return Err(Error::Layout(format!("bad bond {b:?}")));
            }
            if !seen.insert((b.i.min(b.j), b.i.max(b.j))) {
                return Err(Error::Layout(format!("duplicate bond {b:?}")));
            }
        }
        let mut covered = vec![0u8; self.n_sites];
        for (_, sites) in self.regions() {
            for &s in sites {
                covered[s] += 1;
            }
        }
        if covered.iter().any(|&c| c != 1) {
            return Err(Error::Layout("regions do not partition the sites".into()));
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_sites {
            return Err(Error::LengthMismatch { expected: self.n_sites, got: len });
        }
        Ok(())
    }
}

/// Real symmetric single-particle hopping matrix with `h[i,j] = −hop/2` per bond.
pub fn hopping_matrix(graph: &SiteGraph) -> DMatrix<f64> {
    let n = graph.n_sites();
    let mut h = DMatrix::zeros(n, n);
    for b in graph.bonds() {
        h[(b.i, b.j)] -= 0.5 * b.hop;
        h[(b.j, b.i)] -= 0.5 * b.hop;
    }
    h
}

/// One classical trajectory: a complex amplitude per site.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldState(pub Vec<Complex64>);

impl FieldState {
    pub fn zeros(n: usize) -> FieldState {
        FieldState(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.0
    }

    /// Total norm `Σ|a_ℓ|²` (particle number).
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn rotated(&self, phase: f64) -> FieldState {
        let r = Complex64::from_polar(1.0, phase);
        FieldState(self.0.iter().map(|a| a * r).collect())
    }

    pub fn max_abs_diff(&self, other: &FieldState) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

impl From<Vec<Complex64>> for FieldState {
    fn from(v: Vec<Complex64>) -> Self {
        FieldState(v)
    }
}

/// Total, kinetic and potential energy of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Energy {
    pub total: f64,
    pub kinetic: f64,
    pub potential: f64,
}

pub fn classical_energy(graph: &SiteGraph, state: &FieldState) -> Result<Energy> {
    graph.check_len(state.len())?;
    let a = state.amplitudes();
    let kinetic: f64 = graph
        .bonds()
        .iter()
        .map(|b| -b.hop * (a[b.i].conj() * a[b.j]).re)
        .sum();
    let potential: f64 = a
        .iter()
        .zip(graph.g_site())
        .map(|(z, g)| 0.5 * g * z.norm_sqr() * z.norm_sqr())
        .sum();
    Ok(Energy { total: kinetic + potential, kinetic, potential })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use std::f64::consts::PI;

    fn unit(g: f64) -> Couplings {
        Couplings::uniform(1.0, g)
    }

    #[test]
    fn ring_is_a_cycle() {
        let g = Layout::Ring { m: 20 }.build(&unit(0.0)).unwrap();
        assert_eq!(g.bonds().len(), 20);
        let mut degree = [0; 20];
        for b in g.bonds() {
            degree[b.i] += 1;
            degree[b.j] += 1;
        }
        assert!(degree.iter().all(|&d| d == 2));
        assert!(g.is_ring(Region::Whole));
        assert_eq!(g.region_sites(Region::Whole).unwrap().len(), 20);
        assert!(g.region_sites(Region::LeftRing).is_err());
    }

    #[test]
    fn point_contact() {
        let g = Layout::TwoRingsPoint { m: 20, epsilon: 0.25 }.build(&unit(0.4)).unwrap();
        assert_eq!(g.n_sites(), 40);
        assert_eq!(g.bonds().len(), 41);
        let weak: Vec<_> = g.bonds().iter().filter(|b| b.hop == 0.25).collect();
        assert_eq!(weak.len(), 1);
        assert_eq!((weak[0].i, weak[0].j), (0, 20));
        g.check().unwrap();
    }

    #[test]
    fn chain_bridge() {
        let c = Couplings { hop: 1.0, g_ring: 0.4, g_chain: 0.0 };
        let g = Layout::TwoRingsChain { m: 40, chain_len: 3, epsilon: 0.1 }.build(&c).unwrap();
        assert_eq!(g.n_sites(), 83);
        assert_eq!(g.bonds().iter().filter(|b| b.hop == 0.1).count(), 2);
        let chain = g.region_sites(Region::Chain).unwrap();
        assert_eq!(chain, vec![40, 41, 42]);
        assert!(chain.iter().all(|&s| g.g_site()[s] == 0.0));
        assert_eq!(g.g_site()[0], 0.4);
        assert_eq!(g.g_site()[82], 0.4);
        assert!(!g.is_ring(Region::Chain));
        let path = g.junction_path();
        assert_eq!(path.len(), 4);
        assert_eq!((path[0].i, path[0].j), (0, 40));
        assert_eq!((path[3].i, path[3].j), (42, 43));
        g.check().unwrap();
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Layout::Ring { m: 2 }.build(&unit(0.0)).is_err());
        assert!(Layout::TwoRingsPoint { m: 10, epsilon: 0.0 }.build(&unit(0.0)).is_err());
        assert!(Layout::TwoRingsPoint { m: 10, epsilon: 1.5 }.build(&unit(0.0)).is_err());
        let err = Layout::TwoRingsChain { m: 10, chain_len: 2, epsilon: -0.1 }
            .build(&unit(0.0))
            .unwrap_err();
        assert!(err.to_string().contains("epsilon"));
    }

    #[test]
    fn ring4_spectrum() {
        let g = Layout::Ring { m: 4 }.build(&unit(0.0)).unwrap();
        let h = hopping_matrix(&g);
        assert_eq!(h, h.transpose());
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (e, x) in ev.iter().zip([-1.0, 0.0, 0.0, 1.0]) {
            assert!((e - x).abs() < 1e-14);
        }
    }

    #[test]
    fn ring_spectrum_is_cosine_band() {
        for m in [3, 7, 20] {
            let g = Layout::Ring { m }.build(&Couplings::uniform(1.3, 0.0)).unwrap();
            let mut ev: Vec<f64> =
                SymmetricEigen::new(hopping_matrix(&g)).eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            let mut band: Vec<f64> =
                (0..m).map(|k| -1.3 * (2.0 * PI * k as f64 / m as f64).cos()).collect();
            band.sort_by(f64::total_cmp);
            for (a, b) in ev.iter().zip(&band) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn energy_examples() {
        let g = Layout::Ring { m: 12 }.build(&unit(0.4)).unwrap();
        let e = classical_energy(&g, &FieldState::zeros(12)).unwrap();
        assert_eq!(e, Energy::default());

        let uniform = FieldState(vec![Complex64::new(1.0, 0.0); 12]);
        let e = classical_energy(&g, &uniform).unwrap();
        assert!((e.kinetic + 12.0).abs() < 1e-13);
        assert!((e.potential - 0.2 * 12.0).abs() < 1e-13);

        for k in 0..12 {
            let kappa = 2.0 * PI * k as f64 / 12.0;
            let pw = FieldState((0..12).map(|l| Complex64::from_polar(1.0, kappa * l as f64)).collect());
            let e = classical_energy(&g, &pw).unwrap();
            assert!((e.kinetic / 12.0 + kappa.cos()).abs() < 1e-13);
            assert!((e.potential / 12.0 - 0.2).abs() < 1e-13);
        }
        assert!(matches!(
            classical_energy(&g, &FieldState::zeros(5)),
            Err(Error::LengthMismatch { expected: 12, got: 5 })
        ));
    }

    #[test]
    fn junction_removal_splits_energy() {
        let c = Couplings { hop: 1.0, g_ring: 0.4, g_chain: 0.0 };
        let g = Layout::TwoRingsChain { m: 6, chain_len: 3, epsilon: 0.2 }.build(&c).unwrap();
        let cut = g.without_junctions();
        assert_eq!(cut.bonds().len(), g.bonds().len() - 2);
        let state = FieldState(
            (0..15).map(|l| Complex64::new((0.7 * l as f64).cos(), (1.3 * l as f64).sin())).collect(),
        );
        let total = classical_energy(&cut, &state).unwrap().total;
        let parts: f64 = [Region::LeftRing, Region::Chain, Region::RightRing]
            .iter()
            .map(|&r| {
                let sites = cut.region_sites(r).unwrap();
                let mut masked = FieldState::zeros(15);
                for s in sites {
                    masked.0[s] = state.0[s];
                }
                classical_energy(&cut, &masked).unwrap().total
            })
            .sum();
        assert!((total - parts).abs() < 1e-12);
    }
}
