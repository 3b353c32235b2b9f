//! Level-set geometry: interface representation, banded grid classification,
//! normals, closest-point projection and interface node pairing.
//!
//! The grid is split into three kinds of territory: the two regular
//! subdomains (`Omega1`, `Omega2`) where the finite-difference scheme runs,
//! a singular band of cells hugging the interface where the network
//! represents the solution, and the Dirichlet frontiers (`GammaMinus`,
//! `GammaPlus`, `OuterBoundary`) between them.

use std::io::Write;
use std::sync::Arc;

/// A point in R^1 or R^2. One-dimensional problems use `[x, 0.0]`.
pub type Point = [f64; 2];

/// Nodes with `|phi|` below this are treated as lying exactly on the
/// interface (the alpha-2 pairing case).
pub const ON_INTERFACE_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("band covers a whole subdomain at this resolution (grid too coarse)")]
    BandCoversDomain,
    #[error("interface reaches a corner of the outer boundary")]
    InterfaceTouchesBoundary,
    #[error("level-set gradient vanishes at ({0}, {1})")]
    DegenerateNormal(f64, f64),
    #[error("projection onto the interface did not converge from ({0}, {1})")]
    ProjectionFailed(f64, f64),
}

/// Continuous level-set description of the interface: `phi < 0` inside
/// `Omega^-`, `phi > 0` in `Omega^+`, with an analytic gradient companion.
#[derive(Clone)]
pub struct LevelSet {
    dim: usize,
    phi: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    grad: Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>,
}

impl LevelSet {
    pub fn new(
        dim: usize,
        phi: impl Fn(Point) -> f64 + Send + Sync + 'static,
        grad: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        assert!(dim == 1 || dim == 2, "only 1D and 2D are supported");
        Self {
            dim,
            phi: Arc::new(phi),
            grad: Arc::new(grad),
        }
    }

    /// 1D interface at the abscissa `alpha`: `phi(x) = x - alpha`.
    pub fn from_abscissa(alpha: f64) -> Self {
        Self::new(1, move |p| p[0] - alpha, |_| [1.0, 0.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, p: Point) -> f64 {
        (self.phi)(p)
    }

    pub fn gradient(&self, p: Point) -> [f64; 2] {
        (self.grad)(p)
    }

    pub fn is_on_interface(&self, p: Point) -> bool {
        self.value(p).abs() < ON_INTERFACE_TOL
    }
}

/// Uniform tensor-product grid over `[a,b]` (1D) or `[a,b] x [c,d]` (2D).
/// `n` counts nodes per axis, so the spacing is `extent / (n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub bounds: [[f64; 2]; 2],
    pub n: [usize; 2],
}

impl GridSpec {
    pub fn new_1d(a: f64, b: f64, nodes: usize) -> Self {
        assert!(nodes >= 2 && b > a);
        Self {
            dim: 1,
            bounds: [[a, b], [0.0, 0.0]],
            n: [nodes, 1],
        }
    }

    pub fn new_2d(bounds: [[f64; 2]; 2], nodes: [usize; 2]) -> Self {
        assert!(nodes[0] >= 2 && nodes[1] >= 2);
        assert!(bounds[0][1] > bounds[0][0] && bounds[1][1] > bounds[1][0]);
        Self {
            dim: 2,
            bounds,
            n: nodes,
        }
    }

    /// Grid with `intervals` cells per axis (the `N` of a convergence table).
    pub fn from_intervals(dim: usize, bounds: [[f64; 2]; 2], intervals: usize) -> Self {
        match dim {
            1 => Self::new_1d(bounds[0][0], bounds[0][1], intervals + 1),
            2 => Self::new_2d(bounds, [intervals + 1, intervals + 1]),
            _ => panic!("only 1D and 2D are supported"),
        }
    }

    pub fn h(&self, axis: usize) -> f64 {
        let [lo, hi] = self.bounds[axis];
        (hi - lo) / (self.n[axis] - 1) as f64
    }

    /// Product of spacings over the active axes (discrete cell measure).
    pub fn cell_measure(&self) -> f64 {
        if self.dim == 1 {
            self.h(0)
        } else {
            self.h(0) * self.h(1)
        }
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        let x1 = self.bounds[0][0] + i as f64 * self.h(0);
        let x2 = if self.dim == 2 {
            self.bounds[1][0] + j as f64 * self.h(1)
        } else {
            0.0
        };
        [x1, x2]
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    pub fn num_nodes(&self) -> usize {
        self.n[0] * self.n[1]
    }

    /// Cells per axis: `n - 1` on active axes, 1 on the inactive 1D axis.
    pub fn cells(&self, axis: usize) -> usize {
        if axis == 1 && self.dim == 1 {
            1
        } else {
            self.n[axis] - 1
        }
    }

    pub fn cell_idx(&self, ci: usize, cj: usize) -> usize {
        cj * self.cells(0) + ci
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        if i == 0 || i == self.n[0] - 1 {
            return true;
        }
        self.dim == 2 && (j == 0 || j == self.n[1] - 1)
    }

    /// Nodes as `(i, j)` pairs in row-major order (x2 outer, x1 inner).
    pub fn node_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n[1]).flat_map(move |j| (0..self.n[0]).map(move |i| (i, j)))
    }
}

/// Per-node classification produced by [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Omega1,
    Omega2,
    BandMinus,
    BandPlus,
    GammaMinus,
    GammaPlus,
    OuterBoundary,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Omega1 => "omega1",
            Label::Omega2 => "omega2",
            Label::BandMinus => "band_minus",
            Label::BandPlus => "band_plus",
            Label::GammaMinus => "gamma_minus",
            Label::GammaPlus => "gamma_plus",
            Label::OuterBoundary => "outer_boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeIdx {
    pub i: usize,
    pub j: usize,
}

/// One oriented jump sample: `minus` strictly in `Omega^-`, `plus` strictly
/// in `Omega^+`, straddling the interface along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairLeg {
    pub minus: NodeIdx,
    pub plus: NodeIdx,
    pub axis: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCase {
    /// The interface crosses a grid edge between two adjacent nodes.
    Offset,
    /// The interface passes through a grid node; the jump terms use the
    /// flanking nodes two cells apart per axis.
    ThroughNode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodePair {
    pub case: PairCase,
    pub legs: Vec<PairLeg>,
    /// Interface foot point where jump data and the normal are evaluated.
    pub foot: Point,
}

/// Classified grid: node labels, interface node pairs, the band-cell mask
/// and the band width used to build them.
#[derive(Debug, Clone)]
pub struct RegionMap {
    pub grid: GridSpec,
    pub labels: Vec<Label>,
    pub node_pairs: Vec<NodePair>,
    pub band_width_cells: usize,
    /// Mask over cells (low-corner indexed, `cell_idx` addressing) marking
    /// the singular band.
    pub band: Vec<bool>,
}

impl RegionMap {
    pub fn label(&self, i: usize, j: usize) -> Label {
        self.labels[self.grid.idx(i, j)]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Writes the node classification as CSV with columns `i,j,label`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,label")?;
        for (i, j) in self.grid.node_indices() {
            writeln!(out, "{},{},{}", i, j, self.label(i, j).as_str())?;
        }
        Ok(())
    }
}

/// Splits the grid into regular subdomains, the singular band around the
/// interface, and the Dirichlet frontiers.
///
/// The band consists of every cell on which `phi` changes sign (plus all
/// cells incident to a node lying exactly on the interface), dilated by
/// `band_width_cells` layers of edge-adjacent cells.
pub fn classify(
    phi: &LevelSet,
    grid: &GridSpec,
    band_width_cells: usize,
) -> Result<RegionMap, GeometryError> {
    assert!(band_width_cells >= 1, "band width must be at least one cell");
    assert_eq!(phi.dim(), grid.dim, "level set and grid dimension mismatch");

    let (labels, band) = label_nodes(phi, grid, band_width_cells)?;

    let mut has = [false; 2];
    for &l in &labels {
        match l {
            Label::Omega1 => has[0] = true,
            Label::Omega2 => has[1] = true,
            _ => {}
        }
    }
    if !has[0] || !has[1] {
        return Err(GeometryError::BandCoversDomain);
    }

    let mut map = RegionMap {
        grid: *grid,
        labels,
        node_pairs: Vec::new(),
        band_width_cells,
        band,
    };
    map.node_pairs = pair_nodes(phi, grid, &map);
    Ok(map)
}

/// Node labeling stage of [`classify`], before the coverage check.
pub(crate) fn label_nodes(
    phi: &LevelSet,
    grid: &GridSpec,
    band_width_cells: usize,
) -> Result<(Vec<Label>, Vec<bool>), GeometryError> {
    let n1 = grid.n[0];
    let n2 = grid.n[1];
    let phis: Vec<f64> = grid
        .node_indices()
        .map(|(i, j)| phi.value(grid.node(i, j)))
        .collect();
    let on_gamma: Vec<bool> = phis.iter().map(|p| p.abs() < ON_INTERFACE_TOL).collect();

    let c1 = grid.cells(0);
    let c2 = grid.cells(1);
    let mut band = vec![false; c1 * c2];

    // Seed cells: strict corner sign change, or incidence to an on-interface
    // node. A cell merely grazed by the zero set at one corner is not seeded.
    for cj in 0..c2 {
        for ci in 0..c1 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut touches_gamma_node = false;
            for (di, dj) in cell_corners(grid.dim) {
                let idx = grid.idx(ci + di, cj + dj);
                lo = lo.min(phis[idx]);
                hi = hi.max(phis[idx]);
                touches_gamma_node |= on_gamma[idx];
            }
            if (lo < 0.0 && hi > 0.0) || touches_gamma_node {
                band[grid.cell_idx(ci, cj)] = true;
            }
        }
    }

    // The decomposition needs an unambiguous outer Dirichlet anchor; an
    // interface running through a domain corner removes it.
    for (i, j) in corner_nodes(grid) {
        if on_gamma[grid.idx(i, j)] {
            return Err(GeometryError::InterfaceTouchesBoundary);
        }
        for (ci, cj) in incident_cells(grid, i, j) {
            if band[grid.cell_idx(ci, cj)] && cell_strictly_crossed(grid, &phis, ci, cj) {
                return Err(GeometryError::InterfaceTouchesBoundary);
            }
        }
    }

    // Dilate by edge-adjacent layers.
    for _ in 0..band_width_cells {
        let snapshot = band.clone();
        for cj in 0..c2 {
            for ci in 0..c1 {
                if snapshot[grid.cell_idx(ci, cj)] {
                    continue;
                }
                let mut near = false;
                if ci > 0 {
                    near |= snapshot[grid.cell_idx(ci - 1, cj)];
                }
                if ci + 1 < c1 {
                    near |= snapshot[grid.cell_idx(ci + 1, cj)];
                }
                if cj > 0 {
                    near |= snapshot[grid.cell_idx(ci, cj - 1)];
                }
                if cj + 1 < c2 {
                    near |= snapshot[grid.cell_idx(ci, cj + 1)];
                }
                if near {
                    band[grid.cell_idx(ci, cj)] = true;
                }
            }
        }
    }

    let mut labels = vec![Label::OuterBoundary; n1 * n2];
    for (i, j) in grid.node_indices() {
        let idx = grid.idx(i, j);
        if grid.is_boundary(i, j) {
            labels[idx] = Label::OuterBoundary;
            continue;
        }
        let mut in_band = false;
        let mut outside_band = false;
        for (ci, cj) in incident_cells(grid, i, j) {
            if band[grid.cell_idx(ci, cj)] {
                in_band = true;
            } else {
                outside_band = true;
            }
        }
        let minus = phis[idx] < 0.0;
        labels[idx] = match (in_band, outside_band) {
            (true, false) => {
                if minus {
                    Label::BandMinus
                } else {
                    Label::BandPlus
                }
            }
            (true, true) => {
                if minus {
                    Label::GammaMinus
                } else {
                    Label::GammaPlus
                }
            }
            (false, _) => {
                if minus {
                    Label::Omega1
                } else {
                    Label::Omega2
                }
            }
        };
    }

    Ok((labels, band))
}

fn cell_strictly_crossed(grid: &GridSpec, phis: &[f64], ci: usize, cj: usize) -> bool {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (di, dj) in cell_corners(grid.dim) {
        let v = phis[grid.idx(ci + di, cj + dj)];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    lo < 0.0 && hi > 0.0
}

fn cell_corners(dim: usize) -> &'static [(usize, usize)] {
    if dim == 1 {
        &[(0, 0), (1, 0)]
    } else {
        &[(0, 0), (1, 0), (0, 1), (1, 1)]
    }
}

fn corner_nodes(grid: &GridSpec) -> Vec<(usize, usize)> {
    if grid.dim == 1 {
        vec![(0, 0), (grid.n[0] - 1, 0)]
    } else {
        vec![
            (0, 0),
            (grid.n[0] - 1, 0),
            (0, grid.n[1] - 1),
            (grid.n[0] - 1, grid.n[1] - 1),
        ]
    }
}

fn incident_cells(grid: &GridSpec, i: usize, j: usize) -> Vec<(usize, usize)> {
    let mut cells = Vec::with_capacity(4);
    let ci_lo = i.saturating_sub(1);
    let ci_hi = (i + 1).min(grid.cells(0));
    let (cj_lo, cj_hi) = if grid.dim == 1 {
        (0, 1)
    } else {
        (j.saturating_sub(1), (j + 1).min(grid.cells(1)))
    };
    for cj in cj_lo..cj_hi {
        for ci in ci_lo..ci_hi {
            cells.push((ci, cj));
        }
    }
    cells
}

/// Unit normal `grad(phi) / |grad(phi)|`, pointing from `Omega^-` into
/// `Omega^+`.
pub fn normal_at(phi: &LevelSet, x: Point) -> Result<[f64; 2], GeometryError> {
    let g = phi.gradient(x);
    let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
    if norm <= 1e-8 {
        return Err(GeometryError::DegenerateNormal(x[0], x[1]));
    }
    Ok([g[0] / norm, g[1] / norm])
}

/// Closest interface point from `x`, by damped Newton along `grad(phi)`.
pub fn project_to_interface(phi: &LevelSet, x: Point) -> Result<Point, GeometryError> {
    let mut p = x;
    let mut val = phi.value(p);
    for _ in 0..100 {
        if val.abs() < 1e-13 {
            return Ok(p);
        }
        let g = phi.gradient(p);
        let g2 = g[0] * g[0] + g[1] * g[1];
        if g2 <= 1e-16 {
            return Err(GeometryError::ProjectionFailed(x[0], x[1]));
        }
        let step = [-val * g[0] / g2, -val * g[1] / g2];
        let mut t = 1.0;
        let mut advanced = false;
        for _ in 0..40 {
            let cand = [p[0] + t * step[0], p[1] + t * step[1]];
            let cval = phi.value(cand);
            if cval.abs() < val.abs() {
                p = cand;
                val = cval;
                advanced = true;
                break;
            }
            t *= 0.5;
        }
        if !advanced {
            return Err(GeometryError::ProjectionFailed(x[0], x[1]));
        }
    }
    if val.abs() < 1e-10 {
        Ok(p)
    } else {
        Err(GeometryError::ProjectionFailed(x[0], x[1]))
    }
}

/// Root of `phi` along the segment `[a, b]`, assuming a strict sign change.
fn edge_root(phi: &LevelSet, a: Point, b: Point) -> Point {
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut flo = phi.value(a);
    let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let fmid = phi.value(at(mid));
        if fmid == 0.0 {
            return at(mid);
        }
        if (fmid < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Emits the interface node pairs: straddling nodes for every grid edge on
/// which `phi` changes sign strictly (alpha-1), and the four-node flanking
/// pattern around every grid node lying on the interface (alpha-2). Pairs
/// with a member on the outer boundary are dropped; the jump information
/// there is carried by the neighbouring interior pairs.
pub fn pair_nodes(phi: &LevelSet, grid: &GridSpec, map: &RegionMap) -> Vec<NodePair> {
    let phis: Vec<f64> = grid
        .node_indices()
        .map(|(i, j)| phi.value(grid.node(i, j)))
        .collect();
    let on_gamma = |i: usize, j: usize| phis[grid.idx(i, j)].abs() < ON_INTERFACE_TOL;
    let sign_ok = |i: usize, j: usize| !on_gamma(i, j) && !grid.is_boundary(i, j);

    let mut pairs = Vec::new();

    // alpha-2: nodes on the interface, flanked two cells apart per axis.
    for (i, j) in grid.node_indices() {
        if !on_gamma(i, j) || grid.is_boundary(i, j) {
            continue;
        }
        let mut legs = Vec::new();
        let axes: &[usize] = if grid.dim == 1 { &[0] } else { &[0, 1] };
        for &axis in axes {
            let (a, b) = if axis == 0 {
                (NodeIdx { i: i - 1, j }, NodeIdx { i: i + 1, j })
            } else {
                (NodeIdx { i, j: j - 1 }, NodeIdx { i, j: j + 1 })
            };
            if !sign_ok(a.i, a.j) || !sign_ok(b.i, b.j) {
                continue;
            }
            let pa = phis[grid.idx(a.i, a.j)];
            let pb = phis[grid.idx(b.i, b.j)];
            if pa < 0.0 && pb > 0.0 {
                legs.push(PairLeg {
                    minus: a,
                    plus: b,
                    axis,
                });
            } else if pb < 0.0 && pa > 0.0 {
                legs.push(PairLeg {
                    minus: b,
                    plus: a,
                    axis,
                });
            }
        }
        if !legs.is_empty() {
            pairs.push(NodePair {
                case: PairCase::ThroughNode,
                legs,
                foot: grid.node(i, j),
            });
        }
    }

    // alpha-1: edges with a strict sign change.
    let axes: &[usize] = if grid.dim == 1 { &[0] } else { &[0, 1] };
    for &axis in axes {
        for (i, j) in grid.node_indices() {
            let (i2, j2) = if axis == 0 { (i + 1, j) } else { (i, j + 1) };
            if i2 >= grid.n[0] || j2 >= grid.n[1] {
                continue;
            }
            if !sign_ok(i, j) || !sign_ok(i2, j2) {
                continue;
            }
            let pa = phis[grid.idx(i, j)];
            let pb = phis[grid.idx(i2, j2)];
            if pa * pb >= 0.0 {
                continue;
            }
            let (minus, plus) = if pa < 0.0 {
                (NodeIdx { i, j }, NodeIdx { i: i2, j: j2 })
            } else {
                (NodeIdx { i: i2, j: j2 }, NodeIdx { i, j })
            };
            let foot = edge_root(phi, grid.node(i, j), grid.node(i2, j2));
            pairs.push(NodePair {
                case: PairCase::Offset,
                legs: vec![PairLeg { minus, plus, axis }],
                foot,
            });
        }
    }

    debug_assert!(pairs.iter().all(|p| p.legs.iter().all(|l| {
        map.label(l.minus.i, l.minus.j) == Label::BandMinus
            && map.label(l.plus.i, l.plus.j) == Label::BandPlus
    })));

    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(r2: f64) -> LevelSet {
        LevelSet::new(
            2,
            move |p| p[0] * p[0] + p[1] * p[1] - r2,
            |p| [2.0 * p[0], 2.0 * p[1]],
        )
    }

    /// Flower-shaped interface: circle of radius 0.5 + 0.2 sin(5 theta)
    /// around a slightly offset center.
    fn flower() -> LevelSet {
        let c = 0.02 * 5.0_f64.sqrt();
        let rho = move |p: Point| {
            let (dx, dy) = (p[0] - c, p[1] - c);
            let theta = dy.atan2(dx);
            (0.5 + 0.2 * (5.0 * theta).sin(), dx, dy, theta)
        };
        LevelSet::new(
            2,
            move |p| {
                let (r, dx, dy, _) = rho(p);
                dx * dx + dy * dy - r * r
            },
            move |p| {
                let (r, dx, dy, theta) = rho(p);
                let d2 = dx * dx + dy * dy;
                let rp = (5.0 * theta).cos(); // d rho / d theta
                [
                    2.0 * dx + 2.0 * r * rp * dy / d2,
                    2.0 * dy - 2.0 * r * rp * dx / d2,
                ]
            },
        )
    }

    #[test]
    fn classify_1d_interface_on_node() {
        let phi = LevelSet::from_abscissa(1.0);
        let grid = GridSpec::new_1d(0.0, 2.0, 11);
        let map = classify(&phi, &grid, 1).unwrap();
        let expected = [
            Label::OuterBoundary,
            Label::Omega1,
            Label::Omega1,
            Label::GammaMinus,
            Label::BandMinus,
            Label::BandPlus, // node exactly on the interface
            Label::BandPlus,
            Label::GammaPlus,
            Label::Omega2,
            Label::Omega2,
            Label::OuterBoundary,
        ];
        for (i, want) in expected.iter().enumerate() {
            assert_eq!(map.label(i, 0), *want, "node {}", i);
        }
    }

    #[test]
    fn coarse_circle_cells_and_labels() {
        // 5x5 grid on [-1,1]^2, circle of radius 0.5 through four nodes.
        let phi = circle(0.25);
        let grid = GridSpec::new_2d([[-1.0, 1.0], [-1.0, 1.0]], [5, 5]);
        let phis: Vec<f64> = grid
            .node_indices()
            .map(|(i, j)| phi.value(grid.node(i, j)))
            .collect();

        // Brute-force cell/circle intersection: the circle crosses a cell
        // interior iff the radius range over the closed cell straddles 0.5
        // strictly. Only the four center-adjacent cells qualify.
        let mut crossed_oracle = Vec::new();
        for cj in 0..4 {
            for ci in 0..4 {
                let [x0, _] = grid.node(ci, cj);
                let y0 = grid.node(ci, cj)[1];
                let (x1, y1) = (x0 + 0.5, y0 + 0.5);
                let cx = if 0.0 < x0 {
                    x0
                } else if 0.0 > x1 {
                    x1
                } else {
                    0.0
                };
                let cy = if 0.0 < y0 {
                    y0
                } else if 0.0 > y1 {
                    y1
                } else {
                    0.0
                };
                let rmin = (cx * cx + cy * cy).sqrt();
                let rmax = [x0, x1]
                    .iter()
                    .flat_map(|&x| [y0, y1].map(|y| (x * x + y * y).sqrt()))
                    .fold(0.0_f64, f64::max);
                if rmin < 0.5 && 0.5 < rmax {
                    crossed_oracle.push((ci, cj));
                }
                assert_eq!(
                    cell_strictly_crossed(&grid, &phis, ci, cj),
                    rmin < 0.5 && 0.5 < rmax,
                    "cell ({ci},{cj})"
                );
            }
        }
        assert_eq!(crossed_oracle, vec![(1, 1), (2, 1), (1, 2), (2, 2)]);

        // At this resolution the band swallows both subdomains, but the
        // labeling stage still places the center and corner nodes.
        let (labels, _) = label_nodes(&phi, &grid, 1).unwrap();
        assert_eq!(labels[grid.idx(2, 2)], Label::BandMinus);
        for (i, j) in [(0, 0), (4, 0), (0, 4), (4, 4)] {
            assert_eq!(labels[grid.idx(i, j)], Label::OuterBoundary);
        }
        assert!(matches!(
            classify(&phi, &grid, 1),
            Err(GeometryError::BandCoversDomain)
        ));
    }

    #[test]
    fn coarse_1d_grid_is_rejected() {
        let phi = LevelSet::from_abscissa(1.0);
        let grid = GridSpec::new_1d(0.0, 2.0, 3);
        assert!(matches!(
            classify(&phi, &grid, 1),
            Err(GeometryError::BandCoversDomain)
        ));
    }

    #[test]
    fn normals() {
        let phi = circle(0.25);
        let n = normal_at(&phi, [0.5, 0.0]).unwrap();
        assert_eq!(n, [1.0, 0.0]);
        assert!(matches!(
            normal_at(&phi, [0.0, 0.0]),
            Err(GeometryError::DegenerateNormal(_, _))
        ));

        let phi1 = LevelSet::from_abscissa(1.0);
        assert_eq!(normal_at(&phi1, [1.0, 0.0]).unwrap(), [1.0, 0.0]);

        // Unit norm to 1e-12 at scattered flower points.
        let fl = flower();
        for k in 0..50 {
            let x = [-0.9 + 0.037 * k as f64, 0.8 - 0.031 * k as f64];
            if let Ok(n) = normal_at(&fl, x) {
                let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
                assert!((len - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection() {
        let phi = circle(0.25);
        let p = project_to_interface(&phi, [0.8, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-10 && p[1].abs() < 1e-12);

        let phi1 = LevelSet::from_abscissa(1.0);
        let p1 = project_to_interface(&phi1, [0.9, 0.0]).unwrap();
        assert!((p1[0] - 1.0).abs() < 1e-12);

        let fl = flower();
        let pf = project_to_interface(&fl, [0.6, 0.1]).unwrap();
        assert!(fl.value(pf).abs() < 1e-10);
    }

    #[test]
    fn pairs_1d_through_node() {
        let phi = LevelSet::from_abscissa(1.0);
        let grid = GridSpec::new_1d(0.0, 2.0, 11);
        let map = classify(&phi, &grid, 1).unwrap();
        assert_eq!(map.node_pairs.len(), 1);
        let pair = &map.node_pairs[0];
        assert_eq!(pair.case, PairCase::ThroughNode);
        assert_eq!(pair.legs.len(), 1);
        assert_eq!(pair.legs[0].minus, NodeIdx { i: 4, j: 0 });
        assert_eq!(pair.legs[0].plus, NodeIdx { i: 6, j: 0 });
        assert_eq!(pair.foot, [1.0, 0.0]);
    }

    #[test]
    fn pairs_match_edge_scan_on_generic_circle() {
        // Center shifted off the node lattice so no node lies on the
        // interface and every pair comes from a strict edge sign change.
        let phi = LevelSet::new(
            2,
            |p| (p[0] - 0.0137) * (p[0] - 0.0137) + p[1] * p[1] - 0.25,
            |p| [2.0 * (p[0] - 0.0137), 2.0 * p[1]],
        );
        let grid = GridSpec::new_2d([[-1.0, 1.0], [-1.0, 1.0]], [41, 41]);
        let map = classify(&phi, &grid, 1).unwrap();

        let mut edges = 0;
        for (i, j) in grid.node_indices() {
            for (i2, j2) in [(i + 1, j), (i, j + 1)] {
                if i2 >= 41 || j2 >= 41 {
                    continue;
                }
                let a = phi.value(grid.node(i, j));
                let b = phi.value(grid.node(i2, j2));
                if a * b < 0.0 {
                    edges += 1;
                }
            }
        }
        assert_eq!(map.node_pairs.len(), edges);
        for pair in &map.node_pairs {
            assert_eq!(pair.case, PairCase::Offset);
            let leg = &pair.legs[0];
            assert!(phi.value(grid.node(leg.minus.i, leg.minus.j)) < 0.0);
            assert!(phi.value(grid.node(leg.plus.i, leg.plus.j)) > 0.0);
            assert!(phi.value(pair.foot).abs() < 1e-10);
        }

        // Refinement never loses pairs for a fixed smooth interface.
        let coarse = classify(&phi, &GridSpec::new_2d([[-1.0, 1.0], [-1.0, 1.0]], [21, 21]), 1)
            .unwrap();
        assert!(map.node_pairs.len() >= coarse.node_pairs.len());
    }

    #[test]
    fn pairs_diagonal_line_through_nodes() {
        // Line through grid nodes but clear of the domain corners.
        let phi = LevelSet::new(2, |p| p[0] + p[1] - 0.25, |_| [1.0, 1.0]);
        let grid = GridSpec::new_2d([[-1.0, 1.0], [-1.0, 1.0]], [9, 9]);
        let map = classify(&phi, &grid, 1).unwrap();
        assert!(!map.node_pairs.is_empty());
        let mut full_patterns = 0;
        for pair in &map.node_pairs {
            assert_eq!(pair.case, PairCase::ThroughNode);
            if pair.legs.len() == 2 {
                full_patterns += 1;
            }
            for leg in &pair.legs {
                if leg.axis == 0 {
                    assert_eq!(leg.minus.j, leg.plus.j);
                    assert_eq!(leg.plus.i.abs_diff(leg.minus.i), 2);
                } else {
                    assert_eq!(leg.minus.i, leg.plus.i);
                    assert_eq!(leg.plus.j.abs_diff(leg.minus.j), 2);
                }
            }
        }
        // Away from the boundary both orthogonal legs are present.
        assert!(full_patterns >= 4);
    }

    #[test]
    fn classify_is_deterministic() {
        let phi = circle(0.25);
        let grid = GridSpec::new_2d([[-1.0, 1.0], [-1.0, 1.0]], [21, 21]);
        let a = classify(&phi, &grid, 1).unwrap();
        let b = classify(&phi, &grid, 1).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.node_pairs, b.node_pairs);
    }
}
