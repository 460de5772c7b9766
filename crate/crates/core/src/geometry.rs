//! Unit-disk meshes, electrode layouts and the boundary quadrature grid.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Maps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Conforming triangulation of the unit disk.
///
/// Boundary nodes lie on the unit circle and are stored counterclockwise,
/// starting at the node with the smallest angle.
#[derive(Clone, Debug)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_nodes: Vec<usize>,
    boundary_angles: Vec<f64>,
}

impl Mesh {
    /// Builds a mesh from raw nodes and counterclockwise triangles and
    /// extracts the boundary from the triangle topology.
    pub fn from_parts(nodes: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {t} references a missing node"
                )));
            }
            if signed_area(&nodes, tri) <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "triangle {t} has non-positive signed area"
                )));
            }
        }

        // Boundary edges belong to exactly one triangle; in a counterclockwise
        // triangle they are already oriented counterclockwise along the circle.
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut next: HashMap<usize, usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if edge_count[&(a.min(b), a.max(b))] == 1 {
                    next.insert(a, b);
                }
            }
        }
        if next.is_empty() {
            return Err(Error::InvalidArgument("mesh has no boundary".into()));
        }

        let angle_of = |i: usize| wrap_angle(nodes[i][1].atan2(nodes[i][0]));
        for &i in next.keys() {
            let r = nodes[i][0].hypot(nodes[i][1]);
            if (r - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "boundary node {i} at radius {r} is not on the unit circle"
                )));
            }
        }
        let start = *next
            .keys()
            .min_by(|&&a, &&b| angle_of(a).total_cmp(&angle_of(b)).then(a.cmp(&b)))
            .expect("non-empty boundary");
        let mut boundary_nodes = vec![start];
        let mut cur = next[&start];
        while cur != start {
            if boundary_nodes.len() > next.len() {
                return Err(Error::InvalidArgument("boundary is not a single closed curve".into()));
            }
            boundary_nodes.push(cur);
            cur = *next
                .get(&cur)
                .ok_or_else(|| Error::InvalidArgument("boundary is not a closed curve".into()))?;
        }
        if boundary_nodes.len() != next.len() {
            return Err(Error::InvalidArgument("boundary has more than one component".into()));
        }
        let boundary_angles: Vec<f64> = boundary_nodes.iter().map(|&i| angle_of(i)).collect();
        if boundary_angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "boundary angles are not strictly increasing".into(),
            ));
        }

        Ok(Self {
            nodes,
            triangles,
            boundary_nodes,
            boundary_angles,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn boundary_angles(&self) -> &[f64] {
        &self.boundary_angles
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.nodes, &self.triangles[t])
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Plain-text serialization: a node section `id x y` and an element
    /// section `id n1 n2 n3`. Coordinates round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# nodes {}", self.nodes.len());
        for (i, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "{i} {:?} {:?}", p[0], p[1]);
        }
        let _ = writeln!(s, "# elements {}", self.triangles.len());
        for (i, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n_nodes = parse_section_header(lines.next(), "nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated node section".into()))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("bad node line: {line}")));
            }
            let x = f[1].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
            let y = f[2].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
            nodes.push([x, y]);
        }
        let n_tris = parse_section_header(lines.next(), "elements")?;
        let mut triangles = Vec::with_capacity(n_tris);
        for _ in 0..n_tris {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated element section".into()))?;
            let f: Vec<usize> = line
                .split_whitespace()
                .map(|v| v.parse::<usize>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<_>>()?;
            if f.len() != 4 {
                return Err(Error::Parse(format!("bad element line: {line}")));
            }
            triangles.push([f[1], f[2], f[3]]);
        }
        Self::from_parts(nodes, triangles)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse_section_header(line: Option<&str>, name: &str) -> Result<usize> {
    let line = line.ok_or_else(|| Error::Parse(format!("missing {name} header")))?;
    let f: Vec<&str> = line.split_whitespace().collect();
    match f.as_slice() {
        ["#", n, count] if *n == name => count.parse().map_err(|_| Error::Parse(format!("bad {name} count"))),
        _ => Err(Error::Parse(format!("expected '# {name} <count>', got '{line}'"))),
    }
}

fn signed_area(nodes: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let (a, b, c) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Triangulation of the reference square `[-1, 1]²`. All refinement happens
/// here; the disk mesh is obtained by mapping the nodes at the end.
struct SquareMesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
}

impl SquareMesh {
    fn base() -> Self {
        Self {
            nodes: vec![[0.0, 0.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]],
            triangles: vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]],
        }
    }

    fn midpoint(&mut self, cache: &mut HashMap<(usize, usize), usize>, a: usize, b: usize) -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = cache.get(&key) {
            return m;
        }
        let (p, q) = (self.nodes[a], self.nodes[b]);
        self.nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
        let m = self.nodes.len() - 1;
        cache.insert(key, m);
        m
    }

    fn refine_uniform(&mut self) {
        let mut cache = HashMap::new();
        let old = std::mem::take(&mut self.triangles);
        let mut tris = Vec::with_capacity(4 * old.len());
        for [a, b, c] in old {
            let ab = self.midpoint(&mut cache, a, b);
            let bc = self.midpoint(&mut cache, b, c);
            let ca = self.midpoint(&mut cache, c, a);
            tris.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        self.triangles = tris;
    }

    fn on_boundary(&self, i: usize) -> bool {
        let p = self.nodes[i];
        p[0].abs().max(p[1].abs()) == 1.0
    }

    /// Red-green refinement of every triangle touching the boundary.
    fn refine_boundary_layer(&mut self) {
        let edge = |a: usize, b: usize| (a.min(b), a.max(b));
        let mut red: Vec<bool> = self
            .triangles
            .iter()
            .map(|t| t.iter().any(|&i| self.on_boundary(i)))
            .collect();
        let mut marked: std::collections::HashSet<(usize, usize)> = Default::default();
        loop {
            for (t, tri) in self.triangles.iter().enumerate() {
                if red[t] {
                    for k in 0..3 {
                        marked.insert(edge(tri[k], tri[(k + 1) % 3]));
                    }
                }
            }
            let mut changed = false;
            for (t, tri) in self.triangles.iter().enumerate() {
                if red[t] {
                    continue;
                }
                let n = (0..3)
                    .filter(|&k| marked.contains(&edge(tri[k], tri[(k + 1) % 3])))
                    .count();
                if n >= 2 {
                    red[t] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut cache = HashMap::new();
        let old = std::mem::take(&mut self.triangles);
        let mut tris = Vec::with_capacity(2 * old.len());
        for (t, [a, b, c]) in old.into_iter().enumerate() {
            if red[t] {
                let ab = self.midpoint(&mut cache, a, b);
                let bc = self.midpoint(&mut cache, b, c);
                let ca = self.midpoint(&mut cache, c, a);
                tris.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
                continue;
            }
            let v = [a, b, c];
            match (0..3).find(|&k| marked.contains(&edge(v[k], v[(k + 1) % 3]))) {
                Some(k) => {
                    let (p, q, r) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
                    let m = self.midpoint(&mut cache, p, q);
                    tris.push([p, m, r]);
                    tris.push([m, q, r]);
                }
                None => tris.push([a, b, c]),
            }
        }
        self.triangles = tris;
    }

    fn into_disk(self) -> Mesh {
        let nodes = self.nodes.iter().map(|&p| concentric_map(p)).collect();
        Mesh::from_parts(nodes, self.triangles).expect("square refinement yields a valid disk mesh")
    }
}

/// Area-preserving concentric map of the square `[-1,1]²` onto the unit disk.
/// Each of the four base triangles maps onto a quarter disk; square boundary
/// points land on the circle at equispaced angles.
fn concentric_map([a, b]: [f64; 2]) -> [f64; 2] {
    if a == 0.0 && b == 0.0 {
        return [0.0, 0.0];
    }
    let (r, phi) = if a.abs() >= b.abs() {
        (a, FRAC_PI_4 * (b / a))
    } else {
        (b, FRAC_PI_2 - FRAC_PI_4 * (a / b))
    };
    [r * phi.cos(), r * phi.sin()]
}

/// Uniformly refined disk mesh: `4 · 4^level` triangles and `4 · 2^level`
/// equispaced boundary nodes. Level 6 gives 16384 elements.
pub fn generate_disk_mesh(level: u32) -> Mesh {
    let mut sq = SquareMesh::base();
    for _ in 0..level {
        sq.refine_uniform();
    }
    sq.into_disk()
}

/// Disk mesh refined once more in the layer of triangles touching the
/// boundary, for electrode models that need resolution near the contacts.
pub fn generate_graded_disk_mesh(level: u32) -> Mesh {
    let mut sq = SquareMesh::base();
    for _ in 0..level {
        sq.refine_uniform();
    }
    sq.refine_boundary_layer();
    sq.into_disk()
}

/// Angular arc `[start, start + length)` on the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: f64,
    pub length: f64,
}

impl Arc {
    pub fn new(start: f64, length: f64) -> Self {
        Self {
            start: wrap_angle(start),
            length,
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        wrap_angle(theta - self.start) < self.length
    }

    pub fn end(&self) -> f64 {
        wrap_angle(self.start + self.length)
    }

    pub fn center(&self) -> f64 {
        wrap_angle(self.start + 0.5 * self.length)
    }
}

/// Active electrodes with their extended electrodes.
///
/// Extended electrodes partition the circle; their boundaries sit at the
/// midpoints of the gaps between neighbouring active electrodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeLayout {
    electrodes: Vec<Arc>,
    extended: Vec<Arc>,
    width: f64,
    c_e: f64,
}

impl ElectrodeLayout {
    /// Builds a layout from equally sized, mutually disjoint electrodes
    /// given in counterclockwise order.
    pub fn from_electrodes(electrodes: Vec<Arc>) -> Result<Self> {
        let m = electrodes.len();
        if m == 0 {
            return Err(Error::InvalidArgument("layout needs at least one electrode".into()));
        }
        let width = electrodes[0].length;
        if !(width > 0.0) {
            return Err(Error::InvalidArgument("electrode width must be positive".into()));
        }
        if electrodes.iter().any(|e| (e.length - width).abs() > 1e-12) {
            return Err(Error::InvalidArgument("electrodes must have equal width".into()));
        }
        if m as f64 * width >= TAU {
            return Err(Error::InvalidArgument("electrodes cover the whole circle".into()));
        }
        // Gap from the end of electrode i to the start of electrode i + 1.
        let gaps: Vec<f64> = (0..m)
            .map(|i| {
                let next = &electrodes[(i + 1) % m];
                if m == 1 {
                    TAU - width
                } else {
                    wrap_angle(next.start - electrodes[i].end())
                }
            })
            .collect();
        let total: f64 = gaps.iter().sum::<f64>() + m as f64 * width;
        if (total - TAU).abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "electrodes overlap or are not in counterclockwise order".into(),
            ));
        }
        let extended: Vec<Arc> = (0..m)
            .map(|i| {
                let prev_gap = gaps[(i + m - 1) % m];
                let start = electrodes[i].start - 0.5 * prev_gap;
                Arc::new(start, width + 0.5 * prev_gap + 0.5 * gaps[i])
            })
            .collect();
        let c_e = extended.iter().map(|e| width / e.length).fold(f64::INFINITY, f64::min);
        Ok(Self {
            electrodes,
            extended,
            width,
            c_e,
        })
    }

    pub fn electrodes(&self) -> &[Arc] {
        &self.electrodes
    }

    pub fn extended(&self) -> &[Arc] {
        &self.extended
    }

    pub fn num_electrodes(&self) -> usize {
        self.electrodes.len()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// `min_m |E| / |Ẽ_m|`.
    pub fn c_e(&self) -> f64 {
        self.c_e
    }

    /// Fraction of the circle covered by active electrodes.
    pub fn coverage(&self) -> f64 {
        self.electrodes.len() as f64 * self.width / TAU
    }
}

/// `count` equispaced electrodes of the given width, with electrode centers at
/// `gap_center + (m + 1/2)·2π/count`; the `removed` electrodes nearest to
/// `gap_center` are dropped and the rest keep their positions.
pub fn make_layout(count: usize, width: f64, gap_center: f64, removed: usize) -> Result<ElectrodeLayout> {
    if count == 0 || removed >= count {
        return Err(Error::InvalidArgument(format!(
            "cannot remove {removed} of {count} electrodes"
        )));
    }
    if !(width > 0.0) || count as f64 * width >= TAU {
        return Err(Error::InvalidArgument(format!(
            "{count} electrodes of width {width} overlap"
        )));
    }
    let pitch = TAU / count as f64;
    let centers: Vec<f64> = (0..count).map(|m| gap_center + (m as f64 + 0.5) * pitch).collect();
    let mut order: Vec<usize> = (0..count).collect();
    let dist = |c: f64| {
        let d = wrap_angle(c - gap_center);
        d.min(TAU - d)
    };
    order.sort_by(|&a, &b| dist(centers[a]).total_cmp(&dist(centers[b])).then(a.cmp(&b)));
    let mut keep = vec![true; count];
    for &m in order.iter().take(removed) {
        keep[m] = false;
    }
    let electrodes = (0..count)
        .filter(|&m| keep[m])
        .map(|m| Arc::new(centers[m] - 0.5 * width, width))
        .collect();
    ElectrodeLayout::from_electrodes(electrodes)
}

/// Equispaced boundary quadrature at the cell midpoints
/// `θ_k = (k + 1/2)·2π/K` with uniform weights `2π/K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    k: usize,
}

impl QuadratureGrid {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || !k.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "quadrature size must be positive and even, got {k}"
            )));
        }
        Ok(Self { k })
    }

    /// Grid for a basis of size `n`: requires `K ≥ 8·n`.
    pub fn for_basis(k: usize, n: usize) -> Result<Self> {
        if k < 8 * n {
            return Err(Error::InvalidArgument(format!(
                "quadrature size {k} is below 8·N = {}",
                8 * n
            )));
        }
        Self::new(k)
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn weight(&self) -> f64 {
        TAU / self.k as f64
    }

    pub fn angle(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.weight()
    }

    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.k).map(|i| self.angle(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_and_boundary_counts() {
        for level in 0..5 {
            let m = generate_disk_mesh(level);
            assert_eq!(m.num_triangles(), 4 * 4usize.pow(level));
            assert_eq!(m.boundary_nodes().len(), 4 * 2usize.pow(level));
        }
        assert_eq!(generate_disk_mesh(6).num_triangles(), 16384);
    }

    #[test]
    fn coarse_mesh_inside_disk() {
        let m = generate_disk_mesh(0);
        for p in m.nodes() {
            assert!(p[0].hypot(p[1]) <= 1.0 + 1e-12);
        }
        for t in 0..m.num_triangles() {
            assert!(m.triangle_area(t) > 0.0);
        }
    }

    #[test]
    fn refined_boundary_is_on_circle_and_equispaced() {
        let m = generate_disk_mesh(4);
        let nb = m.boundary_nodes().len();
        for (j, &i) in m.boundary_nodes().iter().enumerate() {
            let p = m.nodes()[i];
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
            let expected = j as f64 * TAU / nb as f64;
            assert!((m.boundary_angles()[j] - expected).abs() < 1e-12);
        }
        let area: f64 = (0..m.num_triangles()).map(|t| m.triangle_area(t)).sum();
        assert!((area - std::f64::consts::PI).abs() < 0.01);
    }

    #[test]
    fn graded_mesh_is_conforming() {
        let m = generate_graded_disk_mesh(3);
        assert_eq!(m.boundary_nodes().len(), 2 * 4 * 8);
        assert!(m.num_triangles() > generate_disk_mesh(3).num_triangles());
        let area: f64 = (0..m.num_triangles()).map(|t| m.triangle_area(t)).sum();
        assert!((area - std::f64::consts::PI).abs() < 0.05);
    }

    #[test]
    fn mesh_text_round_trip() {
        let m = generate_disk_mesh(2);
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.nodes(), m.nodes());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.boundary_nodes(), m.boundary_nodes());
    }

    #[test]
    fn rejects_inverted_triangle() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Mesh::from_parts(nodes, vec![[0, 2, 1]]).is_err());
    }

    #[test]
    fn full_layout_constants() {
        let l = make_layout(16, TAU / 32.0, 0.0, 0).unwrap();
        assert_eq!(l.num_electrodes(), 16);
        assert!((l.width() - 0.1963).abs() < 1e-4);
        assert!((l.c_e() - 0.5).abs() < 1e-12);
        for e in l.extended() {
            assert!((l.width() / e.length - 0.5).abs() < 1e-12);
        }
        assert!((l.coverage() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn partial_layouts() {
        let l = make_layout(16, TAU / 32.0, 0.0, 4).unwrap();
        assert_eq!(l.num_electrodes(), 12);
        assert!((l.coverage() * 2.0 - 0.75).abs() < 1e-12);
        // the gap is centred at 0: no electrode within ±π/4 of it
        for e in l.electrodes() {
            let d = wrap_angle(e.center());
            assert!(d.min(TAU - d) > FRAC_PI_4);
        }
        let l = make_layout(16, TAU / 32.0, 0.0, 6).unwrap();
        assert_eq!(l.num_electrodes(), 10);
        assert!((l.num_electrodes() as f64 / 16.0 - 0.625).abs() < 1e-12);
    }

    #[test]
    fn extended_electrodes_partition_circle() {
        for removed in [0, 1, 2, 5, 8, 15] {
            let l = make_layout(16, 0.15, 0.7, removed).unwrap();
            let total: f64 = l.extended().iter().map(|e| e.length).sum();
            assert!((total - TAU).abs() < 1e-12);
            for (e, x) in l.electrodes().iter().zip(l.extended()) {
                assert!(x.contains(e.start));
                assert!(x.contains(e.start + e.length - 1e-9));
            }
            assert!(l.coverage() >= l.c_e() - 1e-12);
        }
    }

    #[test]
    fn rejects_overlapping_layout() {
        assert!(make_layout(16, 0.5, 0.0, 0).is_err());
        assert!(make_layout(16, 0.1, 0.0, 16).is_err());
        let e = vec![Arc::new(0.0, 0.3), Arc::new(0.2, 0.3)];
        assert!(ElectrodeLayout::from_electrodes(e).is_err());
    }

    #[test]
    fn quadrature_weights_sum_to_circumference() {
        let g = QuadratureGrid::for_basis(512, 16).unwrap();
        assert!((g.weight() * g.len() as f64 - TAU).abs() < 1e-12);
        assert!(QuadratureGrid::for_basis(64, 16).is_err());
        assert!(QuadratureGrid::new(7).is_err());
    }
}
