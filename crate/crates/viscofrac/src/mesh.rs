//! Meshes: storage, the built-in generators for the benchmark geometries,
//! and a plain-text interchange format.
//!
//! A mesh is nodes plus homogeneous connectivity (one element kind per mesh),
//! a cross-section measure (bar area in 1D, sheet thickness in 2D) that
//! multiplies all volume and surface integrals, named node sets for Dirichlet
//! conditions and point loads, and named edge sets for tractions.

use crate::tensor::Dim;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh is inconsistent: {0}")]
    Inconsistent(String),
}

/// Element kinds the solver supports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    /// Two-node bar (1D).
    Bar2,
    /// Three-node quadratic bar (1D), connectivity (left, right, mid).
    Bar3,
    /// Three-node linear triangle.
    Tri3,
    /// Four-node bilinear quadrilateral.
    Quad4,
    /// Eight-node serendipity quadrilateral.
    Quad8,
}

impl ElementKind {
    pub fn nodes_per_element(self) -> usize {
        match self {
            ElementKind::Bar2 => 2,
            ElementKind::Bar3 => 3,
            ElementKind::Tri3 => 3,
            ElementKind::Quad4 => 4,
            ElementKind::Quad8 => 8,
        }
    }

    pub fn dim(self) -> Dim {
        match self {
            ElementKind::Bar2 | ElementKind::Bar3 => Dim::One,
            _ => Dim::Two,
        }
    }

    /// Cell type id of the legacy VTK format.
    pub fn vtk_cell_type(self) -> u8 {
        match self {
            ElementKind::Bar2 => 3,
            ElementKind::Bar3 => 21,
            ElementKind::Tri3 => 5,
            ElementKind::Quad4 => 9,
            ElementKind::Quad8 => 23,
        }
    }

    /// Nodes per boundary edge (2D kinds only).
    pub fn nodes_per_edge(self) -> usize {
        match self {
            ElementKind::Bar2 | ElementKind::Bar3 => 1,
            ElementKind::Tri3 | ElementKind::Quad4 => 2,
            ElementKind::Quad8 => 3,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "bar2" => Some(ElementKind::Bar2),
            "bar3" => Some(ElementKind::Bar3),
            "tri3" => Some(ElementKind::Tri3),
            "quad4" => Some(ElementKind::Quad4),
            "quad8" => Some(ElementKind::Quad8),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ElementKind::Bar2 => "bar2",
            ElementKind::Bar3 => "bar3",
            ElementKind::Tri3 => "tri3",
            ElementKind::Quad4 => "quad4",
            ElementKind::Quad8 => "quad8",
        }
    }
}

/// A finite-element mesh with one element kind throughout.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub kind: ElementKind,
    /// Cross-section measure: bar area [m^2] in 1D, thickness [m] in 2D.
    pub section: f64,
    /// Node coordinates; 1D meshes use the first component.
    pub coords: Vec<[f64; 2]>,
    /// Element connectivity, `nodes_per_element` ids each.
    pub elements: Vec<Vec<usize>>,
    /// Named node groups (Dirichlet supports, point loads, probes).
    pub node_sets: BTreeMap<String, Vec<usize>>,
    /// Named edge groups for tractions; each edge lists its nodes
    /// (corner, corner[, mid]) in boundary order.
    pub edge_sets: BTreeMap<String, Vec<Vec<usize>>>,
}

impl Mesh {
    pub fn dim(&self) -> Dim {
        self.kind.dim()
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn node_set(&self, name: &str) -> Result<&[usize], MeshError> {
        self.node_sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| MeshError::Inconsistent(format!("no node set named '{name}'")))
    }

    pub fn edge_set(&self, name: &str) -> Result<&[Vec<usize>], MeshError> {
        self.edge_sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| MeshError::Inconsistent(format!("no edge set named '{name}'")))
    }

    /// Structural sanity: connectivity arities and id ranges.
    pub fn validate(&self) -> Result<(), MeshError> {
        let npe = self.kind.nodes_per_element();
        for (i, el) in self.elements.iter().enumerate() {
            if el.len() != npe {
                return Err(MeshError::Inconsistent(format!(
                    "element {i} has {} nodes, kind {} needs {npe}",
                    el.len(),
                    self.kind.name()
                )));
            }
            if let Some(&bad) = el.iter().find(|&&n| n >= self.n_nodes()) {
                return Err(MeshError::Inconsistent(format!(
                    "element {i} references node {bad} of {}",
                    self.n_nodes()
                )));
            }
        }
        for (name, set) in &self.node_sets {
            if let Some(&bad) = set.iter().find(|&&n| n >= self.n_nodes()) {
                return Err(MeshError::Inconsistent(format!(
                    "node set '{name}' references node {bad} of {}",
                    self.n_nodes()
                )));
            }
        }
        let npedge = self.kind.nodes_per_edge();
        for (name, set) in &self.edge_sets {
            for edge in set {
                if edge.len() != npedge {
                    return Err(MeshError::Inconsistent(format!(
                        "edge set '{name}' has an edge with {} nodes, kind {} needs {npedge}",
                        edge.len(),
                        self.kind.name()
                    )));
                }
                if let Some(&bad) = edge.iter().find(|&&n| n >= self.n_nodes()) {
                    return Err(MeshError::Inconsistent(format!(
                        "edge set '{name}' references node {bad} of {}",
                        self.n_nodes()
                    )));
                }
            }
        }
        if !(self.section > 0.0) {
            return Err(MeshError::Inconsistent(format!(
                "section must be positive, got {}",
                self.section
            )));
        }
        Ok(())
    }

    /// Serialize to the plain-text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let d = match self.dim() {
            Dim::One => 1,
            Dim::Two => 2,
        };
        writeln!(out, "dim {d}").unwrap();
        writeln!(out, "kind {}", self.kind.name()).unwrap();
        writeln!(out, "section {:.17e}", self.section).unwrap();
        writeln!(out, "nodes {}", self.n_nodes()).unwrap();
        for c in &self.coords {
            match self.dim() {
                Dim::One => writeln!(out, "{:.17e}", c[0]).unwrap(),
                Dim::Two => writeln!(out, "{:.17e} {:.17e}", c[0], c[1]).unwrap(),
            }
        }
        writeln!(out, "elements {}", self.n_elements()).unwrap();
        for el in &self.elements {
            let ids: Vec<String> = el.iter().map(|n| n.to_string()).collect();
            writeln!(out, "{}", ids.join(" ")).unwrap();
        }
        for (name, set) in &self.node_sets {
            writeln!(out, "nodeset {name} {}", set.len()).unwrap();
            let ids: Vec<String> = set.iter().map(|n| n.to_string()).collect();
            writeln!(out, "{}", ids.join(" ")).unwrap();
        }
        for (name, set) in &self.edge_sets {
            writeln!(out, "edgeset {name} {}", set.len()).unwrap();
            for edge in set {
                let ids: Vec<String> = edge.iter().map(|n| n.to_string()).collect();
                writeln!(out, "{}", ids.join(" ")).unwrap();
            }
        }
        out
    }

    /// Parse the plain-text format.
    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| MeshError::Parse {
                    line: 0,
                    msg: format!("unexpected end of file, expected {what}"),
                })
        };

        fn fail<T>(line: usize, msg: impl Into<String>) -> Result<T, MeshError> {
            Err(MeshError::Parse {
                line,
                msg: msg.into(),
            })
        }
        fn keyword<'a>(
            (line, l): (usize, &'a str),
            kw: &str,
        ) -> Result<(usize, Vec<&'a str>), MeshError> {
            let mut parts = l.split_whitespace();
            match parts.next() {
                Some(k) if k == kw => Ok((line, parts.collect())),
                other => fail(line, format!("expected '{kw}', got '{}'", other.unwrap_or(""))),
            }
        }
        fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, MeshError> {
            s.parse()
                .map_err(|_| MeshError::Parse {
                    line,
                    msg: format!("cannot parse '{s}'"),
                })
        }

        let (line, args) = keyword(next("dim")?, "dim")?;
        let dim_n: usize = parse_num(line, args.first().copied().unwrap_or(""))?;
        if dim_n != 1 && dim_n != 2 {
            return fail(line, format!("dim must be 1 or 2, got {dim_n}"));
        }
        let (line, args) = keyword(next("kind")?, "kind")?;
        let kind = args
            .first()
            .and_then(|s| ElementKind::parse(s))
            .ok_or_else(|| MeshError::Parse {
                line,
                msg: "unknown element kind".into(),
            })?;
        let expect_dim = if kind.dim() == Dim::One { 1 } else { 2 };
        if expect_dim != dim_n {
            return fail(line, format!("kind {} is {expect_dim}D, file says {dim_n}D", kind.name()));
        }
        let (line, args) = keyword(next("section")?, "section")?;
        let section: f64 = parse_num(line, args.first().copied().unwrap_or(""))?;

        let (line, args) = keyword(next("nodes")?, "nodes")?;
        let n_nodes: usize = parse_num(line, args.first().copied().unwrap_or(""))?;
        let mut coords = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (line, l) = next("a node coordinate line")?;
            let vals: Vec<&str> = l.split_whitespace().collect();
            if vals.len() != dim_n {
                return fail(line, format!("expected {dim_n} coordinates, got {}", vals.len()));
            }
            let x: f64 = parse_num(line, vals[0])?;
            let y: f64 = if dim_n == 2 { parse_num(line, vals[1])? } else { 0.0 };
            coords.push([x, y]);
        }

        let (line, args) = keyword(next("elements")?, "elements")?;
        let n_el: usize = parse_num(line, args.first().copied().unwrap_or(""))?;
        let mut elements = Vec::with_capacity(n_el);
        for _ in 0..n_el {
            let (line, l) = next("an element connectivity line")?;
            let ids: Result<Vec<usize>, _> =
                l.split_whitespace().map(|s| parse_num(line, s)).collect();
            elements.push(ids?);
        }

        let mut node_sets = BTreeMap::new();
        let mut edge_sets = BTreeMap::new();
        while let Some((line, l)) = lines.next() {
            let mut parts = l.split_whitespace();
            match parts.next() {
                Some("nodeset") => {
                    let name = parts
                        .next()
                        .ok_or_else(|| MeshError::Parse {
                            line,
                            msg: "nodeset needs a name".into(),
                        })?
                        .to_string();
                    let _count: usize =
                        parse_num(line, parts.next().unwrap_or(""))?;
                    let (line2, l2) = lines.next().ok_or_else(|| MeshError::Parse {
                        line,
                        msg: "nodeset needs an id line".into(),
                    })?;
                    let ids: Result<Vec<usize>, _> =
                        l2.split_whitespace().map(|s| parse_num(line2, s)).collect();
                    node_sets.insert(name, ids?);
                }
                Some("edgeset") => {
                    let name = parts
                        .next()
                        .ok_or_else(|| MeshError::Parse {
                            line,
                            msg: "edgeset needs a name".into(),
                        })?
                        .to_string();
                    let count: usize = parse_num(line, parts.next().unwrap_or(""))?;
                    let mut edges = Vec::with_capacity(count);
                    for _ in 0..count {
                        let (line2, l2) = lines.next().ok_or_else(|| MeshError::Parse {
                            line,
                            msg: "edgeset ended early".into(),
                        })?;
                        let ids: Result<Vec<usize>, _> =
                            l2.split_whitespace().map(|s| parse_num(line2, s)).collect();
                        edges.push(ids?);
                    }
                    edge_sets.insert(name, edges);
                }
                other => {
                    return fail(line, format!("unexpected keyword '{}'", other.unwrap_or("")));
                }
            }
        }

        let mesh = Mesh {
            kind,
            section,
            coords,
            elements,
            node_sets,
            edge_sets,
        };
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Uniform 1D bar: `n` two-node elements over `[0, length]`, node sets
/// `left` and `right` at the ends.
pub fn rod_1d(n: usize, length: f64, area: f64) -> Mesh {
    assert!(n >= 1);
    let coords = (0..=n)
        .map(|i| [length * i as f64 / n as f64, 0.0])
        .collect();
    let elements = (0..n).map(|i| vec![i, i + 1]).collect();
    let mut node_sets = BTreeMap::new();
    node_sets.insert("left".to_string(), vec![0]);
    node_sets.insert("right".to_string(), vec![n]);
    Mesh {
        kind: ElementKind::Bar2,
        section: area,
        coords,
        elements,
        node_sets,
        edge_sets: BTreeMap::new(),
    }
}

/// Uniform 1D bar of `n` three-node quadratic elements over `[0, length]`,
/// node sets `left` and `right` at the ends. Nodes are numbered left to
/// right including midnodes, so node `2n` is the right end.
pub fn rod_1d_quadratic(n: usize, length: f64, area: f64) -> Mesh {
    assert!(n >= 1);
    let coords = (0..=2 * n)
        .map(|k| [length * k as f64 / (2 * n) as f64, 0.0])
        .collect();
    let elements = (0..n).map(|i| vec![2 * i, 2 * i + 2, 2 * i + 1]).collect();
    let mut node_sets = BTreeMap::new();
    node_sets.insert("left".to_string(), vec![0]);
    node_sets.insert("right".to_string(), vec![2 * n]);
    Mesh {
        kind: ElementKind::Bar3,
        section: area,
        coords,
        elements,
        node_sets,
        edge_sets: BTreeMap::new(),
    }
}

/// Structured rectangular strip of eight-node serendipity quadrilaterals,
/// `nx` by `ny` elements over `[0, length] x [-height/2, height/2]`.
///
/// Nodes are numbered column by column (corners and vertical-edge midnodes,
/// then horizontal-edge midnodes) so the stiffness bandwidth stays small.
/// Node sets `left`/`right` hold the full end columns; edge sets of the same
/// names carry the boundary edges in (corner, corner, mid) order.
pub fn rod_2d_strip(nx: usize, ny: usize, length: f64, height: f64, thickness: f64) -> Mesh {
    assert!(nx >= 1 && ny >= 1);
    let mut coords = Vec::new();
    // corner[(i, j)], vmid[(i, j)] (vertical edge above corner j), and
    // hmid[(i, j)] (horizontal edge right of corner (i, j)) id maps.
    let mut corner = vec![vec![usize::MAX; ny + 1]; nx + 1];
    let mut vmid = vec![vec![usize::MAX; ny]; nx + 1];
    let mut hmid = vec![vec![usize::MAX; ny + 1]; nx];
    let x_of = |i: usize| length * i as f64 / nx as f64;
    let y_of = |j: usize| -0.5 * height + height * j as f64 / ny as f64;
    for i in 0..=nx {
        for j in 0..=ny {
            corner[i][j] = coords.len();
            coords.push([x_of(i), y_of(j)]);
            if j < ny {
                vmid[i][j] = coords.len();
                coords.push([x_of(i), 0.5 * (y_of(j) + y_of(j + 1))]);
            }
        }
        if i < nx {
            for j in 0..=ny {
                hmid[i][j] = coords.len();
                coords.push([0.5 * (x_of(i) + x_of(i + 1)), y_of(j)]);
            }
        }
    }
    let mut elements = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            elements.push(vec![
                corner[i][j],
                corner[i + 1][j],
                corner[i + 1][j + 1],
                corner[i][j + 1],
                hmid[i][j],
                vmid[i + 1][j],
                hmid[i][j + 1],
                vmid[i][j],
            ]);
        }
    }
    let column = |i: usize| -> Vec<usize> {
        let mut ids = Vec::new();
        for j in 0..=ny {
            ids.push(corner[i][j]);
            if j < ny {
                ids.push(vmid[i][j]);
            }
        }
        ids
    };
    let edge_column = |i: usize| -> Vec<Vec<usize>> {
        (0..ny)
            .map(|j| vec![corner[i][j], corner[i][j + 1], vmid[i][j]])
            .collect()
    };
    let mut node_sets = BTreeMap::new();
    node_sets.insert("left".to_string(), column(0));
    node_sets.insert("right".to_string(), column(nx));
    let mut edge_sets = BTreeMap::new();
    edge_sets.insert("left".to_string(), edge_column(0));
    edge_sets.insert("right".to_string(), edge_column(nx));
    Mesh {
        kind: ElementKind::Quad8,
        section: thickness,
        coords,
        elements,
        node_sets,
        edge_sets,
    }
}

/// Geometry of a flat tensile specimen: wide grip sections at both ends, a
/// narrow gauge section in the middle, linear transitions between them. All
/// lengths in meters; widths are full widths.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct DogboneGeometry {
    pub length: f64,
    pub grip_width: f64,
    pub gauge_width: f64,
    pub gauge_length: f64,
    pub transition_length: f64,
    pub thickness: f64,
}

impl DogboneGeometry {
    /// Half-width of the specimen at axial position `x`.
    pub fn half_width(&self, x: f64) -> f64 {
        let grip = 0.5 * (self.length - self.gauge_length) - self.transition_length;
        let s = if x <= 0.5 * self.length { x } else { self.length - x };
        if s <= grip {
            0.5 * self.grip_width
        } else if s >= grip + self.transition_length {
            0.5 * self.gauge_width
        } else {
            let f = (s - grip) / self.transition_length;
            0.5 * (self.grip_width + f * (self.gauge_width - self.grip_width))
        }
    }
}

/// Structured dogbone mesh: an `nx` by `ny` grid of columns mapped onto the
/// specimen outline (`y` scaled by the local half-width), meshed with
/// bilinear quadrilaterals or, when `split_triangles` is set, each cell cut
/// into two linear triangles with alternating diagonals.
///
/// Node sets `left`/`right` hold the end columns; matching edge sets carry
/// the end faces for traction loading.
pub fn dogbone(geo: &DogboneGeometry, nx: usize, ny: usize, split_triangles: bool) -> Mesh {
    assert!(nx >= 2 && ny >= 1);
    let grip = 0.5 * (geo.length - geo.gauge_length) - geo.transition_length;
    assert!(
        grip > 0.0 && geo.transition_length >= 0.0,
        "dogbone sections do not fit in the total length"
    );
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        let x = geo.length * i as f64 / nx as f64;
        let hw = geo.half_width(x);
        for j in 0..=ny {
            let y = -hw + 2.0 * hw * j as f64 / ny as f64;
            coords.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| i * (ny + 1) + j;
    let mut elements = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if split_triangles {
                // Alternate the diagonal so the pattern has no global bias.
                if (i + j) % 2 == 0 {
                    elements.push(vec![a, b, c]);
                    elements.push(vec![a, c, d]);
                } else {
                    elements.push(vec![a, b, d]);
                    elements.push(vec![b, c, d]);
                }
            } else {
                elements.push(vec![a, b, c, d]);
            }
        }
    }
    let column = |i: usize| (0..=ny).map(|j| id(i, j)).collect::<Vec<_>>();
    let edge_column = |i: usize| {
        (0..ny)
            .map(|j| vec![id(i, j), id(i, j + 1)])
            .collect::<Vec<_>>()
    };
    let mut node_sets = BTreeMap::new();
    node_sets.insert("left".to_string(), column(0));
    node_sets.insert("right".to_string(), column(nx));
    let mut edge_sets = BTreeMap::new();
    edge_sets.insert("left".to_string(), edge_column(0));
    edge_sets.insert("right".to_string(), edge_column(nx));
    Mesh {
        kind: if split_triangles {
            ElementKind::Tri3
        } else {
            ElementKind::Quad4
        },
        section: geo.thickness,
        coords,
        elements,
        node_sets,
        edge_sets,
    }
}
