//! Interval meshes and polygonal meshes with explicit face connectivity.
//!
//! Faces are first-class entities with global indices. They are always numbered
//! by sorting their sorted vertex tuples, so a mesh built in memory and the
//! same mesh re-loaded from JSON share one numbering. An interior face lists
//! its two cells in ascending order, and its reference normal is the outward
//! normal of the lower-indexed cell.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{HhoError, Result};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellShape {
    Quad,
    Tri,
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rectangle {
    pub const UNIT: Rectangle = Rectangle {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };
}

/// Geometric data of one face as seen from one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFace {
    /// Global face index.
    pub face: usize,
    /// Length in 2D, 1 (counting measure) for the point faces of a 1D mesh.
    pub measure: f64,
    /// Unit normal pointing out of the cell.
    pub normal: Point,
    pub barycenter: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    pub barycenter: Point,
    /// Maximum pairwise vertex distance.
    pub diameter: f64,
    pub measure: f64,
    pub faces: Vec<CellFace>,
}

impl CellGeometry {
    pub fn perimeter(&self) -> f64 {
        self.faces.iter().map(|f| f.measure).sum()
    }
}

/// Affine map `s ↦ origin + s·tangent` from the face parameter line onto the
/// face. It sends `[-|F|/2, |F|/2]` isometrically onto the face and `0` to the
/// face barycenter. The tangent follows the face's sorted vertex order, so the
/// map does not depend on which adjacent cell asks for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceMap {
    pub origin: Point,
    pub tangent: Point,
    pub length: f64,
}

impl FaceMap {
    pub fn from_segment(p0: Point, p1: Point) -> Result<Self> {
        let d = [p1[0] - p0[0], p1[1] - p0[1]];
        let length = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if !(length > 0.0) || !length.is_finite() {
            return Err(HhoError::InvalidInput("zero-length face".into()));
        }
        Ok(FaceMap {
            origin: [0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1])],
            tangent: [d[0] / length, d[1] / length],
            length,
        })
    }

    pub fn to_physical(&self, s: f64) -> Point {
        [
            self.origin[0] + s * self.tangent[0],
            self.origin[1] + s * self.tangent[1],
        ]
    }

    pub fn to_parameter(&self, p: Point) -> f64 {
        (p[0] - self.origin[0]) * self.tangent[0] + (p[1] - self.origin[1]) * self.tangent[1]
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<Point>,
    cells: Vec<Vec<usize>>,
    faces: Vec<Vec<usize>>,
    cell_faces: Vec<Vec<usize>>,
    face_cells: Vec<Vec<usize>>,
    boundary_tags: Vec<Option<BoundaryKind>>,
    geometry: Vec<CellGeometry>,
}

impl Mesh {
    /// Builds a mesh from vertices and cells, deriving faces and checking
    /// every mesh invariant. Boundary faces are tagged Dirichlet.
    ///
    /// 2D cells are counterclockwise vertex loops; 1D cells are `[left, right]`
    /// vertex pairs and vertices are stored as `[x, 0]`.
    pub fn new(dim: usize, vertices: Vec<Point>, cells: Vec<Vec<usize>>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(HhoError::InvalidInput(format!(
                "unsupported dimension {dim}"
            )));
        }
        if cells.is_empty() {
            return Err(HhoError::InvalidInput("mesh has no cells".into()));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(HhoError::InvalidInput(
                "non-finite vertex coordinate".into(),
            ));
        }
        for (c, cell) in cells.iter().enumerate() {
            let expected_min = if dim == 1 { 2 } else { 3 };
            if cell.len() < expected_min || (dim == 1 && cell.len() != 2) {
                return Err(HhoError::InvalidInput(format!(
                    "cell {c} has {} vertices",
                    cell.len()
                )));
            }
            if let Some(&v) = cell.iter().find(|&&v| v >= vertices.len()) {
                return Err(HhoError::InvalidInput(format!(
                    "cell {c} references missing vertex {v}"
                )));
            }
        }

        // Local faces of each cell as sorted vertex keys.
        let local_keys: Vec<Vec<Vec<usize>>> = cells
            .iter()
            .map(|cell| {
                if dim == 1 {
                    vec![vec![cell[0]], vec![cell[1]]]
                } else {
                    (0..cell.len())
                        .map(|i| {
                            let a = cell[i];
                            let b = cell[(i + 1) % cell.len()];
                            vec![a.min(b), a.max(b)]
                        })
                        .collect()
                }
            })
            .collect();

        let mut face_index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for keys in &local_keys {
            for key in keys {
                face_index.entry(key.clone()).or_insert(0);
            }
        }
        let faces: Vec<Vec<usize>> = face_index.keys().cloned().collect();
        for (i, v) in face_index.values_mut().enumerate() {
            *v = i;
        }

        let mut face_cells = vec![Vec::new(); faces.len()];
        let mut cell_faces = Vec::with_capacity(cells.len());
        for (c, keys) in local_keys.iter().enumerate() {
            let mut list = Vec::with_capacity(keys.len());
            for key in keys {
                let f = face_index[key];
                if list.contains(&f) {
                    return Err(HhoError::InvalidInput(format!(
                        "cell {c} uses face {f} twice"
                    )));
                }
                list.push(f);
                face_cells[f].push(c);
            }
            cell_faces.push(list);
        }
        for (f, fc) in face_cells.iter().enumerate() {
            if fc.len() > 2 {
                return Err(HhoError::InvalidInput(format!(
                    "face {f} is shared by {} cells",
                    fc.len()
                )));
            }
        }

        let boundary_tags = face_cells
            .iter()
            .map(|fc| (fc.len() == 1).then_some(BoundaryKind::Dirichlet))
            .collect();

        let mut mesh = Mesh {
            dim,
            vertices,
            cells,
            faces,
            cell_faces,
            face_cells,
            boundary_tags,
            geometry: Vec::new(),
        };
        mesh.geometry = (0..mesh.cells.len())
            .map(|c| mesh.compute_geometry(c))
            .collect::<Result<_>>()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Sorted vertex tuple of a face.
    pub fn face_vertices(&self, face: usize) -> &[usize] {
        &self.faces[face]
    }

    pub fn cell_faces(&self, cell: usize) -> &[usize] {
        &self.cell_faces[cell]
    }

    /// Cells adjacent to a face, ascending.
    pub fn face_cells(&self, face: usize) -> &[usize] {
        &self.face_cells[face]
    }

    pub fn is_boundary_face(&self, face: usize) -> bool {
        self.face_cells[face].len() == 1
    }

    pub fn boundary_tag(&self, face: usize) -> Option<BoundaryKind> {
        self.boundary_tags[face]
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.faces.len()).filter(|&f| self.is_boundary_face(f))
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.faces.len()).filter(|&f| !self.is_boundary_face(f))
    }

    pub fn cell_geometry(&self, cell: usize) -> &CellGeometry {
        &self.geometry[cell]
    }

    pub fn cell_vertices(&self, cell: usize) -> Vec<Point> {
        self.cells[cell].iter().map(|&v| self.vertices[v]).collect()
    }

    /// Maximum cell diameter.
    pub fn mesh_size(&self) -> f64 {
        self.geometry.iter().map(|g| g.diameter).fold(0.0, f64::max)
    }

    pub fn face_measure(&self, face: usize) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            let [a, b] = [self.faces[face][0], self.faces[face][1]];
            dist(self.vertices[a], self.vertices[b])
        }
    }

    pub fn face_barycenter(&self, face: usize) -> Point {
        let vs = &self.faces[face];
        if self.dim == 1 {
            self.vertices[vs[0]]
        } else {
            midpoint(self.vertices[vs[0]], self.vertices[vs[1]])
        }
    }

    /// Reference normal of a face: outward normal of its lowest-indexed cell.
    pub fn face_normal(&self, face: usize) -> Point {
        let c = self.face_cells[face][0];
        let g = &self.geometry[c];
        g.faces
            .iter()
            .find(|cf| cf.face == face)
            .map(|cf| cf.normal)
            .unwrap()
    }

    /// Face parametrization (2D meshes only).
    pub fn face_map(&self, face: usize) -> Result<FaceMap> {
        if self.dim != 2 {
            return Err(HhoError::InvalidInput(
                "face maps exist only on 2D meshes".into(),
            ));
        }
        let vs = &self.faces[face];
        FaceMap::from_segment(self.vertices[vs[0]], self.vertices[vs[1]])
    }

    /// Tags boundary faces with a predicate on their barycenter.
    pub fn with_boundary_predicate(mut self, tag: impl Fn(Point) -> BoundaryKind) -> Self {
        for f in 0..self.faces.len() {
            if self.is_boundary_face(f) {
                self.boundary_tags[f] = Some(tag(self.face_barycenter(f)));
            }
        }
        self
    }

    /// Sets (or clears, with `None`) the tag of one boundary face.
    pub fn set_boundary_tag(&mut self, face: usize, tag: Option<BoundaryKind>) -> Result<()> {
        if face >= self.faces.len() || !self.is_boundary_face(face) {
            return Err(HhoError::InvalidInput(format!(
                "face {face} is not a boundary face"
            )));
        }
        self.boundary_tags[face] = tag;
        Ok(())
    }

    fn compute_geometry(&self, c: usize) -> Result<CellGeometry> {
        let cell = &self.cells[c];
        if self.dim == 1 {
            let (xl, xr) = (self.vertices[cell[0]][0], self.vertices[cell[1]][0]);
            let h = xr - xl;
            if !(h > 0.0) {
                return Err(HhoError::DegenerateGeometry {
                    cell: c,
                    reason: format!("interval ({xl}, {xr}) has non-positive length"),
                });
            }
            let faces = vec![
                CellFace {
                    face: self.cell_faces[c][0],
                    measure: 1.0,
                    normal: [-1.0, 0.0],
                    barycenter: [xl, 0.0],
                },
                CellFace {
                    face: self.cell_faces[c][1],
                    measure: 1.0,
                    normal: [1.0, 0.0],
                    barycenter: [xr, 0.0],
                },
            ];
            return Ok(CellGeometry {
                barycenter: [0.5 * (xl + xr), 0.0],
                diameter: h,
                measure: h,
                faces,
            });
        }

        let pts = self.cell_vertices(c);
        let n = pts.len();
        let mut area2 = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let (p, q) = (pts[i], pts[(i + 1) % n]);
            let cross = p[0] * q[1] - q[0] * p[1];
            area2 += cross;
            cx += (p[0] + q[0]) * cross;
            cy += (p[1] + q[1]) * cross;
        }
        let diameter = pts
            .iter()
            .enumerate()
            .flat_map(|(i, p)| pts[i + 1..].iter().map(move |q| dist(*p, *q)))
            .fold(0.0, f64::max);
        if !(area2 > 1e-14 * diameter * diameter) {
            return Err(HhoError::DegenerateGeometry {
                cell: c,
                reason: format!(
                    "signed area {:.3e} (cells must be non-degenerate counterclockwise loops)",
                    0.5 * area2
                ),
            });
        }
        let measure = 0.5 * area2;
        let barycenter = [cx / (3.0 * area2), cy / (3.0 * area2)];

        for i in 0..n {
            let (p, q) = (pts[i], pts[(i + 1) % n]);
            let fan = (p[0] - barycenter[0]) * (q[1] - barycenter[1])
                - (q[0] - barycenter[0]) * (p[1] - barycenter[1]);
            if !(fan > 1e-12 * diameter * diameter) {
                return Err(HhoError::NotStarShaped { cell: c });
            }
        }

        let faces = (0..n)
            .map(|i| {
                let (p, q) = (pts[i], pts[(i + 1) % n]);
                let len = dist(p, q);
                CellFace {
                    face: self.cell_faces[c][i],
                    measure: len,
                    normal: [(q[1] - p[1]) / len, -(q[0] - p[0]) / len],
                    barycenter: midpoint(p, q),
                }
            })
            .collect();
        Ok(CellGeometry {
            barycenter,
            diameter,
            measure,
            faces,
        })
    }

    // ---- JSON ----------------------------------------------------------

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(s)?;
        let vertices = file
            .vertices
            .iter()
            .map(|v| match (file.dim, v.as_slice()) {
                (1, [x]) => Ok([*x, 0.0]),
                (2, [x, y]) => Ok([*x, *y]),
                _ => Err(HhoError::InvalidInput(format!(
                    "vertex {v:?} does not match dimension {}",
                    file.dim
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut mesh = Mesh::new(file.dim, vertices, file.cells)?;
        if let Some(boundary) = file.boundary {
            for f in 0..mesh.num_faces() {
                if mesh.is_boundary_face(f) {
                    mesh.boundary_tags[f] = None;
                }
            }
            for (list, kind) in [
                (&boundary.dirichlet, BoundaryKind::Dirichlet),
                (&boundary.neumann, BoundaryKind::Neumann),
            ] {
                for &f in list {
                    mesh.set_boundary_tag(f, Some(kind))?;
                }
            }
        }
        Ok(mesh)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut boundary = BoundaryLists::default();
        for f in self.boundary_faces() {
            match self.boundary_tags[f] {
                Some(BoundaryKind::Dirichlet) => boundary.dirichlet.push(f),
                Some(BoundaryKind::Neumann) => boundary.neumann.push(f),
                None => {}
            }
        }
        let file = MeshFile {
            dim: self.dim,
            vertices: self
                .vertices
                .iter()
                .map(|p| p[..self.dim].to_vec())
                .collect(),
            cells: self.cells.clone(),
            boundary: Some(boundary),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Copies tags from the boundary faces of `parent` onto the boundary
    /// faces of `self` that lie on them.
    fn inherit_boundary_tags(&mut self, parent: &Mesh) {
        let parent_faces: Vec<usize> = parent.boundary_faces().collect();
        for f in 0..self.faces.len() {
            if !self.is_boundary_face(f) {
                continue;
            }
            let tag = if self.dim == 1 {
                let x = self.face_barycenter(f)[0];
                parent_faces
                    .iter()
                    .find(|&&pf| {
                        (parent.face_barycenter(pf)[0] - x).abs() <= 1e-12 * (1.0 + x.abs())
                    })
                    .and_then(|&pf| parent.boundary_tags[pf])
            } else {
                let vs = &self.faces[f];
                let (p, q) = (self.vertices[vs[0]], self.vertices[vs[1]]);
                parent_faces
                    .iter()
                    .find(|&&pf| {
                        let pv = &parent.faces[pf];
                        let (a, b) = (parent.vertices[pv[0]], parent.vertices[pv[1]]);
                        on_segment(p, a, b) && on_segment(q, a, b)
                    })
                    .and_then(|&pf| parent.boundary_tags[pf])
            };
            self.boundary_tags[f] = tag.or(Some(BoundaryKind::Dirichlet));
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MeshFile {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    cells: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary: Option<BoundaryLists>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct BoundaryLists {
    #[serde(default)]
    dirichlet: Vec<usize>,
    #[serde(default)]
    neumann: Vec<usize>,
}

fn dist(p: Point, q: Point) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

fn midpoint(p: Point, q: Point) -> Point {
    [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let len = dist(a, b);
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len);
    cross.abs() <= 1e-10 * len * len && (-1e-12..=1.0 + 1e-12).contains(&t)
}

// ---- builders ----------------------------------------------------------

/// Interval mesh of `(a, b)` with `n_cells` cells. With `grading = g` the
/// vertices are `a + (b - a)(i/n)^g`; `None` and `Some(1.0)` are uniform.
pub fn build_interval_mesh(a: f64, b: f64, n_cells: usize, grading: Option<f64>) -> Result<Mesh> {
    if !a.is_finite() || !b.is_finite() || !(a < b) {
        return Err(HhoError::InvalidInput(format!(
            "invalid interval ({a}, {b})"
        )));
    }
    if n_cells == 0 {
        return Err(HhoError::InvalidInput(
            "interval mesh needs at least one cell".into(),
        ));
    }
    let g = grading.unwrap_or(1.0);
    if !(g > 0.0) || !g.is_finite() {
        return Err(HhoError::InvalidInput(format!("invalid grading {g}")));
    }
    let vertices = (0..=n_cells)
        .map(|i| {
            let t = i as f64 / n_cells as f64;
            let x = if i == n_cells {
                b
            } else {
                a + (b - a) * t.powf(g)
            };
            [x, 0.0]
        })
        .collect();
    let cells = (0..n_cells).map(|i| vec![i, i + 1]).collect();
    Mesh::new(1, vertices, cells)
}

/// Interval mesh with explicitly given vertex coordinates (strictly increasing).
pub fn build_interval_mesh_from_points(xs: &[f64]) -> Result<Mesh> {
    if xs.len() < 2 {
        return Err(HhoError::InvalidInput("need at least two vertices".into()));
    }
    let vertices = xs.iter().map(|&x| [x, 0.0]).collect();
    let cells = (0..xs.len() - 1).map(|i| vec![i, i + 1]).collect();
    Mesh::new(1, vertices, cells)
}

/// `nx × ny` rectangles of `domain`, optionally split into two triangles each.
pub fn build_structured_mesh(
    shape: CellShape,
    nx: usize,
    ny: usize,
    domain: Rectangle,
) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(HhoError::InvalidInput(
            "structured mesh needs nx, ny ≥ 1".into(),
        ));
    }
    let (dx, dy) = (
        (domain.x1 - domain.x0) / nx as f64,
        (domain.y1 - domain.y0) / ny as f64,
    );
    if !(dx > 0.0 && dy > 0.0) {
        return Err(HhoError::InvalidInput("empty domain rectangle".into()));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx {
                domain.x1
            } else {
                domain.x0 + i as f64 * dx
            };
            let y = if j == ny {
                domain.y1
            } else {
                domain.y0 + j as f64 * dy
            };
            vertices.push([x, y]);
        }
    }
    let v = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1));
            match shape {
                CellShape::Quad => cells.push(vec![a, b, c, d]),
                CellShape::Tri => {
                    cells.push(vec![a, b, c]);
                    cells.push(vec![a, c, d]);
                }
            }
        }
    }
    Mesh::new(2, vertices, cells)
}

/// Splits the listed quadrilateral cells into four; neighbors keep their
/// shape but gain the hanging midpoint vertex, becoming general polygons.
pub fn build_hanging_node_mesh(base: &Mesh, cells_to_refine: &[usize]) -> Result<Mesh> {
    if base.dim != 2 {
        return Err(HhoError::InvalidInput(
            "hanging-node refinement needs a 2D mesh".into(),
        ));
    }
    let mut refine = vec![false; base.num_cells()];
    for &c in cells_to_refine {
        if c >= base.num_cells() {
            return Err(HhoError::InvalidInput(format!("cell {c} out of range")));
        }
        if base.cells[c].len() != 4 {
            return Err(HhoError::InvalidInput(format!(
                "cell {c} is not a quadrilateral and cannot be refined"
            )));
        }
        refine[c] = true;
    }
    if !refine.iter().any(|&r| r) {
        return Ok(base.clone());
    }

    let mut vertices = base.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut new_cells: Vec<Vec<usize>> = Vec::new();
    // First pass creates all midpoints so that unrefined neighbors can see them.
    for (c, cell) in base.cells.iter().enumerate() {
        if !refine[c] {
            continue;
        }
        for i in 0..4 {
            let (a, b) = (cell[i], cell[(i + 1) % 4]);
            midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(midpoint(base.vertices[a], base.vertices[b]));
                vertices.len() - 1
            });
        }
    }
    for (c, cell) in base.cells.iter().enumerate() {
        let mid = |a: usize, b: usize| midpoints.get(&(a.min(b), a.max(b))).copied();
        if refine[c] {
            let center = {
                let g = &base.geometry[c];
                vertices.push(g.barycenter);
                vertices.len() - 1
            };
            let m: Vec<usize> = (0..4)
                .map(|i| mid(cell[i], cell[(i + 1) % 4]).unwrap())
                .collect();
            new_cells.push(vec![cell[0], m[0], center, m[3]]);
            new_cells.push(vec![m[0], cell[1], m[1], center]);
            new_cells.push(vec![center, m[1], cell[2], m[2]]);
            new_cells.push(vec![m[3], center, m[2], cell[3]]);
        } else {
            let n = cell.len();
            let mut lp = Vec::with_capacity(2 * n);
            for i in 0..n {
                let (a, b) = (cell[i], cell[(i + 1) % n]);
                lp.push(a);
                if let Some(mv) = mid(a, b) {
                    lp.push(mv);
                }
            }
            new_cells.push(lp);
        }
    }
    let mut mesh = Mesh::new(2, vertices, new_cells)?;
    mesh.inherit_boundary_tags(base);
    Ok(mesh)
}

/// Splits every cell self-similarly: intervals in two, triangles and
/// quadrilaterals in four via edge midpoints. Other polygons are split into a
/// fan of triangles joining the barycenter to the edge halves, so their
/// diameter does not exactly halve.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let mut vertices = mesh.vertices.clone();
    let mut new_cells = Vec::new();
    if mesh.dim == 1 {
        for cell in &mesh.cells {
            vertices.push(midpoint(mesh.vertices[cell[0]], mesh.vertices[cell[1]]));
            let m = vertices.len() - 1;
            new_cells.push(vec![cell[0], m]);
            new_cells.push(vec![m, cell[1]]);
        }
        let mut out = Mesh::new(1, vertices, new_cells)?;
        out.inherit_boundary_tags(mesh);
        return Ok(out);
    }

    let mut mids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| {
        *mids.entry((a.min(b), a.max(b))).or_insert_with(|| {
            vertices.push(midpoint(mesh.vertices[a], mesh.vertices[b]));
            vertices.len() - 1
        })
    };
    for (c, cell) in mesh.cells.iter().enumerate() {
        let n = cell.len();
        let m: Vec<usize> = (0..n)
            .map(|i| mid(cell[i], cell[(i + 1) % n], &mut vertices))
            .collect();
        match n {
            3 => {
                new_cells.push(vec![cell[0], m[0], m[2]]);
                new_cells.push(vec![m[0], cell[1], m[1]]);
                new_cells.push(vec![m[2], m[1], cell[2]]);
                new_cells.push(vec![m[0], m[1], m[2]]);
            }
            4 => {
                vertices.push(mesh.geometry[c].barycenter);
                let center = vertices.len() - 1;
                new_cells.push(vec![cell[0], m[0], center, m[3]]);
                new_cells.push(vec![m[0], cell[1], m[1], center]);
                new_cells.push(vec![center, m[1], cell[2], m[2]]);
                new_cells.push(vec![m[3], center, m[2], cell[3]]);
            }
            _ => {
                vertices.push(mesh.geometry[c].barycenter);
                let center = vertices.len() - 1;
                for i in 0..n {
                    new_cells.push(vec![center, cell[i], m[i]]);
                    new_cells.push(vec![center, m[i], cell[(i + 1) % n]]);
                }
            }
        }
    }
    let mut out = Mesh::new(2, vertices, new_cells)?;
    out.inherit_boundary_tags(mesh);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn check_invariants(mesh: &Mesh) {
        for c in 0..mesh.num_cells() {
            let g = mesh.cell_geometry(c);
            assert!(g.measure > 0.0);
            let per = g.perimeter();
            let mut s = [0.0, 0.0];
            for f in &g.faces {
                assert!(f.measure > 0.0);
                assert_relative_eq!(f.normal[0].hypot(f.normal[1]), 1.0, epsilon = 1e-14);
                assert!(g.diameter >= f.measure * (1.0 - 1e-14) || mesh.dim() == 1);
                s[0] += f.measure * f.normal[0];
                s[1] += f.measure * f.normal[1];
            }
            assert!(s[0].abs() <= 1e-12 * per && s[1].abs() <= 1e-12 * per);
        }
        let mut count = vec![0; mesh.num_faces()];
        for c in 0..mesh.num_cells() {
            for &f in mesh.cell_faces(c) {
                count[f] += 1;
            }
        }
        for f in 0..mesh.num_faces() {
            assert_eq!(count[f], mesh.face_cells(f).len());
            assert!(count[f] == 1 || count[f] == 2);
            if count[f] == 2 {
                let [c0, c1] = [mesh.face_cells(f)[0], mesh.face_cells(f)[1]];
                assert!(c0 < c1);
                let n0 = mesh
                    .cell_geometry(c0)
                    .faces
                    .iter()
                    .find(|x| x.face == f)
                    .unwrap()
                    .normal;
                let n1 = mesh
                    .cell_geometry(c1)
                    .faces
                    .iter()
                    .find(|x| x.face == f)
                    .unwrap()
                    .normal;
                assert!((n0[0] + n1[0]).abs() < 1e-14 && (n0[1] + n1[1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn interval_meshes() {
        let m = build_interval_mesh(0.0, 1.0, 4, None).unwrap();
        assert_eq!((m.num_cells(), m.num_faces()), (4, 5));
        for c in 0..4 {
            assert_relative_eq!(m.cell_geometry(c).diameter, 0.25, epsilon = 1e-15);
        }
        let g = build_interval_mesh(0.0, 1.0, 4, None).unwrap();
        assert_relative_eq!(g.cell_geometry(0).barycenter[0], 0.125);
        let one = build_interval_mesh(0.0, 1.0, 1, None).unwrap();
        assert_eq!(one.boundary_faces().count(), 2);
        assert_eq!(one.boundary_tag(0), Some(BoundaryKind::Dirichlet));
        let graded = build_interval_mesh(0.0, 2.0, 4, Some(1.0)).unwrap();
        let xs: Vec<f64> = graded.vertices().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        check_invariants(&graded);
        assert!(build_interval_mesh(0.0, 1.0, 0, None).is_err());
        assert!(build_interval_mesh(f64::NAN, 1.0, 2, None).is_err());
    }

    #[test]
    fn structured_counts() {
        let q = build_structured_mesh(CellShape::Quad, 2, 2, Rectangle::UNIT).unwrap();
        assert_eq!((q.num_cells(), q.num_faces()), (4, 12));
        assert_eq!(q.interior_faces().count(), 4);
        assert_eq!(q.boundary_faces().count(), 8);
        check_invariants(&q);
        let t = build_structured_mesh(CellShape::Tri, 1, 1, Rectangle::UNIT).unwrap();
        assert_eq!((t.num_cells(), t.num_faces()), (2, 5));
        check_invariants(&t);
        assert!(build_structured_mesh(CellShape::Quad, 0, 2, Rectangle::UNIT).is_err());
    }

    #[test]
    fn cell_geometry_examples() {
        let q = build_structured_mesh(CellShape::Quad, 1, 1, Rectangle::UNIT).unwrap();
        let g = q.cell_geometry(0);
        assert_relative_eq!(g.barycenter[0], 0.5);
        assert_relative_eq!(g.barycenter[1], 0.5);
        assert_relative_eq!(g.measure, 1.0);
        assert_relative_eq!(g.diameter, 2f64.sqrt());
        assert!(g.faces.iter().all(|f| (f.measure - 1.0).abs() < 1e-15));
        let t = Mesh::new(
            2,
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        let g = t.cell_geometry(0);
        assert_relative_eq!(g.measure, 0.5);
        assert_relative_eq!(g.barycenter[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(g.barycenter[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_and_clockwise_cells_rejected() {
        let cw = Mesh::new(
            2,
            vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]],
            vec![vec![0, 1, 2]],
        );
        assert!(matches!(cw, Err(HhoError::DegenerateGeometry { .. })));
        let flat = Mesh::new(
            2,
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            vec![vec![0, 1, 2]],
        );
        assert!(flat.is_err());
        // Arrow-shaped quadrilateral: not star-shaped about its barycenter.
        let arrow = Mesh::new(
            2,
            vec![[0.0, 0.0], [1.0, 0.45], [0.0, 1.0], [0.95, 0.5]],
            vec![vec![0, 3, 1, 2]],
        );
        assert!(arrow.is_err());
    }

    #[test]
    fn hanging_node_refinement() {
        let base = build_structured_mesh(CellShape::Quad, 2, 2, Rectangle::UNIT).unwrap();
        let m = build_hanging_node_mesh(&base, &[0]).unwrap();
        assert_eq!(m.num_cells(), 7);
        let pentagons = m.cells().iter().filter(|c| c.len() == 5).count();
        assert_eq!(pentagons, 2);
        check_invariants(&m);

        let same = build_hanging_node_mesh(&base, &[]).unwrap();
        assert_eq!(same.cells(), base.cells());

        let all = build_hanging_node_mesh(&base, &[0, 1, 2, 3]).unwrap();
        assert_eq!(all.num_cells(), 16);
        assert!(all.cells().iter().all(|c| c.len() == 4));
        check_invariants(&all);
    }

    #[test]
    fn uniform_refinement_halves_h() {
        let m1 = build_interval_mesh(0.0, 1.0, 4, None).unwrap();
        let r1 = refine_uniform(&m1).unwrap();
        assert_eq!(r1.num_cells(), 8);
        assert!(r1.cells().iter().all(|c| {
            let (a, b) = (r1.vertices()[c[0]][0], r1.vertices()[c[1]][0]);
            (b - a - 0.125).abs() < 1e-15
        }));
        for shape in [CellShape::Quad, CellShape::Tri] {
            let m = build_structured_mesh(shape, 2, 2, Rectangle::UNIT).unwrap();
            let r = refine_uniform(&m).unwrap();
            assert_relative_eq!(r.mesh_size() / m.mesh_size(), 0.5, epsilon = 1e-12);
            check_invariants(&r);
            let total: f64 = (0..r.num_cells()).map(|c| r.cell_geometry(c).measure).sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        }
        let q = build_structured_mesh(CellShape::Quad, 2, 2, Rectangle::UNIT).unwrap();
        let rq = refine_uniform(&q).unwrap();
        assert_eq!(rq.num_cells(), 16);
        assert_eq!(rq.num_faces(), 40);

        let base = build_structured_mesh(CellShape::Quad, 2, 2, Rectangle::UNIT).unwrap();
        let hang = build_hanging_node_mesh(&base, &[0]).unwrap();
        let r = refine_uniform(&hang).unwrap();
        check_invariants(&r);
    }

    #[test]
    fn boundary_tags_follow_refinement() {
        let m = build_structured_mesh(CellShape::Quad, 2, 2, Rectangle::UNIT)
            .unwrap()
            .with_boundary_predicate(|p| {
                if p[0] < 1e-12 {
                    BoundaryKind::Neumann
                } else {
                    BoundaryKind::Dirichlet
                }
            });
        let r = refine_uniform(&m).unwrap();
        for f in r.boundary_faces() {
            let expect = if r.face_barycenter(f)[0] < 1e-12 {
                BoundaryKind::Neumann
            } else {
                BoundaryKind::Dirichlet
            };
            assert_eq!(r.boundary_tag(f), Some(expect));
        }
    }

    #[test]
    fn json_roundtrip_keeps_numbering() {
        let m = build_hanging_node_mesh(
            &build_structured_mesh(CellShape::Quad, 3, 2, Rectangle::UNIT).unwrap(),
            &[1],
        )
        .unwrap();
        let mut m = m;
        let bf = m.boundary_faces().next().unwrap();
        m.set_boundary_tag(bf, Some(BoundaryKind::Neumann)).unwrap();
        let s = m.to_json_string().unwrap();
        let back = Mesh::from_json_str(&s).unwrap();
        assert_eq!(back.num_faces(), m.num_faces());
        for f in 0..m.num_faces() {
            assert_eq!(back.face_vertices(f), m.face_vertices(f));
            assert_eq!(back.boundary_tag(f), m.boundary_tag(f));
        }
        let one_d = r#"{"dim":1,"vertices":[[0.0],[0.3],[1.0]],"cells":[[0,1],[1,2]],
            "boundary":{"dirichlet":[0],"neumann":[2]}}"#;
        let m1 = Mesh::from_json_str(one_d).unwrap();
        assert_eq!(m1.boundary_tag(2), Some(BoundaryKind::Neumann));
    }

    #[test]
    fn face_map_examples() {
        let fm = FaceMap::from_segment([0.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!(fm.to_physical(0.0), [0.5, 0.0]);
        assert_relative_eq!(fm.to_physical(0.2)[0], 0.7);
        assert_eq!(fm.to_parameter(fm.origin), 0.0);
        let fm = FaceMap::from_segment([0.2, 0.1], [0.9, 1.3]).unwrap();
        let (a, b) = (fm.to_physical(-0.3), fm.to_physical(0.45));
        assert_relative_eq!(dist(a, b), 0.75, epsilon = 1e-14);
        assert!(FaceMap::from_segment([1.0, 1.0], [1.0, 1.0]).is_err());
    }
}
