//! Bounding-volume hierarchy over triangle faces for exact closest-point
//! queries.

use super::{Point3, TriMesh};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Point3,
    pub face: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
struct Node {
    lo: Point3,
    hi: Point3,
    // Leaf: faces[start..start + count]. Inner: children at `start` and `start + 1`.
    start: usize,
    count: usize,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.count > 0
    }

    fn distance_sq(&self, p: &Point3) -> f64 {
        let d = (self.lo - p).sup(&(p - self.hi)).sup(&Point3::zeros());
        d.norm_squared()
    }
}

/// Immutable BVH over a mesh's faces. Shareable across threads.
#[derive(Debug, Clone)]
pub struct Bvh {
    triangles: Vec<[Point3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn new(mesh: &TriMesh) -> Self {
        let triangles: Vec<[Point3; 3]> = mesh
            .faces()
            .iter()
            .map(|f| f.map(|v| mesh.vertices()[v]))
            .collect();
        let centroids: Vec<Point3> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        if !triangles.is_empty() {
            nodes.push(Node {
                lo: Point3::zeros(),
                hi: Point3::zeros(),
                start: 0,
                count: 0,
            });
            build(&triangles, &centroids, &mut order, &mut nodes, 0, 0, triangles.len());
        }
        Self {
            triangles,
            order,
            nodes,
        }
    }

    pub fn face_count(&self) -> usize {
        self.triangles.len()
    }

    /// Exact closest point on the triangle set. Ties between faces at equal
    /// distance go to the lowest face index. `None` only for an empty mesh.
    pub fn closest_point(&self, query: &Point3) -> Option<ClosestPoint> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(f64, usize, Point3)> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if let Some((bd, _, _)) = best {
                // Strict: boxes at exactly the best distance may still hold a
                // lower-indexed tie.
                if node.distance_sq(query) > bd {
                    continue;
                }
            }
            if node.is_leaf() {
                for &fi in &self.order[node.start..node.start + node.count] {
                    let [a, b, c] = &self.triangles[fi];
                    let p = closest_point_on_triangle(query, a, b, c);
                    let d = (p - query).norm_squared();
                    let better = match best {
                        None => true,
                        Some((bd, bf, _)) => d < bd || (d == bd && fi < bf),
                    };
                    if better {
                        best = Some((d, fi, p));
                    }
                }
            } else {
                let (l, r) = (node.start, node.start + 1);
                let (dl, dr) = (self.nodes[l].distance_sq(query), self.nodes[r].distance_sq(query));
                // Visit the nearer child first.
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best.map(|(d, face, point)| ClosestPoint {
            point,
            face,
            distance: d.sqrt(),
        })
    }
}

fn build(
    tris: &[[Point3; 3]],
    centroids: &[Point3],
    order: &mut [usize],
    nodes: &mut Vec<Node>,
    ni: usize,
    start: usize,
    end: usize,
) {
    let (mut lo, mut hi) = (tris[order[start]][0], tris[order[start]][0]);
    for &fi in &order[start..end] {
        for p in &tris[fi] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
    }
    nodes[ni].lo = lo;
    nodes[ni].hi = hi;
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes[ni].start = start;
        nodes[ni].count = count;
        return;
    }
    let (mut clo, mut chi) = (centroids[order[start]], centroids[order[start]]);
    for &fi in &order[start..end] {
        clo = clo.inf(&centroids[fi]);
        chi = chi.sup(&centroids[fi]);
    }
    let axis = (chi - clo).imax();
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    let left = nodes.len();
    for _ in 0..2 {
        nodes.push(Node {
            lo: Point3::zeros(),
            hi: Point3::zeros(),
            start: 0,
            count: 0,
        });
    }
    nodes[ni].start = left;
    nodes[ni].count = 0;
    build(tris, centroids, order, nodes, left, start, mid);
    build(tris, centroids, order, nodes, left + 1, mid, end);
}

/// Closest point on triangle `abc` to `p`, by Voronoi-region classification.
pub(crate) fn closest_point_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
