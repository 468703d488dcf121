use crate::math::Vec3;
use crate::projection::Pose;
use crate::splat::RenderOutput;

/// `(x_nb1 − x_nb3) × (x_nb2 − x_nb4)` normalized and turned to face the
/// viewer; `None` when the neighbors are degenerate.
pub fn plane_normal_from_neighbors(nb: &[Vec3; 4], view_dir: &Vec3) -> Option<Vec3> {
    let u = nb[0] - nb[2];
    let v = nb[1] - nb[3];
    let n = u.cross(&v);
    let len = n.norm();
    if !(len > 1e-12 * (u.norm() * v.norm()).max(1e-300)) {
        return None;
    }
    let n = n / len;
    Some(if n.dot(view_dir) > 0.0 { -n } else { n })
}

/// Local plane normal at `(col, row)` from the intersection points of its
/// right, lower, left and upper neighbors.
pub fn local_plane_normal(points: &[Option<Vec3>], pose: &Pose, col: usize, row: usize, view_dir: &Vec3) -> Option<Vec3> {
    let w = pose.width;
    let mut nb = [Vec3::zeros(); 4];
    for (k, (dc, dr)) in [(1, 0), (0, 1), (-1, 0), (0, -1)].into_iter().enumerate() {
        let (c, r) = pose.neighbor(col, row, dc, dr)?;
        nb[k] = points[r * w + c]?;
    }
    plane_normal_from_neighbors(&nb, view_dir)
}

/// World intersection points of every pixel of a render.
pub fn intersection_buffer(out: &RenderOutput) -> Vec<Option<Vec3>> {
    (0..out.pixel_count()).map(|i| out.intersection(i)).collect()
}

/// Local plane normals for every pixel whose four neighbors are valid.
pub fn local_normals(out: &RenderOutput, pose: &Pose) -> Vec<Option<Vec3>> {
    let pts = intersection_buffer(out);
    let w = out.width;
    (0..out.pixel_count())
        .map(|i| {
            pts[i]?;
            local_plane_normal(&pts, pose, i % w, i / w, &out.directions[i])
        })
        .collect()
}
