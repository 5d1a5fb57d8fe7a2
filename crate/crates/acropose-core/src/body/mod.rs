//! Parametric skinned body model.
//!
//! The model follows the usual template + shape blendshapes + linear blend
//! skinning construction: rest vertices are `template + shape_basis · betas`,
//! joints are regressed linearly from rest vertices, and posed vertices are
//! weighted combinations of per-joint rigid transforms. Pose-corrective
//! blendshapes are deliberately not part of the model (extension point).

mod io;
mod test_body;

pub use io::{load_model, save_model};
pub use test_body::{build_test_body, LimbLengths, TestBodyConfig};

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::math::{rotation_from_axis_angle, RigidTransform};

/// Skeleton topology: parent per joint, root first, parents before children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KinematicTree {
    /// `None` for the root, `Some(parent)` with `parent < j` otherwise.
    pub parent: Vec<Option<usize>>,
    pub names: Vec<String>,
}

impl KinematicTree {
    pub fn joint_count(&self) -> usize {
        self.parent.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parent.len() != self.names.len() {
            return Err(Error::dimension(
                "kinematic tree",
                self.parent.len(),
                self.names.len(),
            ));
        }
        let roots = self.parent.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(Error::InvalidModel(format!(
                "kinematic tree must have exactly one root, found {roots}"
            )));
        }
        if self.parent[0].is_some() {
            return Err(Error::InvalidModel("joint 0 must be the root".into()));
        }
        for (j, p) in self.parent.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < j => {}
                Some(p) => {
                    return Err(Error::InvalidModel(format!(
                        "joint {j} has parent {p}, parents must precede children"
                    )))
                }
                None => unreachable!("multiple roots rejected above"),
            }
        }
        Ok(())
    }
}

/// Per-frame pose parameters: global orientation and translation of the root
/// plus one axis-angle rotation per non-root joint.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyPose {
    pub global_orient: Vector3<f64>,
    /// Axis-angle per non-root joint, indexed `joint - 1`.
    pub joint_rotations: Vec<Vector3<f64>>,
    pub translation: Vector3<f64>,
}

impl BodyPose {
    pub fn zero(joint_count: usize) -> Self {
        Self {
            global_orient: Vector3::zeros(),
            joint_rotations: vec![Vector3::zeros(); joint_count.saturating_sub(1)],
            translation: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.global_orient.iter().all(|x| x.is_finite())
            && self.translation.iter().all(|x| x.is_finite())
            && self
                .joint_rotations
                .iter()
                .all(|r| r.iter().all(|x| x.is_finite()))
    }
}

/// Shape coefficients (dimensionless blendshape weights).
#[derive(Debug, Clone, PartialEq)]
pub struct BodyShape {
    pub betas: Vec<f64>,
}

impl BodyShape {
    pub fn zeros(dims: usize) -> Self {
        Self {
            betas: vec![0.0; dims],
        }
    }
}

/// Association of a marker with a body segment and an optional seed vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSite {
    /// A joint name from the kinematic tree identifying the rigid segment.
    pub segment: String,
    pub seed_vertex: Option<usize>,
}

/// User-defined marker layout: marker name → segment (+ optional seed vertex).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkerLayout {
    pub sites: BTreeMap<String, MarkerSite>,
}

impl MarkerLayout {
    pub fn validate(&self, model: &BodyModelData) -> Result<()> {
        for (name, site) in &self.sites {
            if model.tree.joint_index(&site.segment).is_none() {
                return Err(Error::InvalidInput(format!(
                    "marker '{name}' references unknown segment '{}'",
                    site.segment
                )));
            }
            if let Some(v) = site.seed_vertex {
                if v >= model.vertex_count() {
                    return Err(Error::InvalidInput(format!(
                        "marker '{name}' seed vertex {v} out of range"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Template mesh, blendshapes, regressor, skinning weights and skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyModelData {
    pub template: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// `shape_basis[b][v]`: vertex displacement per unit of beta `b`.
    pub shape_basis: Vec<Vec<Vector3<f64>>>,
    /// `joint_regressor[j]`: sparse (vertex, weight) rows summing to 1.
    pub joint_regressor: Vec<Vec<(usize, f64)>>,
    /// `skin_weights[v]`: sparse (joint, weight) rows summing to 1.
    pub skin_weights: Vec<Vec<(usize, f64)>>,
    pub tree: KinematicTree,
    rest_joints_template: Vec<Vector3<f64>>,
    /// `joint_shape_basis[b][j]` = regressor · shape_basis[b].
    joint_shape_basis: Vec<Vec<Vector3<f64>>>,
    template_normals: Vec<Vector3<f64>>,
}

impl BodyModelData {
    pub fn new(
        template: Vec<Vector3<f64>>,
        faces: Vec<[usize; 3]>,
        shape_basis: Vec<Vec<Vector3<f64>>>,
        joint_regressor: Vec<Vec<(usize, f64)>>,
        skin_weights: Vec<Vec<(usize, f64)>>,
        tree: KinematicTree,
    ) -> Result<Self> {
        tree.validate()?;
        let v_count = template.len();
        let j_count = tree.joint_count();
        if skin_weights.len() != v_count {
            return Err(Error::dimension("skin_weights rows", v_count, skin_weights.len()));
        }
        if joint_regressor.len() != j_count {
            return Err(Error::dimension(
                "joint_regressor rows",
                j_count,
                joint_regressor.len(),
            ));
        }
        for (b, basis) in shape_basis.iter().enumerate() {
            if basis.len() != v_count {
                return Err(Error::dimension(
                    format!("shape_basis[{b}]"),
                    v_count,
                    basis.len(),
                ));
            }
        }
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= v_count) {
                return Err(Error::InvalidModel(format!("face {i} indexes past vertex count")));
            }
            let area2 = (template[f[1]] - template[f[0]])
                .cross(&(template[f[2]] - template[f[0]]))
                .norm();
            if area2 < 1e-14 {
                return Err(Error::InvalidModel(format!("face {i} has zero area at rest")));
            }
        }
        check_partition_rows(&skin_weights, j_count, "skin_weights")?;
        check_partition_rows(&joint_regressor, v_count, "joint_regressor")?;

        let rest_joints_template = regress_joints(&joint_regressor, &template);
        let joint_shape_basis = shape_basis
            .iter()
            .map(|basis| regress_joints(&joint_regressor, basis))
            .collect();
        let template_normals = vertex_normals(&template, &faces).normals;

        Ok(Self {
            template,
            faces,
            shape_basis,
            joint_regressor,
            skin_weights,
            tree,
            rest_joints_template,
            joint_shape_basis,
            template_normals,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.template.len()
    }

    pub fn joint_count(&self) -> usize {
        self.tree.joint_count()
    }

    pub fn shape_dims(&self) -> usize {
        self.shape_basis.len()
    }

    /// Unit normals of the rest template (zero shape); zero for isolated vertices.
    pub fn template_normals(&self) -> &[Vector3<f64>] {
        &self.template_normals
    }

    /// Rest joint locations at zero shape.
    pub fn rest_joints_template(&self) -> &[Vector3<f64>] {
        &self.rest_joints_template
    }

    /// Per-beta displacement of each rest joint.
    pub fn joint_shape_basis(&self) -> &[Vec<Vector3<f64>>] {
        &self.joint_shape_basis
    }

    pub fn check_shape(&self, shape: &BodyShape) -> Result<()> {
        if shape.betas.len() != self.shape_dims() {
            return Err(Error::dimension("betas", self.shape_dims(), shape.betas.len()));
        }
        Ok(())
    }

    pub fn check_pose(&self, pose: &BodyPose) -> Result<()> {
        if pose.joint_rotations.len() + 1 != self.joint_count() {
            return Err(Error::dimension(
                "joint_rotations",
                self.joint_count() - 1,
                pose.joint_rotations.len(),
            ));
        }
        Ok(())
    }

    /// Rest vertex positions under the given shape.
    pub fn rest_vertices(&self, shape: &BodyShape) -> Result<Vec<Vector3<f64>>> {
        self.check_shape(shape)?;
        let mut verts = self.template.clone();
        for (b, beta) in shape.betas.iter().enumerate() {
            if *beta == 0.0 {
                continue;
            }
            for (v, disp) in self.shape_basis[b].iter().enumerate() {
                verts[v] += disp * *beta;
            }
        }
        Ok(verts)
    }

    /// Rest joint positions under the given shape.
    pub fn rest_joints(&self, shape: &BodyShape) -> Result<Vec<Vector3<f64>>> {
        self.check_shape(shape)?;
        let mut joints = self.rest_joints_template.clone();
        for (b, beta) in shape.betas.iter().enumerate() {
            if *beta == 0.0 {
                continue;
            }
            for (j, disp) in self.joint_shape_basis[b].iter().enumerate() {
                joints[j] += disp * *beta;
            }
        }
        Ok(joints)
    }
}

fn check_partition_rows(rows: &[Vec<(usize, f64)>], max_index: usize, what: &str) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        let mut sum = 0.0;
        for &(idx, w) in row {
            if idx >= max_index {
                return Err(Error::InvalidModel(format!(
                    "{what} row {i} indexes {idx}, max is {max_index}"
                )));
            }
            if w < 0.0 {
                return Err(Error::InvalidModel(format!("{what} row {i} has negative weight")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidModel(format!(
                "{what} row {i} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

fn regress_joints(regressor: &[Vec<(usize, f64)>], points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    regressor
        .iter()
        .map(|row| {
            row.iter()
                .fold(Vector3::zeros(), |acc, &(v, w)| acc + points[v] * w)
        })
        .collect()
}

/// World transform per joint.
///
/// The root is `x ↦ R(global_orient)·x + translation`; every child composes
/// its parent with a local rotation about the shaped rest joint position.
pub fn forward_kinematics(
    pose: &BodyPose,
    shape: &BodyShape,
    model: &BodyModelData,
) -> Result<Vec<RigidTransform>> {
    model.check_pose(pose)?;
    let rest_joints = model.rest_joints(shape)?;
    let j_count = model.joint_count();
    let mut transforms = Vec::with_capacity(j_count);
    transforms.push(RigidTransform::new(
        rotation_from_axis_angle(&pose.global_orient),
        pose.translation,
    ));
    for j in 1..j_count {
        let parent = model.tree.parent[j].expect("non-root joint has a parent");
        let local = RigidTransform::rotation_about(
            rotation_from_axis_angle(&pose.joint_rotations[j - 1]),
            &rest_joints[j],
        );
        transforms.push(transforms[parent].compose(&local));
    }
    Ok(transforms)
}

/// World-space joint positions for a pose (the transforms applied to the
/// shaped rest joints).
pub fn joint_positions(
    pose: &BodyPose,
    shape: &BodyShape,
    model: &BodyModelData,
) -> Result<Vec<Vector3<f64>>> {
    let transforms = forward_kinematics(pose, shape, model)?;
    let rest_joints = model.rest_joints(shape)?;
    Ok(transforms
        .iter()
        .zip(rest_joints.iter())
        .map(|(t, j)| t.apply(j))
        .collect())
}

/// Linear blend skinning of the full mesh.
pub fn skin_vertices(
    pose: &BodyPose,
    shape: &BodyShape,
    model: &BodyModelData,
) -> Result<Vec<Vector3<f64>>> {
    let transforms = forward_kinematics(pose, shape, model)?;
    let rest = model.rest_vertices(shape)?;
    Ok(skin_vertex_subset(model, &transforms, &rest, None))
}

/// Skin a subset of vertices (all when `subset` is None) given precomputed
/// joint transforms and shaped rest vertices.
pub fn skin_vertex_subset(
    model: &BodyModelData,
    transforms: &[RigidTransform],
    rest_vertices: &[Vector3<f64>],
    subset: Option<&[usize]>,
) -> Vec<Vector3<f64>> {
    let one = |v: usize| -> Vector3<f64> {
        let rest = rest_vertices[v];
        model.skin_weights[v]
            .iter()
            .fold(Vector3::zeros(), |acc, &(j, w)| {
                acc + transforms[j].apply(&rest) * w
            })
    };
    match subset {
        Some(idx) => idx.iter().map(|&v| one(v)).collect(),
        None => (0..rest_vertices.len()).map(one).collect(),
    }
}

/// Blend of the per-joint rotations for one vertex, applied to its template
/// normal and renormalized. This is the differentiable surface direction used
/// for synthetic-marker placement during fitting.
pub fn skinned_normal(
    model: &BodyModelData,
    transforms: &[RigidTransform],
    vertex: usize,
) -> Vector3<f64> {
    let blended = model.skin_weights[vertex]
        .iter()
        .fold(Matrix3::zeros(), |acc, &(j, w)| acc + transforms[j].rot * w);
    let n = blended * model.template_normals()[vertex];
    let len = n.norm();
    if len > 1e-12 {
        n / len
    } else {
        Vector3::zeros()
    }
}

/// Result of vertex-normal computation with degeneracy diagnostics.
#[derive(Debug, Clone)]
pub struct VertexNormals {
    pub normals: Vec<Vector3<f64>>,
    /// Faces with (numerically) zero area, excluded from the average.
    pub degenerate_faces: Vec<usize>,
    /// Vertices without any incident non-degenerate face; their normal is zero.
    pub isolated_vertices: Vec<usize>,
}

/// Area-weighted vertex normals.
pub fn vertex_normals(vertices: &[Vector3<f64>], faces: &[[usize; 3]]) -> VertexNormals {
    let mut acc = vec![Vector3::<f64>::zeros(); vertices.len()];
    let mut degenerate = Vec::new();
    for (i, f) in faces.iter().enumerate() {
        let e1 = vertices[f[1]] - vertices[f[0]];
        let e2 = vertices[f[2]] - vertices[f[0]];
        // Cross product length is twice the face area, so this sum is the
        // area-weighted normal average up to a constant.
        let n = e1.cross(&e2);
        if n.norm() < 1e-14 {
            degenerate.push(i);
            continue;
        }
        for &v in f {
            acc[v] += n;
        }
    }
    let mut isolated = Vec::new();
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(v, n)| {
            let len = n.norm();
            if len < 1e-14 {
                isolated.push(v);
                Vector3::zeros()
            } else {
                n / len
            }
        })
        .collect();
    VertexNormals {
        normals,
        degenerate_faces: degenerate,
        isolated_vertices: isolated,
    }
}

/// Synthetic marker positions: vertex plus `offset` along its normal.
pub fn synthetic_markers(
    posed_vertices: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    correspondence: &BTreeMap<String, usize>,
    offset: f64,
) -> Result<BTreeMap<String, Vector3<f64>>> {
    if offset < 0.0 {
        return Err(Error::InvalidInput(format!("marker offset must be >= 0, got {offset}")));
    }
    if posed_vertices.len() != normals.len() {
        return Err(Error::dimension("normals", posed_vertices.len(), normals.len()));
    }
    let mut out = BTreeMap::new();
    for (name, &v) in correspondence {
        if v >= posed_vertices.len() {
            return Err(Error::InvalidInput(format!(
                "marker '{name}' references vertex {v}, mesh has {}",
                posed_vertices.len()
            )));
        }
        out.insert(name.clone(), posed_vertices[v] + normals[v] * offset);
    }
    Ok(out)
}

/// Default skin offset for synthetic markers, in meters.
pub const DEFAULT_MARKER_OFFSET: f64 = 0.0095;

/// Vertex adjacency (1-ring neighborhoods) from the face list.
pub fn vertex_adjacency(vertex_count: usize, faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); vertex_count];
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            if !adj[a].contains(&b) {
                adj[a].push(b);
            }
            if !adj[b].contains(&a) {
                adj[b].push(a);
            }
        }
    }
    for row in &mut adj {
        row.sort_unstable();
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix4, Rotation3, Vector4};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn test_model() -> BodyModelData {
        build_test_body(&TestBodyConfig::default()).unwrap()
    }

    fn random_pose(model: &BodyModelData, rng: &mut StdRng, scale: f64) -> BodyPose {
        let mut pose = BodyPose::zero(model.joint_count());
        pose.global_orient = Vector3::new(rng.random(), rng.random(), rng.random()) * scale;
        pose.translation = Vector3::new(rng.random(), rng.random(), rng.random());
        for r in &mut pose.joint_rotations {
            *r = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ) * scale;
        }
        pose
    }

    #[test]
    fn fk_zero_pose_matches_regressed_joints() {
        let model = test_model();
        let pose = BodyPose::zero(model.joint_count());
        let shape = BodyShape::zeros(model.shape_dims());
        let transforms = forward_kinematics(&pose, &shape, &model).unwrap();
        for t in &transforms {
            assert_abs_diff_eq!(t.rot, Matrix3::identity(), epsilon = 1e-12);
            assert_abs_diff_eq!(t.trans, Vector3::zeros(), epsilon = 1e-12);
        }
        let positions = joint_positions(&pose, &shape, &model).unwrap();
        for (p, q) in positions.iter().zip(model.rest_joints_template().iter()) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-9);
        }
    }

    #[test]
    fn fk_global_rotation_moves_joints_rigidly() {
        let model = test_model();
        let mut pose = BodyPose::zero(model.joint_count());
        pose.global_orient = Vector3::new(0.0, 0.0, std::f64::consts::PI);
        pose.translation = Vector3::new(0.5, -0.2, 1.0);
        let shape = BodyShape::zeros(model.shape_dims());
        let positions = joint_positions(&pose, &shape, &model).unwrap();
        let r = rotation_from_axis_angle(&pose.global_orient);
        for (j, p) in positions.iter().enumerate() {
            let expected = r * model.rest_joints_template()[j] + pose.translation;
            assert_abs_diff_eq!(p, &expected, epsilon = 1e-9);
        }
    }

    /// Independent oracle: compose homogeneous 4x4 matrices along each
    /// joint's ancestor chain, built directly from nalgebra rotations.
    fn fk_oracle(pose: &BodyPose, shape: &BodyShape, model: &BodyModelData) -> Vec<Matrix4<f64>> {
        let rest = model.rest_joints(shape).unwrap();
        let homog = |r: Rotation3<f64>, t: Vector3<f64>| -> Matrix4<f64> {
            let mut m = Matrix4::identity();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
            m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
            m
        };
        let translate = |t: Vector3<f64>| homog(Rotation3::identity(), t);
        let mut out = Vec::new();
        for j in 0..model.joint_count() {
            // Build the chain root -> j.
            let mut chain = vec![j];
            let mut cur = j;
            while let Some(p) = model.tree.parent[cur] {
                chain.push(p);
                cur = p;
            }
            chain.reverse();
            let mut m = translate(pose.translation)
                * homog(Rotation3::from_scaled_axis(pose.global_orient), Vector3::zeros());
            for &k in chain.iter().skip(1) {
                let local = translate(rest[k])
                    * homog(
                        Rotation3::from_scaled_axis(pose.joint_rotations[k - 1]),
                        Vector3::zeros(),
                    )
                    * translate(-rest[k]);
                m *= local;
            }
            out.push(m);
        }
        out
    }

    #[test]
    fn fk_matches_matrix_chain_oracle() {
        let model = test_model();
        let mut rng = StdRng::seed_from_u64(7);
        let shape = BodyShape {
            betas: (0..model.shape_dims()).map(|_| rng.random::<f64>() - 0.5).collect(),
        };
        let pose = random_pose(&model, &mut rng, 1.0);
        let transforms = forward_kinematics(&pose, &shape, &model).unwrap();
        let oracle = fk_oracle(&pose, &shape, &model);
        for (t, m) in transforms.iter().zip(oracle.iter()) {
            let p = Vector3::new(0.123, -0.456, 0.789);
            let ours = t.apply(&p);
            let theirs = m * Vector4::new(p.x, p.y, p.z, 1.0);
            assert_abs_diff_eq!(ours.x, theirs.x, epsilon = 1e-9);
            assert_abs_diff_eq!(ours.y, theirs.y, epsilon = 1e-9);
            assert_abs_diff_eq!(ours.z, theirs.z, epsilon = 1e-9);
        }
    }

    #[test]
    fn skinning_identity_at_rest() {
        let model = test_model();
        let pose = BodyPose::zero(model.joint_count());
        let shape = BodyShape::zeros(model.shape_dims());
        let posed = skin_vertices(&pose, &shape, &model).unwrap();
        for (p, t) in posed.iter().zip(model.template.iter()) {
            assert_abs_diff_eq!(p, t, epsilon = 1e-12);
        }
    }

    #[test]
    fn skinning_reduces_to_rigid_motion() {
        let model = test_model();
        let mut pose = BodyPose::zero(model.joint_count());
        pose.global_orient = Vector3::new(0.4, -0.3, 0.9);
        pose.translation = Vector3::new(1.0, 2.0, 3.0);
        let shape = BodyShape::zeros(model.shape_dims());
        let posed = skin_vertices(&pose, &shape, &model).unwrap();
        let r = rotation_from_axis_angle(&pose.global_orient);
        for (p, t) in posed.iter().zip(model.template.iter()) {
            let expected = r * t + pose.translation;
            assert_abs_diff_eq!(p, &expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn skinning_matches_double_loop_oracle() {
        let model = test_model();
        let mut rng = StdRng::seed_from_u64(21);
        let shape = BodyShape {
            betas: (0..model.shape_dims()).map(|_| rng.random::<f64>() - 0.5).collect(),
        };
        let pose = random_pose(&model, &mut rng, 0.8);
        let posed = skin_vertices(&pose, &shape, &model).unwrap();

        // Brute force: dense weight matrix, explicit per-vertex, per-joint loop.
        let transforms = forward_kinematics(&pose, &shape, &model).unwrap();
        let rest = model.rest_vertices(&shape).unwrap();
        let mut dense = vec![vec![0.0; model.joint_count()]; model.vertex_count()];
        for (v, row) in model.skin_weights.iter().enumerate() {
            for &(j, w) in row {
                dense[v][j] += w;
            }
        }
        for v in 0..model.vertex_count() {
            let mut expected = Vector3::zeros();
            for j in 0..model.joint_count() {
                let w = dense[v][j];
                if w != 0.0 {
                    expected += (transforms[j].rot * rest[v] + transforms[j].trans) * w;
                }
            }
            assert_abs_diff_eq!(posed[v], expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn normals_on_subdivided_plane_are_axis_aligned() {
        // 3x3 vertex grid in the z=0 plane; the center vertex is interior.
        let mut vertices = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                vertices.push(Vector3::new(x as f64, y as f64, 0.0));
            }
        }
        let mut faces = Vec::new();
        for y in 0..2 {
            for x in 0..2 {
                let a = y * 3 + x;
                let b = a + 1;
                let c = a + 3;
                let d = a + 4;
                faces.push([a, b, d]);
                faces.push([a, d, c]);
            }
        }
        let res = vertex_normals(&vertices, &faces);
        assert!(res.degenerate_faces.is_empty());
        assert!(res.isolated_vertices.is_empty());
        let center = res.normals[4];
        assert_abs_diff_eq!(center, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    }

    fn uv_sphere(n_lat: usize, n_lon: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
        let mut vertices = vec![Vector3::new(0.0, 0.0, 1.0)];
        for i in 1..n_lat {
            let phi = std::f64::consts::PI * i as f64 / n_lat as f64;
            for k in 0..n_lon {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / n_lon as f64;
                vertices.push(Vector3::new(
                    phi.sin() * theta.cos(),
                    phi.sin() * theta.sin(),
                    phi.cos(),
                ));
            }
        }
        vertices.push(Vector3::new(0.0, 0.0, -1.0));
        let south = vertices.len() - 1;
        let ring = |i: usize, k: usize| 1 + (i - 1) * n_lon + (k % n_lon);
        let mut faces = Vec::new();
        for k in 0..n_lon {
            faces.push([0, ring(1, k), ring(1, k + 1)]);
            faces.push([south, ring(n_lat - 1, k + 1), ring(n_lat - 1, k)]);
        }
        for i in 1..n_lat - 1 {
            for k in 0..n_lon {
                let a = ring(i, k);
                let b = ring(i, k + 1);
                let c = ring(i + 1, k);
                let d = ring(i + 1, k + 1);
                faces.push([a, d, b]);
                faces.push([a, c, d]);
            }
        }
        (vertices, faces)
    }

    #[test]
    fn sphere_normals_are_radial_within_two_degrees() {
        let (vertices, faces) = uv_sphere(24, 32);
        let res = vertex_normals(&vertices, &faces);
        for (v, n) in vertices.iter().zip(res.normals.iter()) {
            let radial = v.normalize();
            let cos = n.dot(&radial).clamp(-1.0, 1.0);
            let deg = cos.acos().to_degrees();
            assert!(deg < 2.0, "normal off by {deg} degrees");
        }
    }

    #[test]
    fn degenerate_face_is_excluded() {
        let vertices = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let faces = vec![[0, 1, 2], [0, 1, 1]];
        let res = vertex_normals(&vertices, &faces);
        assert_eq!(res.degenerate_faces, vec![1]);
        assert_abs_diff_eq!(res.normals[0], Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn synthetic_markers_offset_semantics() {
        let (vertices, faces) = uv_sphere(24, 32);
        let res = vertex_normals(&vertices, &faces);
        let mut corr = BTreeMap::new();
        corr.insert("a".to_string(), 5usize);
        corr.insert("b".to_string(), 100usize);

        let zero = synthetic_markers(&vertices, &res.normals, &corr, 0.0).unwrap();
        assert_abs_diff_eq!(zero["a"], vertices[5], epsilon = 1e-15);

        let offset = DEFAULT_MARKER_OFFSET;
        let placed = synthetic_markers(&vertices, &res.normals, &corr, offset).unwrap();
        for (name, &v) in &corr {
            // Construction: marker sits exactly `offset` from its vertex.
            assert_abs_diff_eq!((placed[name] - vertices[v]).norm(), offset, epsilon = 1e-12);
            // On a unit sphere the radius grows by ~offset (normals nearly radial).
            assert_abs_diff_eq!(placed[name].norm(), 1.0 + offset, epsilon = 2e-4);
        }

        let mut bad = BTreeMap::new();
        bad.insert("x".to_string(), vertices.len());
        assert!(synthetic_markers(&vertices, &res.normals, &bad, offset).is_err());
    }

    #[test]
    fn lbs_rigid_motion_equivariance_property() {
        let model = test_model();
        let shape = BodyShape::zeros(model.shape_dims());
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..5 {
            let mut pose = BodyPose::zero(model.joint_count());
            pose.global_orient =
                Vector3::new(rng.random::<f64>(), rng.random(), rng.random()) * 2.0;
            pose.translation = Vector3::new(rng.random(), rng.random(), rng.random());
            let posed = skin_vertices(&pose, &shape, &model).unwrap();
            let r = rotation_from_axis_angle(&pose.global_orient);
            for (p, t) in posed.iter().zip(model.template.iter()) {
                assert_abs_diff_eq!(p, &(r * t + pose.translation), epsilon = 1e-9);
            }
        }
    }
}
