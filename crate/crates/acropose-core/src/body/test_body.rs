//! Procedural capsule-limb humanoid used for tests and demos.
//!
//! Licensed body-model weight files cannot ship with the repository, so this
//! builder produces a self-contained model with the same structure: a 22-joint
//! skeleton (including nose/eye/ear joints so the standard 17-keypoint layout
//! resolves to real joints), capsule segments with smooth skinning blends, and
//! a joint regressor whose rows average one vertex ring centered exactly on
//! each joint.

use nalgebra::Vector3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{vertex_normals, BodyModelData, KinematicTree};
use crate::error::{Error, Result};
use crate::math::smoothstep;

/// Segment lengths in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct LimbLengths {
    pub hip_width: f64,
    pub hip_drop: f64,
    pub thigh: f64,
    pub shin: f64,
    pub foot: f64,
    pub lower_torso: f64,
    pub upper_torso: f64,
    pub chest_to_neck: f64,
    pub neck_to_head: f64,
    pub head_height: f64,
    pub shoulder_width: f64,
    pub shoulder_drop: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub hand: f64,
}

impl Default for LimbLengths {
    fn default() -> Self {
        Self {
            hip_width: 0.18,
            hip_drop: 0.05,
            thigh: 0.45,
            shin: 0.45,
            foot: 0.15,
            lower_torso: 0.15,
            upper_torso: 0.17,
            chest_to_neck: 0.18,
            neck_to_head: 0.08,
            head_height: 0.17,
            shoulder_width: 0.36,
            shoulder_drop: 0.05,
            upper_arm: 0.27,
            forearm: 0.25,
            hand: 0.08,
        }
    }
}

/// Test-body generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TestBodyConfig {
    pub limbs: LimbLengths,
    /// Vertices per capsule ring (>= 3).
    pub radial_segments: usize,
    /// Rings per capsule including both end rings (>= 2).
    pub rings_per_capsule: usize,
    /// Number of shape blendshapes. Dimension 0 is global isotropic scale,
    /// dimension 1 vertical stretch, further dimensions seeded smooth fields.
    pub shape_dims: usize,
    pub seed: u64,
}

impl Default for TestBodyConfig {
    fn default() -> Self {
        Self {
            limbs: LimbLengths::default(),
            radial_segments: 8,
            rings_per_capsule: 6,
            shape_dims: 2,
            seed: 0,
        }
    }
}

pub const JOINT_NAMES: [&str; 22] = [
    "pelvis",
    "spine",
    "l_hip",
    "r_hip",
    "chest",
    "l_knee",
    "r_knee",
    "neck",
    "l_shoulder",
    "r_shoulder",
    "head",
    "l_elbow",
    "r_elbow",
    "l_ankle",
    "r_ankle",
    "l_wrist",
    "r_wrist",
    "nose",
    "l_eye",
    "r_eye",
    "l_ear",
    "r_ear",
];

const JOINT_PARENTS: [Option<usize>; 22] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(4),
    Some(4),
    Some(7),
    Some(8),
    Some(9),
    Some(5),
    Some(6),
    Some(11),
    Some(12),
    Some(10),
    Some(10),
    Some(10),
    Some(10),
    Some(10),
];

struct MeshBuilder {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    /// (joint, weight) rows per vertex.
    weights: Vec<Vec<(usize, f64)>>,
    /// Regressor ring per joint, filled as capsules are added.
    joint_rings: Vec<Option<Vec<usize>>>,
    radial: usize,
    rings: usize,
}

impl MeshBuilder {
    fn new(joint_count: usize, radial: usize, rings: usize) -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
            weights: Vec::new(),
            joint_rings: vec![None; joint_count],
            radial,
            rings,
        }
    }

    /// Capsule from `from` to `to`. Skin weights blend from `joint_a` at the
    /// near end into `joint_b` (when given) at the far end. `regress_a` /
    /// `regress_b` claim the end rings as regressor rings for those joints.
    #[allow(clippy::too_many_arguments)]
    fn add_capsule(
        &mut self,
        from: Vector3<f64>,
        to: Vector3<f64>,
        radius: f64,
        joint_a: usize,
        joint_b: Option<usize>,
        regress_a: Option<usize>,
        regress_b: Option<usize>,
    ) {
        let axis_full = to - from;
        let length = axis_full.norm();
        assert!(length > 1e-9, "degenerate capsule");
        let axis = axis_full / length;
        let u = pick_perpendicular(&axis);
        let v = axis.cross(&u);

        let base = self.vertices.len();
        let mut ring_start = Vec::with_capacity(self.rings);
        for i in 0..self.rings {
            let s = i as f64 / (self.rings - 1) as f64;
            let center = from + axis * (length * s);
            ring_start.push(self.vertices.len());
            for k in 0..self.radial {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / self.radial as f64;
                self.vertices.push(center + (u * phi.cos() + v * phi.sin()) * radius);
                self.weights.push(blend_weights(joint_a, joint_b, s));
            }
        }
        let apex0 = self.vertices.len();
        self.vertices.push(from - axis * radius);
        self.weights.push(blend_weights(joint_a, joint_b, 0.0));
        let apex1 = self.vertices.len();
        self.vertices.push(to + axis * radius);
        self.weights.push(blend_weights(joint_a, joint_b, 1.0));

        let ring = |i: usize, k: usize| ring_start[i] + (k % self.radial);
        for i in 0..self.rings - 1 {
            for k in 0..self.radial {
                let a = ring(i, k);
                let b = ring(i, k + 1);
                let c = ring(i + 1, k);
                let d = ring(i + 1, k + 1);
                self.faces.push([a, b, d]);
                self.faces.push([a, d, c]);
            }
        }
        for k in 0..self.radial {
            self.faces.push([apex0, ring(0, k + 1), ring(0, k)]);
            self.faces.push([apex1, ring(self.rings - 1, k), ring(self.rings - 1, k + 1)]);
        }

        if let Some(j) = regress_a {
            self.claim_ring(j, (base..base + self.radial).collect());
        }
        if let Some(j) = regress_b {
            let last = ring_start[self.rings - 1];
            self.claim_ring(j, (last..last + self.radial).collect());
        }
    }

    /// Small octahedron centered on a joint (head features). Fully skinned to
    /// `joint`; its six vertices double as the joint's regressor ring.
    fn add_stub(&mut self, center: Vector3<f64>, radius: f64, joint: usize) {
        let base = self.vertices.len();
        let dirs = [
            Vector3::x(),
            -Vector3::x(),
            Vector3::y(),
            -Vector3::y(),
            Vector3::z(),
            -Vector3::z(),
        ];
        for d in dirs {
            self.vertices.push(center + d * radius);
            self.weights.push(vec![(joint, 1.0)]);
        }
        let f = |a: usize, b: usize, c: usize| [base + a, base + b, base + c];
        self.faces.extend_from_slice(&[
            f(0, 2, 4),
            f(2, 1, 4),
            f(1, 3, 4),
            f(3, 0, 4),
            f(2, 0, 5),
            f(1, 2, 5),
            f(3, 1, 5),
            f(0, 3, 5),
        ]);
        self.claim_ring(joint, (base..base + 6).collect());
    }

    fn claim_ring(&mut self, joint: usize, verts: Vec<usize>) {
        if self.joint_rings[joint].is_none() {
            self.joint_rings[joint] = Some(verts);
        }
    }
}

fn blend_weights(joint_a: usize, joint_b: Option<usize>, s: f64) -> Vec<(usize, f64)> {
    match joint_b {
        None => vec![(joint_a, 1.0)],
        Some(b) => {
            let wb = smoothstep((s - 0.55) / 0.4);
            if wb <= 0.0 {
                vec![(joint_a, 1.0)]
            } else if wb >= 1.0 {
                vec![(b, 1.0)]
            } else {
                vec![(joint_a, 1.0 - wb), (b, wb)]
            }
        }
    }
}

fn pick_perpendicular(axis: &Vector3<f64>) -> Vector3<f64> {
    let candidate = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    (candidate - axis * candidate.dot(axis)).normalize()
}

/// Build the procedural test body. Deterministic per configuration.
pub fn build_test_body(config: &TestBodyConfig) -> Result<BodyModelData> {
    if config.radial_segments < 3 || config.rings_per_capsule < 2 {
        return Err(Error::InvalidInput(format!(
            "infeasible mesh resolution: radial_segments={} rings_per_capsule={} (need >=3 and >=2)",
            config.radial_segments, config.rings_per_capsule
        )));
    }
    let per_segment = config.radial_segments * config.rings_per_capsule + 2;
    if per_segment < 8 {
        return Err(Error::InvalidInput(format!(
            "infeasible mesh resolution: {per_segment} vertices per segment (need >= 8)"
        )));
    }
    let lb = &config.limbs;
    for (name, len) in [
        ("thigh", lb.thigh),
        ("shin", lb.shin),
        ("upper_arm", lb.upper_arm),
        ("forearm", lb.forearm),
        ("lower_torso", lb.lower_torso),
        ("head_height", lb.head_height),
    ] {
        if len <= 0.02 {
            return Err(Error::InvalidInput(format!("infeasible limb length {name}={len}")));
        }
    }

    let names: Vec<String> = JOINT_NAMES.iter().map(|s| s.to_string()).collect();
    let tree = KinematicTree {
        parent: JOINT_PARENTS.to_vec(),
        names,
    };
    let j = |name: &str| JOINT_NAMES.iter().position(|n| *n == name).unwrap();

    // Joint locations in the rest template, pelvis at the origin, +z up,
    // T-pose with arms along ±x and the body facing +y.
    let mut pos = vec![Vector3::zeros(); JOINT_NAMES.len()];
    pos[j("pelvis")] = Vector3::zeros();
    pos[j("spine")] = Vector3::new(0.0, 0.0, lb.lower_torso);
    pos[j("chest")] = pos[j("spine")] + Vector3::new(0.0, 0.0, lb.upper_torso);
    pos[j("neck")] = pos[j("chest")] + Vector3::new(0.0, 0.0, lb.chest_to_neck);
    pos[j("head")] = pos[j("neck")] + Vector3::new(0.0, 0.0, lb.neck_to_head);
    let head_top = pos[j("head")] + Vector3::new(0.0, 0.0, lb.head_height);
    let head_r = 0.09;
    pos[j("nose")] = pos[j("head")] + Vector3::new(0.0, head_r + 0.012, 0.045);
    pos[j("l_eye")] = pos[j("head")] + Vector3::new(0.035, head_r - 0.006, 0.08);
    pos[j("r_eye")] = pos[j("head")] + Vector3::new(-0.035, head_r - 0.006, 0.08);
    pos[j("l_ear")] = pos[j("head")] + Vector3::new(head_r - 0.002, 0.0, 0.05);
    pos[j("r_ear")] = pos[j("head")] + Vector3::new(-(head_r - 0.002), 0.0, 0.05);
    for side in ["l", "r"] {
        let sx = if side == "l" { 1.0 } else { -1.0 };
        let hip = Vector3::new(sx * lb.hip_width / 2.0, 0.0, -lb.hip_drop);
        pos[j(&format!("{side}_hip"))] = hip;
        pos[j(&format!("{side}_knee"))] = hip + Vector3::new(0.005 * sx, 0.0, -lb.thigh);
        pos[j(&format!("{side}_ankle"))] =
            pos[j(&format!("{side}_knee"))] + Vector3::new(0.005 * sx, 0.0, -lb.shin);
        let shoulder = Vector3::new(
            sx * lb.shoulder_width / 2.0,
            0.0,
            pos[j("neck")].z - lb.shoulder_drop,
        );
        pos[j(&format!("{side}_shoulder"))] = shoulder;
        pos[j(&format!("{side}_elbow"))] = shoulder + Vector3::new(sx * lb.upper_arm, 0.0, 0.0);
        pos[j(&format!("{side}_wrist"))] =
            pos[j(&format!("{side}_elbow"))] + Vector3::new(sx * lb.forearm, 0.0, 0.0);
    }

    let mut mesh = MeshBuilder::new(
        JOINT_NAMES.len(),
        config.radial_segments,
        config.rings_per_capsule,
    );

    // Torso column. The pelvis ring is claimed by the first capsule's near end.
    mesh.add_capsule(pos[j("pelvis")], pos[j("spine")], 0.11, j("pelvis"), Some(j("spine")), Some(j("pelvis")), Some(j("spine")));
    mesh.add_capsule(pos[j("spine")], pos[j("chest")], 0.12, j("spine"), Some(j("chest")), None, Some(j("chest")));
    mesh.add_capsule(pos[j("chest")], pos[j("neck")], 0.095, j("chest"), Some(j("neck")), None, Some(j("neck")));
    mesh.add_capsule(pos[j("neck")], pos[j("head")], 0.05, j("neck"), Some(j("head")), None, Some(j("head")));
    mesh.add_capsule(pos[j("head")], head_top, head_r, j("head"), None, None, None);

    for side in ["l", "r"] {
        let hip = j(&format!("{side}_hip"));
        let knee = j(&format!("{side}_knee"));
        let ankle = j(&format!("{side}_ankle"));
        let shoulder = j(&format!("{side}_shoulder"));
        let elbow = j(&format!("{side}_elbow"));
        let wrist = j(&format!("{side}_wrist"));
        let sx = if side == "l" { 1.0 } else { -1.0 };

        mesh.add_capsule(pos[j("pelvis")], pos[hip], 0.075, j("pelvis"), Some(hip), None, Some(hip));
        mesh.add_capsule(pos[hip], pos[knee], 0.07, hip, Some(knee), None, Some(knee));
        mesh.add_capsule(pos[knee], pos[ankle], 0.05, knee, Some(ankle), None, Some(ankle));
        let foot_tip = pos[ankle] + Vector3::new(0.0, lb.foot, -0.02);
        mesh.add_capsule(pos[ankle], foot_tip, 0.035, ankle, None, None, None);

        mesh.add_capsule(pos[j("chest")], pos[shoulder], 0.05, j("chest"), Some(shoulder), None, Some(shoulder));
        mesh.add_capsule(pos[shoulder], pos[elbow], 0.045, shoulder, Some(elbow), None, Some(elbow));
        mesh.add_capsule(pos[elbow], pos[wrist], 0.035, elbow, Some(wrist), None, Some(wrist));
        let hand_tip = pos[wrist] + Vector3::new(sx * lb.hand, 0.0, 0.0);
        mesh.add_capsule(pos[wrist], hand_tip, 0.03, wrist, None, None, None);
    }

    for feature in ["nose", "l_eye", "r_eye", "l_ear", "r_ear"] {
        mesh.add_stub(pos[j(feature)], 0.015, j(feature));
    }

    let joint_regressor: Vec<Vec<(usize, f64)>> = mesh
        .joint_rings
        .iter()
        .enumerate()
        .map(|(joint, ring)| {
            let ring = ring
                .as_ref()
                .unwrap_or_else(|| panic!("no regressor ring for joint {joint}"));
            let w = 1.0 / ring.len() as f64;
            ring.iter().map(|&v| (v, w)).collect()
        })
        .collect();

    let template = mesh.vertices;
    let shape_basis = build_shape_basis(config, &template, &mesh.faces);

    BodyModelData::new(
        template,
        mesh.faces,
        shape_basis,
        joint_regressor,
        mesh.weights,
        tree,
    )
}

fn build_shape_basis(
    config: &TestBodyConfig,
    template: &[Vector3<f64>],
    faces: &[[usize; 3]],
) -> Vec<Vec<Vector3<f64>>> {
    let mut basis = Vec::with_capacity(config.shape_dims);
    if config.shape_dims >= 1 {
        // Dimension 0: global isotropic scale about the origin, +10% per unit.
        basis.push(template.iter().map(|v| v * 0.1).collect());
    }
    if config.shape_dims >= 2 {
        basis.push(
            template
                .iter()
                .map(|v| Vector3::new(0.0, 0.0, v.z * 0.1))
                .collect(),
        );
    }
    if config.shape_dims > 2 {
        let normals = vertex_normals(template, faces).normals;
        let mut rng = StdRng::seed_from_u64(config.seed);
        for _ in 2..config.shape_dims {
            let freq: f64 = rng.random_range(2.0..6.0);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            basis.push(
                template
                    .iter()
                    .zip(normals.iter())
                    .map(|(v, n)| n * (0.02 * (freq * v.z + phase).sin()))
                    .collect(),
            );
        }
    }
    basis
}
