//! Builtin benchmark morphologies and chain config files.
//!
//! Config schema (TOML):
//!
//! ```toml
//! name = "arm"
//! base = { translation = [0.0, 0.0, 0.0], pre_rotation = [0.0, 0.0, 0.0] }
//! tool = { translation = [0.0, 0.0, 0.1] }
//!
//! [[modules]]
//! axis = "z"                       # "x", "-y", ... or [x, y, z]
//! offset = [0.0, 0.0, 0.15]        # meters, in the parent frame
//! pre_rotation = [0.0, 0.0, 0.0]   # rotation vector, radians (optional)
//! # rotation = [[1,0,0],[0,1,0],[0,0,1]]  (alternative to pre_rotation)
//! limits = { q_lower = -2.75, q_upper = 2.75, qd_max = 2.0, qdd_max = 0.5 }
//! ```
//!
//! Omitted limits take the defaults of [`JointLimits`]. Only revolute joints
//! are supported; `joint = "prismatic"` is rejected.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainModel, JointLimits, JointModule, RigidTransform};
use crate::so3;
use crate::{Error, Result};

/// Module length of the builtin chains, meters.
pub const MODULE_LENGTH: f64 = 0.15;
pub const TOOL_LENGTH: f64 = 0.1;
/// Axes within this distance of unit length are normalized on load.
pub const AXIS_NORMALIZE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub module: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.module {
            Some(i) => write!(f, "module {i}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

fn violation(module: Option<usize>, message: impl Into<String>) -> Violation {
    Violation { module, message: message.into() }
}

fn check_limits(i: usize, l: &JointLimits, out: &mut Vec<Violation>) {
    if !(l.q_lower < l.q_upper) {
        out.push(violation(Some(i), format!("q_limits lower >= upper ({} >= {})", l.q_lower, l.q_upper)));
    }
    if !(l.qd_max > 0.0) {
        out.push(violation(Some(i), format!("qd_limit must be positive, got {}", l.qd_max)));
    }
    if !(l.qdd_max > 0.0) {
        out.push(violation(Some(i), format!("qdd_limit must be positive, got {}", l.qdd_max)));
    }
}

/// Every broken chain invariant; empty iff the chain is valid.
pub fn validate_chain(chain: &ChainModel) -> Vec<Violation> {
    let mut out = Vec::new();
    if chain.modules.is_empty() {
        out.push(violation(None, "chain has no modules"));
    }
    for (name, t) in [("base", &chain.base_transform), ("tool", &chain.tool_transform)] {
        if let Some(why) = t.violation() {
            out.push(violation(None, format!("{name} transform: {why}")));
        }
    }
    for (i, m) in chain.modules.iter().enumerate() {
        let norm = m.axis.norm();
        if !((norm - 1.0).abs() <= 1e-12) {
            out.push(violation(Some(i), format!("axis norm {norm} is not 1")));
        }
        if let Some(why) = m.parent_transform.violation() {
            out.push(violation(Some(i), format!("parent transform: {why}")));
        }
        check_limits(i, &m.limits, &mut out);
    }
    out
}

pub fn ensure_valid(chain: ChainModel) -> Result<ChainModel> {
    let v = validate_chain(&chain);
    if v.is_empty() {
        Ok(chain)
    } else {
        Err(Error::InvalidChain(v.iter().map(|v| v.to_string()).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Named(String),
    Vector([f64; 3]),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_rotation: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qd_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qdd_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<String>,
    pub axis: AxisSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_rotation: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<TransformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<TransformSpec>,
    pub modules: Vec<ModuleSpec>,
}

fn named_axis(name: &str) -> Option<Vector3<f64>> {
    let (sign, letter) = match name.trim().strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, name.trim().strip_prefix('+').unwrap_or(name.trim())),
    };
    let v = match letter {
        "x" | "X" => Vector3::x(),
        "y" | "Y" => Vector3::y(),
        "z" | "Z" => Vector3::z(),
        _ => return None,
    };
    Some(v * sign)
}

fn rotation_part(
    pre_rotation: Option<[f64; 3]>,
    rotation: Option<[[f64; 3]; 3]>,
    module: Option<usize>,
    what: &str,
    out: &mut Vec<Violation>,
) -> Matrix3<f64> {
    match (pre_rotation, rotation) {
        (Some(_), Some(_)) => {
            out.push(violation(module, format!("{what}: give either pre_rotation or rotation, not both")));
            Matrix3::identity()
        }
        (Some(v), None) => so3::exp(&Vector3::from(v)),
        (None, Some(rows)) => {
            let r = Matrix3::from_fn(|i, j| rows[i][j]);
            if let Some(why) = RigidTransform::new(r, Vector3::zeros()).violation() {
                out.push(violation(module, format!("{what}: {why}")));
            }
            r
        }
        (None, None) => Matrix3::identity(),
    }
}

fn transform(spec: Option<&TransformSpec>, what: &str, out: &mut Vec<Violation>) -> RigidTransform {
    let Some(spec) = spec else { return RigidTransform::identity() };
    let rotation = rotation_part(spec.pre_rotation, spec.rotation, None, what, out);
    RigidTransform::new(rotation, spec.translation.map_or(Vector3::zeros(), Vector3::from))
}

impl ChainSpec {
    /// Converts to a validated chain, listing every problem found.
    pub fn to_chain(&self) -> Result<ChainModel> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push(violation(None, "name is empty"));
        }
        let base = transform(self.base.as_ref(), "base", &mut out);
        let tool = transform(self.tool.as_ref(), "tool", &mut out);
        let mut modules = Vec::with_capacity(self.modules.len());
        for (i, m) in self.modules.iter().enumerate() {
            if let Some(kind) = &m.joint {
                if kind != "revolute" {
                    out.push(violation(Some(i), format!("unsupported joint type '{kind}', only revolute joints are allowed")));
                }
            }
            let axis = match &m.axis {
                AxisSpec::Named(name) => named_axis(name).unwrap_or_else(|| {
                    out.push(violation(Some(i), format!("unknown axis '{name}'")));
                    Vector3::z()
                }),
                AxisSpec::Vector(v) => {
                    let v = Vector3::from(*v);
                    let norm = v.norm();
                    if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
                        v
                    } else if (norm - 1.0).abs() <= AXIS_NORMALIZE_TOL {
                        v / norm
                    } else {
                        out.push(violation(Some(i), format!("axis norm {norm} is not within {AXIS_NORMALIZE_TOL:e} of 1")));
                        Vector3::z()
                    }
                }
            };
            let rotation = rotation_part(m.pre_rotation, m.rotation, Some(i), "rotation", &mut out);
            let offset = m.offset.map_or(Vector3::zeros(), Vector3::from);
            let defaults = JointLimits::default();
            let spec = m.limits.clone().unwrap_or_default();
            let limits = JointLimits {
                q_lower: spec.q_lower.unwrap_or(defaults.q_lower),
                q_upper: spec.q_upper.unwrap_or(defaults.q_upper),
                qd_max: spec.qd_max.unwrap_or(defaults.qd_max),
                qdd_max: spec.qdd_max.unwrap_or(defaults.qdd_max),
            };
            check_limits(i, &limits, &mut out);
            modules.push(JointModule { axis, parent_transform: RigidTransform::new(rotation, offset), limits });
        }
        if modules.is_empty() {
            out.push(violation(None, "chain has no modules"));
        }
        if !out.is_empty() {
            return Err(Error::InvalidChain(out.iter().map(|v| v.to_string()).collect()));
        }
        ensure_valid(ChainModel { name: self.name.clone(), modules, base_transform: base, tool_transform: tool })
    }

    /// Exact description of `chain`: rotations as matrices, axes as vectors.
    pub fn from_chain(chain: &ChainModel) -> Self {
        let rows = |r: &Matrix3<f64>| [[r[(0, 0)], r[(0, 1)], r[(0, 2)]], [r[(1, 0)], r[(1, 1)], r[(1, 2)]], [r[(2, 0)], r[(2, 1)], r[(2, 2)]]];
        let t = |t: &RigidTransform| TransformSpec {
            translation: Some(t.translation.into()),
            pre_rotation: None,
            rotation: Some(rows(&t.rotation)),
        };
        ChainSpec {
            name: chain.name.clone(),
            base: Some(t(&chain.base_transform)),
            tool: Some(t(&chain.tool_transform)),
            modules: chain
                .modules
                .iter()
                .map(|m| ModuleSpec {
                    joint: None,
                    axis: AxisSpec::Vector(m.axis.into()),
                    offset: Some(m.parent_transform.translation.into()),
                    pre_rotation: None,
                    rotation: Some(rows(&m.parent_transform.rotation)),
                    limits: Some(LimitSpec {
                        q_lower: Some(m.limits.q_lower),
                        q_upper: Some(m.limits.q_upper),
                        qd_max: Some(m.limits.qd_max),
                        qdd_max: Some(m.limits.qdd_max),
                    }),
                })
                .collect(),
        }
    }
}

pub fn parse_chain_spec(text: &str) -> Result<ChainSpec> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Parses and validates a chain config document.
pub fn load_chain(text: &str) -> Result<ChainModel> {
    parse_chain_spec(text)?.to_chain()
}

pub fn serialize_chain(chain: &ChainModel) -> String {
    toml::to_string(&ChainSpec::from_chain(chain)).expect("chain specs always serialize")
}

fn module(axis: Vector3<f64>, length: f64) -> JointModule {
    JointModule::new(axis, RigidTransform::from_translation(Vector3::new(0.0, 0.0, length)))
}

fn build(name: &str, layout: &[(Vector3<f64>, f64)]) -> ChainModel {
    ChainModel {
        name: name.into(),
        modules: layout.iter().map(|&(axis, len)| module(axis, len)).collect(),
        base_transform: RigidTransform::identity(),
        tool_transform: RigidTransform::from_translation(Vector3::new(0.0, 0.0, TOOL_LENGTH)),
    }
}

/// Morphologies A (4 DoF), B and C (5 DoF), D and E (6 DoF).
///
/// All modules stack along their local z by [`MODULE_LENGTH`], except the
/// last two modules of D, which have zero length so the final three axes of
/// D meet at one point (a spherical wrist). D is the anthropomorphic layout.
pub fn builtin_morphologies() -> Vec<ChainModel> {
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    let l = MODULE_LENGTH;
    vec![
        build("A", &[(z, l), (y, l), (y, l), (y, l)]),
        build("B", &[(z, l), (y, l), (y, l), (z, l), (y, l)]),
        build("C", &[(z, l), (x, l), (y, l), (x, l), (z, l)]),
        build("D", &[(z, l), (y, l), (y, l), (z, l), (y, 0.0), (z, 0.0)]),
        build("E", &[(z, l), (y, l), (x, l), (y, l), (z, l), (y, l)]),
    ]
}

pub fn builtin_morphology(name: &str) -> Option<ChainModel> {
    builtin_morphologies().into_iter().find(|c| c.name.eq_ignore_ascii_case(name))
}

/// Planar arm with two z joints and unit links along x; closed forms are
/// easy to write down, so the derivative experiments use it.
pub fn planar_arm() -> ChainModel {
    let link = RigidTransform::from_translation(Vector3::x());
    ChainModel {
        name: "2R".into(),
        modules: vec![
            JointModule::new(Vector3::z(), RigidTransform::identity()),
            JointModule::new(Vector3::z(), link.clone()),
        ],
        base_transform: RigidTransform::identity(),
        tool_transform: link,
    }
}

/// A builtin morphology or the planar arm, by name.
pub fn lookup_chain(name: &str) -> Option<ChainModel> {
    if name.eq_ignore_ascii_case("2R") {
        return Some(planar_arm());
    }
    builtin_morphology(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shape() {
        let all = builtin_morphologies();
        let mut dofs: Vec<usize> = all.iter().map(|c| c.dof()).collect();
        dofs.sort();
        assert_eq!(dofs, vec![4, 5, 5, 6, 6]);
        for c in &all {
            assert!(validate_chain(c).is_empty(), "{}", c.name);
            assert!(3 < c.dof());
        }
        let mut axes: Vec<Vec<[i8; 3]>> = all
            .iter()
            .map(|c| c.modules.iter().map(|m| [m.axis.x as i8, m.axis.y as i8, m.axis.z as i8]).collect())
            .collect();
        axes.sort();
        axes.dedup();
        assert_eq!(axes.len(), 5, "axis orderings must be distinct");
    }

    #[test]
    fn minimal_document() {
        let chain = load_chain("name = \"one\"\n[[modules]]\naxis = \"z\"\n").unwrap();
        assert_eq!(chain.dof(), 1);
        assert_eq!(chain.modules[0].limits, JointLimits::default());
    }

    #[test]
    fn axis_normalization_rule() {
        let doc = |v: f64| format!("name = \"a\"\n[[modules]]\naxis = [{v}, {v}, {v}]\n");
        let inv = 1.0 / 3f64.sqrt();
        let chain = load_chain(&doc(inv * (1.0 + 5e-7))).unwrap();
        assert!((chain.modules[0].axis.norm() - 1.0).abs() < 1e-15);
        // "(0.577, 0.577, 0.577)" is off by about 1e-3
        let err = load_chain(&doc(0.577)).unwrap_err();
        assert!(err.to_string().contains("axis norm"), "{err}");
    }

    #[test]
    fn reversed_limits() {
        let err = load_chain("name = \"a\"\n[[modules]]\naxis = \"x\"\nlimits = { q_lower = 2.0, q_upper = -2.0 }\n").unwrap_err();
        assert!(err.to_string().contains("lower >= upper"), "{err}");
    }

    #[test]
    fn violations_are_exhaustive() {
        let doc = "name = \"a\"\n[[modules]]\naxis = \"w\"\n[[modules]]\naxis = \"y\"\njoint = \"prismatic\"\nlimits = { qd_max = -1.0 }\n";
        let Error::InvalidChain(v) = load_chain(doc).unwrap_err() else { panic!() };
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn parse_errors_cite_location() {
        let err = load_chain("name = \"a\"\n[[modules]]\naxis = \n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = load_chain("name = \"a\"\n[[modules]]\naxis = \"z\"\nofset = [0, 0, 1]\n").unwrap_err();
        assert!(err.to_string().contains("ofset"), "{err}");
    }

    #[test]
    fn zero_axis_is_one_violation() {
        let mut chain = builtin_morphologies().remove(0);
        chain.modules[1].axis = Vector3::zeros();
        assert_eq!(validate_chain(&chain).len(), 1);
    }

    #[test]
    fn skewed_transform_names_module() {
        let mut chain = builtin_morphologies().remove(0);
        chain.modules[2].parent_transform.rotation[(0, 1)] = 0.1;
        let v = validate_chain(&chain);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].module, Some(2));
    }

    #[test]
    fn builtin_round_trip() {
        for chain in builtin_morphologies() {
            assert_eq!(load_chain(&serialize_chain(&chain)).unwrap(), chain);
        }
    }
}
