//! Synthetic placing scenes: procedural destinations and obstacles, a
//! quasi-static event model for the placing motion, collision labels, and a
//! z-buffer renderer for RGB and depth.
//!
//! World frame: `z` up, meters. The destination's front edge is the line
//! `y = 0`; the robot approaches from `y < 0` and extends the arm along `+y`.

pub mod dataset;
pub mod geom;
pub mod physics;
pub mod render;
pub mod scene;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use dataset::{generate_dataset, make_heuristic_input, make_sample, DatasetManifest, LabelStats, SampleRecord, SceneSample, Split};
pub use physics::{label_sample, simulate_placing, topple_impact_speed};
pub use render::{render, Camera, Rendered};
pub use scene::{generate_scene, settle_obstacles};

pub const GRAVITY: f64 = 9.81;
/// Number of background/lighting variants.
pub const LOCATIONS: usize = 12;
/// Damaging-collision speed threshold (m/s).
pub const DEFAULT_V_DC: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Box,
    Cylinder,
    Sphere,
}

/// A rigid obstacle or target resting on (or held above) the destination.
///
/// `size` is the extent in the body frame after the orientation is applied:
/// `size[0]` along the yaw direction, `size[1]` across it, `size[2]`
/// vertical. A lying cylinder has its axis along the yaw direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub id: usize,
    pub kind: Kind,
    pub size: [f64; 3],
    /// Footprint center and base height.
    pub position: [f64; 3],
    pub yaw: f64,
    pub lying: bool,
    pub color: [u8; 3],
}

impl Primitive {
    pub fn height(&self) -> f64 {
        self.size[2]
    }

    pub fn top(&self) -> f64 {
        self.position[2] + self.size[2]
    }

    /// Rolls when pushed: spheres and lying cylinders.
    pub fn rolls(&self) -> bool {
        matches!(self.kind, Kind::Sphere) || (self.kind == Kind::Cylinder && self.lying)
    }

    /// Smallest horizontal extent.
    pub fn min_width(&self) -> f64 {
        self.size[0].min(self.size[1])
    }

    /// Horizontal footprint (circles as circumscribed 16-gons).
    pub fn footprint(&self) -> geom::Polygon {
        let c = [self.position[0], self.position[1]];
        let round = match self.kind {
            Kind::Sphere => true,
            Kind::Cylinder => !self.lying,
            Kind::Box => false,
        };
        if round {
            geom::Polygon::circle(c, self.size[0] / 2.0, 16)
        } else {
            geom::Polygon::rect(c, self.size[0] / 2.0, self.size[1] / 2.0, self.yaw)
        }
    }

    /// Center-of-mass heights above the base when upright and when lying on
    /// its side.
    pub fn com_heights(&self) -> (f64, f64) {
        match self.kind {
            Kind::Sphere => (self.size[2] / 2.0, self.size[2] / 2.0),
            _ if self.lying => (self.size[2] / 2.0, self.size[2] / 2.0),
            _ => (self.size[2] / 2.0, self.min_width() / 2.0),
        }
    }
}

/// Rectangular placing surface `[x0, x1] × [y0, y1]` at `height`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Destination {
    pub name: String,
    pub height: f64,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub color: [u8; 3],
}

impl Destination {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// World-frame rectangle on the destination surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub location: usize,
    pub destination: Destination,
    pub obstacles: Vec<Primitive>,
    pub target: Primitive,
    /// Where the target's footprint center is placed.
    pub place_point: [f64; 2],
    pub camera: Camera,
    /// Square region around the place point handed to the baseline.
    pub roi: WorldRect,
    /// Surface region the placing motion can influence.
    pub work_area: WorldRect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CollisionType {
    AO,
    TO,
    OO,
    OD,
}

impl CollisionType {
    pub const ALL: [CollisionType; 4] = [CollisionType::AO, CollisionType::TO, CollisionType::OO, CollisionType::OD];
}

impl fmt::Display for CollisionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Participant {
    Arm,
    Target,
    Obstacle(usize),
    Destination,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub kind: CollisionType,
    /// Absolute relative speed, m/s.
    pub speed: f64,
    pub participants: [Participant; 2],
    /// 0 for contacts with the arm or target.
    pub chain_depth: usize,
    /// Height fallen for fall events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_height: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    DC,
    NDC,
}

impl Label {
    pub fn is_dc(self) -> bool {
        self == Label::DC
    }

    pub fn from_dc(dc: bool) -> Self {
        if dc {
            Label::DC
        } else {
            Label::NDC
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Labels in head order Any, AO, TO, OO, OD.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    #[serde(rename = "Any")]
    pub any: Label,
    #[serde(rename = "AO")]
    pub ao: Label,
    #[serde(rename = "TO")]
    pub to: Label,
    #[serde(rename = "OO")]
    pub oo: Label,
    #[serde(rename = "OD")]
    pub od: Label,
}

impl Labels {
    pub fn as_array(&self) -> [Label; 5] {
        [self.any, self.ao, self.to, self.oo, self.od]
    }

    pub fn of(&self, t: CollisionType) -> Label {
        match t {
            CollisionType::AO => self.ao,
            CollisionType::TO => self.to,
            CollisionType::OO => self.oo,
            CollisionType::OD => self.od,
        }
    }

    /// `Any` equals the OR of the four type labels.
    pub fn is_consistent(&self) -> bool {
        self.any.is_dc() == CollisionType::ALL.iter().any(|&t| self.of(t).is_dc())
    }
}

/// Placing-motion parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Sweep and descent speed, m/s.
    pub v_place: f64,
    /// Clearance of the target bottom above the surface during the sweep.
    pub hover: f64,
    /// Arm cross-section (x width, z height) and length behind the target.
    pub arm_width: f64,
    pub arm_height: f64,
    pub arm_length: f64,
    /// Speed attenuation per obstacle-obstacle chain link.
    pub kappa: f64,
    /// Extra travel of a rolling obstacle beyond the push.
    pub roll_distance: f64,
    /// Height/width ratio above which an upright obstacle topples.
    pub slenderness: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            v_place: 0.2,
            hover: 0.10,
            arm_width: 0.08,
            arm_height: 0.06,
            arm_length: 0.12,
            kappa: 0.8,
            roll_distance: 0.2,
            slenderness: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DestinationTemplate {
    pub name: String,
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub color: [u8; 3],
}

/// Scene-generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub version: u32,
    pub destinations: Vec<DestinationTemplate>,
    pub max_obstacles: usize,
    /// Probability that a box or cylinder obstacle lies on its side.
    pub lying_probability: f64,
    /// Side of the baseline ROI square.
    pub roi_side: f64,
    /// Half-width of the work area across the sweep and its reach beyond the
    /// place point.
    pub work_half_width: f64,
    pub work_reach: f64,
    /// Obstacles are scattered over the work area grown by this margin.
    pub scatter_margin: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub focal: f64,
    pub motion: MotionConfig,
    pub v_dc: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        let t = |name: &str, width, depth, height, color| DestinationTemplate { name: name.into(), width, depth, height, color };
        Self {
            version: 1,
            destinations: vec![
                t("dining_table", 1.0, 0.70, 0.72, [150, 105, 70]),
                t("low_table", 0.9, 0.55, 0.40, [185, 160, 120]),
                t("kitchen_counter", 1.2, 0.60, 0.90, [210, 210, 200]),
                t("shelf", 0.8, 0.40, 1.10, [120, 85, 60]),
                t("desk", 1.1, 0.65, 0.75, [90, 90, 100]),
                t("sideboard", 0.8, 0.45, 0.55, [170, 130, 90]),
            ],
            max_obstacles: 6,
            lying_probability: 0.35,
            roi_side: 0.18,
            work_half_width: 0.22,
            work_reach: 0.20,
            scatter_margin: 0.05,
            image_width: 64,
            image_height: 64,
            focal: 55.0,
            motion: MotionConfig::default(),
            v_dc: DEFAULT_V_DC,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let err = |m: &str| Err(crate::Error::Config(m.to_string()));
        if self.version != 1 {
            return err("unsupported gen-config version");
        }
        if self.destinations.is_empty() {
            return err("at least one destination template is required");
        }
        if self.destinations.iter().any(|d| !(0.3..=1.2).contains(&d.height) || d.width < 0.5 || d.depth < 0.35) {
            return err("destination heights must lie in [0.3, 1.2] m, width >= 0.5 m, depth >= 0.35 m");
        }
        if !(self.v_dc > 0.0) || !(self.motion.v_place > 0.0) {
            return err("speeds must be positive");
        }
        if self.image_width < 8 || self.image_height < 8 || !(self.focal > 0.0) {
            return err("image must be at least 8x8 with positive focal length");
        }
        if !(0.0..=1.0).contains(&self.lying_probability) || !(0.0..=1.0).contains(&self.motion.kappa) {
            return err("probabilities and kappa must lie in [0, 1]");
        }
        Ok(())
    }
}
