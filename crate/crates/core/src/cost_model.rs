//! Costs from detection features: area and convexity for detections,
//! area change and squared displacement for moves, daughter balance and
//! geometry for divisions, and border distance for appearance and
//! disappearance.

use alloc::vec::Vec;

use crate::instance::{
    ConflictSet, Detection, DetectionId, Instance, Transition, TransitionKind, ValidationReport,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionFeatures {
    pub area: f64,
    pub convex_hull_area: f64,
    pub centroid: [f64; 2],
    /// Major axis angle in radians.
    pub orientation: f64,
    /// Distance to the nearest image border.
    pub boundary_distance: f64,
}

impl DetectionFeatures {
    pub fn is_valid(&self) -> bool {
        self.area > 0.0 && self.convex_hull_area >= self.area && self.boundary_distance >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Area above which the size penalty applies.
    pub area_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveParams {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub rho: f64,
    pub sigma: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub detection: DetectionParams,
    pub movement: MoveParams,
    pub division: DivisionParams,
    pub appearance: BoundaryParams,
    pub disappearance: BoundaryParams,
}

impl Default for CostParams {
    /// Order-one coefficients for objects of a few dozen pixels.
    fn default() -> Self {
        let boundary = BoundaryParams {
            alpha: 0.5,
            beta: 1.0,
            gamma: 0.1,
        };
        Self {
            detection: DetectionParams {
                alpha: 1.0,
                beta: 1.0,
                gamma: 1.0,
                area_limit: 500.0,
            },
            movement: MoveParams {
                alpha: 1.0,
                beta: 1.0,
            },
            division: DivisionParams {
                alpha: 10.0,
                beta: 1.0,
                gamma: 1.0,
                kappa: 0.1,
                rho: 0.5,
                sigma: 0.1,
                tau: 1.0,
            },
            appearance: boundary,
            disappearance: boundary,
        }
    }
}

impl CostParams {
    pub fn is_valid(&self) -> bool {
        let d = &self.division;
        let values = [
            self.detection.alpha,
            self.detection.beta,
            self.detection.gamma,
            self.detection.area_limit,
            self.movement.alpha,
            self.movement.beta,
            d.alpha,
            d.beta,
            d.gamma,
            d.kappa,
            d.rho,
            d.sigma,
            d.tau,
            self.appearance.alpha,
            self.appearance.beta,
            self.appearance.gamma,
            self.disappearance.alpha,
            self.disappearance.beta,
            self.disappearance.gamma,
        ];
        let boundary = [self.appearance, self.disappearance]
            .iter()
            .all(|b| b.alpha >= 0.0 && b.beta >= 0.0 && b.gamma >= 0.0);
        values.iter().all(|v| v.is_finite()) && self.detection.area_limit > 0.0 && boundary
    }
}

fn squared_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

pub fn detection_cost(f: &DetectionFeatures, p: &CostParams) -> f64 {
    let d = &p.detection;
    let excess = (f.area - d.area_limit).max(0.0);
    -d.alpha * f.area + d.beta * (f.convex_hull_area - f.area).abs() + d.gamma * excess * excess
}

/// Displacement enters squared.
pub fn move_cost(from: &DetectionFeatures, to: &DetectionFeatures, p: &CostParams) -> f64 {
    p.movement.alpha * (from.area - to.area).abs()
        + p.movement.beta * squared_distance(from.centroid, to.centroid)
}

/// Angle between the mother's major axis and the line through both
/// daughter centroids, in `[0, pi/2]`. Zero when the daughters coincide.
pub fn division_angle(
    mother: &DetectionFeatures,
    d1: &DetectionFeatures,
    d2: &DetectionFeatures,
) -> f64 {
    use core::f64::consts::{FRAC_PI_2, PI};
    let (dx, dy) = (
        d2.centroid[0] - d1.centroid[0],
        d2.centroid[1] - d1.centroid[1],
    );
    if dx == 0.0 && dy == 0.0 {
        return 0.0;
    }
    let diff = libm::fabs(mother.orientation - libm::atan2(dy, dx)) % PI;
    if diff > FRAC_PI_2 {
        PI - diff
    } else {
        diff
    }
}

pub fn division_cost(
    mother: &DetectionFeatures,
    d1: &DetectionFeatures,
    d2: &DetectionFeatures,
    p: &CostParams,
) -> f64 {
    let q = &p.division;
    let imbalance = (d1.area - d2.area).abs();
    q.alpha
        + q.beta * (mother.area - d1.area - d2.area).abs()
        + q.gamma * imbalance
        + q.kappa * imbalance * imbalance
        + 0.5
            * q.rho
            * (squared_distance(mother.centroid, d1.centroid)
                + squared_distance(mother.centroid, d2.centroid))
        + q.sigma * squared_distance(d1.centroid, d2.centroid)
        + q.tau * division_angle(mother, d1, d2)
}

fn boundary_cost(f: &DetectionFeatures, b: &BoundaryParams) -> f64 {
    b.alpha * f.area + b.beta * libm::sqrt(f.boundary_distance) + b.gamma * f.boundary_distance
}

pub fn appearance_cost(f: &DetectionFeatures, p: &CostParams) -> f64 {
    boundary_cost(f, &p.appearance)
}

pub fn disappearance_cost(f: &DetectionFeatures, p: &CostParams) -> f64 {
    boundary_cost(f, &p.disappearance)
}

/// Candidate structure over per-frame feature lists. Indices refer to
/// positions within a frame's list; frames are 1-based.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureGraph {
    pub frames: Vec<Vec<DetectionFeatures>>,
    /// `(frame, from, to)`; `to` lies in `frame + 1`.
    pub moves: Vec<(u32, u32, u32)>,
    /// `(frame, from, to1, to2)`.
    pub divisions: Vec<(u32, u32, u32, u32)>,
    pub conflicts: Vec<(u32, Vec<u32>)>,
}

/// Evaluates all cost formulas and returns the validated instance. The
/// instance has at least one frame.
pub fn build_instance(graph: &FeatureGraph, p: &CostParams) -> Result<Instance, ValidationReport> {
    let frame_count = graph.frames.len().max(1) as u32;
    let mut instance = Instance::empty(frame_count);
    let feature = |frame: u32, index: u32| -> Option<&DetectionFeatures> {
        graph
            .frames
            .get((frame as usize).checked_sub(1)?)?
            .get(index as usize)
    };
    let missing = DetectionFeatures {
        area: 0.0,
        convex_hull_area: 0.0,
        centroid: [0.0; 2],
        orientation: 0.0,
        boundary_distance: 0.0,
    };

    for (t, frame) in graph.frames.iter().enumerate() {
        for (i, f) in frame.iter().enumerate() {
            instance.detections.push(Detection {
                id: DetectionId::new(t as u32 + 1, i as u32),
                cost: detection_cost(f, p),
                appearance_cost: appearance_cost(f, p),
                disappearance_cost: disappearance_cost(f, p),
            });
        }
    }
    // Links to unknown detections get placeholder features; validation
    // then reports them as dangling.
    for &(t, from, to) in &graph.moves {
        let (a, b) = (
            feature(t, from).unwrap_or(&missing),
            feature(t + 1, to).unwrap_or(&missing),
        );
        instance.transitions.push(Transition {
            kind: TransitionKind::Move {
                from: DetectionId::new(t, from),
                to: DetectionId::new(t + 1, to),
            },
            cost: move_cost(a, b, p),
        });
    }
    for &(t, from, to1, to2) in &graph.divisions {
        let m = feature(t, from).unwrap_or(&missing);
        let d1 = feature(t + 1, to1).unwrap_or(&missing);
        let d2 = feature(t + 1, to2).unwrap_or(&missing);
        instance.transitions.push(Transition {
            kind: TransitionKind::Division {
                from: DetectionId::new(t, from),
                to1: DetectionId::new(t + 1, to1),
                to2: DetectionId::new(t + 1, to2),
            },
            cost: division_cost(m, d1, d2, p),
        });
    }
    for (t, members) in &graph.conflicts {
        instance.conflicts.push(ConflictSet {
            frame: *t,
            members: members.iter().map(|&i| DetectionId::new(*t, i)).collect(),
        });
    }
    let report = instance.validate();
    if report.is_ok() {
        Ok(instance)
    } else {
        Err(report)
    }
}
