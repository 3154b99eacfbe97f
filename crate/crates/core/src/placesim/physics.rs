//! Quasi-static event model of the placing motion.
//!
//! The target is carried at hover height along `+y` until its footprint is
//! over the place point, then lowered onto the surface; the arm trails behind
//! it. Every contact produces an event whose speed follows in closed form:
//! direct contacts at the motion speed, obstacle chains attenuated by `κ` per
//! link, topples and falls from the center-of-mass drop.

use super::geom::{overlaps, Polygon};
use super::{CollisionEvent, CollisionType, Label, Labels, MotionConfig, Participant, Primitive, Scene, GRAVITY};

/// Impact speed of an upright body tipping onto its side,
/// `sqrt(2·g·(h_up − h_low))`; zero when tipping cannot lower the center of
/// mass.
pub fn topple_impact_speed(p: &Primitive) -> f64 {
    let (up, low) = p.com_heights();
    if up <= low {
        0.0
    } else {
        (2.0 * GRAVITY * (up - low)).sqrt()
    }
}

/// Free-fall impact speed from height `h`.
pub fn fall_speed(h: f64) -> f64 {
    (2.0 * GRAVITY * h).sqrt()
}

/// Per-type labels: DC iff some event of that type is strictly faster than
/// `v_dc`; `Any` is the OR over types.
pub fn label_sample(events: &[CollisionEvent], v_dc: f64) -> Labels {
    let dc = |t: CollisionType| Label::from_dc(events.iter().any(|e| e.kind == t && e.speed > v_dc));
    let (ao, to, oo, od) = (dc(CollisionType::AO), dc(CollisionType::TO), dc(CollisionType::OO), dc(CollisionType::OD));
    let any = Label::from_dc([ao, to, oo, od].iter().any(|l| l.is_dc()));
    Labels { any, ao, to, oo, od }
}

struct Sim<'a> {
    scene: &'a Scene,
    motion: &'a MotionConfig,
    /// `None` once an obstacle has left the destination.
    obstacles: Vec<Option<Primitive>>,
    touched: Vec<bool>,
    events: Vec<CollisionEvent>,
}

impl Sim<'_> {
    fn speed_at(&self, depth: usize) -> f64 {
        self.motion.v_place * self.motion.kappa.powi(depth as i32)
    }

    fn push_event(&mut self, kind: CollisionType, speed: f64, participants: [Participant; 2], depth: usize, drop: Option<f64>) {
        self.events.push(CollisionEvent { kind, speed, participants, chain_depth: depth, drop_height: drop });
    }

    fn fall_if_unsupported(&mut self, i: usize, depth: usize) {
        let Some(o) = &self.obstacles[i] else { return };
        let d = &self.scene.destination;
        if !d.contains(o.position[0], o.position[1]) {
            let h = o.position[2];
            let id = o.id;
            self.push_event(CollisionType::OD, fall_speed(h), [Participant::Obstacle(id), Participant::Destination], depth, Some(h));
            self.obstacles[i] = None;
        }
    }

    /// Untouched obstacles whose footprint enters the strip
    /// `[x0, x1] × (y_from, y_to)`, with their contact coordinate, nearest
    /// first.
    fn in_strip(&self, x0: f64, x1: f64, y_from: f64, y_to: f64, min_top: f64) -> Vec<(usize, f64)> {
        let mut hits: Vec<(usize, f64)> = self
            .obstacles
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.touched[*i])
            .filter_map(|(i, o)| {
                let o = o.as_ref()?;
                if o.top() <= min_top {
                    return None;
                }
                let fp = o.footprint();
                let y = fp.min_in_band(1, x0, x1)?;
                let (_, hi) = fp.bounds();
                (y < y_to && hi[1] > y_from).then_some((i, y))
            })
            .collect();
        hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        hits
    }

    /// Obstacle `i` is pushed `d` along `+y` by a pusher at chain depth
    /// `depth`.
    fn respond(&mut self, i: usize, d: f64, depth: usize) {
        self.touched[i] = true;
        let Some(o) = self.obstacles[i].clone() else { return };
        let m = self.motion;
        if o.rolls() {
            self.obstacles[i].as_mut().unwrap().position[1] += d + m.roll_distance;
            self.fall_if_unsupported(i, depth);
            return;
        }
        let (lo, hi) = o.footprint().bounds();
        let slender = !o.lying && o.height() > m.slenderness * o.min_width();
        if slender {
            self.push_event(
                CollisionType::OD,
                topple_impact_speed(&o),
                [Participant::Obstacle(o.id), Participant::Destination],
                depth,
                None,
            );
            let reach = hi[1] + o.height();
            self.obstacles[i] = Some(Primitive {
                size: [o.height(), hi[0] - lo[0], o.min_width()],
                position: [(lo[0] + hi[0]) / 2.0, hi[1] + o.height() / 2.0, o.position[2]],
                yaw: std::f64::consts::FRAC_PI_2,
                lying: true,
                ..o.clone()
            });
            self.chain(o.id, lo[0], hi[0], hi[1], reach, o.position[2], depth);
            self.fall_if_unsupported(i, depth);
            return;
        }
        self.obstacles[i].as_mut().unwrap().position[1] += d;
        self.chain(o.id, lo[0], hi[0], hi[1], hi[1] + d, o.position[2], depth);
        self.fall_if_unsupported(i, depth);
    }

    /// Obstacle `pusher` at chain depth `depth` sweeps the strip
    /// `[x0, x1] × (y_from, y_to)`; everything it meets is pushed to `y_to`.
    #[allow(clippy::too_many_arguments)]
    fn chain(&mut self, pusher: usize, x0: f64, x1: f64, y_from: f64, y_to: f64, base: f64, depth: usize) {
        for (j, y) in self.in_strip(x0, x1, y_from, y_to, base) {
            if self.touched[j] || self.obstacles[j].is_none() {
                continue;
            }
            let id = self.obstacles[j].as_ref().unwrap().id;
            let speed = self.speed_at(depth + 1);
            let who = [Participant::Obstacle(pusher), Participant::Obstacle(id)];
            self.push_event(CollisionType::OO, speed, who, depth + 1, None);
            self.respond(j, (y_to - y).max(0.0), depth + 1);
        }
    }
}

/// Simulate the placing motion over `scene` and return every contact event.
pub fn simulate_placing(scene: &Scene, motion: &MotionConfig) -> Vec<CollisionEvent> {
    let n = scene.obstacles.len();
    let mut sim =
        Sim { scene, motion, obstacles: scene.obstacles.iter().cloned().map(Some).collect(), touched: vec![false; n], events: Vec::new() };
    let t = &scene.target;
    let h = scene.destination.height;
    let [xc, yc] = scene.place_point;
    let (tw, tl, th) = (t.size[0], t.size[1], t.size[2]);
    let (tx0, tx1) = (xc - tw / 2.0, xc + tw / 2.0);
    let (ax0, ax1) = (xc - motion.arm_width / 2.0, xc + motion.arm_width / 2.0);
    let target_bottom = h + motion.hover;
    let arm_mid = target_bottom + th / 2.0;
    let arm_bottom = arm_mid - motion.arm_height / 2.0;
    let target_front = yc + tl / 2.0;
    let arm_front = yc - tl / 2.0;

    // Sweep: next contact by target-front travel; the target meets an
    // obstacle when its front reaches it, the arm `tl` later.
    loop {
        let mut best: Option<(f64, usize, Participant, f64)> = None;
        for (i, o) in sim.obstacles.iter().enumerate() {
            let Some(o) = o else { continue };
            if sim.touched[i] {
                continue;
            }
            let fp = o.footprint();
            let mut cand = None;
            if o.top() > target_bottom {
                if let Some(y) = fp.min_in_band(1, tx0, tx1).filter(|&y| y < target_front) {
                    cand = Some((y, Participant::Target, target_front - y));
                }
            }
            if o.top() > arm_bottom {
                if let Some(y) = fp.min_in_band(1, ax0, ax1).filter(|&y| y < arm_front) {
                    let travel = y + tl;
                    if cand.is_none_or(|(s, _, _)| travel < s) {
                        cand = Some((travel, Participant::Arm, arm_front - y));
                    }
                }
            }
            if let Some((s, who, push)) = cand {
                if best.is_none_or(|(bs, _, _, _)| s < bs) {
                    best = Some((s, i, who, push));
                }
            }
        }
        let Some((_, i, who, push)) = best else { break };
        let id = sim.obstacles[i].as_ref().unwrap().id;
        let kind = if who == Participant::Target { CollisionType::TO } else { CollisionType::AO };
        sim.push_event(kind, motion.v_place, [who, Participant::Obstacle(id)], 0, None);
        sim.respond(i, push, 0);
    }

    // Descent onto the place point.
    let target_fp = Polygon::aabb(tx0, yc - tl / 2.0, tx1, yc + tl / 2.0);
    let arm_fp = Polygon::aabb(ax0, arm_front - motion.arm_length, ax1, arm_front);
    let arm_lowest = h + th / 2.0 - motion.arm_height / 2.0;
    for i in 0..n {
        let Some(o) = sim.obstacles[i].clone() else { continue };
        if sim.touched[i] {
            continue;
        }
        let fp = o.footprint();
        let who = if overlaps(&target_fp, &fp) {
            Participant::Target
        } else if o.top() > arm_lowest && overlaps(&arm_fp, &fp) {
            Participant::Arm
        } else {
            continue;
        };
        sim.touched[i] = true;
        let kind = if who == Participant::Target { CollisionType::TO } else { CollisionType::AO };
        sim.push_event(kind, motion.v_place, [who, Participant::Obstacle(o.id)], 0, None);
    }
    sim.events
}
