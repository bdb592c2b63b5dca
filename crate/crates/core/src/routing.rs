//! Waypoint assignment and visiting order for a swarm.
//!
//! [`optimize`] partitions waypoints by an angular sweep around the drones'
//! start centroid, builds each route by nearest neighbour and polishes it with
//! 2-opt. [`brute_force_optimize`] enumerates every assignment and ordering on
//! small instances and serves as the reference optimum.
//!
//! Routes are open paths: they begin at the drone's start and do not return.
//! Ties are broken by waypoint id.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::frames::{is_finite, Vec3};
use crate::scenario::{first_obstacle_on_segment, Aabb};

/// Largest single-drone instance [`brute_force_optimize`] accepts.
pub const BRUTE_FORCE_MAX_SINGLE: usize = 9;
/// Largest multi-drone instance [`brute_force_optimize`] accepts.
pub const BRUTE_FORCE_MAX_MULTI: usize = 6;
pub const BRUTE_FORCE_MAX_DRONES: usize = 4;

// Moves must shorten a route by more than this (relative to its length).
const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("mission has no drones")]
    NoDrones,
    #[error("duplicate waypoint id `{0}`")]
    DuplicateId(String),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("instance too large for exhaustive search ({waypoints} waypoints, {drones} drones)")]
    TooLarge { waypoints: usize, drones: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub id: String,
    pub position: Vec3,
    pub label: Option<String>,
}

impl Waypoint {
    pub fn new(id: impl Into<String>, position: Vec3) -> Self {
        Self {
            id: id.into(),
            position,
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    pub waypoints: Vec<Waypoint>,
    /// One start position per drone.
    pub starts: Vec<Vec3>,
    /// Per-drone length budget, m.
    pub max_route_length: f64,
    pub obstacles: Vec<Aabb>,
}

impl Mission {
    pub fn validate(&self) -> Result<(), RoutingError> {
        if self.starts.is_empty() {
            return Err(RoutingError::NoDrones);
        }
        if !(self.max_route_length > 0.0 && self.max_route_length.is_finite()) {
            return Err(RoutingError::Invalid {
                field: "max_route_length".into(),
                reason: "must be > 0".into(),
            });
        }
        let mut seen = HashSet::new();
        for w in &self.waypoints {
            if !seen.insert(w.id.as_str()) {
                return Err(RoutingError::DuplicateId(w.id.clone()));
            }
            if !is_finite(&w.position) {
                return Err(RoutingError::Invalid {
                    field: format!("waypoint `{}`", w.id),
                    reason: "position must be finite".into(),
                });
            }
        }
        if !self.starts.iter().all(is_finite) {
            return Err(RoutingError::Invalid {
                field: "starts".into(),
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroneRoute {
    pub waypoint_ids: Vec<String>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutePlan {
    /// Indexed like `Mission::starts`.
    pub routes: Vec<DroneRoute>,
    pub total_length: f64,
    pub feasible: bool,
    pub violations: Vec<String>,
}

/// Open-path length from `start` through `ordered`.
pub fn route_length(start: &Vec3, ordered: &[Waypoint]) -> f64 {
    path_length(start, ordered.iter().map(|w| &w.position))
}

fn path_length<'a>(start: &Vec3, points: impl Iterator<Item = &'a Vec3>) -> f64 {
    let mut prev = start;
    let mut total = 0.0;
    for p in points {
        total += (p - prev).norm();
        prev = p;
    }
    total
}

fn indexed_length(m: &Mission, start: &Vec3, order: &[usize]) -> f64 {
    path_length(start, order.iter().map(|&i| &m.waypoints[i].position))
}

/// Per-drone violations of the length budget and obstacle constraints.
fn route_violations(m: &Mission, drone: usize, order: &[usize], length: f64) -> Vec<String> {
    let mut out = Vec::new();
    if length > m.max_route_length {
        out.push(format!(
            "drone {drone}: route length {length:.3} m exceeds max_route_length {} m",
            m.max_route_length
        ));
    }
    let start = &m.starts[drone];
    let mut prev_pos = start;
    let mut prev_name = "start";
    for &i in order {
        let w = &m.waypoints[i];
        if let Some(k) = first_obstacle_on_segment(&m.obstacles, prev_pos, &w.position) {
            out.push(format!(
                "drone {drone}: leg {prev_name} -> {} intersects obstacle {k}",
                w.id
            ));
        }
        prev_pos = &w.position;
        prev_name = &w.id;
    }
    out
}

fn build_plan(m: &Mission, orders: &[Vec<usize>]) -> RoutePlan {
    let mut routes = Vec::with_capacity(orders.len());
    let mut violations = Vec::new();
    let mut total_length = 0.0;
    for (d, order) in orders.iter().enumerate() {
        let length = indexed_length(m, &m.starts[d], order);
        violations.extend(route_violations(m, d, order, length));
        total_length += length;
        routes.push(DroneRoute {
            waypoint_ids: order.iter().map(|&i| m.waypoints[i].id.clone()).collect(),
            length,
        });
    }
    RoutePlan {
        routes,
        total_length,
        feasible: violations.is_empty(),
        violations,
    }
}

/// Scores fixed per-drone routes given as waypoint ids.
pub fn evaluate_routes(m: &Mission, routes: &[Vec<String>]) -> Result<RoutePlan, RoutingError> {
    m.validate()?;
    if routes.len() != m.starts.len() {
        return Err(RoutingError::Invalid {
            field: "routes".into(),
            reason: format!("expected {} routes, got {}", m.starts.len(), routes.len()),
        });
    }
    let index: HashMap<&str, usize> = m
        .waypoints
        .iter()
        .enumerate()
        .map(|(i, w)| (w.id.as_str(), i))
        .collect();
    let orders = routes
        .iter()
        .map(|r| {
            r.iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| RoutingError::Invalid {
                            field: "routes".into(),
                            reason: format!("unknown waypoint `{id}`"),
                        })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build_plan(m, &orders))
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

fn planar_angle(p: &Vec3, c: &Vec3) -> f64 {
    let a = (p.y - c.y).atan2(p.x - c.x);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Splits waypoint indices into one angular sector per drone.
///
/// Waypoints are ordered by bearing around the start centroid, the circle is
/// cut at the widest bearing gap, and the sequence is divided into contiguous
/// chunks whose sizes differ by at most one. Drones, ordered by their own
/// bearing, are matched to the chunks under the cyclic alignment with the
/// smallest total start-to-chunk-centroid distance.
pub fn sweep_partition(m: &Mission) -> Vec<Vec<usize>> {
    let n_drones = m.starts.len();
    let n = m.waypoints.len();
    if n_drones == 1 {
        return vec![(0..n).collect()];
    }
    let mut parts = vec![Vec::new(); n_drones];
    if n == 0 {
        return parts;
    }
    let c = centroid(&m.starts);
    let mut order: Vec<(f64, usize)> = m
        .waypoints
        .iter()
        .enumerate()
        .map(|(i, w)| (planar_angle(&w.position, &c), i))
        .collect();
    order.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| m.waypoints[a.1].id.cmp(&m.waypoints[b.1].id))
    });

    let mut cut = 0;
    let mut widest = -1.0;
    for k in 0..n {
        let next = if k + 1 < n {
            order[k + 1].0
        } else {
            order[0].0 + 2.0 * PI
        };
        let gap = next - order[k].0;
        if gap > widest {
            widest = gap;
            cut = (k + 1) % n;
        }
    }
    order.rotate_left(cut);

    let (q, r) = (n / n_drones, n % n_drones);
    let mut chunks = Vec::with_capacity(n_drones);
    let mut pos = 0;
    for k in 0..n_drones {
        let size = q + usize::from(k < r);
        chunks.push(
            order[pos..pos + size]
                .iter()
                .map(|&(_, i)| i)
                .collect::<Vec<_>>(),
        );
        pos += size;
    }

    let mut drones: Vec<(f64, usize)> = m
        .starts
        .iter()
        .enumerate()
        .map(|(d, s)| (planar_angle(s, &c), d))
        .collect();
    drones.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let chunk_centroids: Vec<Option<Vec3>> = chunks
        .iter()
        .map(|ch| {
            (!ch.is_empty()).then(|| {
                centroid(
                    &ch.iter()
                        .map(|&i| m.waypoints[i].position)
                        .collect::<Vec<_>>(),
                )
            })
        })
        .collect();
    let cost = |shift: usize| -> f64 {
        (0..n_drones)
            .map(|k| {
                let d = drones[(k + shift) % n_drones].1;
                chunk_centroids[k].map_or(0.0, |cc| (cc - m.starts[d]).norm())
            })
            .sum()
    };
    let mut best_shift = 0;
    let mut best_cost = f64::INFINITY;
    for shift in 0..n_drones {
        let c = cost(shift);
        if c < best_cost {
            best_cost = c;
            best_shift = shift;
        }
    }
    for (k, chunk) in chunks.into_iter().enumerate() {
        parts[drones[(k + best_shift) % n_drones].1] = chunk;
    }
    parts
}

/// Greedy open path from `start`; equal distances go to the smaller id.
pub fn nearest_neighbor(m: &Mission, start: &Vec3, indices: &[usize]) -> Vec<usize> {
    let mut remaining: Vec<usize> = indices.to_vec();
    remaining.sort_by(|&a, &b| m.waypoints[a].id.cmp(&m.waypoints[b].id));
    let mut order = Vec::with_capacity(remaining.len());
    let mut here = *start;
    while !remaining.is_empty() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, &i) in remaining.iter().enumerate() {
            let d = (m.waypoints[i].position - here).norm();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        let i = remaining.remove(best);
        here = m.waypoints[i].position;
        order.push(i);
    }
    order
}

/// Length change from reversing `path[i..=j]` of an open path whose node 0 is
/// the fixed start. Negative means shorter.
fn two_opt_delta(path: &[Vec3], i: usize, j: usize) -> f64 {
    let before = (path[i] - path[i - 1]).norm();
    let after = (path[j] - path[i - 1]).norm();
    if j + 1 < path.len() {
        after + (path[j + 1] - path[i]).norm() - before - (path[j + 1] - path[j]).norm()
    } else {
        after - before
    }
}

fn improvement_threshold(path: &[Vec3]) -> f64 {
    let scale = path.windows(2).map(|w| (w[1] - w[0]).norm()).sum::<f64>();
    IMPROVEMENT_EPS * scale.max(1.0)
}

/// Best-improvement 2-opt until no reversal shortens the route.
pub fn two_opt(m: &Mission, start: &Vec3, order: &mut [usize]) {
    let n = order.len();
    if n < 2 {
        return;
    }
    loop {
        let path: Vec<Vec3> = std::iter::once(*start)
            .chain(order.iter().map(|&i| m.waypoints[i].position))
            .collect();
        let threshold = improvement_threshold(&path);
        let mut best = None;
        let mut best_delta = -threshold;
        for i in 1..n {
            for j in i + 1..=n {
                let delta = two_opt_delta(&path, i, j);
                if delta < best_delta {
                    best_delta = delta;
                    best = Some((i, j));
                }
            }
        }
        match best {
            Some((i, j)) => order[i - 1..j].reverse(),
            None => break,
        }
    }
}

/// True when no single segment reversal shortens the open path.
pub fn is_two_opt_optimal(start: &Vec3, ordered: &[Vec3]) -> bool {
    let path: Vec<Vec3> = std::iter::once(*start)
        .chain(ordered.iter().copied())
        .collect();
    let threshold = improvement_threshold(&path);
    let n = ordered.len();
    (1..n).all(|i| (i + 1..=n).all(|j| two_opt_delta(&path, i, j) >= -threshold))
}

/// Best-improvement Or-opt: moves a run of up to three consecutive waypoints,
/// optionally reversed, to another position. Returns whether it moved anything.
pub fn or_opt(m: &Mission, start: &Vec3, order: &mut Vec<usize>) -> bool {
    let n = order.len();
    if n < 2 {
        return false;
    }
    let pos = |i: usize| m.waypoints[i].position;
    let mut improved = false;
    loop {
        let path: Vec<Vec3> = std::iter::once(*start)
            .chain(order.iter().map(|&i| pos(i)))
            .collect();
        let threshold = improvement_threshold(&path);
        // (from, seg, to, reversed): `to` indexes the order with the run removed
        let mut best: Option<(usize, usize, usize, bool)> = None;
        let mut best_delta = -threshold;
        for seg in 1..=3.min(n - 1) {
            for from in 0..=n - seg {
                // path indices of the run are from+1 ..= from+seg
                let first = path[from + 1];
                let last = path[from + seg];
                let prev = path[from];
                let next = path.get(from + seg + 1);
                let removal = match next {
                    Some(nx) => (nx - prev).norm() - (first - prev).norm() - (nx - last).norm(),
                    None => -(first - prev).norm(),
                };
                let remaining: Vec<Vec3> = path[..=from]
                    .iter()
                    .chain(&path[from + seg + 1..])
                    .copied()
                    .collect();
                // insert between remaining[to] and remaining[to + 1]
                for to in 0..remaining.len() {
                    if to == from {
                        continue;
                    }
                    let u = remaining[to];
                    let v = remaining.get(to + 1);
                    for reversed in [false, true] {
                        let (head, tail) = if reversed {
                            (last, first)
                        } else {
                            (first, last)
                        };
                        let insertion = match v {
                            Some(v) => (head - u).norm() + (v - tail).norm() - (v - u).norm(),
                            None => (head - u).norm(),
                        };
                        let delta = removal + insertion;
                        if delta < best_delta {
                            best_delta = delta;
                            best = Some((from, seg, to, reversed));
                        }
                    }
                }
            }
        }
        match best {
            Some((from, seg, to, reversed)) => {
                let mut run: Vec<usize> = order.drain(from..from + seg).collect();
                if reversed {
                    run.reverse();
                }
                order.splice(to..to, run);
                improved = true;
            }
            None => return improved,
        }
    }
}

/// Alternates 2-opt and Or-opt until neither shortens the route. The result
/// is always 2-opt locally optimal.
pub fn local_search(m: &Mission, start: &Vec3, order: &mut Vec<usize>) {
    loop {
        two_opt(m, start, order);
        if !or_opt(m, start, order) {
            break;
        }
    }
}

/// Orders one drone's waypoints.
///
/// Seeds are the nearest-neighbour tour plus, for each waypoint, the
/// nearest-neighbour tour forced to visit it first; each seed is improved by
/// [`local_search`] and the shortest result wins (earliest seed on ties).
pub fn order_route(m: &Mission, start: &Vec3, indices: &[usize]) -> Vec<usize> {
    let mut best = nearest_neighbor(m, start, indices);
    local_search(m, start, &mut best);
    let mut best_len = indexed_length(m, start, &best);
    let mut firsts: Vec<usize> = indices.to_vec();
    firsts.sort_by(|&a, &b| m.waypoints[a].id.cmp(&m.waypoints[b].id));
    for &first in &firsts {
        let rest: Vec<usize> = indices.iter().copied().filter(|&i| i != first).collect();
        let mut order = vec![first];
        order.extend(nearest_neighbor(m, &m.waypoints[first].position, &rest));
        local_search(m, start, &mut order);
        let l = indexed_length(m, start, &order);
        if l < best_len - IMPROVEMENT_EPS * best_len.max(1.0) {
            best_len = l;
            best = order;
        }
    }
    best
}

/// Heuristic route plan: sweep assignment, then per drone nearest-neighbour
/// construction improved by 2-opt (with Or-opt and multi-start seeding).
pub fn optimize(m: &Mission) -> Result<RoutePlan, RoutingError> {
    m.validate()?;
    let parts = sweep_partition(m);
    let orders: Vec<Vec<usize>> = parts
        .iter()
        .enumerate()
        .map(|(d, idx)| order_route(m, &m.starts[d], idx))
        .collect();
    Ok(build_plan(m, &orders))
}

// Lexicographic successor; false once the last permutation is reached.
fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[derive(Clone)]
struct SubsetBest {
    /// Shortest ordering satisfying the drone's constraints, if any.
    feasible: Option<(f64, Vec<usize>)>,
    /// Shortest ordering overall.
    any: (f64, Vec<usize>),
}

fn best_ordering(m: &Mission, drone: usize, subset: &[usize]) -> SubsetBest {
    // Enumerate positions in id order so ties resolve to the id-smallest sequence.
    let mut ids: Vec<usize> = subset.to_vec();
    ids.sort_by(|&a, &b| m.waypoints[a].id.cmp(&m.waypoints[b].id));
    let mut perm: Vec<usize> = (0..ids.len()).collect();
    let start = &m.starts[drone];
    let mut feasible: Option<(f64, Vec<usize>)> = None;
    let mut any: Option<(f64, Vec<usize>)> = None;
    loop {
        let order: Vec<usize> = perm.iter().map(|&k| ids[k]).collect();
        let len = indexed_length(m, start, &order);
        if any.as_ref().is_none_or(|(best, _)| len < *best) {
            any = Some((len, order.clone()));
        }
        if feasible.as_ref().is_none_or(|(best, _)| len < *best)
            && route_violations(m, drone, &order, len).is_empty()
        {
            feasible = Some((len, order));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    SubsetBest {
        feasible,
        any: any.expect("at least one permutation"),
    }
}

/// Exhaustive optimum over all assignments and orderings.
///
/// Minimizes total length among feasible plans; when none is feasible the
/// shortest plan is returned, flagged infeasible.
pub fn brute_force_optimize(m: &Mission) -> Result<RoutePlan, RoutingError> {
    m.validate()?;
    let n = m.waypoints.len();
    let d = m.starts.len();
    let too_large = if d == 1 {
        n > BRUTE_FORCE_MAX_SINGLE
    } else {
        n > BRUTE_FORCE_MAX_MULTI || d > BRUTE_FORCE_MAX_DRONES
    };
    if too_large {
        return Err(RoutingError::TooLarge {
            waypoints: n,
            drones: d,
        });
    }
    if n == 0 {
        return Ok(build_plan(m, &vec![Vec::new(); d]));
    }

    let full = 1usize << n;
    let mut cache: Vec<Vec<Option<SubsetBest>>> = vec![vec![None; full]; d];
    let mut best_feasible: Option<(f64, Vec<Vec<usize>>)> = None;
    let mut best_any: Option<(f64, Vec<Vec<usize>>)> = None;

    // Assignment vector: waypoint i goes to drone assign[i]; counted in base d.
    let mut assign = vec![0usize; n];
    loop {
        let mut masks = vec![0usize; d];
        for (i, &a) in assign.iter().enumerate() {
            masks[a] |= 1 << i;
        }
        let mut total_any = 0.0;
        let mut total_feasible = Some(0.0);
        let mut orders_any = Vec::with_capacity(d);
        let mut orders_feasible = Vec::with_capacity(d);
        for drone in 0..d {
            let mask = masks[drone];
            let entry = cache[drone][mask].get_or_insert_with(|| {
                let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                best_ordering(m, drone, &subset)
            });
            total_any += entry.any.0;
            orders_any.push(entry.any.1.clone());
            match (&entry.feasible, total_feasible) {
                (Some((len, order)), Some(t)) => {
                    total_feasible = Some(t + len);
                    orders_feasible.push(order.clone());
                }
                _ => total_feasible = None,
            }
        }
        if best_any.as_ref().is_none_or(|(b, _)| total_any < *b) {
            best_any = Some((total_any, orders_any));
        }
        if let Some(t) = total_feasible {
            if best_feasible.as_ref().is_none_or(|(b, _)| t < *b) {
                best_feasible = Some((t, orders_feasible));
            }
        }

        // increment the base-d counter
        let mut k = 0;
        while k < n {
            assign[k] += 1;
            if assign[k] < d {
                break;
            }
            assign[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    let (_, orders) = best_feasible.or(best_any).expect("non-empty search");
    Ok(build_plan(m, &orders))
}
