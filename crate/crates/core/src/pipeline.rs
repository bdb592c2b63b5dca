//! End-to-end mission: plan routes, hand them to the drones, fly the swarm.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::control::Setpoint;
use crate::io::config::LoadedScenario;
use crate::io::metrics::{compute_rmse, MetricsReport};
use crate::routing::{
    brute_force_optimize, evaluate_routes, optimize, Mission, RoutePlan, RoutingError,
};
use crate::swarm::{simulate, RouteTarget, Swarm, SwarmError, Trajectory};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("route planning failed: {0}")]
    Routing(#[from] RoutingError),
    #[error("simulation failed: {0}")]
    Swarm(#[from] SwarmError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionRun {
    pub plan: RoutePlan,
    /// Drones with their assigned routes, in the initial state.
    pub swarm: Swarm,
    pub trajectory: Trajectory,
    pub metrics: MetricsReport,
}

/// The route plan for a loaded scenario: the pinned routes when present,
/// otherwise the heuristic (or, with `oracle`, the exhaustive) optimizer.
pub fn plan_routes(l: &LoadedScenario, oracle: bool) -> Result<RoutePlan, RoutingError> {
    if l.pinned_routes {
        let routes: Vec<Vec<String>> = l
            .swarm
            .drones()
            .iter()
            .map(|d| d.route.iter().map(|r| r.waypoint_id.clone()).collect())
            .collect();
        evaluate_routes(&l.mission, &routes)
    } else if oracle {
        brute_force_optimize(&l.mission)
    } else {
        optimize(&l.mission)
    }
}

/// Replaces each drone's route with the planned one.
pub fn apply_plan(swarm: &mut Swarm, mission: &Mission, plan: &RoutePlan) {
    let by_id: BTreeMap<&str, &crate::routing::Waypoint> = mission
        .waypoints
        .iter()
        .map(|w| (w.id.as_str(), w))
        .collect();
    for (drone, route) in swarm.drones_mut().iter_mut().zip(&plan.routes) {
        drone.route = route
            .waypoint_ids
            .iter()
            .map(|id| RouteTarget {
                waypoint_id: id.clone(),
                setpoint: Setpoint::at(by_id[id.as_str()].position),
            })
            .collect();
    }
}

/// Reference polyline per drone: its start followed by its route targets.
pub fn reference_paths(swarm: &Swarm) -> BTreeMap<String, Vec<Setpoint>> {
    swarm
        .drones()
        .iter()
        .map(|d| {
            let mut path = vec![Setpoint::at(d.state.position)];
            path.extend(d.route.iter().map(|r| r.setpoint));
            (d.id.clone(), path)
        })
        .collect()
}

/// Initialize, plan, simulate, measure.
pub fn run_mission(l: &LoadedScenario) -> Result<MissionRun, PipelineError> {
    let plan = plan_routes(l, false)?;
    if !plan.feasible {
        for v in &plan.violations {
            log::warn!("route plan: {v}");
        }
    }
    let mut swarm = l.swarm.clone();
    apply_plan(&mut swarm, &l.mission, &plan);
    let trajectory = simulate(&swarm, &l.scenario, &l.options)?;
    let metrics = compute_rmse(&trajectory, &reference_paths(&swarm));
    Ok(MissionRun {
        plan,
        swarm,
        trajectory,
        metrics,
    })
}
