use std::cmp::Ordering;

use super::PlanError;
use crate::simkit::Policy;
use crate::smdp::{self, DispatchAction};
use crate::world::WorldState;

/// Baseline dispatcher: serve the most urgent, oldest request first, with whichever
/// feasible action gets the patient to the facility soonest.
///
/// A request with no feasible action is passed over in favour of the next one; hold
/// only when nothing at all can be dispatched.
pub fn greedy_policy(s: &WorldState) -> Result<DispatchAction, PlanError> {
    if smdp::is_terminal(s) {
        return Err(PlanError::TerminalState);
    }
    let mut queue: Vec<_> = s
        .pending_requests
        .iter()
        .filter_map(|id| s.request(id))
        .collect();
    queue.sort_by(|a, b| {
        a.precedence
            .cmp(&b.precedence)
            .then(a.time.total_cmp(&b.time))
            .then(a.id.cmp(&b.id))
    });
    for req in queue {
        let best = smdp::request_candidates(s, &req.id, false)
            .into_iter()
            .min_by(|(a, ma), (b, mb)| {
                ma.delivered_at
                    .cmp(&mb.delivered_at)
                    .then_with(|| tie_break(a, b))
            });
        if let Some((a, _)) = best {
            return Ok(a);
        }
    }
    Ok(DispatchAction::hold(s.clock))
}

// aircraft id, then watercraft id (direct before any watercraft), then receiver id
fn tie_break(a: &DispatchAction, b: &DispatchAction) -> Ordering {
    a.aircraft_id
        .cmp(&b.aircraft_id)
        .then_with(|| a.axp_watercraft_id.cmp(&b.axp_watercraft_id))
        .then_with(|| a.receiving_aircraft_id.cmp(&b.receiving_aircraft_id))
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GreedyPolicy;

impl Policy for GreedyPolicy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn decide(&mut self, s: &WorldState) -> DispatchAction {
        greedy_policy(s).unwrap_or_else(|_| DispatchAction::hold(s.clock))
    }
}
