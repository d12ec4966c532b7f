//! Multi-aircraft transfer chains: time-expanded uniform-cost search.
//!
//! Search states are (place, carrier, fuel, aircraft used so far, time). A patient on
//! the ground or on a deck has no carrier; from there an unused aircraft can be summoned
//! or the patient can wait one time step. The positioning flight of a summoned aircraft
//! keeps enough range to get home again; fuel is only taken on with the patient aboard. A carrier with the patient aboard can fly to
//! the destination, to any watercraft (to hand over, or to refuel if the watercraft can
//! refuel it), or to its own base to refuel. Every arrival is rounded up to the time grid
//! `t0 + k·dt`; moving watercraft are intercepted at the rounded times.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::ZoneError;
use crate::geo::{gc_distance, GeoPoint, LengthM};
use crate::smdp::mission::{intercept, launch_for_arrival, Target};
use crate::world::{
    leg_feasible_with_fuel, ms_to_secs, secs_to_ms, transfer_mode, Aircraft, Millis, TransferMode,
    Watercraft, LEG_TOLERANCE_M,
};

/// A destination within this distance of an aircraft's home base counts as that base.
pub const COLOCATED_M: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum Place {
    Pickup,
    Dest,
    Watercraft(String),
    /// Home base of the named aircraft.
    Base(String),
}

impl Place {
    fn label(&self) -> String {
        match self {
            Place::Pickup => "pickup".into(),
            Place::Dest => "dest".into(),
            Place::Watercraft(id) => format!("wc:{id}"),
            Place::Base(id) => format!("base:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanLeg {
    pub carrier: String,
    pub from: Place,
    pub to: Place,
    pub from_pos: GeoPoint,
    pub to_pos: GeoPoint,
    /// Seconds.
    pub depart: f64,
    /// Seconds; when the aircraft reaches `to`, before any service or refuelling.
    pub arrive: f64,
    /// Seconds at which the next step can start (after service or refuelling, on the grid).
    pub ready: f64,
    pub distance: LengthM,
    /// Carrier cruise speed, m/s.
    pub speed: f64,
    /// Range left on departure.
    pub fuel_before: LengthM,
    pub with_patient: bool,
    /// `to` can refuel this carrier; the leg was checked against the full remaining range.
    pub refuel_at_to: bool,
    /// The carrier refuelled at `to`.
    pub refuel: bool,
    /// How the patient is handed over at `to`, if a handover happens there.
    pub exchange_mode: Option<TransferMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub legs: Vec<PlanLeg>,
    /// Seconds from `t0` to handover at the destination.
    pub total_time: f64,
    pub total_distance: LengthM,
    pub t0: f64,
}

impl TransferPlan {
    /// Watercraft where the patient changes aircraft, in order.
    pub fn exchange_points(&self) -> Vec<String> {
        self.legs
            .iter()
            .filter(|l| l.with_patient && l.exchange_mode.is_some())
            .filter_map(|l| match &l.to {
                Place::Watercraft(id) => Some(id.clone()),
                _ => None,
            })
            .collect()
    }

    /// Places where a patient-carrying aircraft refuelled, in order.
    pub fn refuel_stops(&self) -> Vec<Place> {
        self.legs
            .iter()
            .filter(|l| l.with_patient && l.refuel)
            .map(|l| l.to.clone())
            .collect()
    }

    pub fn arrival(&self) -> f64 {
        self.t0 + self.total_time
    }

    /// Checks the plan's internal consistency from the plan alone.
    pub fn validate(&self) -> Result<(), String> {
        let tol_s = 1e-3;
        let patient: Vec<&PlanLeg> = self.legs.iter().filter(|l| l.with_patient).collect();
        let first = patient.first().ok_or("no leg carries the patient")?;
        if first.from != Place::Pickup {
            return Err("first patient leg does not start at the pickup".into());
        }
        if patient.last().map(|l| &l.to) != Some(&Place::Dest) {
            return Err("last patient leg does not end at the destination".into());
        }
        for (i, l) in self.legs.iter().enumerate() {
            let d = gc_distance(l.from_pos, l.to_pos).meters();
            if (d - l.distance.meters()).abs() > 1.0 {
                return Err(format!("leg {i}: distance {} does not match endpoints ({d})", l.distance.meters()));
            }
            if l.arrive + tol_s < l.depart || l.ready + tol_s < l.arrive {
                return Err(format!("leg {i}: times out of order"));
            }
            if (l.arrive - l.depart) * l.speed + 1.0 < d {
                return Err(format!("leg {i}: faster than cruise speed"));
            }
            if !leg_feasible_with_fuel(l.fuel_before, l.from_pos, l.to_pos, l.refuel_at_to) {
                return Err(format!("leg {i}: beyond fuel limits"));
            }
            if l.refuel && !l.refuel_at_to {
                return Err(format!("leg {i}: refuelled where no fuel is available"));
            }
        }
        for w in patient.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.to != b.from {
                return Err(format!("patient jumps from {:?} to {:?}", a.to, b.from));
            }
            if b.depart + tol_s < a.ready {
                return Err("patient legs overlap in time".into());
            }
            if a.carrier != b.carrier && !matches!(a.to, Place::Watercraft(_)) {
                return Err("patient changes aircraft away from a watercraft".into());
            }
        }
        // per carrier: legs in time order, contiguous, fuel never grows without a refuel
        let mut carriers: Vec<&str> = self.legs.iter().map(|l| l.carrier.as_str()).collect();
        carriers.sort();
        carriers.dedup();
        for c in carriers {
            let legs: Vec<&PlanLeg> = self.legs.iter().filter(|l| l.carrier == c).collect();
            for w in legs.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b.depart + tol_s < a.ready {
                    return Err(format!("{c}: legs overlap"));
                }
                if a.to != b.from {
                    return Err(format!("{c}: leaves {:?} but was at {:?}", b.from, a.to));
                }
                if !a.refuel && b.fuel_before.meters() > a.fuel_before.meters() - a.distance.meters() + LEG_TOLERANCE_M {
                    return Err(format!("{c}: fuel increased without refuelling"));
                }
            }
        }
        Ok(())
    }
}

/// Everything chain search needs to know besides the endpoints.
#[derive(Debug, Clone, Copy)]
pub struct ChainContext<'a> {
    pub fleet: &'a [Watercraft],
    pub pool: &'a [Aircraft],
    /// Seconds to refuel.
    pub refuel_time: f64,
    /// How the patient is taken aboard at the pickup point.
    pub pickup_mode: TransferMode,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Pickup,
    Dest,
    Wc(usize),
    Base(usize),
}

#[derive(Clone)]
struct Label {
    node: Node,
    carrier: Option<usize>,
    fuel: f64,
    used: u64,
    t: Millis,
    legs: u32,
    ids: Vec<String>,
    parent: Option<usize>,
    leg: Option<PlanLeg>,
    done: bool,
}

struct Search<'a> {
    ctx: &'a ChainContext<'a>,
    pickup: GeoPoint,
    dest: GeoPoint,
    t0: Millis,
    dt: Millis,
    end: Millis,
}

impl Search<'_> {
    fn quantize(&self, t: Millis) -> Millis {
        let k = (t - self.t0 + self.dt - 1).div_euclid(self.dt);
        self.t0 + k.max(0) * self.dt
    }

    fn target(&self, n: Node) -> Target<'_> {
        match n {
            Node::Pickup => Target::Fixed(self.pickup),
            Node::Dest => Target::Fixed(self.dest),
            Node::Wc(i) => Target::Vessel(&self.ctx.fleet[i]),
            Node::Base(k) => Target::Fixed(self.ctx.pool[k].home_base),
        }
    }

    fn place(&self, n: Node) -> Place {
        match n {
            Node::Pickup => Place::Pickup,
            Node::Dest => Place::Dest,
            Node::Wc(i) => Place::Watercraft(self.ctx.fleet[i].id.clone()),
            Node::Base(k) => Place::Base(self.ctx.pool[k].id.clone()),
        }
    }

    fn home(&self, k: usize) -> (Node, Target<'_>) {
        let ac = &self.ctx.pool[k];
        match ac
            .home_watercraft
            .as_ref()
            .and_then(|id| self.ctx.fleet.iter().position(|w| &w.id == id))
        {
            Some(i) => (Node::Wc(i), Target::Vessel(&self.ctx.fleet[i])),
            None => (Node::Base(k), Target::Fixed(ac.home_base)),
        }
    }

    fn refuels(&self, n: Node, k: usize) -> bool {
        let ac = &self.ctx.pool[k];
        match n {
            Node::Pickup => false,
            Node::Wc(i) => {
                let w = &self.ctx.fleet[i];
                w.refuel && w.helipad
            }
            Node::Base(b) => b == k,
            Node::Dest => ac.home_watercraft.is_none() && gc_distance(ac.home_base, self.dest).meters() <= COLOCATED_M,
        }
    }

    fn handover_mode(&self, n: Node) -> TransferMode {
        match n {
            Node::Pickup => self.ctx.pickup_mode,
            Node::Wc(i) => transfer_mode(&self.ctx.fleet[i]),
            Node::Dest | Node::Base(_) => TransferMode::Ground,
        }
    }

    fn hoist_cost(&self, k: usize, mode: TransferMode) -> f64 {
        if mode == TransferMode::Hoist {
            self.ctx.pool[k].hoist_burn().meters()
        } else {
            0.0
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn leg(
        &self,
        k: usize,
        from: Node,
        to: Node,
        from_pos: GeoPoint,
        to_pos: GeoPoint,
        depart: Millis,
        arrive: Millis,
        ready: Millis,
        fuel: f64,
        with_patient: bool,
        refuel: bool,
        exchange: Option<TransferMode>,
    ) -> PlanLeg {
        let ac = &self.ctx.pool[k];
        PlanLeg {
            carrier: ac.id.clone(),
            from: self.place(from),
            to: self.place(to),
            from_pos,
            to_pos,
            depart: ms_to_secs(depart),
            arrive: ms_to_secs(arrive),
            ready: ms_to_secs(ready),
            distance: gc_distance(from_pos, to_pos),
            speed: ac.cruise_speed,
            fuel_before: LengthM(fuel),
            with_patient,
            refuel_at_to: self.refuels(to, k),
            refuel,
            exchange_mode: exchange,
        }
    }

    /// Summon aircraft `k` to the patient at `at`, who is ready there from time `t`.
    fn summon(&self, lb: &Label, k: usize) -> Option<Label> {
        let ac = &self.ctx.pool[k];
        let (home_node, home) = self.home(k);
        let target = self.target(lb.node);
        let speed = ac.cruise_speed;
        let latest = launch_for_arrival(home, target, lb.t, speed);
        let (launch, arrive, meet) = if latest >= self.t0 {
            (latest, lb.t, target.position(lb.t))
        } else {
            let (a, m, _) = intercept(home.position(self.t0), target, self.t0, speed);
            (self.t0, a, m)
        };
        let start = home.position(launch);
        let fuel = ac.fuel_range_remaining.meters();
        // positioning legs keep return reach; fuel is only taken on with the patient aboard
        if !leg_feasible_with_fuel(LengthM(fuel), start, meet, false) {
            return None;
        }
        let mode = self.handover_mode(lb.node);
        let loaded = arrive.max(lb.t) + secs_to_ms(ac.service_time(mode));
        let ready = self.quantize(loaded);
        if ready > self.end {
            return None;
        }
        let d = gc_distance(start, meet).meters();
        let mut leg = self.leg(k, home_node, lb.node, start, meet, launch, arrive, ready, fuel, false, false, Some(mode));
        leg.refuel_at_to = false;
        let mut ids = lb.ids.clone();
        ids.push(ac.id.clone());
        Some(Label {
            node: lb.node,
            carrier: Some(k),
            fuel: fuel - d - self.hoist_cost(k, mode),
            used: lb.used | (1u64 << k),
            t: ready,
            legs: lb.legs + 1,
            ids,
            parent: None,
            leg: Some(leg),
            done: false,
        })
    }

    /// Carrier `k` flies the patient from the label's node to `to`.
    fn carry(&self, lb: &Label, k: usize, to: Node, out: &mut Vec<Label>) {
        let ac = &self.ctx.pool[k];
        let from_pos = self.target(lb.node).position(lb.t);
        let (arrive, meet, d) = intercept(from_pos, self.target(to), lb.t, ac.cruise_speed);
        let refuel_ok = self.refuels(to, k);
        if !leg_feasible_with_fuel(LengthM(lb.fuel), from_pos, meet, refuel_ok) {
            return;
        }
        let left = lb.fuel - d;
        let mut push = |ready: Millis, next: Option<usize>, fuel: f64, used: u64, refuel: bool, exchange: Option<TransferMode>, done: bool| {
            let ready = self.quantize(ready);
            if ready > self.end {
                return;
            }
            let leg = self.leg(k, lb.node, to, from_pos, meet, lb.t, arrive, ready, lb.fuel, true, refuel, exchange);
            let mut ids = lb.ids.clone();
            ids.push(self.place(to).label());
            out.push(Label {
                node: to,
                carrier: next,
                fuel,
                used,
                t: ready,
                legs: lb.legs + 1,
                ids,
                parent: None,
                leg: Some(leg),
                done,
            });
        };
        match to {
            Node::Dest => {
                let svc = secs_to_ms(ac.service_time(TransferMode::Ground));
                push(arrive + svc, Some(k), left, lb.used, false, Some(TransferMode::Ground), true);
            }
            Node::Wc(_) => {
                let mode = self.handover_mode(to);
                let svc = secs_to_ms(ac.service_time(mode));
                push(arrive + svc, None, 0.0, lb.used, false, Some(mode), false);
                if refuel_ok {
                    let refuel = secs_to_ms(self.ctx.refuel_time);
                    push(arrive + refuel, Some(k), ac.max_range.meters(), lb.used, true, None, false);
                }
            }
            Node::Base(_) => {
                let refuel = secs_to_ms(self.ctx.refuel_time);
                push(arrive + refuel, Some(k), ac.max_range.meters(), lb.used, true, None, false);
            }
            Node::Pickup => {}
        }
    }

    fn expand(&self, lb: &Label) -> Vec<Label> {
        let mut out = Vec::new();
        match lb.carrier {
            None => {
                for k in 0..self.ctx.pool.len() {
                    if lb.used & (1u64 << k) == 0 {
                        out.extend(self.summon(lb, k));
                    }
                }
                if lb.t + self.dt <= self.end {
                    let mut wait = lb.clone();
                    wait.t += self.dt;
                    wait.parent = None;
                    wait.leg = None;
                    out.push(wait);
                }
            }
            Some(k) => {
                self.carry(lb, k, Node::Dest, &mut out);
                for i in 0..self.ctx.fleet.len() {
                    if lb.node != Node::Wc(i) {
                        self.carry(lb, k, Node::Wc(i), &mut out);
                    }
                }
                if self.ctx.pool[k].home_watercraft.is_none() && lb.node != Node::Base(k) {
                    self.carry(lb, k, Node::Base(k), &mut out);
                }
            }
        }
        out
    }
}

/// Fastest way to get a patient from `pickup` to `dest` starting at `t0`, using any
/// number of aircraft from the pool (each at most once) and handovers on watercraft.
///
/// Ties on arrival time go to the plan with fewer legs, then to the lexicographically
/// smaller sequence of aircraft and place ids.
pub fn chain_search(
    pickup: GeoPoint,
    dest: GeoPoint,
    ctx: &ChainContext<'_>,
    t0: f64,
    horizon: f64,
    dt: f64,
) -> Result<TransferPlan, ZoneError> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(ZoneError::InvalidInput("dt and horizon must be positive".into()));
    }
    if ctx.pool.is_empty() {
        return Err(ZoneError::InvalidInput("the aircraft pool is empty".into()));
    }
    if ctx.pool.len() > 64 {
        return Err(ZoneError::InvalidInput("at most 64 aircraft per search".into()));
    }
    let t0_ms = secs_to_ms(t0);
    let search = Search {
        ctx,
        pickup,
        dest,
        t0: t0_ms,
        dt: secs_to_ms(dt).max(1),
        end: t0_ms + secs_to_ms(horizon),
    };

    let mut arena: Vec<Label> = vec![Label {
        node: Node::Pickup,
        carrier: None,
        fuel: 0.0,
        used: 0,
        t: t0_ms,
        legs: 0,
        ids: Vec::new(),
        parent: None,
        leg: None,
        done: false,
    }];
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((t0_ms, 0u32, Vec::<String>::new(), 0usize)));
    // settled fuel levels per (node, carrier, used, time)
    let mut settled: HashMap<(Node, Option<usize>, u64, Millis), Vec<f64>> = HashMap::new();

    while let Some(Reverse((_, _, _, idx))) = heap.pop() {
        let lb = arena[idx].clone();
        if lb.done {
            return Ok(reconstruct(&arena, idx, t0));
        }
        let key = (lb.node, lb.carrier, lb.used, lb.t);
        let seen = settled.entry(key).or_default();
        if seen.iter().any(|&f| f >= lb.fuel - 1e-6) {
            continue;
        }
        seen.push(lb.fuel);
        for mut next in search.expand(&lb) {
            next.parent = Some(idx);
            let key = (next.t, next.legs, next.ids.clone(), arena.len());
            arena.push(next);
            heap.push(Reverse(key));
        }
    }
    Err(ZoneError::NoFeasibleChain)
}

fn reconstruct(arena: &[Label], mut idx: usize, t0: f64) -> TransferPlan {
    let done_t = arena[idx].t;
    let mut legs = Vec::new();
    loop {
        let lb = &arena[idx];
        if let Some(leg) = &lb.leg {
            legs.push(leg.clone());
        }
        match lb.parent {
            Some(p) => idx = p,
            None => break,
        }
    }
    legs.reverse();
    let total_distance = LengthM(legs.iter().map(|l| l.distance.meters()).sum());
    TransferPlan {
        legs,
        total_time: ms_to_secs(done_t) - t0,
        total_distance,
        t0,
    }
}
