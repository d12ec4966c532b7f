//! Turns a dispatch commitment into a timed sequence of calendar events.

use rand::Rng;
use rand_distr::{Distribution, Triangular};

use super::{ActionKind, DispatchAction};
use crate::geo::{gc_distance, GeoPoint, LengthM};
use crate::simkit::{Event, EventKind};
use crate::world::{
    leg_feasible_with_fuel, ms_to_secs, secs_to_ms, transfer_mode, watercraft_position, Aircraft,
    AircraftStatus, AircraftUpdate, Custody, CustodyUpdate, EvacRequest, FlightLeg, Millis,
    ScheduledEvent, TransferMode, TransitStage, TreatmentFacility, Watercraft, WorldState,
};

/// Source of service durations: exact means, or triangular noise around them.
pub trait ServiceClock {
    fn duration(&mut self, mean_s: f64) -> Millis;
}

pub struct MeanService;

impl ServiceClock for MeanService {
    fn duration(&mut self, mean_s: f64) -> Millis {
        secs_to_ms(mean_s)
    }
}

pub struct NoisyService<'a, R: Rng> {
    pub rng: &'a mut R,
    pub fraction: f64,
}

impl<R: Rng> ServiceClock for NoisyService<'_, R> {
    fn duration(&mut self, mean_s: f64) -> Millis {
        if mean_s <= 0.0 || self.fraction <= 0.0 {
            return secs_to_ms(mean_s);
        }
        let lo = mean_s * (1.0 - self.fraction);
        let hi = mean_s * (1.0 + self.fraction);
        let tri = Triangular::new(lo, hi, mean_s).expect("valid triangular bounds");
        secs_to_ms(tri.sample(self.rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    pub events: Vec<ScheduledEvent>,
    pub delivered_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("infeasible: {0}")]
pub struct Infeasible(pub String);

#[derive(Clone, Copy)]
pub(crate) enum Target<'a> {
    Fixed(GeoPoint),
    Vessel(&'a Watercraft),
}

impl Target<'_> {
    pub(crate) fn position(&self, t: Millis) -> GeoPoint {
        match self {
            Target::Fixed(p) => *p,
            Target::Vessel(w) => watercraft_position(w, ms_to_secs(t)),
        }
    }

    pub(crate) fn refuels(&self) -> bool {
        match self {
            Target::Fixed(_) => true,
            Target::Vessel(w) => w.refuel,
        }
    }
}

fn flight_ms(dist: f64, speed: f64) -> Millis {
    secs_to_ms(dist / speed)
}

/// Forward intercept: leaves `from` at `depart` and meets `target`.
/// Returns arrival time, meeting point and distance flown.
pub(crate) fn intercept(from: GeoPoint, target: Target<'_>, depart: Millis, speed: f64) -> (Millis, GeoPoint, f64) {
    let mut t = depart;
    for _ in 0..60 {
        let d = gc_distance(from, target.position(t)).meters();
        let next = depart + flight_ms(d, speed);
        if next == t {
            break;
        }
        t = next;
    }
    let p = target.position(t);
    (t, p, gc_distance(from, p).meters())
}

/// Latest launch from `home` that reaches `target` by `meet`.
pub(crate) fn launch_for_arrival(home: Target<'_>, target: Target<'_>, meet: Millis, speed: f64) -> Millis {
    let goal = target.position(meet);
    let mut launch = meet;
    for _ in 0..60 {
        let d = gc_distance(home.position(launch), goal).meters();
        let next = meet - flight_ms(d, speed);
        if next == launch {
            break;
        }
        launch = next;
    }
    launch
}

pub(crate) fn home_target<'a>(state: &'a WorldState, ac: &Aircraft) -> Target<'a> {
    ac.home_watercraft
        .as_ref()
        .and_then(|id| state.watercraft(id))
        .map(Target::Vessel)
        .unwrap_or(Target::Fixed(ac.home_base))
}

fn update(status: AircraftStatus, position: GeoPoint, leg: Option<FlightLeg>, fuel: f64) -> AircraftUpdate {
    AircraftUpdate {
        status,
        position,
        leg,
        fuel: LengthM(fuel.max(0.0)),
        release: false,
    }
}

fn transit(carrier: Custody, stage: TransitStage) -> Option<CustodyUpdate> {
    Some(CustodyUpdate::Transit { carrier, stage })
}

struct Ctx<'a> {
    state: &'a WorldState,
    events: Vec<ScheduledEvent>,
}

impl Ctx<'_> {
    fn push(&mut self, event: Event, ac: Option<AircraftUpdate>, custody: Option<CustodyUpdate>) {
        self.events.push(ScheduledEvent {
            event,
            aircraft: ac,
            custody,
        });
    }
}

fn check(fuel: f64, from: GeoPoint, to: GeoPoint, refuel: bool, what: &str, ac: &Aircraft) -> Result<(), Infeasible> {
    if leg_feasible_with_fuel(LengthM(fuel), from, to, refuel) {
        Ok(())
    } else {
        Err(Infeasible(format!("{} cannot fly {what}", ac.id)))
    }
}

/// Launch, fly to the point of injury and take the patient aboard.
/// Returns (time the patient is aboard, fuel left).
fn pickup_phase(
    cx: &mut Ctx<'_>,
    ac: &Aircraft,
    req: &EvacRequest,
    launch: Millis,
    svc: &mut dyn ServiceClock,
) -> Result<(Millis, f64), Infeasible> {
    let start = if ac.home_watercraft.is_some() {
        home_target(cx.state, ac).position(launch)
    } else {
        ac.position
    };
    let mut fuel = ac.fuel_range_remaining.meters();
    check(fuel, start, req.location, false, "to the pickup", ac)?;
    let d = gc_distance(start, req.location).meters();
    let arrive = launch + flight_ms(d, ac.cruise_speed);
    let leg = FlightLeg {
        from: start,
        to: req.location,
        depart: launch,
        arrive,
    };
    cx.push(
        Event::new(launch, EventKind::Launch).aircraft(&ac.id).request(&req.id),
        Some(update(AircraftStatus::Enroute, start, Some(leg), fuel)),
        None,
    );
    fuel -= d;
    cx.push(
        Event::new(arrive, EventKind::ArrivePickup).aircraft(&ac.id).request(&req.id),
        Some(update(AircraftStatus::OnStation, req.location, None, fuel)),
        None,
    );
    let done = arrive + svc.duration(ac.service_time(req.pickup_mode));
    if req.pickup_mode == TransferMode::Hoist {
        fuel -= ac.hoist_burn().meters();
    }
    Ok((done, fuel))
}

/// Flies home from `from` leaving at `depart`; returns the leg and the refuel event.
fn return_leg(
    cx: &Ctx<'_>,
    ac: &Aircraft,
    from: GeoPoint,
    depart: Millis,
    fuel: f64,
) -> Result<(FlightLeg, ScheduledEvent), Infeasible> {
    let home = home_target(cx.state, ac);
    let (arrive, at, _) = intercept(from, home, depart, ac.cruise_speed);
    check(fuel, from, at, home.refuels(), "home", ac)?;
    let leg = FlightLeg {
        from,
        to: at,
        depart,
        arrive,
    };
    let done = arrive + secs_to_ms(cx.state.params.refuel_time);
    let mut up = update(AircraftStatus::Idle, at, None, ac.max_range.meters());
    up.release = true;
    let refuel = ScheduledEvent {
        event: Event::new(done, EventKind::RefuelComplete).aircraft(&ac.id),
        aircraft: Some(up),
        custody: None,
    };
    Ok((leg, refuel))
}

/// Patient aboard `ac` at `from` at time `depart`: fly to the facility, hand over, go home.
fn delivery_phase(
    cx: &mut Ctx<'_>,
    ac: &Aircraft,
    req: &EvacRequest,
    fac: &TreatmentFacility,
    from: GeoPoint,
    depart: Millis,
    mut fuel: f64,
    svc: &mut dyn ServiceClock,
) -> Result<Millis, Infeasible> {
    check(fuel, from, fac.location, false, "to the facility", ac)?;
    let d = gc_distance(from, fac.location).meters();
    let arrive = depart + flight_ms(d, ac.cruise_speed);
    let leg = FlightLeg {
        from,
        to: fac.location,
        depart,
        arrive,
    };
    cx.push(
        Event::new(depart, EventKind::ServiceComplete).aircraft(&ac.id).request(&req.id),
        Some(update(AircraftStatus::Enroute, from, Some(leg), fuel)),
        transit(Custody::Aircraft(ac.id.clone()), TransitStage::ToFacility),
    );
    fuel -= d;
    cx.push(
        Event::new(arrive, EventKind::ArriveFacility)
            .aircraft(&ac.id)
            .request(&req.id)
            .facility(&fac.id),
        Some(update(AircraftStatus::OnStation, fac.location, None, fuel)),
        None,
    );
    let delivered = arrive + svc.duration(ac.service_time(TransferMode::Ground));
    let (home_leg, refuel) = return_leg(cx, ac, fac.location, delivered, fuel)?;
    cx.push(
        Event::new(delivered, EventKind::Delivered)
            .aircraft(&ac.id)
            .request(&req.id)
            .facility(&fac.id),
        Some(update(AircraftStatus::Returning, fac.location, Some(home_leg), fuel)),
        Some(CustodyUpdate::Delivered),
    );
    cx.events.push(refuel);
    Ok(delivered)
}

struct Dropoff {
    at: Millis,
}

/// Pickup, then carry the patient to the exchange watercraft and leave them on deck.
fn deliverer_phase(
    cx: &mut Ctx<'_>,
    ac: &Aircraft,
    req: &EvacRequest,
    wc: &Watercraft,
    launch: Millis,
    svc: &mut dyn ServiceClock,
) -> Result<Dropoff, Infeasible> {
    let (aboard, mut fuel) = pickup_phase(cx, ac, req, launch, svc)?;
    let (arrive, meet, d) = intercept(req.location, Target::Vessel(wc), aboard, ac.cruise_speed);
    check(fuel, req.location, meet, false, "to the exchange watercraft", ac)?;
    let leg = FlightLeg {
        from: req.location,
        to: meet,
        depart: aboard,
        arrive,
    };
    cx.push(
        Event::new(aboard, EventKind::ServiceComplete).aircraft(&ac.id).request(&req.id),
        Some(update(AircraftStatus::Enroute, req.location, Some(leg), fuel)),
        transit(Custody::Aircraft(ac.id.clone()), TransitStage::ToAxp),
    );
    fuel -= d;
    cx.push(
        Event::new(arrive, EventKind::ArriveAXP).aircraft(&ac.id).watercraft(&wc.id),
        Some(update(AircraftStatus::OnStation, meet, None, fuel)),
        None,
    );
    let mode = transfer_mode(wc);
    let dropped = arrive + svc.duration(ac.service_time(mode));
    if mode == TransferMode::Hoist {
        fuel -= ac.hoist_burn().meters();
    }
    let deck = watercraft_position(wc, ms_to_secs(dropped));
    let (home_leg, refuel) = return_leg(cx, ac, deck, dropped, fuel)?;
    cx.push(
        Event::new(dropped, EventKind::PatientDropoff)
            .aircraft(&ac.id)
            .request(&req.id)
            .watercraft(&wc.id),
        Some(update(AircraftStatus::Returning, deck, Some(home_leg), fuel)),
        transit(Custody::Watercraft(wc.id.clone()), TransitStage::AtAxp),
    );
    cx.events.push(refuel);
    Ok(Dropoff { at: dropped })
}

fn lookup<'a>(state: &'a WorldState, action: &DispatchAction) -> Result<(&'a Aircraft, &'a EvacRequest, &'a TreatmentFacility), Infeasible> {
    let ac_id = action.aircraft_id.as_deref().ok_or_else(|| Infeasible("no aircraft".into()))?;
    let req_id = action.request_id.as_deref().ok_or_else(|| Infeasible("no request".into()))?;
    let ac = state
        .aircraft(ac_id)
        .ok_or_else(|| Infeasible(format!("unknown aircraft {ac_id}")))?;
    let req = state
        .request(req_id)
        .ok_or_else(|| Infeasible(format!("unknown request {req_id}")))?;
    let fac = state
        .facility(&req.destination)
        .ok_or_else(|| Infeasible(format!("unknown facility {}", req.destination)))?;
    Ok((ac, req, fac))
}

/// Builds the event sequence for `action`. Flight times are deterministic; service
/// durations come from `svc`. The receiving aircraft's launch is always scheduled
/// from mean service times.
pub fn build_mission(
    state: &WorldState,
    action: &DispatchAction,
    svc: &mut dyn ServiceClock,
) -> Result<Mission, Infeasible> {
    let (ac, req, fac) = lookup(state, action)?;
    let mut cx = Ctx {
        state,
        events: Vec::new(),
    };
    let launch = action.launch_time;
    let delivered_at = match action.kind {
        ActionKind::Hold => return Err(Infeasible("hold has no mission".into())),
        ActionKind::DispatchDirect => {
            let (aboard, fuel) = pickup_phase(&mut cx, ac, req, launch, svc)?;
            delivery_phase(&mut cx, ac, req, fac, req.location, aboard, fuel, svc)?
        }
        ActionKind::DispatchViaAxp => {
            let wc_id = action
                .axp_watercraft_id
                .as_deref()
                .ok_or_else(|| Infeasible("no exchange watercraft".into()))?;
            let rx_id = action
                .receiving_aircraft_id
                .as_deref()
                .ok_or_else(|| Infeasible("no receiving aircraft".into()))?;
            let wc = state
                .watercraft(wc_id)
                .ok_or_else(|| Infeasible(format!("unknown watercraft {wc_id}")))?;
            let rx = state
                .aircraft(rx_id)
                .ok_or_else(|| Infeasible(format!("unknown aircraft {rx_id}")))?;

            let predicted = {
                let mut scratch = Ctx {
                    state,
                    events: Vec::new(),
                };
                deliverer_phase(&mut scratch, ac, req, wc, launch, &mut MeanService)?.at
            };
            let drop = deliverer_phase(&mut cx, ac, req, wc, launch, svc)?;

            let clearance = secs_to_ms(state.params.axp_clearance);
            let rx_home = home_target(state, rx);
            let ideal = launch_for_arrival(rx_home, Target::Vessel(wc), predicted + clearance, rx.cruise_speed);
            let rx_launch = state.params.launch_slot(ideal).max(launch);

            let start = if rx.home_watercraft.is_some() {
                rx_home.position(rx_launch)
            } else {
                rx.position
            };
            let mut fuel = rx.fuel_range_remaining.meters();
            let (arrive, meet, d) = intercept(start, Target::Vessel(wc), rx_launch, rx.cruise_speed);
            check(fuel, start, meet, false, "to the exchange watercraft", rx)?;
            cx.push(
                Event::new(rx_launch, EventKind::Launch).aircraft(&rx.id).request(&req.id),
                Some(update(
                    AircraftStatus::Enroute,
                    start,
                    Some(FlightLeg {
                        from: start,
                        to: meet,
                        depart: rx_launch,
                        arrive,
                    }),
                    fuel,
                )),
                None,
            );
            fuel -= d;
            cx.push(
                Event::new(arrive, EventKind::ArriveAXP).aircraft(&rx.id).watercraft(&wc.id),
                Some(update(AircraftStatus::OnStation, meet, None, fuel)),
                None,
            );
            let pickup = arrive.max(drop.at + clearance);
            cx.push(
                Event::new(pickup, EventKind::PatientPickup)
                    .aircraft(&rx.id)
                    .request(&req.id)
                    .watercraft(&wc.id),
                None,
                transit(Custody::Aircraft(rx.id.clone()), TransitStage::ToFacility),
            );
            let mode = transfer_mode(wc);
            let aboard = pickup + svc.duration(rx.service_time(mode));
            if mode == TransferMode::Hoist {
                fuel -= rx.hoist_burn().meters();
            }
            let from = watercraft_position(wc, ms_to_secs(aboard));
            delivery_phase(&mut cx, rx, req, fac, from, aboard, fuel, svc)?
        }
    };
    cx.events.sort_by(|a, b| a.event.cmp(&b.event));
    Ok(Mission {
        events: cx.events,
        delivered_at,
    })
}
