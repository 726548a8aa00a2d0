use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{sample_vulnerabilities, DisturbDirection, MechanismParams, Mode};
use crate::model::{role_of, CellArray, CellEncoding, ChipProfile, DataDirection, PhysicalDirection, PhysicalRow, RowState, Side, WordlineRole};
use crate::{Scalar, Time};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Activation,
    OpenTime(Time),
    Elapsed(Time),
}

/// `Activation` and `OpenTime` disturb the aggressor's physical neighbors;
/// `Elapsed` applies retention leakage to the aggressor row itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisturbanceEvent<S> {
    pub aggressor: PhysicalRow,
    pub kind: EventKind,
    pub temperature: S,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bitflip {
    pub row: PhysicalRow,
    pub column: u32,
    /// Logical value before the flip.
    pub from: bool,
    pub physical: PhysicalDirection,
}

impl Bitflip {
    pub fn data_direction(&self) -> DataDirection {
        DataDirection::of_flip(self.from)
    }
}

/// Flip sink: counts always, records only on request.
#[derive(Debug, Default)]
pub(crate) struct FlipLog {
    pub(crate) collect: bool,
    pub(crate) flips: Vec<Bitflip>,
    pub(crate) count: u64,
}

impl FlipLog {
    pub(crate) fn collecting() -> Self {
        FlipLog { collect: true, ..Default::default() }
    }

    fn record(&mut self, flip: Bitflip) {
        self.count += 1;
        if self.collect {
            self.flips.push(flip);
        }
    }
}

type Dose<S> = [[S; 2]; 2];

/// Mechanism strengths at one temperature.
struct Rates<S> {
    mode: Mode,
    nwl_act: S,
    pwl_act: S,
    boost: S,
    pwl_boost: S,
    nwl_press: S,
    pwl_press: S,
    retention: S,
}

impl<S: Scalar> Rates<S> {
    fn new(p: &MechanismParams<S>, temperature: S) -> Self {
        Rates {
            mode: p.mode,
            nwl_act: p.nwl_hammer.at(temperature),
            pwl_act: p.pwl_hammer.at(temperature),
            boost: p.doubleside_boost,
            pwl_boost: match p.mode {
                Mode::Device => S::zero(),
                Mode::Empirical => p.pwl_alternation_boost,
            },
            nwl_press: p.nwl_press.at(temperature),
            pwl_press: p.pwl_press.at(temperature),
            retention: p.retention.at(temperature),
        }
    }

    /// Dose from one activation (and optional open time) of the neighbor on
    /// `side`, per `[parity][direction]`.
    fn interval(&self, side: Side, alternating: bool, activation: bool, open: Time) -> Dose<S> {
        let mut d = [[S::zero(); 2]; 2];
        let ns = S::lit(open.as_ns_f64());
        let device_alt = alternating && self.mode == Mode::Device;
        for (parity, dose) in d.iter_mut().enumerate() {
            match role_of(side, parity as u32) {
                WordlineRole::Nwl => {
                    if activation {
                        dose[0] = dose[0] + if alternating { self.nwl_act * self.boost } else { self.nwl_act };
                    }
                    if !device_alt {
                        dose[1] = dose[1] + self.nwl_press * ns;
                    }
                }
                WordlineRole::Pwl => {
                    if activation {
                        dose[1] = dose[1] + if alternating { self.pwl_act * self.pwl_boost } else { self.pwl_act };
                    }
                    dose[0] = dose[0] + self.pwl_press * ns;
                }
            }
        }
        d
    }
}

/// Victims of `aggressor` with the aggressor's side relative to each.
fn victims<S: Scalar>(profile: &ChipProfile<S>, aggressor: PhysicalRow) -> impl Iterator<Item = (PhysicalRow, Side)> {
    let (lower, upper) = profile.physical_neighbors(aggressor);
    lower.map(|v| (v, Side::Upper)).into_iter().chain(upper.map(|v| (v, Side::Lower)))
}

fn note_neighbor<S>(state: &mut RowState<S>, side: Side) -> bool {
    let alt = state.last_neighbor == Some(side.opposite());
    state.last_neighbor = Some(side);
    state.alternating = alt;
    alt
}

/// Adds `dose` to a row and flips every cell whose threshold was crossed.
fn add_dose<S: Scalar>(
    state: &mut RowState<S>,
    row: PhysicalRow,
    encoding: CellEncoding,
    profile: &ChipProfile<S>,
    dose: &Dose<S>,
    log: &mut FlipLog,
) {
    let mode = profile.params().mode;
    for parity in 0..2 {
        for dir in DisturbDirection::BOTH {
            let add = dose[parity][dir.index()];
            if !(add > S::zero()) {
                continue;
            }
            let acc = state.acc[parity][dir.index()] + add;
            state.acc[parity][dir.index()] = acc;
            let vuln = match &state.vulnerability {
                Some(v) => Arc::clone(v),
                None => {
                    let v = Arc::new(sample_vulnerabilities(profile, row));
                    state.vulnerability = Some(Arc::clone(&v));
                    v
                }
            };
            let list = vuln.list(parity, dir);
            let want_high = dir == DisturbDirection::Falling;
            let mut i = state.cursor[parity][dir.index()];
            while i < list.len() && list[i].threshold <= acc {
                let col = list[i].column as usize;
                if !state.latched[col] {
                    let bit = state.bits[col];
                    if mode.is_high(bit, encoding) == want_high {
                        state.bits.set(col, !bit);
                        state.latched.set(col, true);
                        state.any_latched = true;
                        let physical = if encoding.is_charged(bit) {
                            PhysicalDirection::ChargedToDischarged
                        } else {
                            PhysicalDirection::DischargedToCharged
                        };
                        log.record(Bitflip { row, column: col as u32, from: bit, physical });
                    }
                }
                i += 1;
            }
            state.cursor[parity][dir.index()] = i;
        }
    }
}

/// One ACT..PRE interval of `aggressor`: an activation plus `open` of open
/// time, delivered to both physical neighbors.
pub(crate) fn apply_interval<S: Scalar>(
    array: &mut CellArray<S>,
    profile: &ChipProfile<S>,
    aggressor: PhysicalRow,
    open: Time,
    temperature: S,
    log: &mut FlipLog,
) {
    let rates = Rates::new(profile.params(), temperature);
    for (victim, side) in victims(profile, aggressor) {
        let encoding = array.encoding(victim);
        if let Some(state) = array.touch(victim) {
            let alt = note_neighbor(state, side);
            let dose = rates.interval(side, alt, true, open);
            add_dose(state, victim, encoding, profile, &dose, log);
        }
    }
}

/// Applies `repeats` further iterations of a loop body of ACT..PRE
/// intervals in bulk. Only valid once the body has already run at least
/// once so that every victim's alternation state is at its fixed point;
/// returns `false` without touching the array when that does not hold or a
/// victim is also an aggressor.
pub(crate) fn apply_repeated<S: Scalar>(
    array: &mut CellArray<S>,
    profile: &ChipProfile<S>,
    body: &[(PhysicalRow, Time)],
    temperature: S,
    repeats: u64,
    log: &mut FlipLog,
) -> bool {
    if repeats == 0 {
        return true;
    }
    let rates = Rates::new(profile.params(), temperature);
    let aggressors: BTreeSet<PhysicalRow> = body.iter().map(|&(a, _)| a).collect();
    let mut plan: BTreeMap<PhysicalRow, (Option<Side>, bool, Dose<S>)> = BTreeMap::new();
    for &(aggressor, open) in body {
        for (victim, side) in victims(profile, aggressor) {
            if aggressors.contains(&victim) {
                return false;
            }
            let Some(state) = array.touch(victim) else { continue };
            let entry = plan
                .entry(victim)
                .or_insert((state.last_neighbor, state.alternating, [[S::zero(); 2]; 2]));
            let alt = entry.0 == Some(side.opposite());
            entry.0 = Some(side);
            entry.1 = alt;
            let d = rates.interval(side, alt, true, open);
            for p in 0..2 {
                for k in 0..2 {
                    entry.2[p][k] = entry.2[p][k] + d[p][k];
                }
            }
        }
    }
    for (victim, (last, alt, _)) in &plan {
        let state = &array.rows[victim];
        if state.last_neighbor != *last || state.alternating != *alt {
            return false;
        }
    }
    let n = S::from_count(repeats);
    for (victim, (_, _, mut dose)) in plan {
        for row in dose.iter_mut() {
            for v in row.iter_mut() {
                *v = *v * n;
            }
        }
        let encoding = array.encoding(victim);
        let state = array.rows.get_mut(&victim).expect("planned victim is materialized");
        add_dose(state, victim, encoding, profile, &dose, log);
    }
    true
}

fn apply_retention<S: Scalar>(
    array: &mut CellArray<S>,
    profile: &ChipProfile<S>,
    row: PhysicalRow,
    rates: &Rates<S>,
    elapsed: Time,
    log: &mut FlipLog,
) {
    let encoding = array.encoding(row);
    let Some(state) = array.rows.get_mut(&row) else { return };
    let dir = rates.mode.retention_direction(encoding);
    let amount = rates.retention * S::lit(elapsed.as_ns_f64());
    let mut dose = [[S::zero(); 2]; 2];
    dose[0][dir.index()] = amount;
    dose[1][dir.index()] = amount;
    add_dose(state, row, encoding, profile, &dose, log);
}

/// Applies a single event and returns the cells it flipped.
///
/// An `Activation` also restores the aggressor row. Events never error:
/// neighbors outside the subarray and rows without data are skipped.
pub fn apply_event<S: Scalar>(array: &mut CellArray<S>, profile: &ChipProfile<S>, event: DisturbanceEvent<S>) -> Vec<Bitflip> {
    let mut log = FlipLog::collecting();
    let rates = Rates::new(profile.params(), event.temperature);
    match event.kind {
        EventKind::Activation => {
            array.restore(event.aggressor);
            for (victim, side) in victims(profile, event.aggressor) {
                let encoding = array.encoding(victim);
                if let Some(state) = array.touch(victim) {
                    let alt = note_neighbor(state, side);
                    let dose = rates.interval(side, alt, true, Time::ZERO);
                    add_dose(state, victim, encoding, profile, &dose, &mut log);
                }
            }
        }
        EventKind::OpenTime(open) => {
            for (victim, side) in victims(profile, event.aggressor) {
                let encoding = array.encoding(victim);
                if let Some(state) = array.touch(victim) {
                    let alt = state.alternating && state.last_neighbor == Some(side);
                    let dose = rates.interval(side, alt, false, open);
                    add_dose(state, victim, encoding, profile, &dose, &mut log);
                }
            }
        }
        EventKind::Elapsed(t) => apply_retention(array, profile, event.aggressor, &rates, t, &mut log),
    }
    log.flips
}

/// Advances the array clock by `elapsed` and applies retention leakage to
/// every row holding data.
pub fn retention_tick<S: Scalar>(array: &mut CellArray<S>, profile: &ChipProfile<S>, elapsed: Time, temperature: S) -> Vec<Bitflip> {
    let mut log = FlipLog::collecting();
    let rates = Rates::new(profile.params(), temperature);
    array.set_now(array.now() + elapsed);
    let rows: Vec<PhysicalRow> = array.materialized_rows().collect();
    for row in rows {
        apply_retention(array, profile, row, &rates, elapsed, &mut log);
    }
    log.flips
}
