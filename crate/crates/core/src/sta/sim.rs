//! Race semantics: every component samples a delay, the smallest wins, the
//! winner takes one enabled edge and its broadcast reaches all enabled receivers.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use super::model::{ChannelId, ComponentId, Edge, LocationId, Network, Sync, CLOCK_EPS};
use super::trace::{EventTrace, TraceEvent};

/// Upper limit on observer-injected broadcasts handled at a single instant.
const MAX_INJECTIONS_PER_INSTANT: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("component `{component}` is dead in location `{location}` at t={time} ms: empty delay interval")]
    DeadComponent {
        component: String,
        location: String,
        time: f64,
    },
    #[error("deadlock at t={time} ms: no component can delay or fire")]
    Deadlock { time: f64 },
    #[error("component `{component}` in location `{location}` at t={time} ms: all enabled branches have zero weight")]
    ZeroWeight {
        component: String,
        location: String,
        time: f64,
    },
    #[error("more than {MAX_INJECTIONS_PER_INSTANT} injected broadcasts at t={time} ms")]
    InjectionLoop { time: f64 },
    #[error("invalid run configuration: {0}")]
    Config(String),
}

/// A failed run, with everything recorded before the failure.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{source}")]
pub struct RunError {
    pub source: SimError,
    pub partial: EventTrace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Simulation horizon in milliseconds.
    pub time_bound: f64,
}

impl RunConfig {
    pub fn new(seed: u64, time_bound: f64) -> Result<Self, SimError> {
        if !(time_bound.is_finite() && time_bound >= 0.0) {
            return Err(SimError::Config(format!(
                "time bound must be finite and non-negative, got {time_bound}"
            )));
        }
        Ok(RunConfig { seed, time_bound })
    }
}

/// Dynamic state of a network: global time, current locations, valuations.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub time: f64,
    pub locations: Vec<LocationId>,
    pub clocks: Vec<f64>,
    pub vars: Vec<f64>,
}

impl NetworkState {
    pub fn initial(net: &Network) -> Self {
        NetworkState {
            time: 0.0,
            locations: net.automata.iter().map(|a| a.initial).collect(),
            clocks: net.clocks.iter().map(|c| c.initial).collect(),
            vars: net.vars.iter().map(|v| v.initial).collect(),
        }
    }

    pub fn location(&self, c: ComponentId) -> LocationId {
        self.locations[c.0]
    }

    pub fn var(&self, v: super::VarId) -> f64 {
        self.vars[v.0]
    }

    pub fn clock(&self, c: super::ClockId) -> f64 {
        self.clocks[c.0]
    }
}

/// A broadcast that happened during a run. `component` is `None` for
/// broadcasts injected by an observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEvent {
    pub time: f64,
    pub component: Option<ComponentId>,
    pub channel: ChannelId,
}

/// Hook into a run. Observers see every broadcast after all participating
/// edges have fired, and may request broadcasts of their own at the same instant.
pub trait Observer {
    fn on_start(&mut self, _net: &Network, _state: &NetworkState) {}

    fn on_event(
        &mut self,
        _event: &ChannelEvent,
        _state: &NetworkState,
        _inject: &mut Vec<ChannelId>,
    ) {
    }
}

impl Observer for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub elapsed: f64,
    pub winner: Option<ComponentId>,
    /// Edges taken, emitter first, as (component, edge index).
    pub fired: Vec<(ComponentId, usize)>,
    pub emitted: Option<ChannelId>,
}

/// Single-run executor over a borrowed network.
pub struct Simulator<'n> {
    net: &'n Network,
    state: NetworkState,
    rng: ChaCha8Rng,
    delays: Vec<Option<f64>>,
    receivers: Vec<(usize, usize)>,
    candidates: Vec<(usize, f64)>,
    warned: Vec<bool>,
}

impl<'n> Simulator<'n> {
    pub fn new(net: &'n Network, seed: u64) -> Self {
        Simulator {
            net,
            state: NetworkState::initial(net),
            rng: ChaCha8Rng::seed_from_u64(seed),
            delays: vec![None; net.automata.len()],
            receivers: Vec::new(),
            candidates: Vec::new(),
            warned: vec![false; net.channels.len()],
        }
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn network(&self) -> &'n Network {
        self.net
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// Samples how long `component` waits before taking a spontaneous edge.
    ///
    /// `None` means the component is passive (it only reacts to broadcasts).
    /// Bounded windows are sampled uniformly, unbounded ones as the earliest
    /// enabling time plus an exponential with the location's exit rate, and
    /// unbounded locations without a rate fire as soon as an edge is enabled.
    pub fn sample_delay(&mut self, component: ComponentId) -> Result<Option<f64>, SimError> {
        sample_delay(self.net, &self.state, component, &mut self.rng)
    }

    /// Draws delays for all components and returns the race winner, or
    /// `None` if every component is passive.
    pub fn plan(&mut self) -> Result<Option<(f64, ComponentId)>, SimError> {
        let mut best = f64::INFINITY;
        let mut ties = 0usize;
        for c in 0..self.net.automata.len() {
            let d = sample_delay(self.net, &self.state, ComponentId(c), &mut self.rng)?;
            self.delays[c] = d;
            if let Some(d) = d {
                if d < best {
                    best = d;
                    ties = 1;
                } else if d == best {
                    ties += 1;
                }
            }
        }
        if ties == 0 {
            return Ok(None);
        }
        let pick = if ties > 1 {
            self.rng.random_range(0..ties)
        } else {
            0
        };
        let winner = self
            .delays
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == Some(best))
            .nth(pick)
            .map(|(i, _)| ComponentId(i))
            .expect("tie index within range");
        Ok(Some((best, winner)))
    }

    /// Lets time pass without any component acting.
    pub fn advance(&mut self, delay: f64) {
        debug_assert!(delay >= 0.0);
        self.state.time += delay;
        for c in &mut self.state.clocks {
            *c += delay;
        }
    }

    /// Advances by `delay` and lets `winner` take one of its enabled
    /// spontaneous edges. If none is enabled at that instant the step is a
    /// pure delay.
    pub fn fire(&mut self, delay: f64, winner: ComponentId) -> Result<StepResult, SimError> {
        self.advance(delay);
        let mut result = StepResult {
            elapsed: delay,
            winner: Some(winner),
            fired: Vec::new(),
            emitted: None,
        };
        let automaton = &self.net.automata[winner.0];
        let loc = self.state.locations[winner.0];
        self.candidates.clear();
        for &e in &automaton.spontaneous[loc.0] {
            let edge = &automaton.edges[e];
            if enabled(edge, &self.state) {
                let w = edge.weight.eval(&self.state.vars);
                if w > 0.0 {
                    self.candidates.push((e, w));
                }
            }
        }
        let Some(edge_idx) = self.choose_candidate() else {
            if automaton.spontaneous[loc.0]
                .iter()
                .any(|&e| enabled(&automaton.edges[e], &self.state))
            {
                return Err(SimError::ZeroWeight {
                    component: automaton.name.clone(),
                    location: automaton.location_name(loc).to_string(),
                    time: self.state.time,
                });
            }
            return Ok(result);
        };
        let edge = &automaton.edges[edge_idx];
        let channel = match edge.sync {
            Sync::Emit(ch) => Some(ch),
            _ => None,
        };
        if let Some(ch) = channel {
            self.collect_receivers(ch, Some(winner.0));
        }
        apply_edge(&mut self.state, winner.0, edge);
        result.fired.push((winner, edge_idx));
        if let Some(ch) = channel {
            self.deliver(&mut result);
            result.emitted = Some(ch);
            self.warn_if_unheard(ch);
        }
        Ok(result)
    }

    /// One race step: sample, pick the winner, fire.
    pub fn step(&mut self) -> Result<StepResult, SimError> {
        match self.plan()? {
            Some((d, w)) => self.fire(d, w),
            None => Err(SimError::Deadlock {
                time: self.state.time,
            }),
        }
    }

    /// Broadcasts `channel` from outside the network at the current instant.
    pub fn inject(&mut self, channel: ChannelId) -> StepResult {
        let mut result = StepResult {
            elapsed: 0.0,
            winner: None,
            fired: Vec::new(),
            emitted: Some(channel),
        };
        self.collect_receivers(channel, None);
        self.deliver(&mut result);
        result
    }

    fn choose_candidate(&mut self) -> Option<usize> {
        match self.candidates.len() {
            0 => None,
            1 => Some(self.candidates[0].0),
            _ => {
                let total: f64 = self.candidates.iter().map(|c| c.1).sum();
                let mut u = self.rng.random::<f64>() * total;
                for &(e, w) in &self.candidates {
                    if u < w {
                        return Some(e);
                    }
                    u -= w;
                }
                self.candidates.last().map(|c| c.0)
            }
        }
    }

    // Receiver guards are evaluated on the state before any update of the
    // broadcast is applied.
    fn collect_receivers(&mut self, channel: ChannelId, exclude: Option<usize>) {
        self.receivers.clear();
        for c in 0..self.net.automata.len() {
            if Some(c) == exclude {
                continue;
            }
            let automaton = &self.net.automata[c];
            let loc = self.state.locations[c];
            self.candidates.clear();
            for &e in &automaton.reactive[loc.0] {
                let edge = &automaton.edges[e];
                if edge.sync == Sync::Receive(channel) && enabled(edge, &self.state) {
                    let w = edge.weight.eval(&self.state.vars);
                    if w > 0.0 {
                        self.candidates.push((e, w));
                    }
                }
            }
            if let Some(e) = self.choose_candidate() {
                self.receivers.push((c, e));
            }
        }
    }

    fn deliver(&mut self, result: &mut StepResult) {
        for &(c, e) in &self.receivers {
            let edge = &self.net.automata[c].edges[e];
            apply_edge(&mut self.state, c, edge);
            result.fired.push((ComponentId(c), e));
        }
    }

    fn warn_if_unheard(&mut self, channel: ChannelId) {
        let ch = &self.net.channels[channel.0];
        if !ch.has_receivers && !ch.external && !ch.observed && !self.warned[channel.0] {
            self.warned[channel.0] = true;
            log::warn!(
                "channel `{}` emitted with no receivers in the network",
                ch.name
            );
        }
    }
}

fn enabled(edge: &Edge, state: &NetworkState) -> bool {
    edge.var_guards
        .iter()
        .all(|g| g.op.holds(state.vars[g.var.0], g.value))
        && edge.clock_guards.iter().all(|g| {
            g.op.holds_clock(state.clocks[g.clock.0], g.bound.eval(&state.vars))
        })
}

fn apply_edge(state: &mut NetworkState, component: usize, edge: &Edge) {
    for c in &edge.resets {
        state.clocks[c.0] = 0.0;
    }
    for u in &edge.updates {
        let v = u.value.eval(&state.vars);
        state.vars[u.var.0] = v;
    }
    state.locations[component] = edge.target;
}

pub(crate) fn sample_delay<R: Rng + ?Sized>(
    net: &Network,
    state: &NetworkState,
    component: ComponentId,
    rng: &mut R,
) -> Result<Option<f64>, SimError> {
    use super::model::CmpOp;

    let automaton = &net.automata[component.0];
    let loc_id = state.locations[component.0];
    let loc = &automaton.locations[loc_id.0];

    let mut hi = f64::INFINITY;
    for &(clock, bound) in &loc.invariant {
        hi = hi.min(bound.eval(&state.vars) - state.clocks[clock.0]);
    }

    let mut lo = f64::INFINITY;
    let mut edge_hi = f64::NEG_INFINITY;
    for &e in &automaton.spontaneous[loc_id.0] {
        let edge = &automaton.edges[e];
        if !edge
            .var_guards
            .iter()
            .all(|g| g.op.holds(state.vars[g.var.0], g.value))
        {
            continue;
        }
        let (mut elo, mut ehi) = (0.0f64, f64::INFINITY);
        for g in &edge.clock_guards {
            let gap = g.bound.eval(&state.vars) - state.clocks[g.clock.0];
            match g.op {
                CmpOp::Ge | CmpOp::Gt => elo = elo.max(gap),
                CmpOp::Le | CmpOp::Lt => ehi = ehi.min(gap),
                CmpOp::Eq => {
                    elo = elo.max(gap);
                    ehi = ehi.min(gap);
                }
            }
        }
        if elo > ehi + CLOCK_EPS || elo > hi + CLOCK_EPS {
            continue;
        }
        lo = lo.min(elo);
        edge_hi = edge_hi.max(ehi);
    }

    if lo.is_infinite() {
        if hi.is_finite() {
            return Err(SimError::DeadComponent {
                component: automaton.name.clone(),
                location: loc.name.clone(),
                time: state.time,
            });
        }
        return Ok(None);
    }

    let upper = hi.min(edge_hi);
    let delay = if upper.is_finite() {
        if upper - lo <= CLOCK_EPS {
            lo
        } else {
            lo + (upper - lo) * rng.random::<f64>()
        }
    } else if let Some(rate) = loc.exit_rate {
        let exp = Exp::new(rate).expect("rate validated at build time");
        lo + exp.sample(rng)
    } else {
        lo
    };
    Ok(Some(delay.max(0.0)))
}

/// Runs `net` from its initial state until global time reaches the bound.
///
/// Emissions on observed channels are appended to the returned trace; every
/// emission is reported to `observer`, which may inject broadcasts.
pub fn run<O: Observer + ?Sized>(
    net: &Network,
    cfg: &RunConfig,
    observer: &mut O,
) -> Result<EventTrace, RunError> {
    let mut sim = Simulator::new(net, cfg.seed);
    let mut trace = EventTrace::new(cfg.time_bound);
    observer.on_start(net, &sim.state);
    let mut injected: Vec<ChannelId> = Vec::new();
    let mut queue: VecDeque<ChannelId> = VecDeque::new();

    let fail = |source: SimError, trace: EventTrace| RunError {
        source,
        partial: trace,
    };

    loop {
        let plan = match sim.plan() {
            Ok(p) => p,
            Err(e) => return Err(fail(e, trace)),
        };
        let Some((delay, winner)) = plan else {
            if sim.time() >= cfg.time_bound {
                break;
            }
            let time = sim.time();
            return Err(fail(SimError::Deadlock { time }, trace));
        };
        if sim.time() + delay > cfg.time_bound {
            let rest = cfg.time_bound - sim.time();
            sim.advance(rest.max(0.0));
            break;
        }
        let step = match sim.fire(delay, winner) {
            Ok(s) => s,
            Err(e) => return Err(fail(e, trace)),
        };
        let Some(channel) = step.emitted else {
            continue;
        };
        dispatch(
            &sim,
            &mut trace,
            observer,
            Some(winner),
            channel,
            &mut injected,
        );
        queue.extend(injected.drain(..));
        let mut handled = 0usize;
        while let Some(ch) = queue.pop_front() {
            handled += 1;
            if handled > MAX_INJECTIONS_PER_INSTANT {
                let time = sim.time();
                return Err(fail(SimError::InjectionLoop { time }, trace));
            }
            sim.inject(ch);
            dispatch(&sim, &mut trace, observer, None, ch, &mut injected);
            queue.extend(injected.drain(..));
        }
    }
    trace.end_time = sim.time();
    Ok(trace)
}

fn dispatch<O: Observer + ?Sized>(
    sim: &Simulator<'_>,
    trace: &mut EventTrace,
    observer: &mut O,
    component: Option<ComponentId>,
    channel: ChannelId,
    injected: &mut Vec<ChannelId>,
) {
    let ch = &sim.net.channels[channel.0];
    let time = sim.state.time;
    if ch.observed {
        trace.events.push(TraceEvent {
            time,
            component,
            channel,
            payload: ch.payload.iter().map(|v| sim.state.vars[v.0]).collect(),
        });
    }
    let event = ChannelEvent {
        time,
        component,
        channel,
    };
    observer.on_event(&event, &sim.state, injected);
}
