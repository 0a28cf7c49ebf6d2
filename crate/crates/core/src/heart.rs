//! Timed-automata heart: atrial and ventricular node automata, the AV node,
//! and the two conduction paths between them.
//!
//! Five automata make up the heart:
//!
//! * `HA_Heart` fires the atrium every `Uniform[cycle_min, cycle_max]` of the
//!   current atrial mode and emits `A_in`.
//! * `Path_A2AV` relays each atrial activation to the AV node.
//! * `HAV_Heart` forwards it unless it falls within the AV refractory window
//!   of the last forwarded activation; blocked activations vanish.
//! * `Path_AV2V` delivers a conducted activation after
//!   `Uniform[delay_min, delay_max]`.
//! * `HV_Heart` emits `V_in` for conducted activations outside its refractory
//!   period, and fires intrinsically while its mode enables it (VT, or NSR
//!   with escape rhythm).
//!
//! Each `V_in` carries a morphology verdict drawn per beat from the shock
//! channel's sensitivity (ventricular origin) or false-positive rate
//! (conducted origin). `Therapy` resets every node and path and cancels
//! conductions in flight.
//!
//! Mode-dependent values live in network variables so that the mode switch
//! automata (see [`crate::patient`]) can rewrite them.

use thiserror::Error;

use crate::sta::{
    Automaton, Bound, ChannelEvent, ChannelId, CmpOp, ComponentId, Edge, Expr, Location, Network,
    NetworkBuilder, NetworkState, Observer, VarId,
};

/// Variable value of `origin` for a conducted ventricular activation.
pub const ORIGIN_CONDUCTED: f64 = 1.0;
/// Variable value of `origin` for an intrinsic ventricular activation.
pub const ORIGIN_VENTRICULAR: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid heart parameter: {0}")]
pub struct HeartError(pub String);

/// Firing bounds and refractory period of a node in one rhythm mode, in ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeParameters {
    pub cycle_min: f64,
    pub cycle_max: f64,
    pub erp: f64,
}

impl NodeParameters {
    pub fn new(cycle_min: f64, cycle_max: f64, erp: f64) -> Result<Self, HeartError> {
        let p = NodeParameters {
            cycle_min,
            cycle_max,
            erp,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), HeartError> {
        if !(self.cycle_min > 0.0 && self.cycle_min <= self.cycle_max && self.cycle_max.is_finite())
        {
            return Err(HeartError(format!(
                "node cycle bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.cycle_min, self.cycle_max
            )));
        }
        if !(self.erp >= 0.0 && self.erp < self.cycle_min) {
            return Err(HeartError(format!(
                "node refractory period {} must lie in [0, cycle_min={})",
                self.erp, self.cycle_min
            )));
        }
        Ok(())
    }
}

/// AV conduction delay bounds and AV-node blocking window, in ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParameters {
    pub delay_min: f64,
    pub delay_max: f64,
    pub av_erp: f64,
}

impl PathParameters {
    pub fn new(delay_min: f64, delay_max: f64, av_erp: f64) -> Result<Self, HeartError> {
        let p = PathParameters {
            delay_min,
            delay_max,
            av_erp,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), HeartError> {
        if !(self.delay_min > 0.0 && self.delay_min <= self.delay_max && self.delay_max.is_finite())
        {
            return Err(HeartError(format!(
                "conduction delay bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.delay_min, self.delay_max
            )));
        }
        if !(self.av_erp >= 0.0 && self.av_erp.is_finite()) {
            return Err(HeartError(format!(
                "AV refractory period must be >= 0, got {}",
                self.av_erp
            )));
        }
        Ok(())
    }
}

/// Per-beat morphology verdict model of the shock channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphologyChannel {
    /// Probability that a ventricular-origin beat is flagged as tachycardia.
    pub sensitivity: f64,
    /// Probability that a conducted beat is flagged as tachycardia.
    pub one_minus_specificity: f64,
}

impl MorphologyChannel {
    pub const NOISELESS: MorphologyChannel = MorphologyChannel {
        sensitivity: 1.0,
        one_minus_specificity: 0.0,
    };

    pub fn new(sensitivity: f64, one_minus_specificity: f64) -> Result<Self, HeartError> {
        let m = MorphologyChannel {
            sensitivity,
            one_minus_specificity,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), HeartError> {
        for (name, v) in [
            ("sensitivity", self.sensitivity),
            ("one_minus_specificity", self.one_minus_specificity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(HeartError(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Initial (sinus rhythm) configuration of the heart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeartConfig {
    pub atrial: NodeParameters,
    pub ventricular: NodeParameters,
    pub path: PathParameters,
    pub morphology: MorphologyChannel,
    /// Whether the ventricle fires on its own during sinus rhythm.
    pub ventricular_escape: bool,
}

impl HeartConfig {
    pub fn validate(&self) -> Result<(), HeartError> {
        self.atrial.validate()?;
        self.ventricular.validate()?;
        self.path.validate()?;
        self.morphology.validate()
    }
}

/// Channel, variable and component ids of a heart inside its network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeartHandles {
    pub a_in: ChannelId,
    pub v_in: ChannelId,
    pub therapy: ChannelId,
    pub at_onset: ChannelId,
    pub at_offset: ChannelId,
    pub vt_onset: ChannelId,
    pub vt_offset: ChannelId,
    pub av_in: ChannelId,
    pub av_out: ChannelId,
    pub v_cond: ChannelId,

    pub a_cycle_min: VarId,
    pub a_cycle_max: VarId,
    pub a_erp: VarId,
    pub v_cycle_min: VarId,
    pub v_cycle_max: VarId,
    pub v_erp: VarId,
    pub v_intrinsic: VarId,
    pub av_delay_min: VarId,
    pub av_delay_max: VarId,
    pub av_erp: VarId,
    pub sensitivity: VarId,
    pub false_tachy: VarId,
    pub origin: VarId,
    pub tachy: VarId,
    /// 0 = sinus, 1 = atrial tachycardia; written by the atrial mode switch.
    pub atrial_mode: VarId,
    /// 0 = sinus, 1 = ventricular tachycardia; written by the ventricular mode switch.
    pub ventricular_mode: VarId,

    pub ha_heart: ComponentId,
    pub path_a2av: ComponentId,
    pub hav_heart: ComponentId,
    pub path_av2v: ComponentId,
    pub hv_heart: ComponentId,
}

/// Adds the five heart automata to `nb`.
pub fn build_heart(nb: &mut NetworkBuilder, cfg: &HeartConfig) -> Result<HeartHandles, HeartError> {
    cfg.validate()?;
    let escape = if cfg.ventricular_escape { 1.0 } else { 0.0 };

    let a_cycle_min = nb.var("a_cycle_min", cfg.atrial.cycle_min);
    let a_cycle_max = nb.var("a_cycle_max", cfg.atrial.cycle_max);
    let a_erp = nb.var("a_erp", cfg.atrial.erp);
    let v_cycle_min = nb.var("v_cycle_min", cfg.ventricular.cycle_min);
    let v_cycle_max = nb.var("v_cycle_max", cfg.ventricular.cycle_max);
    let v_erp = nb.var("v_erp", cfg.ventricular.erp);
    let v_intrinsic = nb.var("v_intrinsic", escape);
    let av_delay_min = nb.var("av_delay_min", cfg.path.delay_min);
    let av_delay_max = nb.var("av_delay_max", cfg.path.delay_max);
    let av_erp = nb.var("av_erp", cfg.path.av_erp);
    let sensitivity = nb.var("sensitivity", cfg.morphology.sensitivity);
    let false_tachy = nb.var("false_tachy", cfg.morphology.one_minus_specificity);
    let origin = nb.var("origin", 0.0);
    let tachy = nb.var("tachy", 0.0);
    let atrial_mode = nb.var("atrial_mode", 0.0);
    let ventricular_mode = nb.var("ventricular_mode", 0.0);

    let a_in = nb.channel("A_in");
    let v_in = nb.channel_with_payload("V_in", vec![origin, tachy]);
    let therapy = nb.channel("Therapy");
    let at_onset = nb.channel("AT_onset");
    let at_offset = nb.channel("AT_offset");
    let vt_onset = nb.channel("VT_onset");
    let vt_offset = nb.channel("VT_offset");
    let av_in = nb.channel("AV_in");
    let av_out = nb.channel("AV_out");
    let v_cond = nb.channel("V_cond");
    nb.mark_external(a_in);
    nb.mark_external(v_in);

    // time since last activation; refractory clocks start out of refractoriness
    let x = nb.clock("x_atrium");
    let w = nb.clock_with("w_av", cfg.path.av_erp);
    let p = nb.clock("p_av2v");
    let v = nb.clock_with("v_ventricle", cfg.ventricular.erp);

    // HA_Heart
    let mut ha = Automaton::new("HA_Heart");
    let beat = ha.location(Location::new("beat").invariant(x, Bound::Var(a_cycle_max)));
    ha.edge(
        Edge::new(beat, beat)
            .guard(x, CmpOp::Ge, Bound::Var(a_cycle_min))
            .emit(a_in)
            .reset(x),
    );
    for ch in [at_onset, at_offset, therapy] {
        ha.edge(Edge::new(beat, beat).receive(ch).reset(x));
    }
    let ha_heart = nb.add(ha);

    // Path_A2AV
    let mut a2av = Automaton::new("Path_A2AV");
    let idle = a2av.location(Location::new("idle"));
    let relay = a2av.location(Location::new("relay"));
    a2av.edge(Edge::new(idle, relay).receive(a_in));
    a2av.edge(Edge::new(relay, idle).emit(av_in));
    a2av.edge(Edge::new(relay, idle).receive(therapy));
    let path_a2av = nb.add(a2av);

    // HAV_Heart
    let mut hav = Automaton::new("HAV_Heart");
    let ready = hav.location(Location::new("ready"));
    let forward = hav.location(Location::new("forward"));
    hav.edge(
        Edge::new(ready, forward)
            .receive(av_in)
            .guard(w, CmpOp::Ge, Bound::Var(av_erp))
            .reset(w),
    );
    hav.edge(
        Edge::new(ready, ready)
            .receive(av_in)
            .guard(w, CmpOp::Lt, Bound::Var(av_erp)),
    );
    hav.edge(Edge::new(forward, ready).emit(av_out));
    hav.edge(Edge::new(ready, ready).receive(therapy).reset(w));
    hav.edge(Edge::new(forward, ready).receive(therapy).reset(w));
    let hav_heart = nb.add(hav);

    // Path_AV2V
    let mut av2v = Automaton::new("Path_AV2V");
    let idle = av2v.location(Location::new("idle"));
    let conduct = av2v.location(Location::new("conduct").invariant(p, Bound::Var(av_delay_max)));
    av2v.edge(Edge::new(idle, conduct).receive(av_out).reset(p));
    av2v.edge(
        Edge::new(conduct, idle)
            .guard(p, CmpOp::Ge, Bound::Var(av_delay_min))
            .emit(v_cond),
    );
    av2v.edge(Edge::new(conduct, idle).receive(therapy));
    let path_av2v = nb.add(av2v);

    // HV_Heart
    let mut hv = Automaton::new("HV_Heart");
    let quiet = hv.location(Location::new("quiet"));
    let pacing = hv.location(Location::new("pacing").invariant(v, Bound::Var(v_cycle_max)));
    let fire_conducted = hv.location(Location::new("fire_conducted"));
    let fire_intrinsic = hv.location(Location::new("fire_intrinsic"));
    let rest = if cfg.ventricular_escape {
        pacing
    } else {
        quiet
    };
    hv.set_initial(rest);
    for waiting in [quiet, pacing] {
        hv.edge(
            Edge::new(waiting, fire_conducted)
                .receive(v_cond)
                .guard(v, CmpOp::Ge, Bound::Var(v_erp))
                .reset(v),
        );
        hv.edge(
            Edge::new(waiting, waiting)
                .receive(v_cond)
                .guard(v, CmpOp::Lt, Bound::Var(v_erp)),
        );
        hv.edge(Edge::new(waiting, pacing).receive(vt_onset).reset(v));
        hv.edge(Edge::new(waiting, rest).receive(vt_offset).reset(v));
    }
    hv.edge(
        Edge::new(pacing, fire_intrinsic)
            .guard(v, CmpOp::Ge, Bound::Var(v_cycle_min))
            .reset(v),
    );
    for (fire, code, flag_prob) in [
        (fire_conducted, ORIGIN_CONDUCTED, false_tachy),
        (fire_intrinsic, ORIGIN_VENTRICULAR, sensitivity),
    ] {
        for (target, intrinsic) in [(quiet, 0.0), (pacing, 1.0)] {
            for (flag, weight) in [
                (1.0, Expr::Var(flag_prob)),
                (0.0, Expr::OneMinus(flag_prob)),
            ] {
                hv.edge(
                    Edge::new(fire, target)
                        .when(v_intrinsic, CmpOp::Eq, intrinsic)
                        .emit(v_in)
                        .set(origin, Expr::Const(code))
                        .set(tachy, Expr::Const(flag))
                        .weight(weight),
                );
            }
        }
    }
    for loc in [quiet, pacing, fire_conducted, fire_intrinsic] {
        hv.edge(Edge::new(loc, rest).receive(therapy).reset(v));
    }
    let hv_heart = nb.add(hv);

    Ok(HeartHandles {
        a_in,
        v_in,
        therapy,
        at_onset,
        at_offset,
        vt_onset,
        vt_offset,
        av_in,
        av_out,
        v_cond,
        a_cycle_min,
        a_cycle_max,
        a_erp,
        v_cycle_min,
        v_cycle_max,
        v_erp,
        v_intrinsic,
        av_delay_min,
        av_delay_max,
        av_erp,
        sensitivity,
        false_tachy,
        origin,
        tachy,
        atrial_mode,
        ventricular_mode,
        ha_heart,
        path_a2av,
        hav_heart,
        path_av2v,
        hv_heart,
    })
}

/// A heart-only network, without mode switches.
pub fn heart_network(cfg: &HeartConfig) -> Result<(Network, HeartHandles), HeartError> {
    let mut nb = NetworkBuilder::new();
    let handles = build_heart(&mut nb, cfg)?;
    let net = nb.build().map_err(|e| HeartError(e.to_string()))?;
    Ok((net, handles))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeartEventKind {
    AIn,
    VIn,
    Therapy,
}

/// Where a sensed activation originated. Never shown to devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Atrial,
    Conducted,
    Ventricular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeartEvent {
    pub time: f64,
    pub kind: HeartEventKind,
    /// `None` for therapy events.
    pub origin: Option<Origin>,
    /// Morphology verdict; only ever true on `V_in`.
    pub tachy_marker: bool,
}

impl HeartHandles {
    /// Translates a network broadcast into a heart event, if it is one of the
    /// heart/device interface channels.
    pub fn interpret(&self, event: &ChannelEvent, state: &NetworkState) -> Option<HeartEvent> {
        let ch = event.channel;
        if ch == self.a_in {
            Some(HeartEvent {
                time: event.time,
                kind: HeartEventKind::AIn,
                origin: Some(Origin::Atrial),
                tachy_marker: false,
            })
        } else if ch == self.v_in {
            let origin = if state.var(self.origin) == ORIGIN_VENTRICULAR {
                Origin::Ventricular
            } else {
                Origin::Conducted
            };
            Some(HeartEvent {
                time: event.time,
                kind: HeartEventKind::VIn,
                origin: Some(origin),
                tachy_marker: state.var(self.tachy) == 1.0,
            })
        } else if ch == self.therapy {
            Some(HeartEvent {
                time: event.time,
                kind: HeartEventKind::Therapy,
                origin: None,
                tachy_marker: false,
            })
        } else {
            None
        }
    }
}

/// Observer collecting heart events of a run.
#[derive(Debug, Clone)]
pub struct HeartRecorder {
    pub handles: HeartHandles,
    pub events: Vec<HeartEvent>,
}

impl HeartRecorder {
    pub fn new(handles: HeartHandles) -> Self {
        HeartRecorder {
            handles,
            events: Vec::new(),
        }
    }
}

impl Observer for HeartRecorder {
    fn on_event(
        &mut self,
        event: &ChannelEvent,
        state: &NetworkState,
        _inject: &mut Vec<ChannelId>,
    ) {
        if let Some(ev) = self.handles.interpret(event, state) {
            self.events.push(ev);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sta::{run, RunConfig};

    fn config(atrial: (f64, f64), delay: (f64, f64), av_erp: f64) -> HeartConfig {
        HeartConfig {
            atrial: NodeParameters::new(atrial.0, atrial.1, 50.0).unwrap(),
            ventricular: NodeParameters::new(1500.0, 2000.0, 200.0).unwrap(),
            path: PathParameters::new(delay.0, delay.1, av_erp).unwrap(),
            morphology: MorphologyChannel::NOISELESS,
            ventricular_escape: false,
        }
    }

    fn times(events: &[HeartEvent], kind: HeartEventKind) -> Vec<f64> {
        events
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.time)
            .collect()
    }

    #[test]
    fn deterministic_sinus_schedule() {
        let (net, h) = heart_network(&config((1000.0, 1000.0), (150.0, 150.0), 250.0)).unwrap();
        let mut rec = HeartRecorder::new(h);
        run(&net, &RunConfig::new(5, 3000.0).unwrap(), &mut rec).unwrap();
        assert_eq!(
            times(&rec.events, HeartEventKind::AIn),
            vec![1000.0, 2000.0, 3000.0]
        );
        assert_eq!(
            times(&rec.events, HeartEventKind::VIn),
            vec![1150.0, 2150.0]
        );
        assert!(rec
            .events
            .iter()
            .filter(|e| e.kind == HeartEventKind::VIn)
            .all(|e| e.origin == Some(Origin::Conducted) && !e.tachy_marker));
    }

    #[test]
    fn two_to_one_av_block() {
        let (net, h) = heart_network(&config((300.0, 300.0), (150.0, 150.0), 600.0)).unwrap();
        let mut rec = HeartRecorder::new(h);
        run(&net, &RunConfig::new(1, 3000.0).unwrap(), &mut rec).unwrap();
        let a = times(&rec.events, HeartEventKind::AIn);
        let v = times(&rec.events, HeartEventKind::VIn);
        assert_eq!(a.len(), 10);
        // first A at 300 is forwarded (AV node starts recovered), then every second one
        assert_eq!(v, vec![450.0, 1050.0, 1650.0, 2250.0, 2850.0]);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(NodeParameters::new(500.0, 400.0, 100.0).is_err());
        assert!(NodeParameters::new(500.0, 600.0, 500.0).is_err());
        assert!(PathParameters::new(0.0, 100.0, 10.0).is_err());
        assert!(MorphologyChannel::new(1.2, 0.0).is_err());
    }
}
