//! Closing the loop: a device observing a patient network and injecting
//! `Therapy` back into it.

use crate::adjudication::{AnnotatedTrace, ModeChange};
use crate::heart::{HeartEvent, HeartEventKind, HeartHandles};
use crate::patient::{AtrialMode, PatientModel, RhythmMode, VentricularMode};
use crate::sta::{
    run, ChannelEvent, ChannelId, EventTrace, Network, NetworkState, Observer, RunConfig, RunError,
};

use super::{Decision, DeviceError, DeviceInput, DeviceVerdict, Discriminator};

/// Observer feeding heart events to a device, recording ground-truth mode
/// changes, and delivering therapy on VT verdicts.
pub struct DeviceObserver<'d> {
    handles: HeartHandles,
    device: &'d mut dyn Discriminator,
    pub events: Vec<HeartEvent>,
    pub verdicts: Vec<DeviceVerdict>,
    pub modes: Vec<ModeChange>,
    pub error: Option<DeviceError>,
    current: Option<RhythmMode>,
}

impl<'d> DeviceObserver<'d> {
    pub fn new(handles: HeartHandles, device: &'d mut dyn Discriminator) -> Self {
        DeviceObserver {
            handles,
            device,
            events: Vec::new(),
            verdicts: Vec::new(),
            modes: Vec::new(),
            error: None,
            current: None,
        }
    }

    fn track_mode(&mut self, time: f64, state: &NetworkState) {
        let mode = RhythmMode {
            atrial: AtrialMode::from_code(state.var(self.handles.atrial_mode)),
            ventricular: VentricularMode::from_code(state.var(self.handles.ventricular_mode)),
        };
        if self.current != Some(mode) {
            self.current = Some(mode);
            self.modes.push(ModeChange { time, mode });
        }
    }
}

impl Observer for DeviceObserver<'_> {
    fn on_start(&mut self, _net: &Network, state: &NetworkState) {
        self.track_mode(state.time, state);
    }

    fn on_event(
        &mut self,
        event: &ChannelEvent,
        state: &NetworkState,
        inject: &mut Vec<ChannelId>,
    ) {
        self.track_mode(event.time, state);
        let Some(ev) = self.handles.interpret(event, state) else {
            return;
        };
        self.events.push(ev);
        if self.error.is_some() {
            return;
        }
        let input = match ev.kind {
            HeartEventKind::AIn => DeviceInput::atrial(ev.time),
            HeartEventKind::VIn => DeviceInput::ventricular(ev.time, ev.tachy_marker),
            HeartEventKind::Therapy => return,
        };
        match self.device.sense(input) {
            Ok(Some(verdict)) => {
                self.verdicts.push(verdict);
                if verdict.decision == Decision::VtTherapy {
                    inject.push(self.handles.therapy);
                }
            }
            Ok(None) => {}
            Err(e) => self.error = Some(e),
        }
    }
}

/// Result of simulating one arm.
#[derive(Debug, Clone)]
pub struct ArmRun {
    pub annotated: AnnotatedTrace,
    pub verdicts: Vec<DeviceVerdict>,
    /// Raw channel trace, present when tracing was requested.
    pub trace: Option<EventTrace>,
}

#[derive(Debug, thiserror::Error)]
pub enum ArmError {
    #[error("simulation: {0}")]
    Sim(#[from] RunError),
    #[error("device: {0}")]
    Device(#[from] DeviceError),
}

/// Simulates `model` with `device` attached until `time_bound`.
pub fn simulate_arm(
    model: &PatientModel,
    device: &mut dyn Discriminator,
    seed: u64,
    time_bound: f64,
    trace: bool,
) -> Result<ArmRun, ArmError> {
    let cfg = RunConfig::new(seed, time_bound).map_err(|source| RunError {
        source,
        partial: EventTrace::new(0.0),
    })?;
    let traced;
    let net = if trace {
        let mut n = model.network.clone();
        n.observe_all();
        traced = n;
        &traced
    } else {
        &model.network
    };
    let mut obs = DeviceObserver::new(model.heart, device);
    let raw = run(net, &cfg, &mut obs)?;
    if let Some(e) = obs.error {
        return Err(e.into());
    }
    let therapies = obs
        .events
        .iter()
        .filter(|e| e.kind == HeartEventKind::Therapy)
        .map(|e| e.time)
        .collect();
    Ok(ArmRun {
        annotated: AnnotatedTrace {
            time_bound,
            modes: obs.modes,
            therapies,
            events: obs.events,
        },
        verdicts: obs.verdicts,
        trace: trace.then_some(raw),
    })
}
