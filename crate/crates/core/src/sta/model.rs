//! Static structure of a network of stochastic timed automata.

use std::fmt;

use thiserror::Error;

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub(crate) usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }
    };
}

id_type!(
    /// Index of a clock in its network.
    ClockId
);
id_type!(
    /// Index of a discrete variable in its network.
    VarId
);
id_type!(
    /// Index of a broadcast channel in its network.
    ChannelId
);
id_type!(
    /// Index of a location inside one automaton.
    LocationId
);
id_type!(
    /// Index of an automaton (component) in its network.
    ComponentId
);

/// Absolute tolerance for clock comparisons, in milliseconds.
pub const CLOCK_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    /// Tolerant comparison used for clock constraints.
    pub(crate) fn holds_clock(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs - CLOCK_EPS,
            CmpOp::Le => lhs <= rhs + CLOCK_EPS,
            CmpOp::Eq => (lhs - rhs).abs() <= CLOCK_EPS,
            CmpOp::Ge => lhs >= rhs - CLOCK_EPS,
            CmpOp::Gt => lhs > rhs + CLOCK_EPS,
        }
    }

    /// Exact comparison used for discrete variables.
    pub(crate) fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
        }
    }
}

/// Right-hand side of a clock constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Const(f64),
    Var(VarId),
}

impl Bound {
    pub(crate) fn eval(self, vars: &[f64]) -> f64 {
        match self {
            Bound::Const(c) => c,
            Bound::Var(v) => vars[v.0],
        }
    }
}

/// Value expression for updates and branch weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(VarId),
    /// `1 - var`, used for complementary branch probabilities.
    OneMinus(VarId),
}

impl Expr {
    pub(crate) fn eval(self, vars: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => c,
            Expr::Var(v) => vars[v.0],
            Expr::OneMinus(v) => 1.0 - vars[v.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockGuard {
    pub clock: ClockId,
    pub op: CmpOp,
    pub bound: Bound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarGuard {
    pub var: VarId,
    pub op: CmpOp,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Update {
    pub var: VarId,
    pub value: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sync {
    /// Spontaneous edge; competes in the delay race.
    None,
    /// Spontaneous edge that broadcasts on the channel when taken.
    Emit(ChannelId),
    /// Reactive edge; taken only when the channel is broadcast.
    Receive(ChannelId),
}

/// A location. Its delay regime is either the clock invariant (`clock <= bound`
/// conjunction) or an exponential exit rate, never both.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub name: String,
    pub invariant: Vec<(ClockId, Bound)>,
    pub exit_rate: Option<f64>,
}

impl Location {
    pub fn new(name: impl Into<String>) -> Self {
        Location {
            name: name.into(),
            invariant: Vec::new(),
            exit_rate: None,
        }
    }

    pub fn invariant(mut self, clock: ClockId, bound: Bound) -> Self {
        self.invariant.push((clock, bound));
        self
    }

    /// Exponential exit rate, per millisecond.
    pub fn rate(mut self, rate: f64) -> Self {
        self.exit_rate = Some(rate);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: LocationId,
    pub target: LocationId,
    pub clock_guards: Vec<ClockGuard>,
    pub var_guards: Vec<VarGuard>,
    pub sync: Sync,
    pub resets: Vec<ClockId>,
    pub updates: Vec<Update>,
    pub weight: Expr,
}

impl Edge {
    pub fn new(source: LocationId, target: LocationId) -> Self {
        Edge {
            source,
            target,
            clock_guards: Vec::new(),
            var_guards: Vec::new(),
            sync: Sync::None,
            resets: Vec::new(),
            updates: Vec::new(),
            weight: Expr::Const(1.0),
        }
    }

    pub fn guard(mut self, clock: ClockId, op: CmpOp, bound: Bound) -> Self {
        self.clock_guards.push(ClockGuard { clock, op, bound });
        self
    }

    pub fn when(mut self, var: VarId, op: CmpOp, value: f64) -> Self {
        self.var_guards.push(VarGuard { var, op, value });
        self
    }

    pub fn emit(mut self, channel: ChannelId) -> Self {
        self.sync = Sync::Emit(channel);
        self
    }

    pub fn receive(mut self, channel: ChannelId) -> Self {
        self.sync = Sync::Receive(channel);
        self
    }

    pub fn reset(mut self, clock: ClockId) -> Self {
        self.resets.push(clock);
        self
    }

    pub fn set(mut self, var: VarId, value: Expr) -> Self {
        self.updates.push(Update { var, value });
        self
    }

    pub fn weight(mut self, weight: Expr) -> Self {
        self.weight = weight;
        self
    }

    pub(crate) fn is_spontaneous(&self) -> bool {
        !matches!(self.sync, Sync::Receive(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Automaton {
    pub name: String,
    pub locations: Vec<Location>,
    pub edges: Vec<Edge>,
    pub initial: LocationId,
    // per location: spontaneous edge indices, receive edge indices
    pub(crate) spontaneous: Vec<Vec<usize>>,
    pub(crate) reactive: Vec<Vec<usize>>,
}

impl Automaton {
    pub fn new(name: impl Into<String>) -> Self {
        Automaton {
            name: name.into(),
            locations: Vec::new(),
            edges: Vec::new(),
            initial: LocationId(0),
            spontaneous: Vec::new(),
            reactive: Vec::new(),
        }
    }

    /// Adds a location; the first one added is the initial location.
    pub fn location(&mut self, location: Location) -> LocationId {
        self.locations.push(location);
        LocationId(self.locations.len() - 1)
    }

    pub fn set_initial(&mut self, location: LocationId) {
        self.initial = location;
    }

    pub fn edge(&mut self, edge: Edge) {
        self.edges.push(edge);
    }

    pub fn location_name(&self, id: LocationId) -> &str {
        &self.locations[id.0].name
    }

    fn index_edges(&mut self) {
        self.spontaneous = vec![Vec::new(); self.locations.len()];
        self.reactive = vec![Vec::new(); self.locations.len()];
        for (i, e) in self.edges.iter().enumerate() {
            if e.is_spontaneous() {
                self.spontaneous[e.source.0].push(i);
            } else {
                self.reactive[e.source.0].push(i);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClockDef {
    pub name: String,
    pub initial: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDef {
    pub name: String,
    pub initial: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    /// Variables whose values are attached to each recorded emission.
    pub payload: Vec<VarId>,
    /// Whether emissions are appended to the run's event trace.
    pub observed: bool,
    /// Read by observers outside the network, so it needs no receiving edge.
    pub external: bool,
    pub(crate) has_receivers: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("automaton `{0}` has no locations")]
    Empty(String),
    #[error("automaton `{automaton}`: {what} out of range")]
    BadReference {
        automaton: String,
        what: &'static str,
    },
    #[error("automaton `{automaton}` location `{location}`: exit rate must be positive and finite, got {rate}")]
    BadRate {
        automaton: String,
        location: String,
        rate: f64,
    },
    #[error(
        "automaton `{automaton}` location `{location}` has both an invariant and an exit rate"
    )]
    TwoDelayRegimes { automaton: String, location: String },
    #[error("automaton `{automaton}`: constant edge weight must be positive, got {weight}")]
    BadWeight { automaton: String, weight: f64 },
    #[error("clock `{name}` has negative or non-finite initial value {value}")]
    BadClock { name: String, value: f64 },
    #[error("duplicate name `{0}`")]
    Duplicate(String),
}

/// Incrementally assembles a [`Network`].
#[derive(Debug, Default, Clone)]
pub struct NetworkBuilder {
    clocks: Vec<ClockDef>,
    vars: Vec<VarDef>,
    channels: Vec<Channel>,
    automata: Vec<Automaton>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clock(&mut self, name: impl Into<String>) -> ClockId {
        self.clock_with(name, 0.0)
    }

    pub fn clock_with(&mut self, name: impl Into<String>, initial: f64) -> ClockId {
        self.clocks.push(ClockDef {
            name: name.into(),
            initial,
        });
        ClockId(self.clocks.len() - 1)
    }

    pub fn var(&mut self, name: impl Into<String>, initial: f64) -> VarId {
        self.vars.push(VarDef {
            name: name.into(),
            initial,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn channel(&mut self, name: impl Into<String>) -> ChannelId {
        self.channel_with_payload(name, Vec::new())
    }

    pub fn channel_with_payload(
        &mut self,
        name: impl Into<String>,
        payload: Vec<VarId>,
    ) -> ChannelId {
        self.channels.push(Channel {
            name: name.into(),
            payload,
            observed: false,
            external: false,
            has_receivers: false,
        });
        ChannelId(self.channels.len() - 1)
    }

    /// Declares that `channel` is consumed outside the network.
    pub fn mark_external(&mut self, channel: ChannelId) {
        self.channels[channel.0].external = true;
    }

    pub fn add(&mut self, automaton: Automaton) -> ComponentId {
        self.automata.push(automaton);
        ComponentId(self.automata.len() - 1)
    }

    pub fn build(self) -> Result<Network, ModelError> {
        let NetworkBuilder {
            clocks,
            vars,
            mut channels,
            mut automata,
        } = self;

        for c in &clocks {
            if !(c.initial.is_finite() && c.initial >= 0.0) {
                return Err(ModelError::BadClock {
                    name: c.name.clone(),
                    value: c.initial,
                });
            }
        }
        check_unique(automata.iter().map(|a| a.name.as_str()))?;
        check_unique(channels.iter().map(|c| c.name.as_str()))?;
        check_unique(vars.iter().map(|v| v.name.as_str()))?;

        let bad = |a: &Automaton, what| ModelError::BadReference {
            automaton: a.name.clone(),
            what,
        };
        let bound_ok = |b: &Bound| match b {
            Bound::Var(v) => v.0 < vars.len(),
            Bound::Const(c) => c.is_finite(),
        };
        let expr_ok = |e: &Expr| match e {
            Expr::Var(v) | Expr::OneMinus(v) => v.0 < vars.len(),
            Expr::Const(c) => c.is_finite(),
        };

        for a in &mut automata {
            if a.locations.is_empty() {
                return Err(ModelError::Empty(a.name.clone()));
            }
            if a.initial.0 >= a.locations.len() {
                return Err(bad(a, "initial location"));
            }
            for loc in &a.locations {
                if let Some(rate) = loc.exit_rate {
                    if !(rate.is_finite() && rate > 0.0) {
                        return Err(ModelError::BadRate {
                            automaton: a.name.clone(),
                            location: loc.name.clone(),
                            rate,
                        });
                    }
                    if !loc.invariant.is_empty() {
                        return Err(ModelError::TwoDelayRegimes {
                            automaton: a.name.clone(),
                            location: loc.name.clone(),
                        });
                    }
                }
                for (c, b) in &loc.invariant {
                    if c.0 >= clocks.len() || !bound_ok(b) {
                        return Err(bad(a, "invariant clock or bound"));
                    }
                }
            }
            for e in &a.edges {
                if e.source.0 >= a.locations.len() || e.target.0 >= a.locations.len() {
                    return Err(bad(a, "edge location"));
                }
                if e.clock_guards
                    .iter()
                    .any(|g| g.clock.0 >= clocks.len() || !bound_ok(&g.bound))
                    || e.resets.iter().any(|c| c.0 >= clocks.len())
                {
                    return Err(bad(a, "edge clock"));
                }
                if e.var_guards.iter().any(|g| g.var.0 >= vars.len())
                    || e.updates
                        .iter()
                        .any(|u| u.var.0 >= vars.len() || !expr_ok(&u.value))
                    || !expr_ok(&e.weight)
                {
                    return Err(bad(a, "edge variable"));
                }
                if let Expr::Const(w) = e.weight {
                    if w <= 0.0 {
                        return Err(ModelError::BadWeight {
                            automaton: a.name.clone(),
                            weight: w,
                        });
                    }
                }
                match e.sync {
                    Sync::Emit(ch) | Sync::Receive(ch) if ch.0 >= channels.len() => {
                        return Err(bad(a, "channel"));
                    }
                    Sync::Receive(ch) => channels[ch.0].has_receivers = true,
                    _ => {}
                }
            }
            a.index_edges();
        }
        for ch in &channels {
            if ch.payload.iter().any(|v| v.0 >= vars.len()) {
                return Err(ModelError::BadReference {
                    automaton: ch.name.clone(),
                    what: "channel payload variable",
                });
            }
        }

        Ok(Network {
            clocks,
            vars,
            channels,
            automata,
        })
    }
}

fn check_unique<'a>(names: impl Iterator<Item = &'a str>) -> Result<(), ModelError> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(ModelError::Duplicate(n.to_string()));
        }
    }
    Ok(())
}

/// An immutable, validated network. Cheap to share between runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) clocks: Vec<ClockDef>,
    pub(crate) vars: Vec<VarDef>,
    pub(crate) channels: Vec<Channel>,
    pub(crate) automata: Vec<Automaton>,
}

impl Network {
    pub fn automata(&self) -> &[Automaton] {
        &self.automata
    }

    pub fn automaton(&self, id: ComponentId) -> &Automaton {
        &self.automata[id.0]
    }

    pub fn channel(&self, id: ChannelId) -> &Channel {
        &self.channels[id.0]
    }

    pub fn channels(&self) -> impl Iterator<Item = (ChannelId, &Channel)> {
        self.channels
            .iter()
            .enumerate()
            .map(|(i, c)| (ChannelId(i), c))
    }

    pub fn channel_by_name(&self, name: &str) -> Option<ChannelId> {
        self.channels
            .iter()
            .position(|c| c.name == name)
            .map(ChannelId)
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn var_name(&self, id: VarId) -> &str {
        &self.vars[id.0].name
    }

    pub fn component_by_name(&self, name: &str) -> Option<ComponentId> {
        self.automata
            .iter()
            .position(|a| a.name == name)
            .map(ComponentId)
    }

    /// Marks a channel so that its emissions are recorded in run traces.
    pub fn observe(&mut self, channel: ChannelId) {
        self.channels[channel.0].observed = true;
    }

    pub fn observe_all(&mut self) {
        for c in &mut self.channels {
            c.observed = true;
        }
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}
