//! Networks of stochastic timed automata.
//!
//! Components race: each samples a delay from its current location (uniform
//! over a bounded enabling window, exponential on rate locations), the
//! smallest delay wins and the winner takes a weighted random enabled edge.
//! Broadcast emissions synchronously move every enabled receiver. Runs are
//! a pure function of the network and the seed.

mod model;
mod sim;
mod trace;

pub use model::{
    Automaton, Bound, Channel, ChannelId, ClockGuard, ClockId, CmpOp, ComponentId, Edge, Expr,
    Location, LocationId, ModelError, Network, NetworkBuilder, Sync, Update, VarGuard, VarId,
    CLOCK_EPS,
};
pub use sim::{
    run, ChannelEvent, NetworkState, Observer, RunConfig, RunError, SimError, Simulator, StepResult,
};
pub use trace::{EventTrace, TraceEvent};
