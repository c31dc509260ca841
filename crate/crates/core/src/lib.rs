//! EV charging coordination on a radial distribution feeder.
//!
//! * [`network`]: radial feeder model, linearized DistFlow solver, voltage
//!   violation metrics.
//! * [`ev`]: per-charger battery dynamics, cycle aging, completion penalty.
//! * [`env`]: the constrained MDP tying stations, prices, solar and the feeder
//!   together.
//! * [`nn`]: small dense networks with hand-written backprop, Adam, the
//!   tanh-squashed Gaussian head and a replay buffer.
//! * [`agents`]: SAC-Lagrangian, penalty SAC and DDPG.

pub mod agents;
pub mod env;
pub mod ev;
pub mod network;
pub mod nn;
