use crate::error::Result;
use crate::sim::Simulator;

/// Anything that picks the next chunk's level from a running simulator.
///
/// Rule-based controllers only read the client-observable state; the beam
/// search oracle also reads the future trace through a snapshot.
pub trait AbrPolicy: Send {
    fn name(&self) -> &str;

    /// Called before each episode.
    fn reset(&mut self) {}

    fn select(&mut self, sim: &Simulator) -> Result<usize>;
}
