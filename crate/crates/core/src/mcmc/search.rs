use super::chain::Sampler;
use super::{ChainConfig, ChainError, ChainInputs, ChainStart, ChainState};
use crate::rng;
use crate::tree::Topology;

/// Best topology found by [`preliminary_topology_search`] and the state it
/// was scored with.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub topology: Topology,
    pub state: ChainState,
    /// Neighbor topologies scored.
    pub evaluations: usize,
    /// Topology moves taken.
    pub moves: usize,
}

/// Greedy first-improvement NNI hill-climb on the joint log-posterior.
///
/// Neighbors are scored at the current concentration and grid indices, with
/// the current assignment refined to clades of the neighbor. After every
/// accepted move (and once at the start) the non-topology parameters are
/// updated by `burst_iterations` MH steps. The search ends at a local
/// optimum or after `budget` neighbor evaluations, and returns the best
/// (topology, state) pair seen, so the result never scores below the
/// start. Rooted NNI keeps the root split, so the outgroup rooting of the
/// input carries over unchanged.
pub fn preliminary_topology_search(
    inputs: ChainInputs<'_>,
    start: &ChainStart,
    budget: usize,
    burst_iterations: u64,
    seed: u64,
) -> Result<SearchOutcome, ChainError> {
    let config = ChainConfig {
        seed,
        ..ChainConfig::default()
    };
    let mut sampler = Sampler::with_streams(inputs, start, &config, rng::SEARCH_STREAM)?;
    let mut best = Best {
        topology: inputs.topology.clone(),
        state: sampler.state(),
        evaluations: 0,
        moves: 0,
    };
    if budget == 0 {
        return Ok(best.finish());
    }
    burst(&mut sampler, burst_iterations, &mut best)?;
    'climb: loop {
        let current = sampler.log_posterior();
        let labels = sampler.state().assignment;
        let mut improved = false;
        for neighbor in sampler.topology().nni_neighbors() {
            if best.evaluations >= budget {
                break 'climb;
            }
            let c = neighbor.refine_to_clades(labels.labels());
            let score = sampler.evaluate(&neighbor, &c)?;
            best.evaluations += 1;
            if score > current {
                log::debug!("NNI move {}: log-posterior {current:.4} -> {score:.4}", best.moves + 1);
                sampler.set_topology(neighbor, &c)?;
                best.moves += 1;
                best.offer(&sampler);
                burst(&mut sampler, burst_iterations, &mut best)?;
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best.finish())
}

struct Best {
    topology: Topology,
    state: ChainState,
    evaluations: usize,
    moves: usize,
}

impl Best {
    fn offer(&mut self, sampler: &Sampler<'_>) {
        if sampler.log_posterior() > self.state.log_posterior {
            self.state = sampler.state();
            if sampler.topology() != &self.topology {
                self.topology = sampler.topology().clone();
            }
        }
    }

    fn finish(self) -> SearchOutcome {
        SearchOutcome {
            topology: self.topology,
            state: self.state,
            evaluations: self.evaluations,
            moves: self.moves,
        }
    }
}

fn burst(sampler: &mut Sampler<'_>, iterations: u64, best: &mut Best) -> Result<(), ChainError> {
    for _ in 0..iterations {
        sampler.step()?;
        best.offer(sampler);
    }
    Ok(())
}
