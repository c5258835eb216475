use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mic};
use crate::intent::{Grammar, Recognition};
use crate::platform::Platform;

pub const KEYWORD: &str = "robot";
pub const KEYWORD_INTENT: &str = "wake_word";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub spot_id: u32,
    pub mic: Mic,
    pub successes: u32,
    pub trials: u32,
}

impl Cell {
    pub fn accuracy(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            f64::from(self.successes) / f64::from(self.trials)
        }
    }
}

/// Per spot and microphone counts, ordered by spot then internal before
/// external.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGrid {
    pub cells: Vec<Cell>,
}

impl AccuracyGrid {
    pub fn cell(&self, spot_id: u32, mic: Mic) -> Option<&Cell> {
        self.cells.iter().find(|c| c.spot_id == spot_id && c.mic == mic)
    }

    pub fn spots(&self) -> Vec<u32> {
        let mut spots: Vec<u32> = self.cells.iter().map(|c| c.spot_id).collect();
        spots.dedup();
        spots
    }

    pub fn total_trials(&self) -> u64 {
        self.cells.iter().map(|c| u64::from(c.trials)).sum()
    }

    pub fn total_successes(&self) -> u64 {
        self.cells.iter().map(|c| u64::from(c.successes)).sum()
    }
}

/// Every user says the keyword `n_reps` times at every spot, heard through
/// each microphone. Draws come from one platform stream in the order spot,
/// microphone, user, repetition.
pub fn run_keyword_experiment(cfg: &ExperimentConfig) -> AccuracyGrid {
    let mut platform = Platform::new(Grammar::shipped(), cfg.seed);
    let mut cells = Vec::new();
    for spot_id in 1..=cfg.n_spots {
        let channels = cfg.model.spots[&spot_id];
        for mic in Mic::ALL {
            let p = channels.get(mic);
            let mut successes = 0;
            for _user in 0..cfg.n_users {
                for _rep in 0..cfg.n_reps {
                    let heard = platform.speech_to_intent(KEYWORD, p);
                    if matches!(&heard.outcome, Recognition::Intent(i) if i.name == KEYWORD_INTENT) {
                        successes += 1;
                    }
                }
            }
            cells.push(Cell { spot_id, mic, successes, trials: cfg.n_users * cfg.n_reps });
        }
    }
    AccuracyGrid { cells }
}
