use std::fmt;

/// Which history slots are kept, as years before the reference visit.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HistoryScenario {
    pub offsets: Vec<u32>,
}

impl HistoryScenario {
    /// The years of `history` that survive under this scenario.
    pub fn restrict(&self, history: &[u32], now_year: u32) -> Vec<u32> {
        history
            .iter()
            .copied()
            .filter(|&y| y <= now_year && self.offsets.contains(&(now_year - y)))
            .collect()
    }
}

impl fmt::Display for HistoryScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.offsets.iter().map(|o| if *o == 0 { "0".into() } else { format!("-{o}") }).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// All nonempty subsets of `slots` history slots, ordered by the bitmask
/// whose bit `k` marks the visit `k` years back.
pub fn enumerate_history_scenarios(slots: usize) -> Vec<HistoryScenario> {
    (1u32..1 << slots)
        .map(|mask| HistoryScenario { offsets: (0..slots as u32).filter(|k| mask & (1 << k) != 0).collect() })
        .collect()
}
