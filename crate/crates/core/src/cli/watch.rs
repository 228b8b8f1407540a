//! Terminal view of a facility, rebuilt purely from what the broker sends.

use std::collections::BTreeMap;

const GREEN: &str = "\x1b[42;30m";
const RED: &str = "\x1b[41;97m";
const GREY: &str = "\x1b[100;37m";
const RESET: &str = "\x1b[0m";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Vacant,
    Occupied,
    /// Nothing heard for this slot yet.
    Inactive,
}

impl Cell {
    pub fn letter(self) -> char {
        match self {
            Cell::Vacant => 'V',
            Cell::Occupied => 'O',
            Cell::Inactive => '–',
        }
    }

    fn color(self) -> &'static str {
        match self {
            Cell::Vacant => GREEN,
            Cell::Occupied => RED,
            Cell::Inactive => GREY,
        }
    }
}

/// Everything the watcher knows, keyed the same way the controller
/// publishes it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WatchState {
    /// 1-based slot number → occupied.
    pub slots: BTreeMap<usize, bool>,
    /// Slot count announced by the summary topic or the command line.
    pub total_slots: Option<usize>,
    pub summary: Option<(usize, usize)>,
    pub temp_c: Option<String>,
    pub humidity_pct: Option<String>,
    pub gas_ppm: Option<String>,
    pub fan: Option<String>,
    pub gates: BTreeMap<String, String>,
}

impl WatchState {
    pub fn with_slots(n: usize) -> Self {
        WatchState {
            total_slots: Some(n),
            ..Default::default()
        }
    }

    /// Fold one message in. Returns false for topics the view ignores.
    pub fn apply(&mut self, topic: &str, payload: &[u8]) -> bool {
        let text = String::from_utf8_lossy(payload).trim().to_string();
        let levels: Vec<&str> = topic.split('/').collect();
        // Match on the tail so any topic prefix works.
        match levels.as_slice() {
            [.., "slot", n, "status"] => {
                let Ok(n) = n.parse::<usize>() else { return false };
                if n == 0 {
                    return false;
                }
                match text.as_str() {
                    "1" => self.slots.insert(n, true),
                    "0" => self.slots.insert(n, false),
                    _ => return false,
                };
            }
            [.., "summary"] => {
                let Some((v, n)) = text.split_once('/') else { return false };
                let (Ok(v), Ok(n)) = (v.parse(), n.parse()) else { return false };
                self.summary = Some((v, n));
                self.total_slots = Some(self.total_slots.unwrap_or(0).max(n));
            }
            [.., "env", "temperature"] => self.temp_c = Some(text),
            [.., "env", "humidity"] => self.humidity_pct = Some(text),
            [.., "gas", "ppm"] => self.gas_ppm = Some(text),
            [.., "fan", "state"] => self.fan = Some(text),
            [.., "gate", name] => {
                self.gates.insert(name.to_string(), text);
            }
            _ => return false,
        }
        true
    }

    pub fn cell(&self, slot: usize) -> Cell {
        match self.slots.get(&slot) {
            Some(true) => Cell::Occupied,
            Some(false) => Cell::Vacant,
            None => Cell::Inactive,
        }
    }

    fn slot_count(&self) -> usize {
        let seen = self.slots.keys().next_back().copied().unwrap_or(0);
        self.total_slots.unwrap_or(0).max(seen)
    }

    /// Current view as terminal lines.
    pub fn render(&self, color: bool) -> Vec<String> {
        let n = self.slot_count();
        let mut grid = String::new();
        for slot in 1..=n {
            let cell = self.cell(slot);
            if color {
                grid.push_str(&format!("{} {slot:>2} {RESET} ", cell.color()));
            } else {
                grid.push_str(&format!("[{slot:>2} {}] ", cell.letter()));
            }
        }
        let mut lines = vec![if n == 0 {
            "(no slots seen yet)".to_string()
        } else {
            grid.trim_end().to_string()
        }];
        let dash = || "–".to_string();
        lines.push(format!(
            "Temp {} C  Humidity {} %  Gas {} ppm  Fan {}",
            self.temp_c.clone().unwrap_or_else(dash),
            self.humidity_pct.clone().unwrap_or_else(dash),
            self.gas_ppm.clone().unwrap_or_else(dash),
            self.fan.clone().unwrap_or_else(dash),
        ));
        if !self.gates.is_empty() {
            let gates: Vec<String> = self.gates.iter().map(|(g, s)| format!("{g} {s}")).collect();
            lines.push(format!("Gates: {}", gates.join(", ")));
        }
        lines.push(match self.summary {
            Some((v, n)) => format!("Free: {v}/{n}"),
            None => "Free: –".to_string(),
        });
        lines
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_states(states: &[u8]) -> WatchState {
        let mut w = WatchState::with_slots(states.len());
        for (i, s) in states.iter().enumerate() {
            w.apply(&format!("parking/slot/{}/status", i + 1), s.to_string().as_bytes());
        }
        w
    }

    #[test]
    fn one_occupied_three_vacant() {
        let w = with_states(&[1, 0, 0, 0]);
        assert_eq!(w.cell(1), Cell::Occupied);
        assert!((2..=4).all(|s| w.cell(s) == Cell::Vacant));
        assert_eq!(w.render(false)[0], "[ 1 O] [ 2 V] [ 3 V] [ 4 V]");
        let colored = &w.render(true)[0];
        assert!(colored.starts_with(RED));
        assert_eq!(colored.matches(GREEN).count(), 3);
    }

    #[test]
    fn nothing_retained_is_all_inactive() {
        let w = WatchState::with_slots(4);
        assert!((1..=4).all(|s| w.cell(s) == Cell::Inactive));
        assert_eq!(w.render(false)[0], "[ 1 –] [ 2 –] [ 3 –] [ 4 –]");
    }

    #[test]
    fn summary_footer() {
        let mut w = WatchState::default();
        assert!(w.apply("parking/summary", b"3/4"));
        assert_eq!(w.render(false).last().unwrap(), "Free: 3/4");
        assert_eq!(w.total_slots, Some(4));
    }

    #[test]
    fn unrelated_topics_ignored() {
        let mut w = WatchState::default();
        assert!(!w.apply("other/thing", b"x"));
        assert!(!w.apply("parking/slot/abc/status", b"1"));
        assert_eq!(w, WatchState::default());
    }
}
