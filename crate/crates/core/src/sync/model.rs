//! Exhaustive interleaving checker for the bakery lock.
//!
//! Each simulated rank runs the real [`Machine`] transitions against a
//! shared word array; the scheduler explores every choice of which rank
//! takes the next step, breadth-first with a visited set, up to a depth
//! bound. Every reachable state is checked for mutual exclusion and for
//! the absence of global stalls (no rank can change the state).

use std::collections::HashSet;

use crate::par::{self, Exec};

use super::bakery::{BakeryMemory, Machine, Phase, Step, Word};

#[derive(Debug, Clone, Copy)]
pub struct ModelConfig {
    pub ranks: usize,
    /// Lock/unlock cycles each rank performs.
    pub cycles: u8,
    pub max_depth: usize,
    pub skip_choosing: bool,
    pub exec: Exec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            ranks: 3,
            cycles: 2,
            max_depth: 10_000,
            skip_choosing: false,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelReport {
    pub states: usize,
    pub depth: usize,
    /// Whether the whole reachable space was explored within the bound.
    pub exhausted: bool,
    pub exclusion_violation: Option<String>,
    pub stall: Option<String>,
    /// Some state with every rank finished was reached.
    pub completed: bool,
}

impl ModelReport {
    pub fn safe(&self) -> bool {
        self.exclusion_violation.is_none() && self.stall.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    machines: Vec<Machine>,
    left: Vec<u8>,
    mem: Vec<u64>,
}

struct Mem<'a> {
    words: &'a mut Vec<u64>,
    n: usize,
}

impl BakeryMemory for Mem<'_> {
    fn load(&self, w: Word) -> u64 {
        match w {
            Word::Choosing(i) => self.words[i],
            Word::Ticket(i) => self.words[self.n + i],
        }
    }

    fn store(&mut self, w: Word, v: u64) {
        let i = match w {
            Word::Choosing(i) => i,
            Word::Ticket(i) => self.n + i,
        };
        self.words[i] = v;
    }
}

impl State {
    fn finished(&self) -> bool {
        self.left.iter().all(|&c| c == 0)
    }

    fn in_critical(&self) -> usize {
        self.machines.iter().filter(|m| m.phase == Phase::Critical).count()
    }

    /// Successor after rank `i` takes one step, if it can step at all.
    fn advance(&self, i: usize) -> Option<State> {
        if self.left[i] == 0 {
            return None;
        }
        let mut next = self.clone();
        let n = next.machines.len();
        let mut mem = Mem {
            words: &mut next.mem,
            n,
        };
        let m = &mut next.machines[i];
        if m.phase == Phase::Critical {
            m.release(&mut mem);
            next.left[i] -= 1;
        } else {
            match m.step(&mut mem) {
                Step::Spin => return None,
                Step::Progress | Step::Acquired => {}
            }
        }
        Some(next)
    }
}

pub fn check_bakery(cfg: ModelConfig) -> ModelReport {
    let n = cfg.ranks;
    let init = State {
        machines: (0..n)
            .map(|i| Machine {
                skip_choosing: cfg.skip_choosing,
                ..Machine::new(i, n)
            })
            .collect(),
        left: vec![cfg.cycles; n],
        mem: vec![0; 2 * n],
    };
    let mut visited: HashSet<State> = HashSet::new();
    visited.insert(init.clone());
    let mut frontier = vec![init];
    let mut report = ModelReport {
        states: 1,
        depth: 0,
        exhausted: false,
        exclusion_violation: None,
        stall: None,
        completed: false,
    };
    while !frontier.is_empty() {
        if report.depth >= cfg.max_depth {
            return report;
        }
        let expanded: Vec<(State, Vec<State>)> = par::map_items(cfg.exec, &frontier, |s| {
            let succ = (0..n).filter_map(|i| s.advance(i)).collect();
            (s.clone(), succ)
        });
        let mut next = Vec::new();
        for (state, succ) in expanded {
            if state.finished() {
                report.completed = true;
                continue;
            }
            if succ.is_empty() && report.stall.is_none() {
                report.stall = Some(format!("no rank can move in {:?}", state.machines));
            }
            for s in succ {
                if s.in_critical() > 1 && report.exclusion_violation.is_none() {
                    report.exclusion_violation = Some(format!(
                        "{} ranks in the critical section at depth {}: {:?}",
                        s.in_critical(),
                        report.depth + 1,
                        s.machines
                    ));
                }
                if visited.insert(s.clone()) {
                    next.push(s);
                }
            }
        }
        report.states = visited.len();
        frontier = next;
        report.depth += 1;
    }
    report.exhausted = true;
    report
}
