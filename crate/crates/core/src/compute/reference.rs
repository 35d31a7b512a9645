//! Per-cycle reference model of one fold on the PE grid.
//!
//! This is deliberately slow: operands are moved register to register every
//! beat and every MAC is counted per PE. The closed forms in the parent
//! module are tested against it.
//!
//! Timing rules:
//!
//! * Output stationary: ifmap operands enter from the west and filter
//!   operands from the north, skewed one beat per hop, so PE(i, j) sees its
//!   k-th pair at beat `i + j + k`. Once a PE has accumulated `t` products its
//!   result joins a per-column shift chain draining south; the chain moves one
//!   hop per beat and the south edge emits one result per column per beat.
//!   Results already in the chain have priority over newly finished ones.
//! * Weight / input stationary: the stationary operand shifts in from the
//!   north for `rows` beats. The streamed operand then enters from the west
//!   with skew while partial sums are created at the top of each column and
//!   move south one hop per beat; the bottom row's MAC writes straight to the
//!   south edge. Input stationary is the same engine with the two operand
//!   roles exchanged.
//!
//! A beat is one array step. Without port limits a beat is one cycle. With a
//! [`LinkBudget`], every edge that carries data during a beat must move one
//! word per active lane of that edge (bubbles included), at most `ports`
//! words per cycle, and the array stalls until all edges are done.

use crate::compute::FoldCycles;
use crate::config::Dataflow;
use crate::interconnect::LinkBudget;

#[derive(Debug, Clone, Copy, Default)]
struct BeatEvents {
    west: bool,
    north: bool,
    south: bool,
    corner_mac: bool,
}

/// Full trace of a reference run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceRun {
    pub cycles: FoldCycles,
    /// MAC events per PE, row-major over the used `rows x cols` grid.
    pub pe_macs: Vec<u64>,
    pub beats: u64,
}

impl ReferenceRun {
    pub fn total_macs(&self) -> u64 {
        self.pe_macs.iter().sum()
    }
}

/// Unconstrained reference simulation (one beat per cycle).
pub fn simulate_fold_reference(rows: u64, cols: u64, t: u64, dataflow: Dataflow) -> FoldCycles {
    run(rows, cols, t, dataflow, None).cycles
}

/// Reference simulation with edge-port arbitration.
pub fn simulate_fold_reference_with_budget(
    rows: u64,
    cols: u64,
    t: u64,
    dataflow: Dataflow,
    budget: &LinkBudget,
) -> FoldCycles {
    run(rows, cols, t, dataflow, Some(budget)).cycles
}

pub fn run(rows: u64, cols: u64, t: u64, dataflow: Dataflow, budget: Option<&LinkBudget>) -> ReferenceRun {
    assert!(rows >= 1 && cols >= 1 && t >= 1, "fold must be non-empty");
    let (events, pe_macs) = match dataflow {
        Dataflow::OutputStationary => output_stationary(rows as usize, cols as usize, t),
        Dataflow::WeightStationary | Dataflow::InputStationary => {
            stationary_operand(rows as usize, cols as usize, t)
        }
    };
    let cycles = arbitrate(&events, rows, cols, budget);
    ReferenceRun {
        cycles,
        pe_macs,
        beats: events.len() as u64,
    }
}

fn output_stationary(r: usize, c: usize, t: u64) -> (Vec<BeatEvents>, Vec<u64>) {
    let idx = |i: usize, j: usize| i * c + j;
    let mut west: Vec<Option<u64>> = vec![None; r * c];
    let mut north: Vec<Option<u64>> = vec![None; r * c];
    let mut macs = vec![0u64; r * c];
    let mut pending = vec![false; r * c];
    // hold[i][j]: result sitting in the drain chain at row i of column j.
    let mut hold: Vec<bool> = vec![false; r * c];
    let mut exited = 0usize;
    let mut events = Vec::new();
    let mut beat: u64 = 0;

    while exited < r * c {
        let mut ev = BeatEvents::default();

        // Drain chain: emit at the bottom, then shift bottom-up.
        for j in 0..c {
            if hold[idx(r - 1, j)] {
                hold[idx(r - 1, j)] = false;
                exited += 1;
                ev.south = true;
            }
            for i in (0..r.saturating_sub(1)).rev() {
                if hold[idx(i, j)] && !hold[idx(i + 1, j)] {
                    hold[idx(i, j)] = false;
                    hold[idx(i + 1, j)] = true;
                }
            }
        }

        // Operands advance one hop; edges inject skewed streams.
        let mut next_west = vec![None; r * c];
        let mut next_north = vec![None; r * c];
        for i in 0..r {
            for j in 0..c {
                next_west[idx(i, j)] = if j == 0 {
                    let k = beat.checked_sub(i as u64).filter(|&k| k < t);
                    ev.west |= k.is_some();
                    k
                } else {
                    west[idx(i, j - 1)]
                };
                next_north[idx(i, j)] = if i == 0 {
                    let k = beat.checked_sub(j as u64).filter(|&k| k < t);
                    ev.north |= k.is_some();
                    k
                } else {
                    north[idx(i - 1, j)]
                };
            }
        }
        west = next_west;
        north = next_north;

        for i in 0..r {
            for j in 0..c {
                if let (Some(a), Some(b)) = (west[idx(i, j)], north[idx(i, j)]) {
                    assert_eq!(a, b, "operand skew mismatch at PE({i},{j})");
                    macs[idx(i, j)] += 1;
                    if macs[idx(i, j)] == t {
                        pending[idx(i, j)] = true;
                    }
                    if i == r - 1 && j == c - 1 {
                        ev.corner_mac = true;
                    }
                }
            }
        }

        for p in 0..r * c {
            if pending[p] && !hold[p] {
                pending[p] = false;
                hold[p] = true;
            }
        }

        events.push(ev);
        beat += 1;
    }
    (events, macs)
}

fn stationary_operand(r: usize, c: usize, t: u64) -> (Vec<BeatEvents>, Vec<u64>) {
    let idx = |i: usize, j: usize| i * c + j;
    let preload = r as u64;
    let mut pinned: Vec<Option<usize>> = vec![None; r * c];
    let mut streamed: Vec<Option<u64>> = vec![None; r * c];
    let mut psum: Vec<Option<u64>> = vec![None; r * c];
    let mut macs = vec![0u64; r * c];
    let mut exited = 0u64;
    let target = c as u64 * t;
    let mut events = Vec::new();
    let mut beat: u64 = 0;

    while exited < target {
        let mut ev = BeatEvents::default();

        if beat < preload {
            // Shift the stationary operand down one row; row `r-1-beat` enters.
            for i in (1..r).rev() {
                for j in 0..c {
                    pinned[idx(i, j)] = pinned[idx(i - 1, j)];
                }
            }
            for j in 0..c {
                pinned[idx(0, j)] = Some(r - 1 - beat as usize);
            }
            ev.north = true;
        } else {
            let s = beat - preload;
            let mut next_stream = vec![None; r * c];
            let mut next_psum = vec![None; r * c];
            for i in 0..r {
                for j in 0..c {
                    next_stream[idx(i, j)] = if j == 0 {
                        let k = s.checked_sub(i as u64).filter(|&k| k < t);
                        ev.west |= k.is_some();
                        k
                    } else {
                        streamed[idx(i, j - 1)]
                    };
                    next_psum[idx(i, j)] = if i == 0 {
                        s.checked_sub(j as u64).filter(|&k| k < t)
                    } else {
                        psum[idx(i - 1, j)]
                    };
                }
            }
            streamed = next_stream;
            psum = next_psum;

            for i in 0..r {
                for j in 0..c {
                    if let (Some(a), Some(p)) = (streamed[idx(i, j)], psum[idx(i, j)]) {
                        assert_eq!(a, p, "operand skew mismatch at PE({i},{j})");
                        assert_eq!(pinned[idx(i, j)], Some(i), "stationary operand misplaced");
                        macs[idx(i, j)] += 1;
                        if i == r - 1 {
                            exited += 1;
                            ev.south = true;
                        }
                        if i == r - 1 && j == c - 1 {
                            ev.corner_mac = true;
                        }
                    }
                }
            }
        }

        events.push(ev);
        beat += 1;
    }
    (events, macs)
}

/// Converts beat events into cycles, stalling on edge-port contention.
fn arbitrate(events: &[BeatEvents], rows: u64, cols: u64, budget: Option<&LinkBudget>) -> FoldCycles {
    let first_corner = events.iter().position(|e| e.corner_mac).expect("corner PE never fired");
    let last_corner = events.iter().rposition(|e| e.corner_mac).unwrap();

    let mut phases = [0u64; 3];
    for (b, ev) in events.iter().enumerate() {
        let cycles = match budget {
            None => 1,
            Some(budget) => {
                let mut remaining = [
                    if ev.west { rows } else { 0 },
                    if ev.north { cols } else { 0 },
                    if ev.south { cols } else { 0 },
                ];
                let ports = [budget.row_ports, budget.col_ports, budget.drain_ports];
                let mut cycles = 0;
                loop {
                    cycles += 1;
                    for (rem, p) in remaining.iter_mut().zip(ports) {
                        *rem = rem.saturating_sub(p);
                    }
                    if remaining.iter().all(|&w| w == 0) {
                        break;
                    }
                }
                cycles
            }
        };
        let phase = if b < first_corner {
            0
        } else if b <= last_corner {
            1
        } else {
            2
        };
        phases[phase] += cycles;
    }
    FoldCycles::new(phases[0], phases[1], phases[2])
}
