//! Hyper-period schedule selection.
//!
//! In normal mode the next schedule is drawn uniformly from the entries
//! whose SVI is below the threshold; after a detector alarm on task `i` it
//! is drawn from the lookup row of `i` until enough quiet hyper-periods
//! have passed. A draw equal to the deployed index is repeated, unless the
//! deployed schedule is the only candidate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::rational::{self, Rational};
use crate::vulnerability::ScheduleStore;
use crate::{Error, Result};

/// SplitMix64: a counter-based 64-bit generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// `rand() % n`; the modulo bias is negligible for small `n`.
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// Detector flag handed to the selector at a hyper-period boundary:
/// 0 means no alarm, otherwise the 1-based id of the suspected victim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct AtkFlag(pub usize);

impl AtkFlag {
    pub const NONE: AtkFlag = AtkFlag(0);

    pub fn is_alarm(self) -> bool {
        self.0 != 0
    }

    /// Collapses several alarmed tasks into one flag: the most critical
    /// task wins, ties going to the higher priority.
    pub fn from_alarms(alarmed: &[usize], criticality: &[Rational]) -> AtkFlag {
        alarmed
            .iter()
            .copied()
            .filter(|&id| id >= 1 && id <= criticality.len())
            .min_by(|&a, &b| criticality[b - 1].cmp(&criticality[a - 1]).then(a.cmp(&b)))
            .map_or(AtkFlag::NONE, AtkFlag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Normal,
    /// Deploying from the lookup row of this trusted task.
    Alert(usize),
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Normal => f.write_str("normal"),
            Mode::Alert(i) => write!(f, "alert-{i}"),
        }
    }
}

/// One selection decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deployment {
    pub epoch: u64,
    pub mode: Mode,
    pub index: usize,
    pub flag: AtkFlag,
    /// The previous schedule was kept because the mode had no candidate.
    pub held: bool,
}

/// Quiet hyper-periods after which alert mode falls back to normal mode.
pub const DEFAULT_ALERT_EXIT: u32 = 3;

#[derive(Debug, Clone)]
pub struct SelectorState {
    k: usize,
    lut: Vec<Vec<usize>>,
    len: usize,
    pub current: usize,
    pub mode: Mode,
    rng: SplitMix64,
    quiet: u32,
    pub alert_exit: u32,
    epoch: u64,
    pub log: Vec<Deployment>,
}

impl SelectorState {
    /// Makes the first normal-mode draw. When normal mode has no candidate
    /// the lowest-SVI schedule is deployed and marked as held.
    pub fn new(store: &ScheduleStore, seed: u64) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::EmptyCandidateSet("schedule store".into()));
        }
        let mut s = SelectorState {
            k: store.k,
            lut: store.lut.clone(),
            len: store.len(),
            current: usize::MAX,
            mode: Mode::Normal,
            rng: SplitMix64::new(seed),
            quiet: 0,
            alert_exit: DEFAULT_ALERT_EXIT,
            epoch: 0,
            log: Vec::new(),
        };
        let held = match s.draw() {
            Ok(i) => {
                s.current = i;
                false
            }
            Err(_) => {
                s.current = 0;
                true
            }
        };
        s.log.push(Deployment {
            epoch: 0,
            mode: Mode::Normal,
            index: s.current,
            flag: AtkFlag::NONE,
            held,
        });
        Ok(s)
    }

    pub fn threshold_index(&self) -> usize {
        self.k
    }

    /// Number of candidates in the current mode and, in alert mode, the
    /// lookup row they come from.
    fn candidates(&self) -> Result<(usize, Option<usize>)> {
        match self.mode {
            Mode::Normal if self.k > 0 => Ok((self.k, None)),
            Mode::Normal => Err(Error::EmptyCandidateSet("normal mode (no schedule below the threshold)".into())),
            Mode::Alert(i) => match self.lut.get(i - 1) {
                Some(row) if !row.is_empty() => Ok((row.len(), Some(i - 1))),
                _ => Err(Error::EmptyCandidateSet(format!("alert mode for task {i}"))),
            },
        }
    }

    fn draw(&mut self) -> Result<usize> {
        let (n, row) = self.candidates()?;
        let at = |j: usize| row.map_or(j, |r| self.lut[r][j]);
        if n == 1 {
            return Ok(at(0));
        }
        loop {
            let idx = at(self.rng.below(n));
            if idx != self.current {
                return Ok(idx);
            }
        }
    }

    /// Applies the flag, then picks the next schedule. On an empty candidate
    /// set the current schedule stays deployed and the error is returned.
    pub fn sched_sel(&mut self, flag: AtkFlag) -> Result<usize> {
        if flag.0 > self.lut.len() {
            return Err(Error::config(format!("attack flag names unknown trusted task {}", flag.0)));
        }
        if flag.is_alarm() {
            self.mode = Mode::Alert(flag.0);
            self.quiet = 0;
        } else if let Mode::Alert(_) = self.mode {
            self.quiet += 1;
            if self.quiet >= self.alert_exit {
                self.mode = Mode::Normal;
                self.quiet = 0;
            }
        }
        self.epoch += 1;
        let result = self.draw();
        let held = result.is_err();
        if let Ok(i) = result {
            self.current = i;
        }
        self.log.push(Deployment {
            epoch: self.epoch,
            mode: self.mode,
            index: self.current,
            flag,
            held,
        });
        debug_assert!(self.current < self.len);
        result
    }
}

/// Something that can run one hyper-period of a deployed schedule and report
/// the detector flag at its end.
pub trait World {
    fn run_hyper_period(&mut self, epoch: u64, schedule_index: usize) -> Result<AtkFlag>;

    /// Lets the world stop the run early (e.g. after a blow-up).
    fn halted(&self) -> bool {
        false
    }
}

/// Deploys, simulates and reselects for `epochs` hyper-periods. Empty
/// candidate sets keep the current schedule and are recorded in the log.
pub fn run_epoch<W: World>(state: &mut SelectorState, world: &mut W, epochs: u64) -> Result<()> {
    for epoch in 0..epochs {
        let flag = world.run_hyper_period(epoch, state.current)?;
        if world.halted() {
            break;
        }
        match state.sched_sel(flag) {
            Ok(_) | Err(Error::EmptyCandidateSet(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Deployment log as CSV: epoch, mode, schedule index, SVI, flag, held.
pub fn log_csv(log: &[Deployment], store: &ScheduleStore) -> String {
    let mut out = String::from("epoch,mode,index,svi,flag,held\n");
    for d in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            d.epoch,
            d.mode,
            d.index,
            rational::format(&store.svi(d.index)),
            d.flag.0,
            d.held
        );
    }
    out
}
