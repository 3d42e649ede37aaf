//! Security-aware pruning of period menus.
//!
//! A longer period `p' = n·p + k'` (with `p` the minimum period of the
//! victim) shifts each victim arrival by `k'` ladder columns. When `k'`
//! equals the attacker's execution time the attacker is never preempted by
//! the victim; any `k'` in `[e_j, p - 1]` still delays and thins out the
//! preemptions the attacker can observe.

use serde::{Deserialize, Serialize};

use crate::taskmodel::{TrustedTask, UntrustedTask};
use crate::{Error, Result};

/// Verdict for one candidate period against one attacker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// `k' == e_j`: zero preemptions of the attacker by the victim.
    LeastInferability,
    /// `e_j <= k' <= p - 1`.
    ReducedInferability,
    Inadmissible,
}

impl Verdict {
    /// Retained under the (weaker) reduced-inferability criterion.
    pub fn is_admissible(self) -> bool {
        !matches!(self, Verdict::Inadmissible)
    }
}

/// Which untrusted tasks a candidate period must be admissible against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecurityPolicy {
    /// Every untrusted task is a potential attacker.
    #[default]
    AllAttackers,
    /// Only the untrusted task with this priority index.
    DesignatedAttacker(usize),
}

/// Classifies `p_prime` against an attacker with execution time
/// `attacker_wcet`, relative to the victim's minimum period `base`.
pub fn admissible(p_prime: u64, base: u64, attacker_wcet: u64) -> Result<Verdict> {
    if p_prime <= base {
        return Err(Error::Domain(format!("candidate period {p_prime} must exceed the base period {base}")));
    }
    let k = p_prime % base;
    Ok(if k == attacker_wcet {
        Verdict::LeastInferability
    } else if k >= attacker_wcet && k < base {
        Verdict::ReducedInferability
    } else {
        Verdict::Inadmissible
    })
}

/// Per-attacker verdicts for one candidate period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodAdmissibility {
    pub victim_id: usize,
    pub base_period: u64,
    pub candidate: u64,
    /// `(attacker priority index, verdict)`.
    pub verdicts: Vec<(usize, Verdict)>,
    pub retained: bool,
}

/// Result of pruning one menu.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityPruning {
    pub retained: Vec<u64>,
    pub details: Vec<PeriodAdmissibility>,
    /// Set when only the base period survived although other candidates
    /// were offered.
    pub degenerate: bool,
}

/// Keeps the minimum period plus every candidate admissible under `policy`.
///
/// `untrusted` pairs each untrusted task with its priority index.
pub fn prune_security(
    victim_id: usize,
    task: &TrustedTask,
    performance_periods: &[u64],
    untrusted: &[(usize, &UntrustedTask)],
    policy: SecurityPolicy,
) -> Result<SecurityPruning> {
    let base = task.min_period();
    let mut retained = vec![base];
    let mut details = Vec::new();
    let attackers: Vec<&(usize, &UntrustedTask)> = match policy {
        SecurityPolicy::AllAttackers => untrusted.iter().collect(),
        SecurityPolicy::DesignatedAttacker(id) => untrusted.iter().filter(|(j, _)| *j == id).collect(),
    };
    let mut candidates: Vec<u64> = performance_periods.iter().copied().filter(|&p| p != base).collect();
    candidates.sort_unstable();
    for p in candidates {
        let verdicts = attackers
            .iter()
            .map(|(j, u)| admissible(p, base, u.wcet).map(|v| (*j, v)))
            .collect::<Result<Vec<_>>>()?;
        let keep = verdicts.iter().all(|(_, v)| v.is_admissible());
        if keep {
            retained.push(p);
        }
        details.push(PeriodAdmissibility {
            victim_id,
            base_period: base,
            candidate: p,
            verdicts,
            retained: keep,
        });
    }
    let degenerate = retained.len() == 1 && performance_periods.len() > 1;
    Ok(SecurityPruning {
        retained,
        details,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn predicate_examples() {
        assert_eq!(admissible(3, 2, 1).unwrap(), Verdict::LeastInferability);
        assert_eq!(admissible(5, 4, 1).unwrap(), Verdict::LeastInferability);
        assert_eq!(admissible(5, 4, 2).unwrap(), Verdict::Inadmissible);
        assert_eq!(admissible(7, 4, 2).unwrap(), Verdict::ReducedInferability);
        assert!(admissible(4, 4, 1).is_err());
    }

    #[test]
    fn multiples_of_the_base_are_never_admissible() {
        for e in 1..4 {
            assert_eq!(admissible(8, 4, e).unwrap(), Verdict::Inadmissible);
        }
    }

    #[test]
    fn tab2_menu_is_kept() {
        let ts = bundled::tab2();
        let untrusted: Vec<_> = ts.untrusted_ids().zip(&ts.untrusted).collect();
        let out = prune_security(1, &ts.trusted[0], &[2, 3], &untrusted, SecurityPolicy::AllAttackers).unwrap();
        assert_eq!(out.retained, vec![2, 3]);
    }

    #[test]
    fn doubling_degenerates_to_base() {
        let ts = bundled::tab2();
        let mut task = ts.trusted[0].clone();
        task.period_menu = vec![2, 4];
        let untrusted: Vec<_> = ts.untrusted_ids().zip(&ts.untrusted).collect();
        let out = prune_security(1, &task, &[2, 4], &untrusted, SecurityPolicy::AllAttackers).unwrap();
        assert_eq!(out.retained, vec![2]);
        assert!(out.degenerate);
    }

    #[test]
    fn tab3_esp_menu_is_kept() {
        for ts in [bundled::tab3_low(), bundled::tab3_high()] {
            let untrusted: Vec<_> = ts.untrusted_ids().zip(&ts.untrusted).collect();
            let out = prune_security(1, &ts.trusted[0], &[10, 15, 25], &untrusted, SecurityPolicy::AllAttackers).unwrap();
            assert_eq!(out.retained, vec![10, 15, 25]);
        }
    }

    #[test]
    fn designated_policy_only_checks_one_attacker() {
        let ts = bundled::tab1();
        let untrusted: Vec<_> = ts.untrusted_ids().zip(&ts.untrusted).collect();
        // tau_3 (e = 2) rules out 5 = 4 + 1; tau_2 (e = 1) does not.
        let all = prune_security(1, &ts.trusted[0], &[4, 5], &untrusted, SecurityPolicy::AllAttackers).unwrap();
        assert_eq!(all.retained, vec![4]);
        let one = prune_security(1, &ts.trusted[0], &[4, 5], &untrusted, SecurityPolicy::DesignatedAttacker(2)).unwrap();
        assert_eq!(one.retained, vec![4, 5]);
    }

    proptest::proptest! {
        #[test]
        fn least_implies_reduced(base in 2u64..30, n in 1u64..4, k in 0u64..30, e in 1u64..10) {
            let p = n * base + (k % base);
            proptest::prop_assume!(p > base);
            let v = admissible(p, base, e).unwrap();
            if v == Verdict::LeastInferability {
                proptest::prop_assert!(v.is_admissible());
                proptest::prop_assert!(e < base);
            }
        }
    }
}
