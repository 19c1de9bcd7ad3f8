//! Joint goal accuracy, slot accuracy and slot F1.
//!
//! Metrics are computed from additive [`Counts`], so per-dialogue counts can
//! be computed in parallel and merged in any order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{SlotId, SLOT_COUNT};
use crate::state::DialogueState;

/// Raw tallies behind the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub turns: usize,
    pub joint_correct: usize,
    pub slot_correct: [usize; SLOT_COUNT],
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl Default for Counts {
    fn default() -> Self {
        Counts {
            turns: 0,
            joint_correct: 0,
            slot_correct: [0; SLOT_COUNT],
            true_pos: 0,
            false_pos: 0,
            false_neg: 0,
        }
    }
}

impl Counts {
    pub fn add_turn(&mut self, pred: &DialogueState, gold: &DialogueState) {
        self.turns += 1;
        let mut all = true;
        for slot in SlotId::all() {
            let (p, g) = (pred.get(slot), gold.get(slot));
            if p == g {
                self.slot_correct[slot.index()] += 1;
                if !g.is_none() {
                    self.true_pos += 1;
                }
            } else {
                all = false;
                if !p.is_none() {
                    self.false_pos += 1;
                }
                if !g.is_none() {
                    self.false_neg += 1;
                }
            }
        }
        if all {
            self.joint_correct += 1;
        }
    }

    pub fn merge(mut self, other: &Counts) -> Counts {
        self.turns += other.turns;
        self.joint_correct += other.joint_correct;
        for (a, b) in self.slot_correct.iter_mut().zip(other.slot_correct) {
            *a += b;
        }
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
        self
    }

    pub fn metrics(&self) -> Result<Metrics> {
        if self.turns == 0 {
            return Err(Error::EmptyInput);
        }
        let turns = self.turns as f64;
        let cells: usize = self.slot_correct.iter().sum();
        let precision = ratio(self.true_pos, self.true_pos + self.false_pos);
        let recall = ratio(self.true_pos, self.true_pos + self.false_neg);
        let slot_f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Ok(Metrics {
            jga: self.joint_correct as f64 / turns,
            slot_accuracy: cells as f64 / (turns * SLOT_COUNT as f64),
            slot_f1,
            precision,
            recall,
            turn_count: self.turns,
            per_slot_accuracy: SlotId::all()
                .map(|s| (s, self.slot_correct[s.index()] as f64 / turns))
                .collect(),
        })
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub jga: f64,
    pub slot_accuracy: f64,
    pub slot_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub turn_count: usize,
    pub per_slot_accuracy: BTreeMap<SlotId, f64>,
}

fn check_aligned(preds: &[DialogueState], golds: &[DialogueState]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn count(preds: &[DialogueState], golds: &[DialogueState]) -> Result<Counts> {
    check_aligned(preds, golds)?;
    let mut counts = Counts::default();
    for (p, g) in preds.iter().zip(golds) {
        counts.add_turn(p, g);
    }
    Ok(counts)
}

pub fn evaluate(preds: &[DialogueState], golds: &[DialogueState]) -> Result<Metrics> {
    count(preds, golds)?.metrics()
}

/// Evaluate dialogue-grouped turns in parallel; each group is
/// `(predictions, golds)` for one dialogue.
pub fn evaluate_grouped(groups: &[(Vec<DialogueState>, Vec<DialogueState>)]) -> Result<Metrics> {
    let per_dialogue: Vec<Counts> = groups
        .par_iter()
        .map(|(p, g)| {
            if p.len() != g.len() {
                return Err(Error::LengthMismatch {
                    left: p.len(),
                    right: g.len(),
                });
            }
            let mut c = Counts::default();
            for (p, g) in p.iter().zip(g) {
                c.add_turn(p, g);
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    per_dialogue
        .iter()
        .fold(Counts::default(), |acc, c| acc.merge(c))
        .metrics()
}

pub fn joint_goal_accuracy(preds: &[DialogueState], golds: &[DialogueState]) -> Result<f64> {
    Ok(evaluate(preds, golds)?.jga)
}

pub fn slot_accuracy(preds: &[DialogueState], golds: &[DialogueState]) -> Result<f64> {
    Ok(evaluate(preds, golds)?.slot_accuracy)
}

pub fn slot_f1(preds: &[DialogueState], golds: &[DialogueState]) -> Result<f64> {
    Ok(evaluate(preds, golds)?.slot_f1)
}

/// Plain-text table of one or more labelled metric sets.
pub fn render_table(rows: &[(&str, &Metrics)]) -> String {
    let mut out = String::new();
    out.push_str(
        "# slot accuracy counts NONE cells; slot F1 is micro-averaged over non-NONE values\n",
    );
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>8} {:>8} {:>8}",
        "run", "JGA", "SA", "SlotF1", "turns"
    );
    for (label, m) in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>7.2}% {:>7.2}% {:>7.2}% {:>8}",
            label,
            m.jga * 100.0,
            m.slot_accuracy * 100.0,
            m.slot_f1 * 100.0,
            m.turn_count
        );
    }
    if let Some((_, first)) = rows.first() {
        out.push('\n');
        let _ = write!(out, "{:<24}", "slot");
        for (label, _) in rows {
            let _ = write!(out, " {label:>12}");
        }
        out.push('\n');
        for slot in first.per_slot_accuracy.keys() {
            let _ = write!(out, "{:<24}", slot.to_string());
            for (_, m) in rows {
                let _ = write!(out, " {:>11.2}%", m.per_slot_accuracy[slot] * 100.0);
            }
            out.push('\n');
        }
    }
    out
}
