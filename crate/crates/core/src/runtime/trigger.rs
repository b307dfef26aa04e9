//! Trigger schedules.

use chrono::Datelike;

use crate::clock::EpochMs;
use crate::protocol::{Recurrence, TimeOfDay, Trigger};

const MS_PER_DAY: i64 = 86_400_000;

/// Next time `trigger` fires, given the current time and its last firing.
///
/// Scheduled instants already in the past never fire, and event-driven
/// triggers have no clock schedule at all.
pub fn next_fire(trigger: &Trigger, now: EpochMs, last_fire: Option<EpochMs>) -> Option<EpochMs> {
    match trigger {
        Trigger::Immediate {} => match last_fire {
            None => Some(now),
            Some(_) => None,
        },
        Trigger::Periodic { period_ms } => match last_fire {
            None => Some(now),
            Some(last) => Some(last + (*period_ms).max(1) as i64),
        },
        Trigger::Scheduled { at } => match last_fire {
            None if *at >= now => Some(*at),
            _ => None,
        },
        Trigger::RecurrentScheduled {
            time_of_day,
            recurrence,
        } => {
            // Strictly after `now - 1ms` means an occurrence at exactly `now`
            // still counts.
            let after = last_fire.map_or(now - 1, |l| l.max(now - 1));
            Some(next_occurrence(*time_of_day, *recurrence, after))
        }
        Trigger::SamplingEvent { .. } => None,
    }
}

/// First instant strictly after `after` matching the recurrence.
fn next_occurrence(tod: TimeOfDay, recurrence: Recurrence, after: EpochMs) -> EpochMs {
    let day_start = after.div_euclid(MS_PER_DAY) * MS_PER_DAY;
    (0..=8)
        .map(|d| day_start + d * MS_PER_DAY)
        .filter(|day| match recurrence {
            Recurrence::Daily => true,
            Recurrence::Weekly { weekday } => chrono::DateTime::from_timestamp_millis(*day)
                .is_some_and(|dt| dt.weekday() == weekday.to_chrono()),
        })
        .map(|day| day + tod.ms_since_midnight())
        .find(|t| *t > after)
        .expect("an occurrence exists within eight days")
}

/// Scheduling state for one trigger and the probes of its task.
#[derive(Debug, Clone)]
pub struct TriggerExecutor {
    pub trigger: Trigger,
    pub task_name: String,
    pub probes: Vec<usize>,
    last_fire: Option<EpochMs>,
    cursor: Option<EpochMs>,
    fired: Vec<EpochMs>,
}

impl TriggerExecutor {
    pub fn new(trigger: Trigger, task_name: String, probes: Vec<usize>) -> Self {
        Self {
            trigger,
            task_name,
            probes,
            last_fire: None,
            cursor: None,
            fired: Vec::new(),
        }
    }

    pub fn cursor(&self) -> Option<EpochMs> {
        self.cursor
    }

    pub fn last_fire(&self) -> Option<EpochMs> {
        self.last_fire
    }

    /// Every firing so far.
    pub fn fire_times(&self) -> &[EpochMs] {
        &self.fired
    }

    /// Computes the next fire time at `now`. Fires missed while disarmed are
    /// skipped, not replayed.
    pub fn arm(&mut self, now: EpochMs) {
        self.cursor = match (&self.trigger, self.last_fire) {
            (Trigger::Periodic { period_ms }, Some(last)) => {
                let p = (*period_ms).max(1) as i64;
                let mut next = last + p;
                if next < now {
                    next = last + ((now - last) + p - 1) / p * p;
                }
                Some(next)
            }
            (trigger, last) => next_fire(trigger, now, last),
        };
    }

    pub fn disarm(&mut self) {
        self.cursor = None;
    }

    /// Records a firing at `now` and schedules the next one.
    pub fn fire(&mut self, now: EpochMs) {
        self.last_fire = Some(now);
        self.fired.push(now);
        self.cursor = next_fire(&self.trigger, now, Some(now));
    }
}
