use super::{EventStore, OutcomeEvent, OutcomeKind, RawEvent, StayMeta};
use crate::catalog;

/// First event of each outcome kind inside `[intime, outtime]`.
pub fn extract_outcomes(store: &EventStore, stay: &StayMeta) -> Vec<OutcomeEvent> {
    outcomes_from_events(store.events(stay.stay_id), stay)
}

/// Same as [`extract_outcomes`] for an arbitrary, possibly unsorted, event slice.
pub fn outcomes_from_events(events: &[RawEvent], stay: &StayMeta) -> Vec<OutcomeEvent> {
    let in_stay = |e: &&RawEvent| {
        e.stay_id == stay.stay_id && e.time >= stay.intime && e.time <= stay.outtime
    };
    let first = |pred: fn(crate::ids::ItemId) -> bool| {
        events
            .iter()
            .filter(in_stay)
            .filter(|e| pred(e.item_id))
            .map(|e| e.time)
            .min()
    };
    let mut out = Vec::new();
    if let Some(time) = stay.icu_death() {
        out.push(OutcomeEvent {
            stay_id: stay.stay_id,
            kind: OutcomeKind::Mortality,
            time,
        });
    }
    if let Some(time) = first(catalog::is_vasopressor) {
        out.push(OutcomeEvent {
            stay_id: stay.stay_id,
            kind: OutcomeKind::VasopressorStart,
            time,
        });
    }
    if let Some(time) = first(catalog::is_ventilation) {
        out.push(OutcomeEvent {
            stay_id: stay.stay_id,
            kind: OutcomeKind::VentilationStart,
            time,
        });
    }
    out.sort_by_key(|o| (o.time, o.kind));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ItemId, StayId, SubjectId};
    use crate::ingest::{CareUnit, EventSource, Gender};
    use crate::time::Timestamp;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn stay(death: Option<i64>) -> StayMeta {
        let t0 = Timestamp(1_000_000);
        StayMeta {
            stay_id: StayId(1),
            subject_id: SubjectId(1),
            intime: t0,
            outtime: t0.plus_hours(40),
            age: 60.0,
            gender: Gender::M,
            death_time: death.map(|h| t0.plus_hours(h)),
            care_unit: CareUnit::Medical,
        }
    }

    fn start(item: u32, hour: i64) -> RawEvent {
        RawEvent {
            stay_id: StayId(1),
            item_id: ItemId(item),
            time: Timestamp(1_000_000).plus_hours(hour),
            value: None,
            source: EventSource::Input,
            known: true,
        }
    }

    #[test]
    fn first_vasopressor_across_items() {
        let s = stay(None);
        let out = outcomes_from_events(&[start(221906, 10), start(221662, 8)], &s);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, OutcomeKind::VasopressorStart);
        assert_eq!(out[0].time, s.intime.plus_hours(8));
    }

    #[test]
    fn death_after_outtime_and_no_interventions_is_empty() {
        assert!(outcomes_from_events(&[], &stay(Some(50))).is_empty());
    }

    #[test]
    fn intubation_gives_ventilation_start() {
        let s = stay(None);
        let mut ev = start(224385, 12);
        ev.source = EventSource::Procedure;
        let out = outcomes_from_events(&[ev], &s);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, OutcomeKind::VentilationStart);
        assert_eq!(out[0].time, s.intime.plus_hours(12));
    }

    #[test]
    fn pre_icu_administration_is_ignored() {
        let s = stay(None);
        let out = outcomes_from_events(&[start(221906, -2), start(221906, 15)], &s);
        assert_eq!(out[0].time, s.intime.plus_hours(15));
    }

    #[test]
    fn shuffle_invariant_and_idempotent() {
        let s = stay(Some(30));
        let mut events: Vec<RawEvent> = (0..30)
            .map(|i| start([221906, 221289, 224385, 225792, 220045][i % 5], (i as i64 * 7) % 37))
            .collect();
        let reference = outcomes_from_events(&events, &s);
        assert_eq!(reference.len(), 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            events.shuffle(&mut rng);
            assert_eq!(outcomes_from_events(&events, &s), reference);
        }
    }
}
