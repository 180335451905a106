//! Item codes and the 26-channel feature layout.
//!
//! Channels are ordered as 10 vitals followed by 16 labs. Arterial and
//! non-invasive blood pressures are separate channels; the two temperature
//! items merge into one Celsius channel.

use crate::ids::ItemId;

pub const N_CHANNELS: usize = 26;
pub const N_VITALS: usize = 10;

pub const TEMP_F_ITEM: ItemId = ItemId(223761);
pub const TEMP_C_ITEM: ItemId = ItemId(223762);

/// norepinephrine, epinephrine, dopamine, phenylephrine, vasopressin
pub const VASOPRESSOR_ITEMS: [ItemId; 5] = [
    ItemId(221906),
    ItemId(221289),
    ItemId(221662),
    ItemId(221749),
    ItemId(222315),
];

/// Intubation procedure items.
pub const VENTILATION_ITEMS: [ItemId; 2] = [ItemId(224385), ItemId(225792)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Vital,
    Lab,
}

#[derive(Debug, Clone, Copy)]
pub struct Channel {
    pub name: &'static str,
    pub kind: ChannelKind,
    pub items: &'static [u32],
    /// Maximum hours a value may be carried forward.
    pub carry_hours: u32,
}

pub const CHANNELS: [Channel; N_CHANNELS] = [
    vital("heart_rate", &[220045]),
    vital("sbp_arterial", &[220050]),
    vital("sbp_noninvasive", &[220179]),
    vital("dbp_arterial", &[220051]),
    vital("dbp_noninvasive", &[220180]),
    vital("map_arterial", &[220052]),
    vital("map_noninvasive", &[220181]),
    vital("resp_rate", &[220210]),
    vital("spo2", &[220277]),
    vital("temperature_c", &[223761, 223762]),
    lab("lactate", &[50813], 6),
    lab("creatinine", &[50912], 24),
    lab("bun", &[51006], 24),
    lab("potassium", &[50971], 24),
    lab("sodium", &[50983], 24),
    lab("glucose", &[50931], 24),
    lab("wbc", &[51301], 24),
    lab("hemoglobin", &[51222], 24),
    lab("hematocrit", &[51221], 24),
    lab("platelets", &[51265], 24),
    lab("bilirubin", &[50885], 24),
    lab("albumin", &[50862], 48),
    lab("ph", &[50820], 6),
    lab("pco2", &[50818], 6),
    lab("po2", &[50821], 6),
    lab("bicarbonate", &[50882], 24),
];

const fn vital(name: &'static str, items: &'static [u32]) -> Channel {
    Channel {
        name,
        kind: ChannelKind::Vital,
        items,
        carry_hours: 4,
    }
}

const fn lab(name: &'static str, items: &'static [u32], carry_hours: u32) -> Channel {
    Channel {
        name,
        kind: ChannelKind::Lab,
        items,
        carry_hours,
    }
}

pub fn channel_names() -> [&'static str; N_CHANNELS] {
    let mut names = [""; N_CHANNELS];
    for (slot, ch) in names.iter_mut().zip(CHANNELS.iter()) {
        *slot = ch.name;
    }
    names
}

/// Channel index for a charted or lab item, if it feeds the grid.
pub fn channel_of(item: ItemId) -> Option<usize> {
    CHANNELS
        .iter()
        .position(|ch| ch.items.iter().any(|&code| code == item.0))
}

pub fn is_vital(item: ItemId) -> bool {
    channel_of(item).is_some_and(|c| CHANNELS[c].kind == ChannelKind::Vital)
}

pub fn is_lab(item: ItemId) -> bool {
    channel_of(item).is_some_and(|c| CHANNELS[c].kind == ChannelKind::Lab)
}

pub fn is_vasopressor(item: ItemId) -> bool {
    VASOPRESSOR_ITEMS.contains(&item)
}

pub fn is_ventilation(item: ItemId) -> bool {
    VENTILATION_ITEMS.contains(&item)
}

/// Whether an item code is understood anywhere in the pipeline.
pub fn is_known(item: ItemId) -> bool {
    channel_of(item).is_some() || is_vasopressor(item) || is_ventilation(item)
}

pub fn fahrenheit_to_celsius(f: f64) -> f64 {
    (f - 32.0) * 5.0 / 9.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_ten_vitals_then_sixteen_labs() {
        assert_eq!(CHANNELS.iter().filter(|c| c.kind == ChannelKind::Vital).count(), N_VITALS);
        assert!(CHANNELS[..N_VITALS].iter().all(|c| c.kind == ChannelKind::Vital));
        assert!(CHANNELS[N_VITALS..].iter().all(|c| c.kind == ChannelKind::Lab));
        let codes: Vec<u32> = CHANNELS.iter().flat_map(|c| c.items.iter().copied()).collect();
        assert_eq!(codes.len(), 27);
        let mut dedup = codes.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), codes.len());
    }

    #[test]
    fn carry_windows() {
        let by_name = |n: &str| CHANNELS.iter().find(|c| c.name == n).unwrap().carry_hours;
        assert_eq!(by_name("heart_rate"), 4);
        assert_eq!(by_name("lactate"), 6);
        assert_eq!(by_name("ph"), 6);
        assert_eq!(by_name("pco2"), 6);
        assert_eq!(by_name("po2"), 6);
        assert_eq!(by_name("albumin"), 48);
        assert_eq!(by_name("sodium"), 24);
        assert_eq!(by_name("bicarbonate"), 24);
    }

    #[test]
    fn temperature_items_share_channel() {
        assert_eq!(channel_of(TEMP_F_ITEM), channel_of(TEMP_C_ITEM));
        assert!((fahrenheit_to_celsius(98.6) - 37.0).abs() < 1e-12);
    }
}
