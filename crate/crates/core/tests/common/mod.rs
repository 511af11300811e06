use bitalloc::model::SignalParams;
use bitalloc::quantizer::{DesignSettings, QuantizerBank};

/// Small bank, quick to design. Good enough for shape checks.
pub fn small_bank(max_rate: u32) -> QuantizerBank {
    let settings = DesignSettings { area_side: 20.0, signal: SignalParams::default(), sample_count: 1500, seed: 7 };
    QuantizerBank::design(max_rate, settings).unwrap()
}
