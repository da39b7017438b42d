#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = quniv::act::QuantTable::from_text(text) {
        // Accepted tables must round-trip bit-exactly.
        let again = quniv::act::QuantTable::from_text(&table.to_text()).expect("round trip");
        assert_eq!(table, again);
    }
});
