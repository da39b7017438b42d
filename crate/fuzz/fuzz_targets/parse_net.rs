#![no_main]
use libfuzzer_sys::fuzz_target;

use quniv::act::{tabulate, ActivationSpec, QuantTable};
use quniv::fxp::FxFormat;
use quniv::net::{net_from_text, net_to_text};

fn fixed_table() -> QuantTable {
    let format = FxFormat::new(3, 2).unwrap();
    tabulate(&ActivationSpec::relu(), format, 64, 1).unwrap()
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(net) = net_from_text(text, |_| Ok(fixed_table())) {
        let round = net_to_text(&net, "t.qt");
        let again = net_from_text(&round, |_| Ok(fixed_table())).expect("round trip");
        assert_eq!(net_to_text(&again, "t.qt"), round);
    }
});
