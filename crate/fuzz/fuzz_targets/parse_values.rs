#![no_main]
use libfuzzer_sys::fuzz_target;

use quniv::fxp::{FxFormat, FxNum, ScaledExact};
use quniv::targets::parse_rational;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(f) = text.parse::<FxFormat>() {
        assert_eq!(f.to_string().parse::<FxFormat>().unwrap(), f);
    }
    if let Ok(x) = text.parse::<FxNum>() {
        assert_eq!(x.to_string().parse::<FxNum>().unwrap(), x);
    }
    if let Ok(v) = text.parse::<ScaledExact>() {
        assert_eq!(v.to_string().parse::<ScaledExact>().unwrap(), v);
    }
    let _ = parse_rational(text);
});
