//! Serde helpers that write floats rounded to six significant digits.
//!
//! Rounding is idempotent, so parse → serialize reproduces the same bytes.

use serde::{Deserialize, Deserializer, Serializer};

pub fn round(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Display form used in delimited output.
pub fn display(x: f64) -> String {
    format!("{}", round(x))
}

pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round(*x))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    f64::deserialize(d)
}

pub mod option {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_some(&super::round(*v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<f64>::deserialize(d)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn six_digits() {
        assert_eq!(round(0.069_795_516_136_979_55), 0.0697955);
        assert_eq!(round(123_456_789.0), 123_457_000.0);
        assert_eq!(display(2.0 / 3.0), "0.666667");
        assert_eq!(round(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn idempotent(x in -1e12f64..1e12) {
            let r = round(x);
            prop_assert_eq!(round(r), r);
            let text = serde_json::to_string(&r).unwrap();
            prop_assert_eq!(text.parse::<f64>().unwrap(), r);
        }
    }
}
