//! Serializes big unsigned integers as decimal strings.

use num_bigint::BigUint;
use serde::{de, Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigUint, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }
    match Repr::deserialize(d)? {
        Repr::Int(v) => Ok(BigUint::from(v)),
        Repr::Text(t) => t.trim().parse().map_err(|_| de::Error::custom(format!("not an unsigned integer: {t:?}"))),
    }
}
