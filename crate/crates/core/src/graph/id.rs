use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// A SHA-256 digest identifying a piece of content.
///
/// Rendered as exactly 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentId([u8; 32]);

impl ContentId {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First eight hex characters, used for labels.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

/// Hashes arbitrary bytes into a [`ContentId`].
pub fn content_id(data: &[u8]) -> ContentId {
    let digest = Sha256::digest(data);
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    ContentId(out)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed content id {0:?}: expected 64 lowercase hex characters")]
pub struct ParseContentIdError(pub String);

impl FromStr for ContentId {
    type Err = ParseContentIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let well_formed = s.len() == 64
            && s.bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !well_formed {
            return Err(ParseContentIdError(s.to_string()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseContentIdError(s.to_string()))?;
        Ok(ContentId(out))
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentId({})", self.short())
    }
}

impl Serialize for ContentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Standard FIPS 180-2 vectors.
    const EMPTY: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
    const ABC: &str = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";

    #[test]
    fn empty_input_matches_standard_vector() {
        assert_eq!(content_id(b"").to_hex(), EMPTY);
        assert_eq!(content_id(b"abc").to_hex(), ABC);
    }

    #[test]
    fn deterministic_and_sensitive_to_one_byte() {
        assert_eq!(content_id(b"100.00"), content_id(b"100.00"));
        let a = content_id(b"abc");
        let b = content_id(b"abd");
        assert_ne!(a, b);
        // abd, computed with an independent SHA-256 (python hashlib)
        assert_eq!(
            b.to_hex(),
            "a52d159f262b2c6ddb724a61840befc36eb30c88877a4030b65cbe86298449c9"
        );
    }

    #[test]
    fn hex_round_trip_and_rejects_uppercase() {
        let id = content_id(b"x");
        assert_eq!(id.to_hex().len(), 64);
        assert_eq!(id.to_hex().parse::<ContentId>().unwrap(), id);
        assert!(EMPTY.to_uppercase().parse::<ContentId>().is_err());
        assert!("abc".parse::<ContentId>().is_err());
    }
}
