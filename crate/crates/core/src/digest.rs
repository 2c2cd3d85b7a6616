//! Salted password digests (PBKDF2-HMAC-SHA256).

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::Sha256;

const ROUNDS: u32 = 10_000;
const SALT_LEN: usize = 16;
const HASH_LEN: usize = 32;
const SCHEME: &str = "pbkdf2-sha256";

/// A salted one-way digest, stored as `pbkdf2-sha256$<rounds>$<salt>$<hash>`.
#[derive(Clone, PartialEq, Eq)]
pub struct PasswordDigest {
    rounds: u32,
    salt: [u8; SALT_LEN],
    hash: [u8; HASH_LEN],
}

impl PasswordDigest {
    pub fn new(password: &str) -> Self {
        let mut salt = [0u8; SALT_LEN];
        rand::rng().fill_bytes(&mut salt);
        Self::with_salt(password, salt, ROUNDS)
    }

    fn with_salt(password: &str, salt: [u8; SALT_LEN], rounds: u32) -> Self {
        let mut hash = [0u8; HASH_LEN];
        pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), &salt, rounds, &mut hash);
        PasswordDigest { rounds, salt, hash }
    }

    pub fn verify(&self, password: &str) -> bool {
        let candidate = Self::with_salt(password, self.salt, self.rounds);
        // constant-time comparison
        candidate
            .hash
            .iter()
            .zip(&self.hash)
            .fold(0u8, |acc, (a, b)| acc | (a ^ b))
            == 0
    }

    pub fn encode(&self) -> String {
        format!(
            "{SCHEME}${}${}${}",
            self.rounds,
            hex::encode(self.salt),
            hex::encode(self.hash)
        )
    }

    pub fn decode(text: &str) -> Option<Self> {
        let mut parts = text.split('$');
        if parts.next()? != SCHEME {
            return None;
        }
        let rounds = parts.next()?.parse().ok()?;
        let salt = hex::decode(parts.next()?).ok()?.try_into().ok()?;
        let hash = hex::decode(parts.next()?).ok()?.try_into().ok()?;
        if parts.next().is_some() || rounds == 0 {
            return None;
        }
        Some(PasswordDigest { rounds, salt, hash })
    }
}

impl fmt::Debug for PasswordDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PasswordDigest(..)")
    }
}

impl Serialize for PasswordDigest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.encode())
    }
}

impl<'de> Deserialize<'de> for PasswordDigest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        PasswordDigest::decode(&text).ok_or_else(|| serde::de::Error::custom("malformed password digest"))
    }
}
