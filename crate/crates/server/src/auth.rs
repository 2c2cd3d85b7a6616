//! Sessions and bearer-token resolution.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use axum::http::{header, HeaderMap};
use chrono::{DateTime, Utc};
use dashmap::DashMap;
use rand::RngCore;
use reta_core::permission::Principal;
use reta_core::PasswordDigest;
use serde::Serialize;

#[derive(Debug, Clone)]
struct Session {
    principal: Principal,
    expires: Instant,
}

/// Issued sessions, keyed by token.
#[derive(Debug)]
pub struct Sessions {
    ttl: Duration,
    admin_token: Option<String>,
    map: DashMap<String, Session>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Issued {
    pub token: String,
    pub principal: Principal,
    pub expires_at: DateTime<Utc>,
}

impl Sessions {
    pub fn new(ttl: Duration, admin_token: Option<String>) -> Self {
        Sessions {
            ttl,
            admin_token: admin_token.filter(|t| !t.is_empty()),
            map: DashMap::new(),
        }
    }

    pub fn issue(&self, principal: Principal) -> Issued {
        let mut bytes = [0u8; 32];
        rand::rng().fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        let now = Instant::now();
        self.map.retain(|_, s| s.expires > now);
        self.map.insert(
            token.clone(),
            Session {
                principal: principal.clone(),
                expires: now + self.ttl,
            },
        );
        let ttl = chrono::Duration::from_std(self.ttl).unwrap_or(chrono::Duration::MAX);
        Issued {
            token,
            principal,
            expires_at: Utc::now().checked_add_signed(ttl).unwrap_or(DateTime::<Utc>::MAX_UTC),
        }
    }

    /// The principal a token stands for, if it is live.
    pub fn resolve(&self, token: &str) -> Option<Principal> {
        if let Some(admin) = &self.admin_token {
            if constant_time_eq(admin.as_bytes(), token.as_bytes()) {
                return Some(Principal::PlatformAdmin);
            }
        }
        let session = self.map.get(token)?.clone();
        if session.expires <= Instant::now() {
            self.map.remove(token);
            return None;
        }
        Some(session.principal)
    }

    pub fn from_headers(&self, headers: &HeaderMap) -> Option<Principal> {
        let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
        let (scheme, token) = value.split_once(' ')?;
        if !scheme.eq_ignore_ascii_case("bearer") {
            return None;
        }
        self.resolve(token.trim())
    }

    pub fn revoke(&self, token: &str) -> bool {
        self.map.remove(token).is_some()
    }

    /// Drops every session belonging to `tenant`.
    pub fn revoke_tenant(&self, tenant: &str) {
        self.map.retain(|_, s| s.principal.tenant() != Some(tenant));
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Spends the same effort as a real password check so that unknown ids and
/// wrong passwords take equally long.
pub fn dummy_verify(password: &str) {
    static DUMMY: OnceLock<PasswordDigest> = OnceLock::new();
    let _ = DUMMY.get_or_init(|| PasswordDigest::new("")).verify(password);
}
