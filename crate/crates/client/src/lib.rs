//! Async client for the platform's HTTP API.
//!
//! Responses are unwrapped from their envelope; failures surface as
//! [`ClientError::Api`] carrying the service's error code.

use std::fmt;

use reqwest::multipart::{Form, Part};
use reqwest::{Method, RequestBuilder, Url};
use reta_core::data::{Aggregate, ImportOutcome, Order};
use reta_core::permission::Principal;
use reta_core::reta::Mode;
use reta_core::{FilterExpr, SystemSummary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("invalid server address {0:?}")]
    Address(String),
    #[error("{code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
        details: Vec<Value>,
    },
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    /// The service's error code, when the service answered.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub principal: Principal,
    pub expires_at: String,
}

/// One page of records as JSON objects `{"id", "values"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordPage {
    pub records: Vec<Value>,
    pub total: usize,
    pub offset: usize,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct ListOptions {
    pub filter: FilterExpr,
    pub order: Option<Order>,
    pub offset: usize,
    pub limit: Option<usize>,
}

#[derive(Deserialize)]
struct Envelope {
    ok: bool,
    #[serde(default)]
    data: Value,
    #[serde(default)]
    error: Option<ErrorBody>,
}

#[derive(Deserialize)]
struct ErrorBody {
    code: String,
    message: String,
    #[serde(default)]
    details: Vec<Value>,
}

#[derive(Clone)]
pub struct Client {
    http: reqwest::Client,
    base: Url,
    token: Option<String>,
}

impl fmt::Debug for Client {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Client")
            .field("base", &self.base.as_str())
            .field("authenticated", &self.token.is_some())
            .finish()
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Create => "create",
        Mode::Replace => "replace",
    }
}

impl Client {
    pub fn new(base: &str) -> Result<Client> {
        let base = Url::parse(base).map_err(|_| ClientError::Address(base.to_string()))?;
        if base.cannot_be_a_base() {
            return Err(ClientError::Address(base.to_string()));
        }
        Ok(Client {
            http: reqwest::Client::new(),
            base,
            token: None,
        })
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Client {
        self.token = Some(token.into());
        self
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    fn url(&self, path: &str) -> Result<Url> {
        self.base.join(path).map_err(|_| ClientError::Address(path.to_string()))
    }

    fn request(&self, method: Method, path: &str) -> Result<RequestBuilder> {
        let mut request = self.http.request(method, self.url(path)?);
        if let Some(t) = &self.token {
            request = request.bearer_auth(t);
        }
        Ok(request)
    }

    async fn send<T: DeserializeOwned>(&self, request: RequestBuilder) -> Result<T> {
        let response = request.send().await?;
        let status = response.status().as_u16();
        let bytes = response.bytes().await?;
        let envelope: Envelope = serde_json::from_slice(&bytes)
            .map_err(|e| ClientError::Decode(format!("HTTP {status}: {e}")))?;
        if envelope.ok {
            return serde_json::from_value(envelope.data).map_err(|e| ClientError::Decode(e.to_string()));
        }
        let error = envelope
            .error
            .ok_or_else(|| ClientError::Decode(format!("HTTP {status}: error envelope without error")))?;
        Err(ClientError::Api {
            status,
            code: error.code,
            message: error.message,
            details: error.details,
        })
    }

    fn file_form(bytes: Vec<u8>, name: &str) -> Form {
        Form::new().part("file", Part::bytes(bytes).file_name(name.to_string()))
    }

    pub async fn health(&self) -> Result<Value> {
        self.send(self.request(Method::GET, "/api/health")?).await
    }

    /// Logs in as a tenant and keeps the token for later calls.
    pub async fn login_tenant(&mut self, tenant: &str, password: &str) -> Result<Session> {
        let body = serde_json::json!({ "tenant": tenant, "password": password });
        let session: Session = self.send(self.request(Method::POST, "/api/auth/tenant")?.json(&body)).await?;
        self.token = Some(session.token.clone());
        Ok(session)
    }

    /// Logs in as a user of `tenant` and keeps the token for later calls.
    pub async fn login_user(&mut self, tenant: &str, userid: &str, password: &str) -> Result<Session> {
        let body = serde_json::json!({ "tenant": tenant, "userid": userid, "password": password });
        let session: Session = self.send(self.request(Method::POST, "/api/auth/user")?.json(&body)).await?;
        self.token = Some(session.token.clone());
        Ok(session)
    }

    pub async fn logout(&mut self) -> Result<()> {
        let _: Value = self.send(self.request(Method::POST, "/api/auth/logout")?).await?;
        self.token = None;
        Ok(())
    }

    pub async fn whoami(&self) -> Result<Principal> {
        self.send(self.request(Method::GET, "/api/auth/whoami")?).await
    }

    pub async fn upload_reta(&self, bytes: Vec<u8>, name: &str, mode: Mode) -> Result<SystemSummary> {
        let request = self
            .request(Method::POST, "/api/systems")?
            .query(&[("mode", mode_name(mode))])
            .multipart(Self::file_form(bytes, name));
        self.send(request).await
    }

    /// Parses and validates without instantiating. Returns the raw report.
    pub async fn dry_run(&self, bytes: Vec<u8>, name: &str) -> Result<Value> {
        let request = self
            .request(Method::POST, "/api/systems")?
            .query(&[("dry_run", "true")])
            .multipart(Self::file_form(bytes, name));
        self.send(request).await
    }

    pub async fn list_systems(&self) -> Result<Vec<SystemSummary>> {
        self.send(self.request(Method::GET, "/api/systems")?).await
    }

    pub async fn system(&self, tenant: &str) -> Result<SystemSummary> {
        self.send(self.request(Method::GET, &format!("/api/systems/{}", segment(tenant)))?).await
    }

    pub async fn delete_system(&self, tenant: &str) -> Result<()> {
        let _: Value = self
            .send(self.request(Method::DELETE, &format!("/api/systems/{}", segment(tenant)))?)
            .await?;
        Ok(())
    }

    pub async fn schemas(&self) -> Result<Vec<Value>> {
        self.send(self.request(Method::GET, "/api/data")?).await
    }

    pub async fn permissions(&self, schema: &str) -> Result<Value> {
        self.send(self.request(Method::GET, &format!("/api/data/{}/permissions", segment(schema)))?)
            .await
    }

    pub async fn create_record(&self, schema: &str, values: &Value) -> Result<Value> {
        self.send(self.request(Method::POST, &format!("/api/data/{}", segment(schema)))?.json(values))
            .await
    }

    pub async fn get_record(&self, schema: &str, id: &str) -> Result<Value> {
        let path = format!("/api/data/{}/{}", segment(schema), segment(id));
        self.send(self.request(Method::GET, &path)?).await
    }

    pub async fn update_record(&self, schema: &str, id: &str, values: &Value) -> Result<Value> {
        let path = format!("/api/data/{}/{}", segment(schema), segment(id));
        self.send(self.request(Method::PUT, &path)?.json(values)).await
    }

    pub async fn delete_record(&self, schema: &str, id: &str) -> Result<()> {
        let path = format!("/api/data/{}/{}", segment(schema), segment(id));
        let _: Value = self.send(self.request(Method::DELETE, &path)?).await?;
        Ok(())
    }

    pub async fn list(&self, schema: &str, options: &ListOptions) -> Result<RecordPage> {
        let mut params = vec![("offset", options.offset.to_string())];
        if !options.filter.is_empty() {
            let filter = serde_json::to_string(&options.filter).map_err(|e| ClientError::Decode(e.to_string()))?;
            params.push(("filter", filter));
        }
        if let Some(order) = &options.order {
            let dir = if order.descending { "desc" } else { "asc" };
            params.push(("sort", format!("{}:{dir}", order.field)));
        }
        if let Some(limit) = options.limit {
            params.push(("limit", limit.to_string()));
        }
        let request = self.request(Method::GET, &format!("/api/data/{}", segment(schema)))?.query(&params);
        self.send(request).await
    }

    /// Returns the aggregate's value; `null` is the empty result.
    pub async fn stats(&self, schema: &str, field: &str, agg: Aggregate, filter: &FilterExpr) -> Result<Value> {
        let agg = serde_json::to_value(agg).map_err(|e| ClientError::Decode(e.to_string()))?;
        let mut params = vec![("field", field.to_string()), ("agg", agg.as_str().unwrap_or_default().to_string())];
        if !filter.is_empty() {
            let filter = serde_json::to_string(filter).map_err(|e| ClientError::Decode(e.to_string()))?;
            params.push(("filter", filter));
        }
        let request = self
            .request(Method::GET, &format!("/api/data/{}/stats", segment(schema)))?
            .query(&params);
        let data: Value = self.send(request).await?;
        Ok(data["value"].clone())
    }

    pub async fn import(&self, schema: &str, bytes: Vec<u8>, name: &str, atomic: bool) -> Result<ImportOutcome> {
        let request = self
            .request(Method::POST, &format!("/api/data/{}/import", segment(schema)))?
            .query(&[("atomic", atomic.to_string())])
            .multipart(Self::file_form(bytes, name));
        self.send(request).await
    }

    /// CSV export. Errors still arrive as envelopes.
    pub async fn export(&self, schema: &str) -> Result<Vec<u8>> {
        let request = self
            .request(Method::GET, &format!("/api/data/{}/export", segment(schema)))?
            .query(&[("format", "csv")]);
        let response = request.send().await?;
        if response.status().is_success() {
            return Ok(response.bytes().await?.to_vec());
        }
        let status = response.status().as_u16();
        let bytes = response.bytes().await?;
        let envelope: Envelope =
            serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(format!("HTTP {status}: {e}")))?;
        let error = envelope
            .error
            .ok_or_else(|| ClientError::Decode(format!("HTTP {status}")))?;
        Err(ClientError::Api {
            status,
            code: error.code,
            message: error.message,
            details: error.details,
        })
    }

    pub async fn meta(&self) -> Result<Value> {
        self.send(self.request(Method::GET, "/api/meta")?).await
    }

    /// `kind` is one of `groups`, `users`, `schemas`.
    pub async fn put_meta(&self, kind: &str, id: &str, body: &Value) -> Result<Value> {
        let path = format!("/api/meta/{}/{}", segment(kind), segment(id));
        self.send(self.request(Method::PUT, &path)?.json(body)).await
    }

    pub async fn delete_meta(&self, kind: &str, id: &str) -> Result<()> {
        let path = format!("/api/meta/{}/{}", segment(kind), segment(id));
        let _: Value = self.send(self.request(Method::DELETE, &path)?).await?;
        Ok(())
    }
}

/// Percent-encodes one path segment.
fn segment(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for b in text.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(b as char),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}
