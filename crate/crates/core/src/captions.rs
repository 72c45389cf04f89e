//! Caption triples (target description, include, exclude) for a query.
//!
//! The retrieval engine never reads caption text; it consumes caption
//! embeddings from bundles. Providers live here so that offline preparation
//! tools and the `captions` command share one wire contract and one mock.
//!
//! Wire protocol: `POST {base}/v1/captions` with
//! `{"query_id", "modification_text", "image_b64"?, "image_id"?}`; a 200
//! reply carries `{"target_description", "include", "exclude"}`. 4xx replies
//! (`{"error": ...}`) are final, 5xx replies and transport failures are
//! retried with exponential backoff.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{CaptionError, Error, Result};

/// Environment variable holding the caption service base URL.
pub const SERVICE_URL_ENV: &str = "CAPTION_SERVICE_URL";

/// Path of the caption endpoint relative to the service base URL.
pub const CAPTIONS_PATH: &str = "/v1/captions";

/// The three generated texts for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionBundle {
    #[serde(rename = "target_description")]
    pub target_desc: String,
    pub include: String,
    pub exclude: String,
}

/// Instruction text for a multimodal model producing a [`CaptionBundle`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system_text: String,
    /// Must contain `{modification_text}` exactly once. The reference image is
    /// attached alongside the rendered text.
    pub user_template: String,
}

const PLACEHOLDER: &str = "{modification_text}";

impl PromptTemplate {
    pub fn new(system_text: impl Into<String>, user_template: impl Into<String>) -> Result<Self> {
        let user_template = user_template.into();
        let n = user_template.matches(PLACEHOLDER).count();
        if n != 1 {
            return Err(Error::InvalidConfig(format!(
                "user template must contain {PLACEHOLDER} exactly once, found {n}"
            )));
        }
        Ok(Self {
            system_text: system_text.into(),
            user_template,
        })
    }

    pub fn render_user(&self, modification_text: &str) -> String {
        self.user_template.replace(PLACEHOLDER, modification_text)
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(
            "You help with composed image retrieval. You are shown a reference image and a \
             modification request. Reply with a JSON object with exactly the keys \
             \"target_description\", \"include\" and \"exclude\", each a single string.",
            "Modification request: {modification_text}\n\
             1. target_description: one sentence describing the image that results from \
             applying the request to the reference image. Use the reference image to fill in \
             subjects or comparisons the request leaves implicit.\n\
             2. include: the attributes that must appear in that image, as one phrase.\n\
             3. exclude: the attributes that must not appear in that image, as one phrase.",
        )
        .expect("default template has one placeholder")
    }
}

/// Reference image handed to a provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageRef {
    /// Identifier the service can resolve on its side.
    Id(String),
    /// Encoded image bytes, sent base64-encoded.
    Bytes(Vec<u8>),
}

/// One caption request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRequest {
    pub query_id: String,
    pub image: ImageRef,
    pub modification_text: String,
}

/// Produces caption triples. Implementations must tolerate concurrent calls.
pub trait CaptionProvider: Send + Sync {
    fn generate_captions(&self, request: &CaptionRequest) -> Result<CaptionBundle, CaptionError>;
}

fn check_request(request: &CaptionRequest) -> Result<(), CaptionError> {
    if request.modification_text.trim().is_empty() {
        return Err(CaptionError::fatal(format!(
            "query {:?} has an empty modification text",
            request.query_id
        )));
    }
    Ok(())
}

/// Deterministic templated captions for tests and dry runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl MockProvider {
    fn image_label(image: &ImageRef) -> String {
        match image {
            ImageRef::Id(id) => id.clone(),
            ImageRef::Bytes(bytes) => format!("image-{:016x}", fnv1a(bytes)),
        }
    }
}

impl CaptionProvider for MockProvider {
    fn generate_captions(&self, request: &CaptionRequest) -> Result<CaptionBundle, CaptionError> {
        check_request(request)?;
        let image = Self::image_label(&request.image);
        let text = request.modification_text.trim();
        Ok(CaptionBundle {
            target_desc: format!("{image} after the change: {text}"),
            include: format!("shows: {text}"),
            exclude: format!("keeps the unmodified look of {image}"),
        })
    }
}

/// Settings for [`WireProvider`].
#[derive(Debug, Clone, PartialEq)]
pub struct WireConfig {
    /// Retries after the first attempt, only for retriable failures.
    pub max_retries: u32,
    /// Delay before the first retry; doubled for each further retry.
    pub initial_backoff: Duration,
    /// Upper bound on concurrent requests.
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl Default for WireConfig {
    fn default() -> Self {
        Self {
            max_retries: 2,
            initial_backoff: Duration::from_millis(250),
            max_in_flight: 4,
            timeout: Duration::from_secs(120),
        }
    }
}

struct InFlightLimit {
    active: Mutex<usize>,
    released: Condvar,
    max: usize,
}

struct Permit<'a>(&'a InFlightLimit);

impl InFlightLimit {
    fn new(max: usize) -> Self {
        Self {
            active: Mutex::new(0),
            released: Condvar::new(),
            max: max.max(1),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.max {
            active = self
                .released
                .wait(active)
                .unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.released.notify_one();
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    query_id: &'a str,
    modification_text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_id: Option<&'a str>,
}

#[derive(Deserialize)]
struct WireReply {
    target_description: Option<String>,
    include: Option<String>,
    exclude: Option<String>,
}

#[derive(Deserialize)]
struct WireErrorReply {
    error: String,
}

/// HTTP client for a caption service.
pub struct WireProvider {
    endpoint: String,
    agent: ureq::Agent,
    config: WireConfig,
    limit: InFlightLimit,
}

impl std::fmt::Debug for WireProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WireProvider")
            .field("endpoint", &self.endpoint)
            .field("config", &self.config)
            .finish()
    }
}

impl WireProvider {
    /// Client for the service at `base_url` (without the `/v1/captions` path).
    pub fn new(base_url: &str, config: WireConfig) -> Result<Self> {
        let base = base_url.trim().trim_end_matches('/');
        if base.is_empty() {
            return Err(Error::InvalidConfig("caption service URL is empty".into()));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Ok(Self {
            endpoint: format!("{base}{CAPTIONS_PATH}"),
            agent,
            limit: InFlightLimit::new(config.max_in_flight),
            config,
        })
    }

    /// Client for the URL in `CAPTION_SERVICE_URL`.
    pub fn from_env(config: WireConfig) -> Result<Self> {
        match std::env::var(SERVICE_URL_ENV) {
            Ok(url) if !url.trim().is_empty() => Self::new(&url, config),
            _ => Err(Error::InvalidConfig(format!(
                "{SERVICE_URL_ENV} is not set; the wire caption provider needs it"
            ))),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, body: &str) -> Result<CaptionBundle, CaptionError> {
        let _permit = self.limit.acquire();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| CaptionError::retriable(format!("transport error: {e}")))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| CaptionError::retriable(format!("failed to read response: {e}")))?;
        parse_reply(status, &text)
    }
}

fn parse_reply(status: u16, text: &str) -> Result<CaptionBundle, CaptionError> {
    match status {
        200 => {
            let reply: WireReply = serde_json::from_str(text)
                .map_err(|e| CaptionError::fatal(format!("malformed response body: {e}")))?;
            let field = |value: Option<String>, name: &str| {
                value
                    .filter(|s| !s.trim().is_empty())
                    .ok_or_else(|| CaptionError::fatal(format!("response is missing {name:?}")))
            };
            Ok(CaptionBundle {
                target_desc: field(reply.target_description, "target_description")?,
                include: field(reply.include, "include")?,
                exclude: field(reply.exclude, "exclude")?,
            })
        }
        500..=599 => Err(CaptionError::retriable(format!(
            "service returned {status}: {}",
            text.trim()
        ))),
        400..=499 => {
            let detail = serde_json::from_str::<WireErrorReply>(text)
                .map(|e| e.error)
                .unwrap_or_else(|_| text.trim().to_owned());
            Err(CaptionError::fatal(format!(
                "service returned {status}: {detail}"
            )))
        }
        other => Err(CaptionError::fatal(format!("unexpected status {other}"))),
    }
}

impl CaptionProvider for WireProvider {
    fn generate_captions(&self, request: &CaptionRequest) -> Result<CaptionBundle, CaptionError> {
        check_request(request)?;
        let (image_b64, image_id) = match &request.image {
            ImageRef::Id(id) => (None, Some(id.as_str())),
            ImageRef::Bytes(bytes) => (
                Some(base64::engine::general_purpose::STANDARD.encode(bytes)),
                None,
            ),
        };
        let body = serde_json::to_string(&WireRequest {
            query_id: &request.query_id,
            modification_text: &request.modification_text,
            image_b64,
            image_id,
        })
        .expect("request serializes");

        let mut backoff = self.config.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Err(e) if e.retriable && attempt < self.config.max_retries => {
                    thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                    attempt += 1;
                }
                result => return result,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(image: &str, text: &str) -> CaptionRequest {
        CaptionRequest {
            query_id: "q".into(),
            image: ImageRef::Id(image.into()),
            modification_text: text.into(),
        }
    }

    #[test]
    fn mock_is_deterministic_and_echoes_text() {
        let req = request("img_007", "make the dress red");
        let a = MockProvider.generate_captions(&req).unwrap();
        let b = MockProvider.generate_captions(&req).unwrap();
        assert_eq!(a, b);
        assert!(a.include.contains("red"));
        assert!(a.target_desc.contains("make the dress red"));
        assert!(!a.exclude.is_empty());
        assert_eq!(
            a.target_desc,
            "img_007 after the change: make the dress red"
        );
    }

    #[test]
    fn mock_labels_image_bytes_stably() {
        let req = CaptionRequest {
            image: ImageRef::Bytes(b"\x89PNG".to_vec()),
            ..request("", "add a hat")
        };
        let a = MockProvider.generate_captions(&req).unwrap();
        assert!(a.target_desc.starts_with("image-"));
        assert_eq!(a, MockProvider.generate_captions(&req).unwrap());
    }

    #[test]
    fn mock_rejects_empty_text() {
        assert!(MockProvider.generate_captions(&request("i", "  ")).is_err());
    }

    #[test]
    fn template_placeholder_rules() {
        assert!(PromptTemplate::new("s", "no placeholder").is_err());
        assert!(PromptTemplate::new("s", "{modification_text} {modification_text}").is_err());
        let t = PromptTemplate::default();
        assert!(t
            .render_user("make it blue")
            .contains("Modification request: make it blue"));
    }

    #[test]
    fn reply_parsing() {
        let ok = parse_reply(
            200,
            r#"{"target_description": "a red dress", "include": "red", "exclude": "blue"}"#,
        )
        .unwrap();
        assert_eq!(ok.target_desc, "a red dress");

        let missing =
            parse_reply(200, r#"{"target_description": "a", "include": "b"}"#).unwrap_err();
        assert!(!missing.retriable);
        assert!(missing.message.contains("exclude"));

        let bad_request = parse_reply(422, r#"{"error": "no image"}"#).unwrap_err();
        assert!(!bad_request.retriable);
        assert!(bad_request.message.contains("no image"));

        assert!(parse_reply(503, "busy").unwrap_err().retriable);
        assert!(!parse_reply(200, "not json").unwrap_err().retriable);
    }

    #[test]
    fn wire_request_shape() {
        let body = serde_json::to_value(WireRequest {
            query_id: "q1",
            modification_text: "t",
            image_b64: None,
            image_id: Some("img"),
        })
        .unwrap();
        assert_eq!(
            body,
            serde_json::json!({"query_id": "q1", "modification_text": "t", "image_id": "img"})
        );
    }
}
