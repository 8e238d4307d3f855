//! Scene descriptions for multi-view groups.
//!
//! Three providers share the [`CaptionProvider`] interface: a deterministic
//! label-keyed mock, a captions file, and an HTTP client for an external
//! captioning service (`POST /v1/caption`).

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ingest::FrameRecord;
use crate::jsonl::{self, JsonlError};
use crate::label::Label;
use crate::select::MultiViewGroup;

#[derive(Debug, thiserror::Error)]
pub enum CaptionError {
    #[error("caption service unavailable for {group_id} after {attempts} attempts: {last_error}")]
    ProviderUnavailable {
        group_id: String,
        attempts: u32,
        last_error: String,
    },
    #[error("no caption for group {0:?}")]
    MissingCaption(String),
    #[error("empty description for group {0:?}")]
    EmptyResponse(String),
    #[error("malformed caption response for {group_id}: {message}")]
    MalformedResponse { group_id: String, message: String },
    #[error("group {group_id:?} references unknown frame {frame_id:?}")]
    UnknownFrame { group_id: String, frame_id: String },
    #[error("captions file lists group {0:?} twice")]
    DuplicateCaption(String),
    #[error(transparent)]
    File(#[from] JsonlError),
}

impl CaptionError {
    /// Failures of the captioning backend itself rather than of local inputs.
    pub fn is_provider_failure(&self) -> bool {
        matches!(
            self,
            CaptionError::ProviderUnavailable { .. }
                | CaptionError::EmptyResponse(_)
                | CaptionError::MalformedResponse { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderKind {
    Mock,
    Remote,
    File,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub group_id: String,
    pub text: String,
    pub provider: ProviderKind,
}

pub trait CaptionProvider: Sync {
    fn kind(&self) -> ProviderKind;

    /// Raw description text for `group`; emptiness is checked by the caller.
    fn describe(&self, group: &MultiViewGroup) -> Result<String, CaptionError>;
}

pub fn caption_group(group: &MultiViewGroup, provider: &dyn CaptionProvider) -> Result<SceneDescription, CaptionError> {
    let text = provider.describe(group)?;
    if text.trim().is_empty() {
        return Err(CaptionError::EmptyResponse(group.group_id.clone()));
    }
    Ok(SceneDescription {
        group_id: group.group_id.clone(),
        text,
        provider: provider.kind(),
    })
}

/// Captions every group with at most `concurrency` requests in flight.
///
/// Output order follows `groups`; on failure the error of the earliest failing
/// group is returned.
pub fn caption_groups(
    groups: &[MultiViewGroup],
    provider: &dyn CaptionProvider,
    concurrency: usize,
) -> Result<Vec<SceneDescription>, CaptionError> {
    let workers = concurrency.max(1).min(groups.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SceneDescription, CaptionError>>>> =
        Mutex::new((0..groups.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(g) = groups.get(i) else { break };
                let r = caption_group(g, provider);
                slots.lock().expect("caption worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("caption worker panicked")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// Like [`caption_groups`] but reuses and extends a cache of prior captions.
pub fn caption_groups_cached(
    groups: &[MultiViewGroup],
    provider: &dyn CaptionProvider,
    concurrency: usize,
    cache_path: &Path,
) -> Result<Vec<SceneDescription>, CaptionError> {
    let mut cache = if cache_path.exists() {
        CaptionCache::load(cache_path)?
    } else {
        CaptionCache::default()
    };
    let missing: Vec<MultiViewGroup> = groups
        .iter()
        .filter(|g| !cache.entries.contains_key(&g.group_id))
        .cloned()
        .collect();
    let fresh = caption_groups(&missing, provider, concurrency)?;
    for d in fresh {
        cache.entries.insert(d.group_id, d.text);
    }
    cache.save(cache_path)?;
    Ok(groups
        .iter()
        .map(|g| SceneDescription {
            group_id: g.group_id.clone(),
            text: cache.entries[&g.group_id].clone(),
            provider: provider.kind(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CaptionLine {
    group_id: String,
    text: String,
}

/// Group id → caption text, persisted in the captions-file format sorted by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptionCache {
    pub entries: BTreeMap<String, String>,
}

impl CaptionCache {
    pub fn from_jsonl(text: &str) -> Result<Self, CaptionError> {
        let rows: Vec<(usize, CaptionLine)> =
            jsonl::parse_lines(text).map_err(|(line, message)| JsonlError::Parse {
                path: "<captions>".into(),
                line,
                message,
            })?;
        let mut entries = BTreeMap::new();
        for (_, row) in rows {
            if entries.contains_key(&row.group_id) {
                return Err(CaptionError::DuplicateCaption(row.group_id));
            }
            entries.insert(row.group_id, row.text);
        }
        Ok(CaptionCache { entries })
    }

    pub fn to_jsonl(&self) -> String {
        let rows: Vec<CaptionLine> = self
            .entries
            .iter()
            .map(|(g, t)| CaptionLine {
                group_id: g.clone(),
                text: t.clone(),
            })
            .collect();
        jsonl::to_string(&rows)
    }

    pub fn load(path: &Path) -> Result<Self, CaptionError> {
        let text = fs::read_to_string(path).map_err(|source| JsonlError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_jsonl(&text).map_err(|e| match e {
            CaptionError::File(JsonlError::Parse { line, message, .. }) => CaptionError::File(JsonlError::Parse {
                path: path.to_path_buf(),
                line,
                message,
            }),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CaptionError> {
        Ok(jsonl::write_string(path, &self.to_jsonl())?)
    }
}

/// Fixed description for a label. Every screen template contains exactly one
/// lexicon keyword; the non-screen template contains none.
pub fn mock_caption(label: Option<Label>) -> &'static str {
    match label {
        Some(Label::Tv) => "A television is mounted on the wall of a living room.",
        Some(Label::Smartphone) => "A person is holding a smartphone in their hand.",
        Some(Label::Computer) => "A person sits in front of a laptop on a desk.",
        Some(Label::NonScreen) | None => "A child plays with wooden blocks on the floor.",
    }
}

/// Describes a group by the majority label of its frames.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    labels: HashMap<String, Label>,
}

impl MockProvider {
    pub fn new(frames: &[FrameRecord]) -> Self {
        MockProvider {
            labels: frames
                .iter()
                .filter_map(|f| f.label.map(|l| (f.frame_id.clone(), l)))
                .collect(),
        }
    }
}

impl CaptionProvider for MockProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Mock
    }

    fn describe(&self, group: &MultiViewGroup) -> Result<String, CaptionError> {
        Ok(mock_caption(group.majority_label(&self.labels)).to_owned())
    }
}

/// Serves captions from a JSON Lines file of `{group_id, text}`.
#[derive(Debug, Clone, Default)]
pub struct FileProvider {
    captions: CaptionCache,
}

impl FileProvider {
    pub fn from_jsonl(text: &str) -> Result<Self, CaptionError> {
        Ok(FileProvider {
            captions: CaptionCache::from_jsonl(text)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CaptionError> {
        Ok(FileProvider {
            captions: CaptionCache::load(path)?,
        })
    }
}

impl CaptionProvider for FileProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::File
    }

    fn describe(&self, group: &MultiViewGroup) -> Result<String, CaptionError> {
        self.captions
            .entries
            .get(&group.group_id)
            .cloned()
            .ok_or_else(|| CaptionError::MissingCaption(group.group_id.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CaptionRequest<'a> {
    pub group_id: &'a str,
    pub images: Vec<&'a str>,
}

#[derive(Debug, Deserialize)]
pub struct CaptionResponse {
    pub description: String,
}

/// Client for an external captioning service.
pub struct RemoteProvider {
    url: String,
    images: HashMap<String, String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl RemoteProvider {
    /// `endpoint` is the service base URL, e.g. `http://127.0.0.1:8080`.
    /// Image references sent for each frame are the manifest image paths.
    pub fn new(endpoint: &str, frames: &[FrameRecord], retry: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(retry.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteProvider {
            url: format!("{}/v1/caption", endpoint.trim_end_matches('/')),
            images: frames
                .iter()
                .map(|f| (f.frame_id.clone(), f.image_path.clone()))
                .collect(),
            retry,
            agent,
        }
    }

    fn attempt(&self, body: &CaptionRequest<'_>) -> Result<Result<String, String>, CaptionError> {
        let mut resp = match self.agent.post(&self.url).send_json(body) {
            Ok(r) => r,
            Err(e) => return Ok(Err(e.to_string())),
        };
        let status = resp.status();
        if !status.is_success() {
            return Ok(Err(format!("HTTP {status}")));
        }
        let parsed: CaptionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| CaptionError::MalformedResponse {
                group_id: body.group_id.to_owned(),
                message: e.to_string(),
            })?;
        Ok(Ok(parsed.description))
    }
}

impl CaptionProvider for RemoteProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }

    fn describe(&self, group: &MultiViewGroup) -> Result<String, CaptionError> {
        let images = group
            .frame_ids
            .iter()
            .map(|f| {
                self.images
                    .get(f)
                    .map(String::as_str)
                    .ok_or_else(|| CaptionError::UnknownFrame {
                        group_id: group.group_id.clone(),
                        frame_id: f.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let body = CaptionRequest {
            group_id: &group.group_id,
            images,
        };
        let mut backoff = self.retry.initial_backoff;
        let mut last_error = String::from("no attempts made");
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                thread::sleep(backoff);
                backoff *= 2;
            }
            match self.attempt(&body)? {
                Ok(text) => return Ok(text),
                Err(e) => last_error = e,
            }
        }
        Err(CaptionError::ProviderUnavailable {
            group_id: group.group_id.clone(),
            attempts: self.retry.attempts,
            last_error,
        })
    }
}

pub fn write_descriptions(path: &Path, descriptions: &[SceneDescription]) -> Result<(), CaptionError> {
    Ok(jsonl::write(path, descriptions)?)
}

pub fn read_descriptions(path: &Path) -> Result<Vec<SceneDescription>, CaptionError> {
    Ok(jsonl::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identify::{extract_keywords, identify, KeywordLexicon};

    fn group(id: &str, frames: &[&str]) -> MultiViewGroup {
        MultiViewGroup {
            group_id: id.into(),
            frame_ids: frames.iter().map(|s| s.to_string()).collect(),
            degree_sum: 0,
        }
    }

    #[test]
    fn mock_templates() {
        assert_eq!(
            mock_caption(Some(Label::Tv)),
            "A television is mounted on the wall of a living room."
        );
        assert_eq!(
            mock_caption(Some(Label::Smartphone)),
            "A person is holding a smartphone in their hand."
        );
        assert_eq!(
            mock_caption(Some(Label::Computer)),
            "A person sits in front of a laptop on a desk."
        );
        assert_eq!(
            mock_caption(Some(Label::NonScreen)),
            "A child plays with wooden blocks on the floor."
        );
        assert_eq!(mock_caption(None), mock_caption(Some(Label::NonScreen)));
    }

    #[test]
    fn mock_templates_identify_back_to_their_label() {
        let lex = KeywordLexicon::default();
        for l in [Label::Tv, Label::Smartphone, Label::Computer, Label::NonScreen] {
            let text = mock_caption(Some(l));
            let expected = usize::from(l.is_screen());
            assert_eq!(extract_keywords(text, &lex).len(), expected, "{text}");
            assert_eq!(identify("g", text, &lex).primary_type, l);
        }
    }

    #[test]
    fn mock_provider_uses_member_labels() {
        let frames = vec![
            FrameRecord::new("a", "p", 0, "a.jpg").with_label(Label::Tv),
            FrameRecord::new("b", "p", 10, "b.jpg").with_label(Label::Tv),
            FrameRecord::new("c", "p", 20, "c.jpg"),
        ];
        let p = MockProvider::new(&frames);
        let d = caption_group(&group("p-g001", &["a", "b", "c"]), &p).unwrap();
        assert_eq!(d.text, "A television is mounted on the wall of a living room.");
        assert_eq!(d.provider, ProviderKind::Mock);
    }

    #[test]
    fn file_provider_missing_and_empty() {
        let p = FileProvider::from_jsonl(
            "{\"group_id\":\"p01-g001\",\"text\":\"a tv\"}\n{\"group_id\":\"p01-g003\",\"text\":\"  \"}\n",
        )
        .unwrap();
        assert_eq!(caption_group(&group("p01-g001", &[]), &p).unwrap().text, "a tv");
        assert!(matches!(
            caption_group(&group("p01-g002", &[]), &p),
            Err(CaptionError::MissingCaption(g)) if g == "p01-g002"
        ));
        assert!(matches!(
            caption_group(&group("p01-g003", &[]), &p),
            Err(CaptionError::EmptyResponse(_))
        ));
        assert!(matches!(
            FileProvider::from_jsonl("{\"group_id\":\"x\",\"text\":\"a\"}\n{\"group_id\":\"x\",\"text\":\"b\"}"),
            Err(CaptionError::DuplicateCaption(_))
        ));
    }

    #[test]
    fn batch_preserves_input_order() {
        let frames: Vec<_> = (0..40)
            .map(|i| {
                let l = [Label::Tv, Label::Smartphone, Label::Computer, Label::NonScreen][i % 4];
                FrameRecord::new(format!("f{i}"), "p", i as i64, "x.jpg").with_label(l)
            })
            .collect();
        let groups: Vec<_> = (0..40)
            .map(|i| group(&format!("g{i:02}"), &[&format!("f{i}")]))
            .collect();
        let p = MockProvider::new(&frames);
        let one = caption_groups(&groups, &p, 1).unwrap();
        let many = caption_groups(&groups, &p, 7).unwrap();
        assert_eq!(one, many);
        assert_eq!(one[5].group_id, "g05");
        assert_eq!(one[5].text, mock_caption(Some(Label::Smartphone)));
        assert!(caption_groups(&[], &p, 4).unwrap().is_empty());
    }

    #[test]
    fn cache_round_trips_byte_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let mut c = CaptionCache::default();
        c.entries
            .insert("p-g002".into(), "a \"quoted\" laptop\twith tab".into());
        c.entries.insert("p-g001".into(), "ünïcode tv".into());
        c.save(&path).unwrap();
        let first = fs::read(&path).unwrap();
        let loaded = CaptionCache::load(&path).unwrap();
        assert_eq!(loaded, c);
        loaded.save(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn cached_batch_only_asks_for_missing_groups() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        fs::write(&path, "{\"group_id\":\"g1\",\"text\":\"cached tv\"}\n").unwrap();
        let p = FileProvider::from_jsonl("{\"group_id\":\"g2\",\"text\":\"fresh laptop\"}").unwrap();
        let out = caption_groups_cached(&[group("g1", &[]), group("g2", &[])], &p, 2, &path).unwrap();
        assert_eq!(out[0].text, "cached tv");
        assert_eq!(out[1].text, "fresh laptop");
        let cache = CaptionCache::load(&path).unwrap();
        assert_eq!(cache.entries.len(), 2);
    }
}
