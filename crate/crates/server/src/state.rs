use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use scribble_core::data::Sample;
use scribble_core::raster::ImageGrid;
use scribble_core::segment::{Segmenter, SegmenterKind};

use crate::error::{ApiError, ApiResult};
use crate::session::Session;

/// Immutable sample catalogue served to clients.
pub struct Catalog {
    pub name: String,
    samples: Vec<Sample>,
    images: Vec<Arc<ImageGrid>>,
    index: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Self {
        let index = samples.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        let images = samples.iter().map(|s| Arc::new(s.image.clone())).collect();
        Self {
            name: name.into(),
            samples,
            images,
            index,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, id: &str) -> ApiResult<(&Sample, Arc<ImageGrid>)> {
        let &i = self
            .index
            .get(id)
            .ok_or_else(|| ApiError::NotFound(format!("sample {id:?}")))?;
        Ok((&self.samples[i], Arc::clone(&self.images[i])))
    }
}

struct Entry {
    session: Arc<tokio::sync::Mutex<Session>>,
    touched: Instant,
}

struct Shared {
    catalog: Catalog,
    backends: HashMap<SegmenterKind, Arc<dyn Segmenter>>,
    default_backend: SegmenterKind,
    ttl: Duration,
    sessions: Mutex<HashMap<String, Entry>>,
}

/// Handler state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    /// `backends` must contain `default_backend`.
    pub fn new(
        catalog: Catalog,
        backends: Vec<Arc<dyn Segmenter>>,
        default_backend: SegmenterKind,
        ttl: Duration,
    ) -> Result<Self, String> {
        let backends: HashMap<_, _> = backends.into_iter().map(|b| (b.kind(), b)).collect();
        if !backends.contains_key(&default_backend) {
            return Err(format!("default backend {default_backend} is not configured"));
        }
        Ok(Self {
            shared: Arc::new(Shared {
                catalog,
                backends,
                default_backend,
                ttl,
                sessions: Mutex::new(HashMap::new()),
            }),
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.shared.catalog
    }

    pub fn default_backend(&self) -> SegmenterKind {
        self.shared.default_backend
    }

    pub fn backend(&self, kind: SegmenterKind) -> ApiResult<Arc<dyn Segmenter>> {
        self.shared
            .backends
            .get(&kind)
            .cloned()
            .ok_or_else(|| ApiError::Unprocessable(format!("backend {kind} is not enabled on this server")))
    }

    fn sessions(&self) -> std::sync::MutexGuard<'_, HashMap<String, Entry>> {
        self.shared.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn insert(&self, session: Session) -> String {
        let id = session.id.clone();
        let now = Instant::now();
        let mut map = self.sessions();
        Self::purge_locked(&mut map, self.shared.ttl, now);
        map.insert(
            id.clone(),
            Entry {
                session: Arc::new(tokio::sync::Mutex::new(session)),
                touched: now,
            },
        );
        id
    }

    /// Looks a session up and marks it active.
    pub fn get(&self, id: &str) -> ApiResult<Arc<tokio::sync::Mutex<Session>>> {
        let now = Instant::now();
        let mut map = self.sessions();
        Self::purge_locked(&mut map, self.shared.ttl, now);
        let e = map
            .get_mut(id)
            .ok_or_else(|| ApiError::NotFound(format!("session {id:?}")))?;
        e.touched = now;
        Ok(Arc::clone(&e.session))
    }

    pub fn remove(&self, id: &str) -> ApiResult<()> {
        self.sessions()
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ApiError::NotFound(format!("session {id:?}")))
    }

    pub fn session_count(&self) -> usize {
        self.sessions().len()
    }

    /// Drops sessions idle for longer than the TTL; returns how many.
    pub fn purge_expired(&self) -> usize {
        Self::purge_locked(&mut self.sessions(), self.shared.ttl, Instant::now())
    }

    pub fn ttl(&self) -> Duration {
        self.shared.ttl
    }

    fn purge_locked(map: &mut HashMap<String, Entry>, ttl: Duration, now: Instant) -> usize {
        let before = map.len();
        map.retain(|_, e| now.duration_since(e.touched) <= ttl);
        before - map.len()
    }
}
