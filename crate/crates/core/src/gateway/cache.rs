use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::ChatExchange;

/// Digest-addressed store of chat exchanges.
///
/// Always keeps an in-memory map; with a directory configured, each exchange
/// is also persisted as one JSON line at `<dir>/<digest[..2]>/<digest>.json`.
#[derive(Debug)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, ChatExchange>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            dir: None,
            memory: Mutex::new(HashMap::new()),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        ResponseCache {
            dir: Some(dir.into()),
            memory: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn path_for(dir: &Path, digest: &str) -> PathBuf {
        let prefix = digest.get(..2).unwrap_or(digest);
        dir.join(prefix).join(format!("{digest}.json"))
    }

    pub fn lookup(&self, digest: &str) -> io::Result<Option<ChatExchange>> {
        if let Some(hit) = self.memory.lock().unwrap().get(digest) {
            return Ok(Some(hit.clone()));
        }
        let Some(dir) = &self.dir else {
            return Ok(None);
        };
        let path = Self::path_for(dir, digest);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let exchange: ChatExchange = serde_json::from_str(text.trim_end())
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
        if exchange.digest != digest {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}: digest mismatch", path.display()),
            ));
        }
        self.memory.lock().unwrap().insert(digest.to_string(), exchange.clone());
        Ok(Some(exchange))
    }

    pub fn store(&self, exchange: &ChatExchange) -> io::Result<()> {
        if let Some(dir) = &self.dir {
            let path = Self::path_for(dir, &exchange.digest);
            fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
            let tmp = path.with_extension(format!("json.{}.tmp", std::process::id()));
            {
                let mut f = fs::File::create(&tmp)?;
                serde_json::to_writer(&mut f, exchange).map_err(io::Error::other)?;
                f.write_all(b"\n")?;
            }
            fs::rename(&tmp, &path)?;
        }
        self.memory
            .lock()
            .unwrap()
            .insert(exchange.digest.clone(), exchange.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.memory.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
