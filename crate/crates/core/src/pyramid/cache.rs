use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use image::RgbImage;

/// (level, tile x, tile y)
pub type TileKey = (u32, u32, u32);

/// Bounded FIFO cache of decoded tiles, shared between readers.
#[derive(Debug)]
pub struct TileCache {
    capacity: usize,
    inner: Mutex<CacheInner>,
}

#[derive(Debug, Default)]
struct CacheInner {
    tiles: HashMap<TileKey, Arc<RgbImage>>,
    order: VecDeque<TileKey>,
    hits: u64,
    misses: u64,
}

impl TileCache {
    pub fn new(capacity: usize) -> Self {
        TileCache {
            capacity: capacity.max(1),
            inner: Mutex::new(CacheInner::default()),
        }
    }

    pub fn get(&self, key: TileKey) -> Option<Arc<RgbImage>> {
        let mut inner = self.inner.lock().unwrap();
        match inner.tiles.get(&key).cloned() {
            Some(t) => {
                inner.hits += 1;
                Some(t)
            }
            None => {
                inner.misses += 1;
                None
            }
        }
    }

    pub fn insert(&self, key: TileKey, tile: Arc<RgbImage>) {
        let mut inner = self.inner.lock().unwrap();
        if inner.tiles.insert(key, tile).is_none() {
            inner.order.push_back(key);
        }
        while inner.order.len() > self.capacity {
            if let Some(old) = inner.order.pop_front() {
                inner.tiles.remove(&old);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (hits, misses)
    pub fn stats(&self) -> (u64, u64) {
        let inner = self.inner.lock().unwrap();
        (inner.hits, inner.misses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evicts_oldest_beyond_capacity() {
        let cache = TileCache::new(2);
        for i in 0..3 {
            cache.insert((0, i, 0), Arc::new(RgbImage::new(1, 1)));
        }
        assert_eq!(cache.len(), 2);
        assert!(cache.get((0, 0, 0)).is_none());
        assert!(cache.get((0, 2, 0)).is_some());
        assert_eq!(cache.stats(), (1, 1));
    }
}
