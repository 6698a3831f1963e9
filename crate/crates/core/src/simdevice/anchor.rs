use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::types::ScreenState;
use crate::digest::to_hex;

/// 128-bit digest of a screen's canonical serialization.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AnchorKey(pub [u8; 16]);

impl fmt::Debug for AnchorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AnchorKey({self})")
    }
}

impl fmt::Display for AnchorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_hex(&self.0))
    }
}

impl Serialize for AnchorKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AnchorKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = alloc::string::String::deserialize(d)?;
        let bytes = s.as_bytes();
        if bytes.len() != 32 {
            return Err(serde::de::Error::custom("anchor key must be 32 hex chars"));
        }
        let nib = |c: u8| -> Result<u8, D::Error> {
            match c {
                b'0'..=b'9' => Ok(c - b'0'),
                b'a'..=b'f' => Ok(c - b'a' + 10),
                _ => Err(serde::de::Error::custom("bad hex digit")),
            }
        };
        let mut out = [0u8; 16];
        for (i, o) in out.iter_mut().enumerate() {
            *o = nib(bytes[2 * i])? << 4 | nib(bytes[2 * i + 1])?;
        }
        Ok(AnchorKey(out))
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u64).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

/// Order-stable serialization: widgets sorted by id, bindings sorted by key,
/// every string length-prefixed.
pub fn canonical_bytes(state: &ScreenState) -> Vec<u8> {
    let mut buf = Vec::with_capacity(256);
    put_str(&mut buf, &state.app_id);
    put_str(&mut buf, &state.screen_id);
    buf.extend_from_slice(&state.screen_dims.0.to_le_bytes());
    buf.extend_from_slice(&state.screen_dims.1.to_le_bytes());
    let mut widgets: Vec<_> = state.widgets.iter().collect();
    widgets.sort_by(|a, b| a.widget_id.cmp(&b.widget_id));
    buf.extend_from_slice(&(widgets.len() as u64).to_le_bytes());
    for w in widgets {
        put_str(&mut buf, &w.widget_id);
        buf.push(w.kind.index() as u8);
        for v in [w.bbox.x1, w.bbox.y1, w.bbox.x2, w.bbox.y2] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        put_str(&mut buf, &w.text);
        buf.push(u8::from(w.enabled));
    }
    // BTreeMap iteration is already key-sorted.
    buf.extend_from_slice(&(state.var_bindings.len() as u64).to_le_bytes());
    for (k, v) in &state.var_bindings {
        put_str(&mut buf, k);
        put_str(&mut buf, v);
    }
    buf
}

pub fn anchor_hash(state: &ScreenState) -> AnchorKey {
    let digest: [u8; 32] = Sha256::digest(canonical_bytes(state)).into();
    let mut key = [0u8; 16];
    key.copy_from_slice(&digest[..16]);
    AnchorKey(key)
}
