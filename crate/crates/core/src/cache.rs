//! Feature files and the per-clip descriptor cache.
//!
//! A feature file is a header line `STLBP-IIP v1 <fingerprint>` followed by
//! CSV rows `clip_id,group_index,plane,b0,b1,...`. Values are written in
//! shortest round-trip form, so reading a file back gives bit-identical
//! histograms.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dataset::VideoClip;
use crate::descriptor::{ClipDescriptor, GroupFeature, Plane};
use crate::encoding::Histogram;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "STLBP-IIP";
pub const FORMAT_VERSION: &str = "v1";

pub fn header(fingerprint: &str) -> String {
    format!("{FORMAT_TAG} {FORMAT_VERSION} {fingerprint}")
}

/// Rows of one clip, each terminated by `\n`.
pub fn clip_rows(clip_id: &str, descriptor: &ClipDescriptor) -> String {
    let mut out = String::new();
    for (r, g) in descriptor.groups.iter().enumerate() {
        write!(out, "{clip_id},{r},{}", g.plane).unwrap();
        for b in &g.histogram.bins {
            write!(out, ",{b}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Full feature file text for a set of clips.
pub fn feature_file(fingerprint: &str, items: &[(&str, &ClipDescriptor)]) -> String {
    let mut out = header(fingerprint);
    out.push('\n');
    for (id, d) in items {
        out.push_str(&clip_rows(id, d));
    }
    out
}

/// Parses a feature file. Rows of a clip must be contiguous with group
/// indices counting up from zero.
pub fn parse_feature_file(text: &str) -> Result<(String, Vec<(String, ClipDescriptor)>)> {
    let bad = |line: usize, msg: &str| Error::InvalidInput(format!("feature file line {line}: {msg}"));
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let parts: Vec<&str> = head.split(' ').collect();
    if parts.len() != 3 || parts[0] != FORMAT_TAG || parts[1] != FORMAT_VERSION {
        return Err(bad(1, &format!("expected header `{FORMAT_TAG} {FORMAT_VERSION} <fingerprint>`")));
    }
    let fingerprint = parts[2].to_string();
    let mut out: Vec<(String, ClipDescriptor)> = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(bad(lineno, "too few fields"));
        }
        let group: usize = fields[1].parse().map_err(|_| bad(lineno, "bad group index"))?;
        let plane = Plane::parse(fields[2]).ok_or_else(|| bad(lineno, "bad plane"))?;
        let bins = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(lineno, "bad bin value"))?;
        let starts_clip = out.last().is_none_or(|(id, _)| id != fields[0]);
        if starts_clip {
            if out.iter().any(|(id, _)| id == fields[0]) {
                return Err(bad(lineno, "rows of a clip are not contiguous"));
            }
            out.push((
                fields[0].to_string(),
                ClipDescriptor {
                    groups: Vec::new(),
                    fingerprint: fingerprint.clone(),
                },
            ));
        }
        let d = &mut out.last_mut().unwrap().1;
        if group != d.groups.len() {
            return Err(bad(lineno, "group indices out of order"));
        }
        d.groups.push(GroupFeature {
            block_index: group / 4,
            plane,
            histogram: Histogram {
                bins,
                normalized: true,
            },
        });
    }
    Ok((fingerprint, out))
}

/// Content hash of a clip's frames.
pub fn clip_hash(clip: &VideoClip) -> String {
    let mut h = Sha256::new();
    h.update((clip.width() as u64).to_le_bytes());
    h.update((clip.height() as u64).to_le_bytes());
    h.update((clip.len() as u64).to_le_bytes());
    for f in clip.frames() {
        for v in f.as_slice() {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// Directory of per-clip feature files keyed by clip content and the
/// settings that produced them.
#[derive(Debug, Clone)]
pub struct DescriptorCache {
    dir: PathBuf,
}

impl DescriptorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DescriptorCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.csv"))
    }

    /// Cached descriptor for `key`, if present and produced under `fingerprint`.
    pub fn get(&self, key: &str, fingerprint: &str) -> Option<ClipDescriptor> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        match parse_feature_file(&text) {
            Ok((fp, mut clips)) if fp == fingerprint && clips.len() == 1 => Some(clips.remove(0).1),
            Ok(_) => None,
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {key}: {e}");
                None
            }
        }
    }

    /// Stores a descriptor, writing to a temporary file first so concurrent
    /// readers never see a partial entry.
    pub fn put(&self, key: &str, clip_id: &str, descriptor: &ClipDescriptor) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        let text = feature_file(&descriptor.fingerprint, &[(clip_id, descriptor)]);
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        let dest = self.path(key);
        fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Frame;

    fn descriptor() -> ClipDescriptor {
        ClipDescriptor {
            groups: (0..8)
                .map(|r| GroupFeature {
                    block_index: r / 4,
                    plane: Plane::ALL[r % 4],
                    histogram: Histogram {
                        bins: vec![0.1 + r as f64 / 3.0, 1.0 / 7.0, 0.0, f64::MIN_POSITIVE],
                        normalized: true,
                    },
                })
                .collect(),
            fingerprint: "abc123".into(),
        }
    }

    #[test]
    fn feature_file_round_trips_bitwise() {
        let d = descriptor();
        let text = feature_file("abc123", &[("x", &d), ("y", &d)]);
        assert!(text.starts_with("STLBP-IIP v1 abc123\nx,0,XYH,"));
        let (fp, clips) = parse_feature_file(&text).unwrap();
        assert_eq!(fp, "abc123");
        assert_eq!(clips.len(), 2);
        assert_eq!(clips[0].1, d);
        assert_eq!(clips[1].0, "y");
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(parse_feature_file("").is_err());
        assert!(parse_feature_file("STLBP-IIP v2 x\n").is_err());
        assert!(parse_feature_file("STLBP-IIP v1 x\na,1,XYH,0.5\n").is_err());
        assert!(parse_feature_file("STLBP-IIP v1 x\na,0,XZ,0.5\n").is_err());
        assert!(parse_feature_file("STLBP-IIP v1 x\na,0,XYH,0.5\nb,0,XYH,1\na,1,XYV,1\n").is_err());
    }

    #[test]
    fn cache_checks_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DescriptorCache::new(dir.path().join("c"));
        let d = descriptor();
        assert!(cache.get("k", "abc123").is_none());
        cache.put("k", "clip", &d).unwrap();
        assert_eq!(cache.get("k", "abc123").unwrap(), d);
        assert!(cache.get("k", "other").is_none());
    }

    #[test]
    fn clip_hash_tracks_content() {
        let a = VideoClip::new("a", "s", 0, vec![Frame::filled(4, 4, 1.0); 3]).unwrap();
        let b = VideoClip::new("b", "t", 1, vec![Frame::filled(4, 4, 1.0); 3]).unwrap();
        let c = VideoClip::new("a", "s", 0, vec![Frame::filled(4, 4, 2.0); 3]).unwrap();
        assert_eq!(clip_hash(&a), clip_hash(&b));
        assert_ne!(clip_hash(&a), clip_hash(&c));
    }
}
